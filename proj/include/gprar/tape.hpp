#pragma once

#include "gprar/params.hpp"
#include "gprar/tensor.hpp"

#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gprar {

/// Thrown when operand shapes do not conform; the message names the op and the
/// tape scope that was active when the node was built.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename Scalar>
class BasicTape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
template <typename Scalar>
struct BasicVar {
  BasicTape<Scalar>* tape = nullptr;
  std::size_t id = 0;

  const RowMatrix<Scalar>& value() const { return tape->value(*this); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

/// Reverse-mode recording of a computation over row-major matrices.
///
/// Parameters are bound by name from a ModelParams instance. Names matched by
/// the `frozen` predicate are bound as constants, so no gradient ever reaches
/// them.
template <typename Scalar>
class BasicTape {
 public:
  using Matrix = RowMatrix<Scalar>;
  using Var = BasicVar<Scalar>;
  using Params = BasicModelParams<Scalar>;
  using BackwardFn = std::function<void(BasicTape&, std::size_t)>;

  BasicTape() = default;
  explicit BasicTape(const Params* params, std::function<bool(const std::string&)> frozen = {})
      : params_{params}, frozen_(std::move(frozen)) {}
  explicit BasicTape(std::vector<const Params*> params, std::function<bool(const std::string&)> frozen = {})
      : params_(std::move(params)), frozen_(std::move(frozen)) {}

  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Var constant(Matrix value) { return push_leaf(std::move(value), false); }
  Var constant(const BasicTensor<Scalar>& t) { return push_leaf(Matrix(t.matrix()), false); }

  /// Leaf that receives a gradient but is not tied to a named parameter.
  Var variable(Matrix value) { return push_leaf(std::move(value), true); }

  Var param(const std::string& name) {
    if (auto it = param_ids_.find(name); it != param_ids_.end()) return Var{this, it->second};
    const Params* owner = nullptr;
    for (const Params* p : params_)
      if (p != nullptr && p->contains(name)) owner = p;
    if (owner == nullptr) throw std::out_of_range("tape: no bound parameter named '" + name + "'");
    const auto& v = owner->value(name);
    const bool trainable = !(frozen_ && frozen_(name));
    Var var = push_leaf(Matrix(v.matrix()), trainable);
    param_ids_.emplace(name, var.id);
    return var;
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated as zeros on first touch.
  Matrix& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return nodes_[id].grad.size() != 0; }

  Var push(Matrix value, std::initializer_list<std::size_t> parents, BackwardFn fn) {
    bool rg = false;
    for (std::size_t p : parents) rg = rg || nodes_[p].requires_grad;
    return push_node(std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
  }

  Var push(Matrix value, const std::vector<std::size_t>& parents, BackwardFn fn) {
    bool rg = false;
    for (std::size_t p : parents) rg = rg || nodes_[p].requires_grad;
    return push_node(std::move(value), rg, rg ? std::move(fn) : BackwardFn{});
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every node recorded before it.
  void backward(Var loss) {
    if (value(loss).size() != 1)
      throw ShapeError("backward: loss must be scalar, got " + std::to_string(value(loss).rows()) + "x" +
                       std::to_string(value(loss).cols()));
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)(0, 0) += Scalar(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && n.grad.size() != 0) n.backward(*this, i);
    }
  }

  /// Adds weight * d(loss)/d(param) into params' gradient buffers.
  void accumulate_into(Params& params, Scalar weight = Scalar(1)) const {
    for (const auto& [name, id] : param_ids_) {
      const Node& n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0 || !params.contains(name)) continue;
      params.grad(name).matrix() += weight * n.grad;
    }
  }

  /// Copies out the parameter gradients accumulated by backward().
  std::map<std::string, Matrix> parameter_gradients() const {
    std::map<std::string, Matrix> out;
    for (const auto& [name, id] : param_ids_) {
      const Node& n = nodes_[id];
      if (n.requires_grad && n.grad.size() != 0) out.emplace(name, n.grad);
    }
    return out;
  }

  /// Names the region of the graph being built; used in shape errors.
  class Scope {
   public:
    Scope(BasicTape& tape, std::string name) : tape_(tape), saved_(tape.scope_) {
      tape_.scope_ = saved_.empty() ? std::move(name) : saved_ + "." + name;
    }
    ~Scope() { tape_.scope_ = saved_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    BasicTape& tape_;
    std::string saved_;
  };

  const std::string& scope() const { return scope_; }

  [[noreturn]] void shape_error(const std::string& op, const std::string& detail) const {
    throw ShapeError("shape mismatch in " + op + (scope_.empty() ? "" : " at '" + scope_ + "'") + ": " + detail);
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var push_leaf(Matrix value, bool requires_grad) { return push_node(std::move(value), requires_grad, {}); }

  Var push_node(Matrix value, bool requires_grad, BackwardFn fn) {
    if (!value.allFinite())
      throw std::domain_error("tape: non-finite value produced" + (scope_.empty() ? "" : " at '" + scope_ + "'"));
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(fn)});
    return Var{this, nodes_.size() - 1};
  }

  std::vector<const Params*> params_;
  std::function<bool(const std::string&)> frozen_;
  std::deque<Node> nodes_;
  std::map<std::string, std::size_t> param_ids_;
  std::string scope_;
};

using Tape = BasicTape<double>;
using Var = BasicVar<double>;

namespace detail {
inline std::string dims(Index r, Index c) { return std::to_string(r) + "x" + std::to_string(c); }
}  // namespace detail

template <typename Scalar>
BasicVar<Scalar> matmul(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  auto& tape = *a.tape;
  if (a.cols() != b.rows())
    tape.shape_error("matmul", detail::dims(a.rows(), a.cols()) + " * " + detail::dims(b.rows(), b.cols()));
  RowMatrix<Scalar> out = a.value() * b.value();
  return tape.push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ia)) t.grad(ia).noalias() += g * t.value(ib).transpose();
    if (t.requires_grad(ib)) t.grad(ib).noalias() += t.value(ia).transpose() * g;
  });
}

template <typename Scalar>
BasicVar<Scalar> operator+(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  auto& tape = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    tape.shape_error("add", detail::dims(a.rows(), a.cols()) + " + " + detail::dims(b.rows(), b.cols()));
  RowMatrix<Scalar> out = a.value() + b.value();
  return tape.push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicTape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad(ib) += t.grad(self);
  });
}

template <typename Scalar>
BasicVar<Scalar> operator-(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  auto& tape = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    tape.shape_error("sub", detail::dims(a.rows(), a.cols()) + " - " + detail::dims(b.rows(), b.cols()));
  RowMatrix<Scalar> out = a.value() - b.value();
  return tape.push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicTape<Scalar>& t, std::size_t self) {
    if (t.requires_grad(ia)) t.grad(ia) += t.grad(self);
    if (t.requires_grad(ib)) t.grad(ib) -= t.grad(self);
  });
}

template <typename Scalar>
BasicVar<Scalar> operator*(Scalar s, BasicVar<Scalar> a) {
  RowMatrix<Scalar> out = s * a.value();
  return a.tape->push(std::move(out), {a.id}, [ia = a.id, s](BasicTape<Scalar>& t, std::size_t self) {
    t.grad(ia) += s * t.grad(self);
  });
}

/// x + 1·b with b a single row broadcast over all rows of x.
template <typename Scalar>
BasicVar<Scalar> add_row(BasicVar<Scalar> x, BasicVar<Scalar> b) {
  auto& tape = *x.tape;
  if (b.value().size() != x.cols())
    tape.shape_error("add_row", detail::dims(x.rows(), x.cols()) + " + row " + detail::dims(b.rows(), b.cols()));
  RowMatrix<Scalar> out = x.value();
  out.rowwise() += Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(b.value().data(), x.cols());
  return tape.push(std::move(out), {x.id, b.id}, [ix = x.id, ib = b.id](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    if (t.requires_grad(ix)) t.grad(ix) += g;
    if (t.requires_grad(ib)) {
      auto& gb = t.grad(ib);
      Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>>(gb.data(), gb.size()) += g.colwise().sum();
    }
  });
}

/// Per-column affine map y[:, c] = x[:, c] * scale[c] + offset[c] with constant coefficients.
template <typename Scalar>
BasicVar<Scalar> affine_columns(BasicVar<Scalar> x, const Vector<Scalar>& scale, const Vector<Scalar>& offset) {
  auto& tape = *x.tape;
  if (scale.size() != x.cols() || offset.size() != x.cols())
    tape.shape_error("affine_columns", detail::dims(x.rows(), x.cols()) + " with " +
                                           std::to_string(scale.size()) + " coefficients");
  RowMatrix<Scalar> out = x.value() * scale.asDiagonal();
  out.rowwise() += offset.transpose();
  return tape.push(std::move(out), {x.id}, [ix = x.id, scale](BasicTape<Scalar>& t, std::size_t self) {
    t.grad(ix) += t.grad(self) * scale.asDiagonal();
  });
}

/// Elementwise affine map y = x .* scale + offset with constant coefficients of x's shape.
template <typename Scalar>
BasicVar<Scalar> affine_elementwise(BasicVar<Scalar> x, const RowMatrix<Scalar>& scale, const RowMatrix<Scalar>& offset) {
  auto& tape = *x.tape;
  if (scale.rows() != x.rows() || scale.cols() != x.cols() || offset.rows() != x.rows() || offset.cols() != x.cols())
    tape.shape_error("affine_elementwise", detail::dims(x.rows(), x.cols()) + " with coefficients " +
                                               detail::dims(scale.rows(), scale.cols()));
  RowMatrix<Scalar> out = (x.value().array() * scale.array() + offset.array()).matrix();
  return tape.push(std::move(out), {x.id}, [ix = x.id, scale](BasicTape<Scalar>& t, std::size_t self) {
    t.grad(ix).array() += t.grad(self).array() * scale.array();
  });
}

template <typename Scalar>
BasicVar<Scalar> relu(BasicVar<Scalar> x) {
  RowMatrix<Scalar> out = x.value().cwiseMax(Scalar(0));
  return x.tape->push(std::move(out), {x.id}, [ix = x.id](BasicTape<Scalar>& t, std::size_t self) {
    t.grad(ix).array() += (t.value(ix).array() > Scalar(0)).select(t.grad(self).array(), Scalar(0));
  });
}

/// Logistic sigmoid applied to columns [begin, begin + count); other columns pass through.
template <typename Scalar>
BasicVar<Scalar> sigmoid_columns(BasicVar<Scalar> x, Index begin, Index count) {
  auto& tape = *x.tape;
  if (begin < 0 || count < 0 || begin + count > x.cols())
    tape.shape_error("sigmoid_columns", "columns [" + std::to_string(begin) + "," + std::to_string(begin + count) +
                                            ") of " + std::to_string(x.cols()));
  RowMatrix<Scalar> out = x.value();
  auto blk = out.middleCols(begin, count).array();
  blk = Scalar(1) / (Scalar(1) + (-blk).exp());
  return tape.push(std::move(out), {x.id}, [ix = x.id, begin, count](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(ix);
    gx += g;
    auto s = y.middleCols(begin, count).array();
    gx.middleCols(begin, count).array() += g.middleCols(begin, count).array() * (s * (Scalar(1) - s) - Scalar(1));
  });
}

/// Per-frame neighbourhood aggregation: for x laid out as (frames*nodes) x C
/// with frame-major rows, each frame block becomes adjacency * block.
template <typename Scalar>
BasicVar<Scalar> graph_aggregate(BasicVar<Scalar> x, const RowMatrix<Scalar>& adjacency) {
  auto& tape = *x.tape;
  const Index n = adjacency.rows();
  if (adjacency.cols() != n || n == 0 || x.rows() % n != 0)
    tape.shape_error("graph_aggregate", detail::dims(x.rows(), x.cols()) + " rows not a multiple of adjacency " +
                                            detail::dims(adjacency.rows(), adjacency.cols()));
  const Index frames = x.rows() / n;
  const auto& xv = x.value();
  RowMatrix<Scalar> out(x.rows(), x.cols());
  for (Index f = 0; f < frames; ++f) out.middleRows(f * n, n).noalias() = adjacency * xv.middleRows(f * n, n);
  return tape.push(std::move(out), {x.id}, [ix = x.id, adjacency, n, frames](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    for (Index f = 0; f < frames; ++f) gx.middleRows(f * n, n).noalias() += adjacency.transpose() * g.middleRows(f * n, n);
  });
}

struct ConvGeometry {
  Index nodes = 1;   // rows per frame
  Index kernel = 1;  // taps along time
  Index stride = 1;
  Index pad = 0;
};

inline Index conv_output_length(Index length, const ConvGeometry& g) {
  return (length + 2 * g.pad - g.kernel) / g.stride + 1;
}

inline Index deconv_output_length(Index length, const ConvGeometry& g) {
  return (length - 1) * g.stride - 2 * g.pad + g.kernel;
}

namespace detail {
// Calls fn(out_frame, in_frame, frame_count, tap) over every contiguous run of
// valid (output, input) frame pairs of a strided temporal convolution.
template <typename Fn>
void for_each_conv_run(Index in_len, Index out_len, const ConvGeometry& g, Fn&& fn) {
  for (Index j = 0; j < g.kernel; ++j) {
    if (g.stride == 1) {
      const Index lo = std::max<Index>(0, g.pad - j);
      const Index hi = std::min<Index>(out_len, in_len - j + g.pad);
      if (hi > lo) fn(lo, lo + j - g.pad, hi - lo, j);
    } else {
      for (Index o = 0; o < out_len; ++o) {
        const Index i = o * g.stride + j - g.pad;
        if (i >= 0 && i < in_len) fn(o, i, Index{1}, j);
      }
    }
  }
}
}  // namespace detail

/// Temporal convolution along the frame axis, shared across the nodes of each
/// frame. x is (frames*nodes) x Cin, weight is (kernel*Cin) x Cout with tap j
/// occupying rows [j*Cin, (j+1)*Cin). Zero padding outside the sequence.
template <typename Scalar>
BasicVar<Scalar> temporal_conv(BasicVar<Scalar> x, BasicVar<Scalar> weight, const ConvGeometry& geo) {
  auto& tape = *x.tape;
  const Index n = geo.nodes;
  const Index cin = x.cols();
  if (n <= 0 || x.rows() % n != 0 || weight.rows() != geo.kernel * cin || geo.stride <= 0 || geo.kernel <= 0)
    tape.shape_error("temporal_conv", "input " + detail::dims(x.rows(), x.cols()) + ", weight " +
                                          detail::dims(weight.rows(), weight.cols()) + ", kernel " +
                                          std::to_string(geo.kernel) + ", nodes " + std::to_string(n));
  const Index in_len = x.rows() / n;
  const Index out_len = conv_output_length(in_len, geo);
  if (out_len <= 0) tape.shape_error("temporal_conv", "sequence of " + std::to_string(in_len) + " frames too short");
  const Index cout = weight.cols();
  const auto& xv = x.value();
  const auto& wv = weight.value();
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(out_len * n, cout);
  detail::for_each_conv_run(in_len, out_len, geo, [&](Index o, Index i, Index len, Index j) {
    out.middleRows(o * n, len * n).noalias() += xv.middleRows(i * n, len * n) * wv.middleRows(j * cin, cin);
  });
  return tape.push(std::move(out), {x.id, weight.id},
                   [ix = x.id, iw = weight.id, geo, in_len, out_len, cin](BasicTape<Scalar>& t, std::size_t self) {
                     const auto& g = t.grad(self);
                     const Index n = geo.nodes;
                     const bool gx = t.requires_grad(ix);
                     const bool gw = t.requires_grad(iw);
                     detail::for_each_conv_run(in_len, out_len, geo, [&](Index o, Index i, Index len, Index j) {
                       if (gx)
                         t.grad(ix).middleRows(i * n, len * n).noalias() +=
                             g.middleRows(o * n, len * n) * t.value(iw).middleRows(j * cin, cin).transpose();
                       if (gw)
                         t.grad(iw).middleRows(j * cin, cin).noalias() +=
                             t.value(ix).middleRows(i * n, len * n).transpose() * g.middleRows(o * n, len * n);
                     });
                   });
}

/// Transposed temporal convolution: input frame i scatters into output frames
/// i*stride + j - pad. The output is cut (or zero-extended) to out_len frames.
template <typename Scalar>
BasicVar<Scalar> temporal_deconv(BasicVar<Scalar> x, BasicVar<Scalar> weight, const ConvGeometry& geo, Index out_len) {
  auto& tape = *x.tape;
  const Index n = geo.nodes;
  const Index cin = x.cols();
  if (n <= 0 || x.rows() % n != 0 || weight.rows() != geo.kernel * cin || geo.stride <= 0 || out_len <= 0)
    tape.shape_error("temporal_deconv", "input " + detail::dims(x.rows(), x.cols()) + ", weight " +
                                            detail::dims(weight.rows(), weight.cols()) + ", kernel " +
                                            std::to_string(geo.kernel));
  const Index in_len = x.rows() / n;
  const Index cout = weight.cols();
  const auto& xv = x.value();
  const auto& wv = weight.value();
  RowMatrix<Scalar> out = RowMatrix<Scalar>::Zero(out_len * n, cout);
  // The scatter pattern of a transposed convolution is the gather pattern of
  // the forward convolution with input/output roles swapped.
  detail::for_each_conv_run(out_len, in_len, geo, [&](Index i, Index o, Index len, Index j) {
    out.middleRows(o * n, len * n).noalias() += xv.middleRows(i * n, len * n) * wv.middleRows(j * cin, cin);
  });
  return tape.push(std::move(out), {x.id, weight.id},
                   [ix = x.id, iw = weight.id, geo, in_len, out_len, cin](BasicTape<Scalar>& t, std::size_t self) {
                     const auto& g = t.grad(self);
                     const Index n = geo.nodes;
                     const bool gx = t.requires_grad(ix);
                     const bool gw = t.requires_grad(iw);
                     detail::for_each_conv_run(out_len, in_len, geo, [&](Index i, Index o, Index len, Index j) {
                       if (gx)
                         t.grad(ix).middleRows(i * n, len * n).noalias() +=
                             g.middleRows(o * n, len * n) * t.value(iw).middleRows(j * cin, cin).transpose();
                       if (gw)
                         t.grad(iw).middleRows(j * cin, cin).noalias() +=
                             t.value(ix).middleRows(i * n, len * n).transpose() * g.middleRows(o * n, len * n);
                     });
                   });
}

/// Reinterprets the row-major values with a new (rows, cols) shape.
template <typename Scalar>
BasicVar<Scalar> reshape(BasicVar<Scalar> x, Index rows, Index cols) {
  auto& tape = *x.tape;
  if (rows * cols != x.value().size())
    tape.shape_error("reshape", detail::dims(x.rows(), x.cols()) + " -> " + detail::dims(rows, cols));
  RowMatrix<Scalar> out = Eigen::Map<const RowMatrix<Scalar>>(x.value().data(), rows, cols);
  return tape.push(std::move(out), {x.id}, [ix = x.id](BasicTape<Scalar>& t, std::size_t self) {
    auto& gx = t.grad(ix);
    Eigen::Map<RowMatrix<Scalar>>(gx.data(), gx.rows(), gx.cols()) +=
        Eigen::Map<const RowMatrix<Scalar>>(t.grad(self).data(), gx.rows(), gx.cols());
  });
}

template <typename Scalar>
BasicVar<Scalar> concat_columns(const std::vector<BasicVar<Scalar>>& parts) {
  if (parts.empty()) throw ShapeError("concat_columns: no inputs");
  auto& tape = *parts.front().tape;
  const Index rows = parts.front().rows();
  Index cols = 0;
  std::vector<std::size_t> ids;
  std::vector<Index> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      tape.shape_error("concat_columns", std::to_string(p.rows()) + " rows vs " + std::to_string(rows));
    cols += p.cols();
    ids.push_back(p.id);
    widths.push_back(p.cols());
  }
  RowMatrix<Scalar> out(rows, cols);
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return tape.push(std::move(out), ids, [ids, widths](BasicTape<Scalar>& t, std::size_t self) {
    Index c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) t.grad(ids[k]) += t.grad(self).middleCols(c, widths[k]);
      c += widths[k];
    }
  });
}

/// Averages consecutive groups of `group` rows: (g*group) x C -> g x C.
template <typename Scalar>
BasicVar<Scalar> group_mean(BasicVar<Scalar> x, Index group) {
  auto& tape = *x.tape;
  if (group <= 0 || x.rows() % group != 0)
    tape.shape_error("group_mean", std::to_string(x.rows()) + " rows in groups of " + std::to_string(group));
  const Index groups = x.rows() / group;
  const auto& xv = x.value();
  RowMatrix<Scalar> out(groups, x.cols());
  for (Index g = 0; g < groups; ++g) out.row(g) = xv.middleRows(g * group, group).colwise().mean();
  return tape.push(std::move(out), {x.id}, [ix = x.id, group, groups](BasicTape<Scalar>& t, std::size_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(ix);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(group);
    for (Index k = 0; k < groups; ++k) gx.middleRows(k * group, group).rowwise() += inv * g.row(k);
  });
}

/// -log softmax(logits)[target] for a single row of logits.
template <typename Scalar>
BasicVar<Scalar> softmax_cross_entropy(BasicVar<Scalar> logits, Index target) {
  auto& tape = *logits.tape;
  if (logits.rows() != 1) tape.shape_error("softmax_cross_entropy", "logits must be one row");
  if (target < 0 || target >= logits.cols())
    throw std::out_of_range("softmax_cross_entropy: class " + std::to_string(target) + " outside [0," +
                            std::to_string(logits.cols()) + ")");
  const auto& z = logits.value();
  const Scalar m = z.maxCoeff();
  const Scalar lse = m + std::log((z.array() - m).exp().sum());
  RowMatrix<Scalar> out(1, 1);
  out(0, 0) = lse - z(0, target);
  return tape.push(std::move(out), {logits.id}, [il = logits.id, target, lse](BasicTape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)(0, 0);
    RowMatrix<Scalar> p = (t.value(il).array() - lse).exp().matrix();
    p(0, target) -= Scalar(1);
    t.grad(il) += g * p;
  });
}

/// Sum of squared differences, a 1x1 result.
template <typename Scalar>
BasicVar<Scalar> squared_error(BasicVar<Scalar> a, BasicVar<Scalar> b) {
  auto& tape = *a.tape;
  if (a.rows() != b.rows() || a.cols() != b.cols())
    tape.shape_error("squared_error", detail::dims(a.rows(), a.cols()) + " vs " + detail::dims(b.rows(), b.cols()));
  RowMatrix<Scalar> out(1, 1);
  out(0, 0) = (a.value() - b.value()).squaredNorm();
  return tape.push(std::move(out), {a.id, b.id}, [ia = a.id, ib = b.id](BasicTape<Scalar>& t, std::size_t self) {
    const Scalar g = t.grad(self)(0, 0);
    RowMatrix<Scalar> d = Scalar(2) * g * (t.value(ia) - t.value(ib));
    if (t.requires_grad(ia)) t.grad(ia) += d;
    if (t.requires_grad(ib)) t.grad(ib) -= d;
  });
}

template <typename Scalar>
BasicVar<Scalar> sum(BasicVar<Scalar> x) {
  RowMatrix<Scalar> out(1, 1);
  out(0, 0) = x.value().sum();
  return x.tape->push(std::move(out), {x.id}, [ix = x.id](BasicTape<Scalar>& t, std::size_t self) {
    t.grad(ix).array() += t.grad(self)(0, 0);
  });
}

}  // namespace gprar
