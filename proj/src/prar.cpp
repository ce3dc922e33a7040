#include "gprar/prar.hpp"

#include <cmath>
#include <stdexcept>

namespace gprar {

namespace {
constexpr double kMinInputStd = 1e-3;
}  // namespace

void add_stgcn_params(ModelParams& params, const std::string& prefix, const StgcnLayerConfig& layer,
                      std::size_t partitions) {
  for (std::size_t p = 0; p < partitions; ++p)
    params.add_glorot(prefix + ".spatial." + std::to_string(p), Shape{layer.in_channels, layer.out_channels},
                      layer.in_channels, layer.out_channels);
  const Index k = layer.temporal_kernel;
  params.add_glorot(prefix + ".temporal", Shape{k * layer.out_channels, layer.out_channels}, k * layer.out_channels,
                    k * layer.out_channels);
}

Var st_graph_conv(Tape& tape, Var features, const NormalizedAdjacency& adjacency, const StgcnLayerConfig& layer,
                  const std::string& prefix) {
  Tape::Scope scope(tape, prefix);
  if (features.cols() != layer.in_channels)
    tape.shape_error("st_graph_conv", "features have " + std::to_string(features.cols()) + " channels, layer expects " +
                                          std::to_string(layer.in_channels));
  if (layer.temporal_kernel % 2 == 0) throw std::invalid_argument("st_graph_conv: temporal kernel must be odd");
  const Index joints = adjacency.joints();
  Var spatial{};
  for (std::size_t p = 0; p < adjacency.partitions.size(); ++p) {
    Var mixed = matmul(features, tape.param(prefix + ".spatial." + std::to_string(p)));
    Var part = graph_aggregate(mixed, adjacency.partitions[p]);
    spatial = p == 0 ? part : spatial + part;
  }
  const ConvGeometry geo{joints, layer.temporal_kernel, 1, (layer.temporal_kernel - 1) / 2};
  Var out = temporal_conv(spatial, tape.param(prefix + ".temporal"), geo);
  if (layer.relu) out = relu(out);
  if (layer.has_residual && layer.in_channels == layer.out_channels) out = out + features;
  return out;
}

Tensor st_graph_conv(const Tensor& features, const NormalizedAdjacency& adjacency, const StgcnLayerConfig& layer,
                     const ModelParams& params, const std::string& prefix) {
  if (features.rank() != 3) throw std::invalid_argument("st_graph_conv: features must be [T, K, C]");
  if (features.shape()[1] != adjacency.joints())
    throw std::invalid_argument("st_graph_conv: joint count does not match adjacency");
  Tape tape(&params);
  Var out = st_graph_conv(tape, tape.constant(features), adjacency, layer, prefix);
  Tensor result(Shape{features.shape()[0], features.shape()[1], layer.out_channels});
  result.matrix() = out.value();
  return result;
}

void PrarConfig::validate() const {
  if (frames < 1) throw std::invalid_argument("prar config: frames must be positive");
  if (encoder_widths.size() != 4) throw std::invalid_argument("prar config: encoder must have exactly 3 layers");
  if (recon_widths.size() != 5 || action_widths.size() != 5)
    throw std::invalid_argument("prar config: each decoder must have exactly 4 layers");
  if (encoder_widths.front() != 3) throw std::invalid_argument("prar config: encoder input must be 3 channels");
  if (recon_widths.front() != encoder_widths.back() || action_widths.front() != encoder_widths.back())
    throw std::invalid_argument("prar config: decoder input width must equal encoder output width");
  if (recon_widths.back() != 3) throw std::invalid_argument("prar config: reconstruction must emit 3 channels");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0)
    throw std::invalid_argument("prar config: temporal kernel must be odd and positive");
  if (num_classes < 1) throw std::invalid_argument("prar config: need at least one class");
  if (!(body_scale > 0.0)) throw std::invalid_argument("prar config: body scale must be positive");
  if (input_mean.size() != input_std.size() || input_mean.size() % 2 != 0)
    throw std::invalid_argument("prar config: input_mean and input_std must hold matching (x, y) pairs");
  for (double s : input_std)
    if (!(s > 0.0)) throw std::invalid_argument("prar config: input_std entries must be positive");
  for (const auto* ws : {&encoder_widths, &recon_widths, &action_widths})
    for (Index w : *ws)
      if (w < 1) throw std::invalid_argument("prar config: widths must be positive");
}

nlohmann::json PrarConfig::to_json() const {
  return {{"layout", layout},
          {"adjacency", to_string(adjacency)},
          {"frames", frames},
          {"encoder_widths", encoder_widths},
          {"recon_widths", recon_widths},
          {"action_widths", action_widths},
          {"temporal_kernel", temporal_kernel},
          {"num_classes", num_classes},
          {"residual", residual},
          {"body_scale", body_scale},
          {"input_mean", input_mean},
          {"input_std", input_std}};
}

PrarConfig PrarConfig::from_json(const nlohmann::json& j) {
  PrarConfig c;
  c.layout = j.value("layout", c.layout);
  c.adjacency = parse_adjacency_strategy(j.value("adjacency", to_string(c.adjacency)));
  c.frames = j.value("frames", c.frames);
  c.encoder_widths = j.value("encoder_widths", c.encoder_widths);
  c.recon_widths = j.value("recon_widths", c.recon_widths);
  c.action_widths = j.value("action_widths", c.action_widths);
  c.temporal_kernel = j.value("temporal_kernel", c.temporal_kernel);
  c.num_classes = j.value("num_classes", c.num_classes);
  c.residual = j.value("residual", c.residual);
  c.body_scale = j.value("body_scale", c.body_scale);
  c.input_mean = j.value("input_mean", c.input_mean);
  c.input_std = j.value("input_std", c.input_std);
  c.validate();
  return c;
}

PoseFrame PoseFrame::of(const SkeletonSequence& observed, double scale) {
  PoseFrame f;
  f.scale = scale;
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  Index n = 0;
  for (Index t = 0; t < observed.frames(); ++t)
    for (Index k = 0; k < observed.joints(); ++k)
      if (observed.observed(t, k)) {
        acc += observed.position(t, k);
        ++n;
      }
  if (n > 0) f.center = acc / static_cast<double>(n);
  return f;
}

RowMatrix<double> PoseFrame::normalize(const SkeletonSequence& seq) const {
  RowMatrix<double> out = RowMatrix<double>::Zero(seq.frames() * seq.joints(), 3);
  for (Index t = 0; t < seq.frames(); ++t)
    for (Index k = 0; k < seq.joints(); ++k) {
      if (!seq.observed(t, k)) continue;
      const Index r = t * seq.joints() + k;
      out(r, 0) = (seq.x(t, k) - center.x()) / scale;
      out(r, 1) = (seq.y(t, k) - center.y()) / scale;
      out(r, 2) = seq.confidence(t, k);
    }
  return out;
}

SkeletonSequence PoseFrame::denormalize(Index frames, Index joints, const RowMatrix<double>& values) const {
  RowMatrix<double> px = values;
  px.col(0) = (px.col(0).array() * scale + center.x()).matrix();
  px.col(1) = (px.col(1).array() * scale + center.y()).matrix();
  px.col(2) = px.col(2).cwiseMax(0.0).cwiseMin(1.0);
  return SkeletonSequence::from_values(frames, joints, px);
}

PrarModel::PrarModel(PrarConfig config, std::uint64_t seed) : config_(std::move(config)), params_(seed) {
  build_layers();
  const std::size_t parts = adjacency_.partitions.size();
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    add_stgcn_params(params_, "prar.enc." + std::to_string(i), encoder_[i], parts);
  for (std::size_t i = 0; i < recon_.size(); ++i)
    add_stgcn_params(params_, "prar.rec." + std::to_string(i), recon_[i], parts);
  for (std::size_t i = 0; i < action_.size(); ++i)
    add_stgcn_params(params_, "prar.act." + std::to_string(i), action_[i], parts);
  const Index c_act = config_.action_widths.back();
  params_.add_glorot("prar.fcn.weight", Shape{c_act, config_.num_classes}, c_act, config_.num_classes);
  params_.add_zeros("prar.fcn.bias", Shape{1, config_.num_classes});
}

PrarModel::PrarModel(PrarConfig config, ModelParams params) : PrarModel(std::move(config), params.rng_seed()) {
  for (const auto& [name, entry] : params_.entries()) {
    if (!params.contains(name)) throw std::invalid_argument("prar: checkpoint lacks entry '" + name + "'");
    if (params.value(name).shape() != entry.value.shape())
      throw std::invalid_argument("prar: checkpoint entry '" + name + "' has shape " +
                                  shape_string(params.value(name).shape()));
  }
  params_ = std::move(params);
}

void PrarModel::build_layers() {
  config_.validate();
  layout_ = build_layout(config_.layout);
  adjacency_ = build_adjacency(layout_, config_.adjacency);
  if (!config_.input_mean.empty() && static_cast<Index>(config_.input_mean.size()) != 2 * layout_.joint_count())
    throw std::invalid_argument("prar config: input statistics cover " + std::to_string(config_.input_mean.size() / 2) +
                                " joints, layout has " + std::to_string(layout_.joint_count()));
  const auto stack = [&](const std::vector<Index>& widths, bool last_relu) {
    std::vector<StgcnLayerConfig> layers;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      StgcnLayerConfig l;
      l.in_channels = widths[i];
      l.out_channels = widths[i + 1];
      l.temporal_kernel = config_.temporal_kernel;
      l.has_residual = config_.residual && widths[i] == widths[i + 1];
      l.relu = last_relu || i + 2 < widths.size();
      layers.push_back(l);
    }
    return layers;
  };
  build_standardization();
  encoder_ = stack(config_.encoder_widths, true);
  recon_ = stack(config_.recon_widths, false);
  action_ = stack(config_.action_widths, true);
}

void PrarModel::build_standardization() {
  const Index k = layout_.joint_count();
  std_scale_ = RowMatrix<double>::Ones(config_.frames * k, 3);
  std_offset_ = RowMatrix<double>::Zero(config_.frames * k, 3);
  if (config_.input_mean.empty()) return;
  for (Index t = 0; t < config_.frames; ++t)
    for (Index j = 0; j < k; ++j)
      for (Index c = 0; c < 2; ++c) {
        const auto i = static_cast<std::size_t>(2 * j + c);
        std_scale_(t * k + j, c) = config_.input_std[i];
        std_offset_(t * k + j, c) = config_.input_mean[i];
      }
}

RowMatrix<double> PrarModel::standardize(const RowMatrix<double>& pose_frame_values) const {
  if (pose_frame_values.rows() != std_scale_.rows() || pose_frame_values.cols() != 3)
    throw std::invalid_argument("prar: standardize expects a " + std::to_string(std_scale_.rows()) + "x3 matrix");
  return ((pose_frame_values - std_offset_).array() / std_scale_.array()).matrix();
}

RowMatrix<double> PrarModel::input_of(const SkeletonSequence& observed) const {
  check_window(observed);
  RowMatrix<double> x = standardize(frame_of(observed).normalize(observed));
  for (Index r = 0; r < x.rows(); ++r)
    if (!observed.observed(r / observed.joints(), r % observed.joints())) x.row(r).setZero();
  return x;
}

void PrarModel::set_input_statistics(std::vector<double> mean, std::vector<double> stddev) {
  PrarConfig next = config_;
  next.input_mean = std::move(mean);
  next.input_std = std::move(stddev);
  next.validate();
  if (!next.input_mean.empty() && static_cast<Index>(next.input_mean.size()) != 2 * layout_.joint_count())
    throw std::invalid_argument("prar: input statistics do not match the layout");
  config_ = std::move(next);
  build_standardization();
}

void PrarModel::fit_input_statistics(const std::vector<const SkeletonSequence*>& windows) {
  const Index k = layout_.joint_count();
  Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(2 * k), sq = sum, count = sum;
  config_.input_mean.clear();
  config_.input_std.clear();
  build_standardization();
  for (const auto* w : windows) {
    const RowMatrix<double> x = input_of(*w);
    for (Index t = 0; t < w->frames(); ++t)
      for (Index j = 0; j < k; ++j) {
        if (!w->observed(t, j)) continue;
        for (Index c = 0; c < 2; ++c) {
          const double v = x(t * k + j, c);
          sum(2 * j + c) += v;
          sq(2 * j + c) += v * v;
          count(2 * j + c) += 1.0;
        }
      }
  }
  for (Index i = 0; i < 2 * k; ++i) {
    const double n = std::max(count(i), 1.0);
    const double mean = sum(i) / n;
    const double var = std::max(sq(i) / n - mean * mean, 0.0);
    config_.input_mean.push_back(mean);
    config_.input_std.push_back(std::max(std::sqrt(var), kMinInputStd));
  }
  build_standardization();
}

Var PrarModel::encode(Tape& tape, Var input) const {
  if (input.rows() != config_.frames * layout_.joint_count() || input.cols() != 3)
    tape.shape_error("prar.encode", "input " + std::to_string(input.rows()) + "x" + std::to_string(input.cols()) +
                                        " for " + std::to_string(config_.frames) + " frames");
  Var x = input;
  for (std::size_t i = 0; i < encoder_.size(); ++i)
    x = st_graph_conv(tape, x, adjacency_, encoder_[i], "prar.enc." + std::to_string(i));
  return x;
}

Var PrarModel::reconstruct_standardized(Tape& tape, Var encoded) const {
  Var x = encoded;
  for (std::size_t i = 0; i < recon_.size(); ++i)
    x = st_graph_conv(tape, x, adjacency_, recon_[i], "prar.rec." + std::to_string(i));
  return sigmoid_columns(x, 2, 1);
}

Var PrarModel::destandardize(Var standardized) const {
  if (config_.input_mean.empty()) return standardized;
  return affine_elementwise(standardized, std_scale_, std_offset_);
}

Var PrarModel::reconstruct(Tape& tape, Var encoded) const { return destandardize(reconstruct_standardized(tape, encoded)); }

std::pair<Var, Var> PrarModel::recognize(Tape& tape, Var encoded) const {
  Var x = encoded;
  for (std::size_t i = 0; i < action_.size(); ++i)
    x = st_graph_conv(tape, x, adjacency_, action_[i], "prar.act." + std::to_string(i));
  Var per_frame = group_mean(x, layout_.joint_count());
  Var pooled = group_mean(per_frame, per_frame.rows());
  Var logits = add_row(matmul(pooled, tape.param("prar.fcn.weight")), tape.param("prar.fcn.bias"));
  return {per_frame, logits};
}

PrarModel::Vars PrarModel::forward(Tape& tape, Var input) const {
  Var encoded = encode(tape, input);
  Var rec = reconstruct_standardized(tape, encoded);
  auto [feature, logits] = recognize(tape, encoded);
  return {destandardize(rec), rec, feature, logits};
}

void PrarModel::check_window(const SkeletonSequence& seq) const {
  if (seq.frames() != config_.frames)
    throw std::invalid_argument("prar: observation has " + std::to_string(seq.frames()) + " frames, model expects " +
                                std::to_string(config_.frames));
  if (seq.joints() != layout_.joint_count())
    throw std::invalid_argument("prar: observation has " + std::to_string(seq.joints()) + " joints, layout has " +
                                std::to_string(layout_.joint_count()));
}

Tensor PrarModel::encode(const SkeletonSequence& observed) const {
  check_window(observed);
  Tape tape(&params_);
  Var enc = encode(tape, tape.constant(input_of(observed)));
  Tensor out(Shape{config_.frames, layout_.joint_count(), enc.cols()});
  out.matrix() = enc.value();
  return out;
}

SkeletonSequence PrarModel::reconstruct(const Tensor& encoded, const PoseFrame& frame) const {
  Tape tape(&params_);
  Var rec = reconstruct(tape, tape.constant(encoded));
  return frame.denormalize(config_.frames, layout_.joint_count(), rec.value());
}

ActionOutput PrarModel::recognize(const Tensor& encoded) const {
  Tape tape(&params_);
  auto [feature, logits] = recognize(tape, tape.constant(encoded));
  ActionOutput out;
  out.feature = Tensor::from_matrix(feature.value());
  out.logits = logits.value().row(0).transpose();
  out.logits.maxCoeff(&out.predicted);
  return out;
}

double loss_reconstruction(const SkeletonSequence& reconstructed, const SkeletonSequence& truth) {
  if (reconstructed.frames() != truth.frames() || reconstructed.joints() != truth.joints())
    throw std::invalid_argument("loss_reconstruction: shape mismatch");
  return (reconstructed.values() - truth.values()).squaredNorm();
}

double loss_reconstruction(const std::vector<SkeletonSequence>& reconstructed, const std::vector<SkeletonSequence>& truth) {
  if (reconstructed.size() != truth.size() || reconstructed.empty())
    throw std::invalid_argument("loss_reconstruction: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) total += loss_reconstruction(reconstructed[i], truth[i]);
  return total / static_cast<double>(truth.size());
}

double loss_action(const Eigen::VectorXd& logits, Index true_class) {
  if (true_class < 0 || true_class >= logits.size())
    throw std::out_of_range("loss_action: class " + std::to_string(true_class) + " outside [0," +
                            std::to_string(logits.size()) + ")");
  const double m = logits.maxCoeff();
  return m + std::log((logits.array() - m).exp().sum()) - logits(true_class);
}

double loss_action(const std::vector<Eigen::VectorXd>& logits, const std::vector<Index>& true_classes) {
  if (logits.size() != true_classes.size() || logits.empty())
    throw std::invalid_argument("loss_action: batch size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) total += loss_action(logits[i], true_classes[i]);
  return total / static_cast<double>(logits.size());
}

double loss_multitask(const SkeletonSequence& reconstructed, const SkeletonSequence& truth, const Eigen::VectorXd& logits,
                      Index true_class) {
  return loss_reconstruction(reconstructed, truth) + loss_action(logits, true_class);
}

}  // namespace gprar
