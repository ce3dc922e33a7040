#include "gprar/skeleton.hpp"

#include "gprar/random.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <queue>
#include <stdexcept>

namespace gprar {

int SkeletonLayout::graph_distance(int from, int to) const {
  const int n = static_cast<int>(joint_count());
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
  for (auto [a, b] : edges) {
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  std::queue<int> q;
  dist[static_cast<std::size_t>(from)] = 0;
  q.push(from);
  while (!q.empty()) {
    const int u = q.front();
    q.pop();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (dist[static_cast<std::size_t>(v)] >= 0) continue;
      dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
      q.push(v);
    }
  }
  return dist[static_cast<std::size_t>(to)];
}

bool SkeletonLayout::connected() const {
  for (int k = 1; k < joint_count(); ++k)
    if (graph_distance(0, k) < 0) return false;
  return true;
}

void SkeletonLayout::validate() const {
  const int n = static_cast<int>(joint_count());
  if (n <= 0) throw std::invalid_argument("layout: no joints");
  for (auto [a, b] : edges)
    if (a < 0 || b < 0 || a >= n || b >= n || a == b)
      throw std::invalid_argument("layout: edge (" + std::to_string(a) + "," + std::to_string(b) + ") is invalid");
  if (hip_pair.first < 0 || hip_pair.second < 0 || hip_pair.first >= n || hip_pair.second >= n)
    throw std::invalid_argument("layout: hip pair out of range");
  if (n > 1 && hip_pair.first == hip_pair.second) throw std::invalid_argument("layout: hip pair must be distinct");
  if (!connected()) throw std::invalid_argument("layout: skeleton graph is not connected");
}

nlohmann::json SkeletonLayout::to_json() const {
  nlohmann::json j;
  j["joint_names"] = joint_names;
  auto& e = j["edges"] = nlohmann::json::array();
  for (auto [a, b] : edges) e.push_back({a, b});
  j["hip_pair"] = {hip_pair.first, hip_pair.second};
  return j;
}

SkeletonLayout SkeletonLayout::from_json(const nlohmann::json& j) {
  SkeletonLayout l;
  l.joint_names = j.at("joint_names").get<std::vector<std::string>>();
  for (const auto& e : j.at("edges")) l.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  l.hip_pair = {j.at("hip_pair").at(0).get<int>(), j.at("hip_pair").at(1).get<int>()};
  l.validate();
  return l;
}

SkeletonLayout build_layout(std::string_view preset) {
  SkeletonLayout l;
  if (preset == "coco18") {
    l.joint_names = {"nose",   "neck",   "r_shoulder", "r_elbow", "r_wrist", "l_shoulder",
                     "l_elbow", "l_wrist", "r_hip",     "r_knee",  "r_ankle", "l_hip",
                     "l_knee",  "l_ankle", "r_eye",     "l_eye",   "r_ear",   "l_ear"};
    l.edges = {{1, 2},  {2, 3},  {3, 4},  {1, 5},  {5, 6},   {6, 7},   {1, 8},   {8, 9},  {9, 10},
               {1, 11}, {11, 12}, {12, 13}, {1, 0}, {0, 14}, {14, 16}, {0, 15}, {15, 17}};
    l.hip_pair = {11, 8};
  } else if (preset == "toy5") {
    l.joint_names = {"j0", "j1", "j2", "j3", "j4"};
    l.edges = {{0, 1}, {1, 2}, {2, 3}, {3, 4}};
    l.hip_pair = {1, 3};
  } else {
    throw std::invalid_argument("unknown skeleton preset '" + std::string(preset) + "'");
  }
  l.validate();
  return l;
}

SkeletonSequence::SkeletonSequence(Index frames, Index joints)
    : frames_(frames),
      joints_(joints),
      values_(RowMatrix<double>::Zero(frames * joints, 3)),
      mask_(static_cast<std::size_t>(frames * joints), 0) {
  if (frames <= 0 || joints <= 0) throw std::invalid_argument("skeleton sequence: empty shape");
}

Index SkeletonSequence::row(Index t, Index k) const {
  if (t < 0 || t >= frames_ || k < 0 || k >= joints_) throw std::out_of_range("skeleton sequence: index out of range");
  return t * joints_ + k;
}

void SkeletonSequence::set(Index t, Index k, double x, double y, double c) {
  if (c < 0.0 || c > 1.0) throw std::invalid_argument("skeleton sequence: confidence outside [0,1]");
  const Index r = row(t, k);
  values_.row(r) << x, y, c;
  mask_[static_cast<std::size_t>(r)] = 1;
}

void SkeletonSequence::hide(Index t, Index k) {
  const Index r = row(t, k);
  values_.row(r).setZero();
  mask_[static_cast<std::size_t>(r)] = 0;
}

Index SkeletonSequence::observed_count() const {
  return static_cast<Index>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

SkeletonSequence SkeletonSequence::slice(Index first, Index count) const {
  if (first < 0 || count <= 0 || first + count > frames_) throw std::out_of_range("skeleton sequence: bad slice");
  SkeletonSequence s(count, joints_);
  s.values_ = values_.middleRows(first * joints_, count * joints_);
  std::copy_n(mask_.begin() + first * joints_, count * joints_, s.mask_.begin());
  return s;
}

Tensor SkeletonSequence::to_tensor() const {
  Tensor t(Shape{frames_, joints_, 3});
  t.matrix() = values_;
  return t;
}

SkeletonSequence SkeletonSequence::from_values(Index frames, Index joints, const RowMatrix<double>& values) {
  if (values.rows() != frames * joints || values.cols() != 3)
    throw std::invalid_argument("skeleton sequence: values shape does not match frames x joints x 3");
  SkeletonSequence s(frames, joints);
  s.values_ = values;
  std::fill(s.mask_.begin(), s.mask_.end(), std::uint8_t{1});
  return s;
}

AdjacencyStrategy parse_adjacency_strategy(std::string_view name) {
  if (name == "uniform") return AdjacencyStrategy::Uniform;
  if (name == "distance") return AdjacencyStrategy::Distance;
  throw std::invalid_argument("unknown adjacency strategy '" + std::string(name) + "'");
}

std::string to_string(AdjacencyStrategy s) { return s == AdjacencyStrategy::Uniform ? "uniform" : "distance"; }

RowMatrix<double> NormalizedAdjacency::summed() const {
  RowMatrix<double> m = RowMatrix<double>::Zero(joints(), joints());
  for (const auto& p : partitions) m += p;
  return m;
}

NormalizedAdjacency build_adjacency(const SkeletonLayout& layout, AdjacencyStrategy strategy) {
  layout.validate();
  const Index n = layout.joint_count();
  RowMatrix<double> a = RowMatrix<double>::Zero(n, n);
  for (auto [i, j] : layout.edges) a(i, j) = a(j, i) = 1.0;
  const RowMatrix<double> a_hat = a + RowMatrix<double>::Identity(n, n);
  const Eigen::VectorXd d_inv_sqrt = a_hat.rowwise().sum().cwiseSqrt().cwiseInverse();
  const auto normalize = [&](const RowMatrix<double>& m) -> RowMatrix<double> {
    return d_inv_sqrt.asDiagonal() * m * d_inv_sqrt.asDiagonal();
  };
  NormalizedAdjacency out;
  if (strategy == AdjacencyStrategy::Uniform) {
    out.partitions.push_back(normalize(a_hat));
  } else {
    out.partitions.push_back(normalize(RowMatrix<double>::Identity(n, n)));
    out.partitions.push_back(normalize(a));
  }
  return out;
}

SkeletonSequence mask_joints(const SkeletonSequence& seq, double occlusion_ratio, std::uint64_t rng_seed) {
  if (!(occlusion_ratio >= 0.0 && occlusion_ratio <= 1.0))
    throw std::invalid_argument("mask_joints: occlusion ratio outside [0,1]");
  const Index k = seq.joints();
  const Index hidden = static_cast<Index>(std::floor(occlusion_ratio * static_cast<double>(k) + 1e-9));
  SkeletonSequence out = seq;
  if (hidden == 0) return out;
  std::vector<Index> order(static_cast<std::size_t>(k));
  for (Index t = 0; t < seq.frames(); ++t) {
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(derive_seed(rng_seed, static_cast<std::uint64_t>(t)));
    // Partial Fisher-Yates: the first `hidden` slots are a uniform sample.
    for (Index i = 0; i < hidden; ++i) {
      const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(k - i)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
      out.hide(t, order[static_cast<std::size_t>(i)]);
    }
  }
  return out;
}

Trajectory extract_location(const SkeletonSequence& seq, const SkeletonLayout& layout) {
  if (seq.joints() != layout.joint_count())
    throw std::invalid_argument("extract_location: sequence has " + std::to_string(seq.joints()) +
                                " joints, layout has " + std::to_string(layout.joint_count()));
  const auto [left, right] = layout.hip_pair;
  Trajectory out(seq.frames(), 2);
  for (Index t = 0; t < seq.frames(); ++t) {
    if (seq.observed(t, left) && seq.observed(t, right)) {
      out.row(t) = 0.5 * (seq.position(t, left) + seq.position(t, right)).transpose();
      continue;
    }
    Eigen::Vector2d acc = Eigen::Vector2d::Zero();
    int n = 0;
    for (Index k = 0; k < seq.joints(); ++k) {
      if (!seq.observed(t, k)) continue;
      acc += seq.position(t, k);
      ++n;
    }
    if (n > 0) acc /= n;
    out.row(t) = acc.transpose();
  }
  return out;
}

void write_pose_jsonl(std::ostream& out, const SkeletonSequence& seq) {
  for (Index t = 0; t < seq.frames(); ++t) {
    nlohmann::json line;
    line["frame"] = t;
    auto& joints = line["joints"] = nlohmann::json::array();
    auto& mask = line["mask"] = nlohmann::json::array();
    for (Index k = 0; k < seq.joints(); ++k) {
      joints.push_back({seq.x(t, k), seq.y(t, k), seq.confidence(t, k)});
      mask.push_back(seq.observed(t, k));
    }
    out << line.dump() << '\n';
  }
}

SkeletonSequence read_pose_jsonl(std::istream& in) {
  std::vector<nlohmann::json> lines;
  std::string text;
  while (std::getline(in, text)) {
    if (text.empty()) continue;
    lines.push_back(nlohmann::json::parse(text));
  }
  if (lines.empty()) throw std::runtime_error("pose file: no frames");
  const Index joints = static_cast<Index>(lines.front().at("joints").size());
  SkeletonSequence seq(static_cast<Index>(lines.size()), joints);
  for (const auto& line : lines) {
    const Index t = line.at("frame").get<Index>();
    const auto& js = line.at("joints");
    const auto& mask = line.at("mask");
    if (static_cast<Index>(js.size()) != joints || static_cast<Index>(mask.size()) != joints)
      throw std::runtime_error("pose file: frame " + std::to_string(t) + " has inconsistent joint count");
    for (Index k = 0; k < joints; ++k) {
      if (mask.at(static_cast<std::size_t>(k)).get<bool>()) {
        const auto& v = js.at(static_cast<std::size_t>(k));
        seq.set(t, k, v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>());
      }
    }
  }
  return seq;
}

}  // namespace gprar
