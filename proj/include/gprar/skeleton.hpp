#pragma once

#include "gprar/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gprar {

/// Ordered 2-D pixel locations, one row per frame.
using Trajectory = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

struct SkeletonLayout {
  std::vector<std::string> joint_names;
  std::vector<std::pair<int, int>> edges;
  std::pair<int, int> hip_pair{0, 0};  // (left hip, right hip)

  Index joint_count() const { return static_cast<Index>(joint_names.size()); }
  int graph_distance(int from, int to) const;
  bool connected() const;
  void validate() const;

  nlohmann::json to_json() const;
  static SkeletonLayout from_json(const nlohmann::json& j);
};

/// Presets: "coco18" (OpenPose 18-joint body) and "toy5" (a 5-joint chain).
SkeletonLayout build_layout(std::string_view preset);

/// T frames of K joints, each (x, y, confidence), plus an observed mask.
/// Hidden joints always hold (0, 0, 0).
class SkeletonSequence {
 public:
  SkeletonSequence() = default;
  SkeletonSequence(Index frames, Index joints);

  Index frames() const { return frames_; }
  Index joints() const { return joints_; }

  /// (frames*joints) x 3, frame-major.
  const RowMatrix<double>& values() const { return values_; }

  double x(Index t, Index k) const { return values_(row(t, k), 0); }
  double y(Index t, Index k) const { return values_(row(t, k), 1); }
  double confidence(Index t, Index k) const { return values_(row(t, k), 2); }
  Eigen::Vector2d position(Index t, Index k) const { return values_.block<1, 2>(row(t, k), 0).transpose(); }
  bool observed(Index t, Index k) const { return mask_[static_cast<std::size_t>(row(t, k))] != 0; }

  void set(Index t, Index k, double x, double y, double c);
  void hide(Index t, Index k);
  Index observed_count() const;

  SkeletonSequence slice(Index first, Index count) const;
  Tensor to_tensor() const;  // [T, K, 3]

  /// Builds a fully observed sequence from (frames*joints) x 3 values.
  static SkeletonSequence from_values(Index frames, Index joints, const RowMatrix<double>& values);

  friend bool operator==(const SkeletonSequence& a, const SkeletonSequence& b) {
    return a.frames_ == b.frames_ && a.joints_ == b.joints_ && a.values_ == b.values_ && a.mask_ == b.mask_;
  }

 private:
  Index row(Index t, Index k) const;

  Index frames_ = 0;
  Index joints_ = 0;
  RowMatrix<double> values_;
  std::vector<std::uint8_t> mask_;
};

enum class AdjacencyStrategy { Uniform, Distance };

AdjacencyStrategy parse_adjacency_strategy(std::string_view name);
std::string to_string(AdjacencyStrategy s);

/// One symmetric-degree-normalized K x K matrix per neighbourhood partition.
struct NormalizedAdjacency {
  std::vector<RowMatrix<double>> partitions;

  Index joints() const { return partitions.empty() ? 0 : partitions.front().rows(); }
  RowMatrix<double> summed() const;
};

/// D^-1/2 (A + I) D^-1/2 with D the degrees of A + I. The distance strategy
/// splits that matrix into its diagonal (self) and off-diagonal (1-hop) parts,
/// both normalized by the same degrees.
NormalizedAdjacency build_adjacency(const SkeletonLayout& layout, AdjacencyStrategy strategy);

/// Hides floor(ratio * K) distinct joints in every frame; the choice depends
/// only on (rng_seed, frame index).
SkeletonSequence mask_joints(const SkeletonSequence& seq, double occlusion_ratio, std::uint64_t rng_seed);

/// Middle-hip track. Falls back to the mean of observed joints when a hip is
/// hidden, and to (0, 0) for frames with nothing observed.
Trajectory extract_location(const SkeletonSequence& seq, const SkeletonLayout& layout);

/// JSON-lines, one frame per line: {"frame": t, "joints": [[x,y,c],...], "mask": [...]}.
void write_pose_jsonl(std::ostream& out, const SkeletonSequence& seq);
SkeletonSequence read_pose_jsonl(std::istream& in);

}  // namespace gprar
