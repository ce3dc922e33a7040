#pragma once

#include "gprar/flow.hpp"
#include "gprar/params.hpp"
#include "gprar/skeleton.hpp"
#include "gprar/tape.hpp"

#include "json.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace gprar {

/// Which input streams have an embedding stack. A missing stream contributes
/// a zero block of the same width to the channel junction.
struct StreamSet {
  bool grid = true;
  bool pose = true;
  bool location = true;
  bool action = true;

  friend bool operator==(const StreamSet&, const StreamSet&) = default;
};

/// Per-column standardization of one input stream: (x - mean) / std.
struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> std;

  /// Mean and population deviation of the columns of the stacked rows.
  /// Deviations below std_floor are raised to it; near-constant columns keep
  /// unit scale.
  static ColumnStats fit(const std::vector<RowMatrix<double>>& blocks, double std_floor = 0.0);
  friend bool operator==(const ColumnStats&, const ColumnStats&) = default;
};

enum class OutputMode {
  Offset,   // per-step displacements, cumulated from the last observed location
  Absolute  // coordinates relative to the image origin
};

struct FaConfig {
  Index frames = 10;
  Index horizon = 10;
  Index joints = 18;
  Index action_channels = 32;
  Index stream_channels = 16;
  Index stream_kernel = 3;
  std::vector<Index> encoder_channels{64, 96};
  Index encoder_kernel = 3;
  Index decoder_channels = 64;
  Index decoder_kernel = 4;
  double position_scale = 10.0;  // pixels per normalized unit
  double pose_scale = 50.0;      // pixels per normalized unit of the pose stream
  double flow_scale = 1.0;       // pixels/frame per normalized unit
  double stream_std_floor = 0.1;  // lower bound on fitted stream deviations
  OutputMode output_mode = OutputMode::Offset;
  StreamSet streams;
  std::map<std::string, ColumnStats> stream_stats;  // keyed by grid, pose, location, action

  void validate() const;
  nlohmann::json to_json() const;
  static FaConfig from_json(const nlohmann::json& j);
};

/// Reference point and scale mapping pixels to the aggregator's inputs and
/// outputs: normalized = (pixels - anchor) / scale.
struct FaFrame {
  Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
  double scale = 1.0;

  Trajectory to_pixels(const RowMatrix<double>& normalized) const;
  RowMatrix<double> from_pixels(const Trajectory& pixels) const;
};

/// Normalized streams, each frames x channels. Absent streams are left empty.
struct FaStreams {
  std::optional<Var> grid;      // 24
  std::optional<Var> pose;      // 3K, (x, y, c) per joint
  std::optional<Var> location;  // 2
  std::optional<Var> action;    // C_act
};

class FaModel {
 public:
  explicit FaModel(FaConfig config, std::uint64_t seed = 0);
  FaModel(FaConfig config, ModelParams params);

  const FaConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  Index stream_width(const std::string& stream) const;
  Index encoded_frames() const;
  Index encoded_channels() const { return config_.encoder_channels.back(); }

  FaFrame frame_for(const Trajectory& location) const;

  void set_stream_statistics(std::map<std::string, ColumnStats> stats);
  bool has_stream_statistics() const { return !config_.stream_stats.empty(); }

  RowMatrix<double> normalize_grid(const GridFlow& grid) const;
  /// T x 3K: joints relative to the frame anchor in pose_scale units; hidden joints stay zero.
  RowMatrix<double> normalize_pose(const SkeletonSequence& pose, const FaFrame& frame) const;
  RowMatrix<double> normalize_location(const Trajectory& location, const FaFrame& frame) const;

  /// Applies the stream's configured standardization, if any.
  Var standardize(Var x, const std::string& stream) const;

  /// Embeds each present stream, concatenates along channels and runs the
  /// joint encoder. Result: encoded_frames() x encoded_channels().
  Var aggregate(Tape& tape, const FaStreams& streams) const;
  /// Horizon x 2 in the aggregator frame.
  Var predict(Tape& tape, Var encoded) const;

 private:
  void add_params();

  FaConfig config_;
  ModelParams params_;
};

struct FaEncoding {
  Tensor features;  // [T_enc, C_enc]
  FaFrame frame;
};

/// Value-level aggregation of grid flow, pose, location and action feature.
/// Streams the model has no embedding for are ignored.
FaEncoding aggregate(const FaModel& model, const GridFlow& grid, const SkeletonSequence& pose,
                     const Trajectory& location, const Tensor& action);

Trajectory predict(const FaModel& model, const FaEncoding& encoded);

/// Sum over time of squared point distance.
double loss_prediction(const Trajectory& predicted, const Trajectory& truth);
/// Batch mean of the per-trajectory prediction loss.
double loss_prediction(const std::vector<Trajectory>& predicted, const std::vector<Trajectory>& truth);

}  // namespace gprar
