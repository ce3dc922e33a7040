#pragma once

#include "gprar/params.hpp"
#include "gprar/skeleton.hpp"
#include "gprar/tape.hpp"

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gprar {

struct StgcnLayerConfig {
  Index in_channels = 3;
  Index out_channels = 3;
  Index temporal_kernel = 9;  // odd, so symmetric padding keeps T
  bool has_residual = false;
  bool relu = true;
};

/// Trainable weights of one spatial-temporal graph convolution layer:
/// `<prefix>.spatial.<p>` (Cin x Cout per partition) and `<prefix>.temporal`
/// (kernel*Cout x Cout).
void add_stgcn_params(ModelParams& params, const std::string& prefix, const StgcnLayerConfig& layer,
                      std::size_t partitions);

/// One layer on a (T*K) x Cin frame-major feature matrix: per-frame spatial
/// aggregation sum_p M_p f W_p, temporal convolution per joint with
/// length-preserving zero padding, ReLU, then the optional identity residual.
Var st_graph_conv(Tape& tape, Var features, const NormalizedAdjacency& adjacency, const StgcnLayerConfig& layer,
                  const std::string& prefix);

/// Value-level wrapper; features is [T, K, Cin], result is [T, K, Cout].
Tensor st_graph_conv(const Tensor& features, const NormalizedAdjacency& adjacency, const StgcnLayerConfig& layer,
                     const ModelParams& params, const std::string& prefix);

struct PrarConfig {
  std::string layout = "coco18";
  AdjacencyStrategy adjacency = AdjacencyStrategy::Uniform;
  Index frames = 10;
  std::vector<Index> encoder_widths{3, 32, 64, 64};
  std::vector<Index> recon_widths{64, 64, 32, 16, 3};
  std::vector<Index> action_widths{64, 64, 64, 64, 32};
  Index temporal_kernel = 9;
  Index num_classes = 2;
  bool residual = true;
  double body_scale = 50.0;  // pixels per normalized unit
  // Per-joint (x, y) standardization of observed input joints in the pose
  // frame, 2K entries each in joint-major order. Empty means identity.
  std::vector<double> input_mean;
  std::vector<double> input_std;

  void validate() const;
  nlohmann::json to_json() const;
  static PrarConfig from_json(const nlohmann::json& j);
};

/// Translation/scale frame in which the network sees a pose window: observed
/// joints are centred on their mean location and divided by a fixed scale;
/// hidden joints stay (0, 0, 0).
struct PoseFrame {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double scale = 1.0;

  static PoseFrame of(const SkeletonSequence& observed, double scale);
  RowMatrix<double> normalize(const SkeletonSequence& seq) const;
  SkeletonSequence denormalize(Index frames, Index joints, const RowMatrix<double>& values) const;
};

struct ActionOutput {
  Tensor feature;  // [T, C_act]
  Eigen::VectorXd logits;
  Index predicted = 0;
};

class PrarModel {
 public:
  struct Vars {
    Var reconstructed;  // (T*K) x 3 in the pose frame, confidence squashed to [0,1]
    Var reconstructed_standardized;  // the same in the standardized input coordinates
    Var action_feature;  // T x C_act
    Var logits;          // 1 x classes
  };

  explicit PrarModel(PrarConfig config, std::uint64_t seed = 0);
  PrarModel(PrarConfig config, ModelParams params);

  const PrarConfig& config() const { return config_; }
  const SkeletonLayout& layout() const { return layout_; }
  const NormalizedAdjacency& adjacency() const { return adjacency_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }

  const std::vector<StgcnLayerConfig>& encoder_layers() const { return encoder_; }
  const std::vector<StgcnLayerConfig>& recon_layers() const { return recon_; }
  const std::vector<StgcnLayerConfig>& action_layers() const { return action_; }

  Var encode(Tape& tape, Var input) const;
  /// Reconstruction in the pose frame.
  Var reconstruct(Tape& tape, Var encoded) const;
  /// Reconstruction in the standardized coordinates the decoder emits.
  Var reconstruct_standardized(Tape& tape, Var encoded) const;
  Var destandardize(Var standardized) const;
  std::pair<Var, Var> recognize(Tape& tape, Var encoded) const;
  Vars forward(Tape& tape, Var input) const;

  /// Encoded pose feature [T, K, C_enc] of an observation window.
  Tensor encode(const SkeletonSequence& observed) const;
  SkeletonSequence reconstruct(const Tensor& encoded, const PoseFrame& frame) const;
  ActionOutput recognize(const Tensor& encoded) const;

  PoseFrame frame_of(const SkeletonSequence& observed) const { return PoseFrame::of(observed, config_.body_scale); }

  /// Network input of an observation window: pose-frame coordinates with the
  /// configured per-joint standardization; hidden joints stay (0, 0, 0).
  RowMatrix<double> input_of(const SkeletonSequence& observed) const;
  /// Standardizes every row of a (T*K) x 3 pose-frame matrix; confidence is unchanged.
  RowMatrix<double> standardize(const RowMatrix<double>& pose_frame_values) const;

  /// Sets the input standardization from the observed joints of `windows`.
  void fit_input_statistics(const std::vector<const SkeletonSequence*>& windows);
  void set_input_statistics(std::vector<double> mean, std::vector<double> stddev);
  bool has_input_statistics() const { return !config_.input_mean.empty(); }

 private:
  void build_layers();
  void check_window(const SkeletonSequence& seq) const;

  PrarConfig config_;
  SkeletonLayout layout_;
  NormalizedAdjacency adjacency_;
  void build_standardization();

  std::vector<StgcnLayerConfig> encoder_, recon_, action_;
  RowMatrix<double> std_scale_, std_offset_;  // (T*K) x 3, pose frame = standardized .* scale + offset
  ModelParams params_;
};

/// Sum over joints and frames of the squared (x, y, c) difference.
double loss_reconstruction(const SkeletonSequence& reconstructed, const SkeletonSequence& truth);
/// Batch mean of the per-sequence reconstruction loss.
double loss_reconstruction(const std::vector<SkeletonSequence>& reconstructed, const std::vector<SkeletonSequence>& truth);

/// Softmax cross-entropy of one sequence-level prediction.
double loss_action(const Eigen::VectorXd& logits, Index true_class);
double loss_action(const std::vector<Eigen::VectorXd>& logits, const std::vector<Index>& true_classes);

double loss_multitask(const SkeletonSequence& reconstructed, const SkeletonSequence& truth, const Eigen::VectorXd& logits,
                      Index true_class);

}  // namespace gprar
