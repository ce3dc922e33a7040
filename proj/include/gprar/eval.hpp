#pragma once

#include "gprar/pipeline.hpp"
#include "gprar/synth.hpp"
#include "gprar/training.hpp"

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gprar {

/// Mean Euclidean distance between corresponding points.
double ade(const Trajectory& predicted, const Trajectory& truth);
/// Euclidean distance between the last points.
double fde(const Trajectory& predicted, const Trajectory& truth);

/// Extrapolates the last observed step: last + k * (last - second_to_last), k = 1..t_pred.
Trajectory const_vel(const Trajectory& observed, Index t_pred);

/// Fills each hidden joint with the mean of its k temporally nearest observed
/// values (ties go to the earlier frame). Joints never observed stay hidden.
SkeletonSequence knn_impute(const SkeletonSequence& seq, Index k = 5);

enum class ObservationMode { Noisy, Preprocessed, Complete };

ObservationMode parse_observation_mode(std::string_view name);
std::string to_string(ObservationMode mode);

struct EvalOptions {
  Index knn_k = 5;
  std::optional<double> occlusion;  // re-mask the observation window at this ratio
  unsigned threads = 1;
};

/// The observation window a predictor sees for a sample in the given mode.
SkeletonSequence observation_for(const Sample& sample, ObservationMode mode, const EvalOptions& options = {});

using Predictor = std::function<Trajectory(const Sample& sample, const SkeletonSequence& observed)>;

Predictor const_vel_predictor(const SkeletonLayout& layout);
/// Holds references; the models must outlive the predictor.
Predictor gprar_predictor(const PrarModel& prar, const FaModel& fa, const FeatureSet& features);

struct EvalRow {
  std::size_t sample = 0;
  double ade = 0.0;
  double fde = 0.0;
};

struct EvalReport {
  std::string predictor;
  ObservationMode mode = ObservationMode::Noisy;
  std::optional<double> occlusion;
  std::vector<EvalRow> rows;

  double mean_ade() const;
  double mean_fde() const;
  /// Columns: sample,predictor,mode,occlusion,ade,fde.
  void write_csv(std::ostream& out) const;
};

EvalReport run_eval(const std::string& name, const Predictor& predictor, const Corpus& corpus,
                    const std::vector<std::size_t>& indices, ObservationMode mode, const EvalOptions& options = {});

/// Masked-joint coordinate error of the reconstruction against the clean
/// window, next to the error of leaving hidden joints at the zero fill (the
/// pose-frame origin). Squared pixels per hidden joint.
struct ReconstructionScore {
  double model_mse = 0.0;
  double zero_fill_mse = 0.0;
  std::size_t hidden_joints = 0;
};

ReconstructionScore masked_reconstruction_error(const PrarModel& model, const Corpus& corpus,
                                                const std::vector<std::size_t>& indices);

/// Fraction of samples whose argmax class equals the label.
double action_accuracy(const PrarModel& model, const Corpus& corpus, const std::vector<std::size_t>& indices,
                       unsigned threads = 1);

/// Shared settings of the ablation and occlusion studies. Every variant
/// trains its own aggregator (and PRAR copy) from the same seeds and budget.
struct StudyConfig {
  TrainConfig train;
  FaConfig fa;
  std::uint64_t fa_seed = 0;
  ObservationMode mode = ObservationMode::Noisy;
  Index knn_k = 5;
};

struct TrainedVariant {
  FeatureSet features;
  PrarModel prar;
  FaModel fa;
  TrainFullResult training;
};

TrainedVariant train_variant(const PrarModel& pretrained, const Corpus& corpus, const FeatureSet& features,
                             const StudyConfig& cfg);

struct AblationRow {
  FeatureSet features;
  double ade = 0.0;
  double fde = 0.0;
  std::size_t fa_parameters = 0;
};

std::vector<AblationRow> ablation_grid(const PrarModel& pretrained, const Corpus& corpus,
                                       const std::vector<FeatureSet>& subsets, const StudyConfig& cfg);

/// Columns: subset,X,XR,P,PR,C,A,fa_parameters,ade,fde.
void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows);

struct SweepRow {
  FeatureSet features;
  double ratio = 0.0;
  double ade = 0.0;
  double fde = 0.0;
};

std::vector<SweepRow> occlusion_sweep(const PrarModel& pretrained, const Corpus& corpus,
                                      const std::vector<FeatureSet>& variants, const std::vector<double>& ratios,
                                      const StudyConfig& cfg);

/// Columns: variant,ratio,ade,fde.
void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows);
std::string sweep_svg(const std::vector<SweepRow>& rows);

}  // namespace gprar
