#pragma once

#include "gprar/pipeline.hpp"
#include "gprar/synth.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

namespace gprar {

struct TrainConfig {
  Index epochs = 50;
  double lr0 = 0.01;
  double decay_factor = 0.1;
  Index decay_every = 10;
  Index batch_size = 16;
  double clip_norm = 0.0;  // rescale larger global gradient norms to this; 0 disables
  bool adaptive = true;
  std::uint64_t rng_seed = 0;
  unsigned threads = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// lr0 * decay_factor^floor(epoch / decay_every).
double lr_schedule(const TrainConfig& cfg, Index epoch);

/// Per-epoch losses. Columns after (epoch, split) are named by `columns`.
struct LossCurve {
  struct Row {
    Index epoch = 0;
    std::string split;
    std::vector<double> values;
  };

  std::vector<std::string> columns;
  std::vector<Row> rows;

  std::vector<double> series(const std::string& split, const std::string& column) const;
  void write_csv(std::ostream& out) const;
};

struct StageResult {
  LossCurve curve;
  std::vector<double> step_losses;  // batch-mean training loss of every SGD step
  Index best_epoch = -1;
  double best_validation = std::numeric_limits<double>::infinity();
};

struct PretrainResult : StageResult {
  ModelParams best;
};

struct TrainFullResult : StageResult {
  ModelParams best_prar;
  ModelParams best_fa;
};

/// Stage-1 target for one sample: the clean observation window in the pose
/// frame of the noisy one, confidence 1 everywhere.
RowMatrix<double> reconstruction_target(const PrarModel& model, const Sample& sample);

struct MultitaskLoss {
  double total = 0.0;
  double reconstruction = 0.0;
  double action = 0.0;
};

/// Mean stage-1 losses of the model over the given samples.
MultitaskLoss evaluate_multitask(const PrarModel& model, const Corpus& corpus, const std::vector<std::size_t>& indices,
                                 unsigned threads = 1);

/// Fits the model's input standardization on the training split (all samples
/// when the split is empty).
void fit_input_statistics(PrarModel& model, const Corpus& corpus);

/// Stage 1: SGD on L_r + L_a over shuffled mini-batches, after fitting the
/// input standardization when the model has none. The model is left at the
/// last epoch; the lowest-validation-loss parameters are returned.
PretrainResult pretrain_prar(PrarModel& model, const Corpus& corpus, const TrainConfig& cfg);

struct WarmStartReport {
  std::vector<std::string> copied;
  std::vector<std::string> reinitialized;
};

/// Copies every shape-matching checkpoint entry. Only the classifier
/// (prar.fcn.*) may mismatch; it keeps its fresh initialization.
WarmStartReport warm_start(PrarModel& model, const ModelParams& checkpoint);
WarmStartReport warm_start(PrarModel& model, const std::filesystem::path& checkpoint);
/// Also adopts the checkpoint model's input standardization.
WarmStartReport warm_start(PrarModel& model, const PrarModel& checkpoint);

/// Mean squared per-coordinate trajectory error in squared pixels over the given samples.
double evaluate_prediction(const PrarModel& prar, const FaModel& fa, const FeatureSet& features, const Corpus& corpus,
                           const std::vector<std::size_t>& indices, unsigned threads = 1);

/// Fits the aggregator's per-stream input standardization on the training
/// split (all samples when the split is empty) with the current PRAR.
void fit_stream_statistics(const PrarModel& prar, FaModel& fa, const FeatureSet& features, const Corpus& corpus,
                           unsigned threads = 1);

/// Stage 2: SGD on the prediction loss, after fitting the aggregator's stream
/// standardization when it has none. Adaptive mode also updates PRAR;
/// otherwise PRAR outputs are computed once and held fixed.
TrainFullResult train_full(PrarModel& prar, FaModel& fa, const FeatureSet& features, const Corpus& corpus,
                           const TrainConfig& cfg);

}  // namespace gprar
