#include "gprar/training.hpp"

#include "gprar/graph.hpp"
#include "gprar/parallel.hpp"
#include "gprar/random.hpp"

#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace gprar {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train config: negative epoch count");
  if (!(lr0 >= 0.0)) throw std::invalid_argument("train config: learning rate must be non-negative");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw std::invalid_argument("train config: decay factor outside (0,1]");
  if (decay_every < 1) throw std::invalid_argument("train config: decay_every must be positive");
  if (batch_size < 1) throw std::invalid_argument("train config: batch size must be positive");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("train config: clip norm must be non-negative");
  if (threads < 1) throw std::invalid_argument("train config: need at least one thread");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},         {"lr0", lr0},         {"decay_factor", decay_factor},
          {"decay_every", decay_every}, {"batch_size", batch_size}, {"clip_norm", clip_norm}, {"adaptive", adaptive},
          {"rng_seed", rng_seed},     {"threads", threads}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr0 = j.value("lr0", c.lr0);
  c.decay_factor = j.value("decay_factor", c.decay_factor);
  c.decay_every = j.value("decay_every", c.decay_every);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.adaptive = j.value("adaptive", c.adaptive);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

double lr_schedule(const TrainConfig& cfg, Index epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  return cfg.lr0 * std::pow(cfg.decay_factor, static_cast<double>(epoch / cfg.decay_every));
}

std::vector<double> LossCurve::series(const std::string& split, const std::string& column) const {
  const auto it = std::find(columns.begin(), columns.end(), column);
  if (it == columns.end()) throw std::invalid_argument("loss curve: no column '" + column + "'");
  const auto c = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  for (const auto& r : rows)
    if (r.split == split) out.push_back(r.values[c]);
  return out;
}

void LossCurve::write_csv(std::ostream& out) const {
  out << "epoch,split";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.split;
    for (double v : r.values) out << ',' << format_double(v);
    out << '\n';
  }
}

namespace {

struct SampleGrad {
  std::map<std::string, RowMatrix<double>> grads;
  std::vector<double> parts;  // parts[0] is the loss being minimized
};

using GradFn = std::function<SampleGrad(std::size_t)>;
using EvalFn = std::function<std::vector<double>(const std::vector<std::size_t>&)>;

std::vector<double> mean_parts(const std::vector<std::vector<double>>& per_sample) {
  std::vector<double> acc(per_sample.front().size(), 0.0);
  for (const auto& p : per_sample)
    for (std::size_t i = 0; i < p.size(); ++i) acc[i] += p[i];
  for (double& v : acc) v /= static_cast<double>(per_sample.size());
  return acc;
}

/// Shared mini-batch SGD loop. Per-sample gradients may be computed in
/// parallel; they are always reduced in batch order.
StageResult sgd_loop(const TrainConfig& cfg, const Corpus& corpus, const std::vector<ModelParams*>& targets,
                     const GradFn& grad_fn, const EvalFn& eval_fn, std::vector<std::string> columns,
                     const std::function<void()>& on_best) {
  cfg.validate();
  if (corpus.train.empty()) throw std::invalid_argument("training: corpus has no training samples");
  StageResult result;
  result.curve.columns = std::move(columns);
  std::vector<std::size_t> order = corpus.train;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng shuffle(derive_seed(cfg.rng_seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
    const double lr = lr_schedule(cfg, epoch);
    std::vector<std::vector<double>> epoch_parts;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      std::vector<SampleGrad> grads(count);
      parallel_for(count, cfg.threads, [&](std::size_t i) { grads[i] = grad_fn(order[start + i]); });
      const double weight = 1.0 / static_cast<double>(count);
      double step_loss = 0.0;
      for (ModelParams* p : targets) p->zero_grad();
      for (const auto& g : grads) {
        step_loss += weight * g.parts[0];
        epoch_parts.push_back(g.parts);
        for (const auto& [name, m] : g.grads)
          for (ModelParams* p : targets)
            if (p->contains(name)) p->grad(name).matrix() += weight * m;
      }
      if (cfg.clip_norm > 0.0) {
        double sq = 0.0;
        for (ModelParams* p : targets)
          for (const auto& [_, e] : p->entries()) sq += e.grad.values().squaredNorm();
        if (const double norm = std::sqrt(sq); norm > cfg.clip_norm)
          for (ModelParams* p : targets)
            for (auto& [_, e] : p->entries()) e.grad.values() *= cfg.clip_norm / norm;
      }
      for (ModelParams* p : targets) sgd_step(*p, lr);
      result.step_losses.push_back(step_loss);
    }
    result.curve.rows.push_back({epoch, "train", mean_parts(epoch_parts)});
    double score = result.curve.rows.back().values[0];
    if (!corpus.validation.empty()) {
      result.curve.rows.push_back({epoch, "validation", eval_fn(corpus.validation)});
      score = result.curve.rows.back().values[0];
    }
    if (score < result.best_validation) {
      result.best_validation = score;
      result.best_epoch = epoch;
      on_best();
    }
  }
  return result;
}

std::vector<double> evaluate_each(std::size_t n, unsigned threads,
                                  const std::function<std::vector<double>(std::size_t)>& fn) {
  std::vector<std::vector<double>> parts(n);
  parallel_for(n, threads, [&](std::size_t i) { parts[i] = fn(i); });
  return mean_parts(parts);
}

struct MultitaskVars {
  Var total, reconstruction, action;
};

MultitaskVars multitask_on_tape(Tape& tape, const PrarModel& model, const Sample& sample) {
  const auto vars = model.forward(tape, tape.constant(model.input_of(sample.observed)));
  const double entries = static_cast<double>(vars.reconstructed.rows());
  const Var lr = (1.0 / entries) * squared_error(vars.reconstructed_standardized,
                                                 tape.constant(model.standardize(reconstruction_target(model, sample))));
  const Var la = softmax_cross_entropy(vars.logits, sample.label);
  return {lr + la, lr, la};
}

}  // namespace

RowMatrix<double> reconstruction_target(const PrarModel& model, const Sample& sample) {
  const SkeletonSequence window = sample.clean.slice(0, model.config().frames);
  RowMatrix<double> target = model.frame_of(sample.observed).normalize(window);
  target.col(2).setOnes();
  return target;
}

MultitaskLoss evaluate_multitask(const PrarModel& model, const Corpus& corpus, const std::vector<std::size_t>& indices,
                                 unsigned threads) {
  if (indices.empty()) throw std::invalid_argument("evaluate_multitask: no samples");
  const auto m = evaluate_each(indices.size(), threads, [&](std::size_t i) {
    Tape tape(&model.params());
    const auto v = multitask_on_tape(tape, model, corpus.samples.at(indices[i]));
    return std::vector<double>{v.total.value()(0, 0), v.reconstruction.value()(0, 0), v.action.value()(0, 0)};
  });
  return {m[0], m[1], m[2]};
}

void fit_input_statistics(PrarModel& model, const Corpus& corpus) {
  std::vector<const SkeletonSequence*> windows;
  for (std::size_t i : corpus.train) windows.push_back(&corpus.samples.at(i).observed);
  if (windows.empty())
    for (const auto& s : corpus.samples) windows.push_back(&s.observed);
  model.fit_input_statistics(windows);
}

PretrainResult pretrain_prar(PrarModel& model, const Corpus& corpus, const TrainConfig& cfg) {
  if (corpus.samples.empty()) throw std::invalid_argument("pretrain_prar: empty corpus");
  for (const auto& s : corpus.samples)
    if (s.label < 0 || s.label >= model.config().num_classes)
      throw std::invalid_argument("pretrain_prar: label " + std::to_string(s.label) + " outside the model's " +
                                  std::to_string(model.config().num_classes) + " classes");
  if (!model.has_input_statistics()) fit_input_statistics(model, corpus);
  PretrainResult out;
  out.best = model.params();
  const GradFn grad = [&](std::size_t i) {
    Tape tape(&model.params());
    const auto v = multitask_on_tape(tape, model, corpus.samples[i]);
    tape.backward(v.total);
    return SampleGrad{tape.parameter_gradients(),
                      {v.total.value()(0, 0), v.reconstruction.value()(0, 0), v.action.value()(0, 0)}};
  };
  const EvalFn eval = [&](const std::vector<std::size_t>& idx) {
    const auto m = evaluate_multitask(model, corpus, idx, cfg.threads);
    return std::vector<double>{m.total, m.reconstruction, m.action};
  };
  static_cast<StageResult&>(out) =
      sgd_loop(cfg, corpus, {&model.params()}, grad, eval, {"L", "L_r", "L_a"}, [&] { out.best = model.params(); });
  return out;
}

WarmStartReport warm_start(PrarModel& model, const ModelParams& checkpoint) {
  WarmStartReport report;
  for (const auto& [name, entry] : model.params().entries()) {
    const bool matches = checkpoint.contains(name) && checkpoint.value(name).shape() == entry.value.shape();
    if (matches) {
      report.copied.push_back(name);
    } else if (name.rfind("prar.fcn.", 0) == 0) {
      report.reinitialized.push_back(name);
    } else {
      throw std::invalid_argument("warm_start: checkpoint entry '" + name + "' is " +
                                  (checkpoint.contains(name) ? "shape " + shape_string(checkpoint.value(name).shape())
                                                             : std::string("missing")) +
                                  ", model needs " + shape_string(entry.value.shape()));
    }
  }
  for (const auto& name : report.copied) model.params().value(name) = checkpoint.value(name);
  return report;
}

WarmStartReport warm_start(PrarModel& model, const std::filesystem::path& checkpoint) {
  return warm_start(model, ModelParams::load(checkpoint));
}

WarmStartReport warm_start(PrarModel& model, const PrarModel& checkpoint) {
  WarmStartReport report = warm_start(model, checkpoint.params());
  model.set_input_statistics(checkpoint.config().input_mean, checkpoint.config().input_std);
  return report;
}

namespace {

double prediction_loss_px(Tape& tape, const PrarModel& prar, const FaModel& fa, const FeatureSet& features,
                          const Sample& sample, const PrarOutputs* cached, Var* loss_out) {
  const auto pv = build_prediction(tape, prar, fa, features, sample.observed, sample.grid, cached);
  const double entries = static_cast<double>(pv.predicted.rows() * pv.predicted.cols());
  const Var loss = (1.0 / entries) * squared_error(pv.predicted, frame_target(tape, pv, sample.future));
  if (loss_out != nullptr) *loss_out = loss;
  return loss.value()(0, 0) * pv.frame.scale * pv.frame.scale;
}

}  // namespace

double evaluate_prediction(const PrarModel& prar, const FaModel& fa, const FeatureSet& features, const Corpus& corpus,
                           const std::vector<std::size_t>& indices, unsigned threads) {
  if (indices.empty()) throw std::invalid_argument("evaluate_prediction: no samples");
  return evaluate_each(indices.size(), threads, [&](std::size_t i) {
    Tape tape(std::vector<const ModelParams*>{&prar.params(), &fa.params()});
    return std::vector<double>{
        prediction_loss_px(tape, prar, fa, features, corpus.samples.at(indices[i]), nullptr, nullptr)};
  })[0];
}

void fit_stream_statistics(const PrarModel& prar, FaModel& fa, const FeatureSet& features, const Corpus& corpus,
                           unsigned threads) {
  std::vector<std::size_t> idx = corpus.train;
  if (idx.empty())
    for (std::size_t i = 0; i < corpus.samples.size(); ++i) idx.push_back(i);
  if (idx.empty()) throw std::invalid_argument("fit_stream_statistics: empty corpus");
  std::vector<std::map<std::string, RowMatrix<double>>> values(idx.size());
  parallel_for(idx.size(), threads, [&](std::size_t i) {
    const Sample& s = corpus.samples.at(idx[i]);
    Tape tape(std::vector<const ModelParams*>{&prar.params(), &fa.params()});
    const auto in = build_streams(tape, prar, fa, features, s.observed, s.grid);
    auto& v = values[i];
    if (in.streams.grid) v["grid"] = in.streams.grid->value();
    if (in.streams.pose) v["pose"] = in.streams.pose->value();
    if (in.streams.location) v["location"] = in.streams.location->value();
    if (in.streams.action) v["action"] = in.streams.action->value();
  });
  std::map<std::string, ColumnStats> stats;
  for (const auto& [name, _] : values.front()) {
    std::vector<RowMatrix<double>> blocks;
    for (const auto& v : values) blocks.push_back(v.at(name));
    stats[name] = ColumnStats::fit(blocks, fa.config().stream_std_floor);
  }
  fa.set_stream_statistics(std::move(stats));
}

TrainFullResult train_full(PrarModel& prar, FaModel& fa, const FeatureSet& features, const Corpus& corpus,
                           const TrainConfig& cfg) {
  if (corpus.samples.empty()) throw std::invalid_argument("train_full: empty corpus");
  if (!fa.has_stream_statistics()) fit_stream_statistics(prar, fa, features, corpus, cfg.threads);
  const bool cache = !cfg.adaptive && features.needs_prar();
  std::vector<PrarOutputs> cached;
  if (cache) {
    cached.resize(corpus.samples.size());
    parallel_for(corpus.samples.size(), cfg.threads,
                 [&](std::size_t i) { cached[i] = run_prar(prar, corpus.samples[i].observed); });
  }
  const auto cache_of = [&](std::size_t i) { return cache ? &cached[i] : nullptr; };
  const auto frozen = [adaptive = cfg.adaptive](const std::string& name) {
    return !adaptive && name.rfind("prar.", 0) == 0;
  };

  TrainFullResult out;
  out.best_prar = prar.params();
  out.best_fa = fa.params();
  const GradFn grad = [&](std::size_t i) {
    Tape tape(std::vector<const ModelParams*>{&prar.params(), &fa.params()}, frozen);
    Var loss;
    const double px = prediction_loss_px(tape, prar, fa, features, corpus.samples[i], cache_of(i), &loss);
    tape.backward(loss);
    return SampleGrad{tape.parameter_gradients(), {px}};
  };
  const EvalFn eval = [&](const std::vector<std::size_t>& idx) {
    return evaluate_each(idx.size(), cfg.threads, [&](std::size_t i) {
      Tape tape(std::vector<const ModelParams*>{&prar.params(), &fa.params()});
      return std::vector<double>{
          prediction_loss_px(tape, prar, fa, features, corpus.samples[idx[i]], cache_of(idx[i]), nullptr)};
    });
  };
  std::vector<ModelParams*> targets{&fa.params()};
  if (cfg.adaptive) targets.push_back(&prar.params());
  static_cast<StageResult&>(out) = sgd_loop(cfg, corpus, targets, grad, eval, {"L_pred"}, [&] {
    out.best_prar = prar.params();
    out.best_fa = fa.params();
  });
  return out;
}

}  // namespace gprar
