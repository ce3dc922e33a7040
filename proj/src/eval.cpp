#include "gprar/eval.hpp"

#include "gprar/parallel.hpp"
#include "gprar/svg.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

namespace gprar {

namespace {
void check_pair(const Trajectory& a, const Trajectory& b, const char* what) {
  if (a.rows() != b.rows())
    throw std::invalid_argument(std::string(what) + ": trajectory lengths " + std::to_string(a.rows()) + " and " +
                                std::to_string(b.rows()) + " differ");
  if (a.rows() < 1) throw std::invalid_argument(std::string(what) + ": empty trajectories");
}
}  // namespace

double ade(const Trajectory& predicted, const Trajectory& truth) {
  check_pair(predicted, truth, "ade");
  return (predicted - truth).rowwise().norm().mean();
}

double fde(const Trajectory& predicted, const Trajectory& truth) {
  check_pair(predicted, truth, "fde");
  const Index last = truth.rows() - 1;
  return (predicted.row(last) - truth.row(last)).norm();
}

Trajectory const_vel(const Trajectory& observed, Index t_pred) {
  if (observed.rows() < 2) throw std::invalid_argument("const_vel: need at least two observed locations");
  if (t_pred < 1) throw std::invalid_argument("const_vel: t_pred must be positive");
  const Eigen::RowVector2d last = observed.row(observed.rows() - 1);
  const Eigen::RowVector2d step = last - observed.row(observed.rows() - 2);
  Trajectory out(t_pred, 2);
  for (Index k = 0; k < t_pred; ++k) out.row(k) = last + static_cast<double>(k + 1) * step;
  return out;
}

SkeletonSequence knn_impute(const SkeletonSequence& seq, Index k) {
  if (k < 1) throw std::invalid_argument("knn_impute: k must be at least 1");
  SkeletonSequence out = seq;
  std::vector<Index> donors;
  for (Index j = 0; j < seq.joints(); ++j)
    for (Index t = 0; t < seq.frames(); ++t) {
      if (seq.observed(t, j)) continue;
      donors.clear();
      for (Index s = 0; s < seq.frames(); ++s)
        if (seq.observed(s, j)) donors.push_back(s);
      if (donors.empty()) continue;
      std::stable_sort(donors.begin(), donors.end(),
                       [t](Index a, Index b) { return std::abs(a - t) < std::abs(b - t); });
      const std::size_t n = std::min<std::size_t>(donors.size(), static_cast<std::size_t>(k));
      Eigen::Vector3d acc = Eigen::Vector3d::Zero();
      for (std::size_t i = 0; i < n; ++i)
        acc += Eigen::Vector3d(seq.x(donors[i], j), seq.y(donors[i], j), seq.confidence(donors[i], j));
      acc /= static_cast<double>(n);
      out.set(t, j, acc.x(), acc.y(), acc.z());
    }
  return out;
}

ObservationMode parse_observation_mode(std::string_view name) {
  if (name == "noisy") return ObservationMode::Noisy;
  if (name == "preprocessed") return ObservationMode::Preprocessed;
  if (name == "complete") return ObservationMode::Complete;
  throw std::invalid_argument("unknown observation mode '" + std::string(name) + "'");
}

std::string to_string(ObservationMode mode) {
  switch (mode) {
    case ObservationMode::Noisy: return "noisy";
    case ObservationMode::Preprocessed: return "preprocessed";
    case ObservationMode::Complete: return "complete";
  }
  return "unknown";
}

SkeletonSequence observation_for(const Sample& sample, ObservationMode mode, const EvalOptions& options) {
  const Index t_obs = sample.config.t_obs;
  if (mode == ObservationMode::Complete) return sample.clean.slice(0, t_obs);
  SkeletonSequence base =
      options.occlusion ? observe(sample.clean.slice(0, t_obs), sample.config, *options.occlusion) : sample.observed;
  if (mode == ObservationMode::Preprocessed) return knn_impute(base, options.knn_k);
  return base;
}

Predictor const_vel_predictor(const SkeletonLayout& layout) {
  return [layout](const Sample& sample, const SkeletonSequence& observed) {
    return const_vel(extract_location(observed, layout), sample.future.rows());
  };
}

Predictor gprar_predictor(const PrarModel& prar, const FaModel& fa, const FeatureSet& features) {
  return [&prar, &fa, features](const Sample& sample, const SkeletonSequence& observed) {
    return predict_trajectory(prar, fa, features, observed, sample.grid);
  };
}

double EvalReport::mean_ade() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.ade;
  return s / static_cast<double>(rows.size());
}

double EvalReport::mean_fde() const {
  if (rows.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : rows) s += r.fde;
  return s / static_cast<double>(rows.size());
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "sample,predictor,mode,occlusion,ade,fde\n";
  const std::string occ = occlusion ? format_double(*occlusion) : "";
  for (const auto& r : rows)
    out << r.sample << ',' << predictor << ',' << to_string(mode) << ',' << occ << ',' << format_double(r.ade) << ','
        << format_double(r.fde) << '\n';
}

EvalReport run_eval(const std::string& name, const Predictor& predictor, const Corpus& corpus,
                    const std::vector<std::size_t>& indices, ObservationMode mode, const EvalOptions& options) {
  EvalReport report;
  report.predictor = name;
  report.mode = mode;
  report.occlusion = options.occlusion;
  report.rows.resize(indices.size());
  parallel_for(indices.size(), options.threads, [&](std::size_t i) {
    const Sample& s = corpus.samples.at(indices[i]);
    const Trajectory p = predictor(s, observation_for(s, mode, options));
    report.rows[i] = {indices[i], ade(p, s.future), fde(p, s.future)};
  });
  return report;
}

ReconstructionScore masked_reconstruction_error(const PrarModel& model, const Corpus& corpus,
                                                const std::vector<std::size_t>& indices) {
  ReconstructionScore score;
  double model_sum = 0.0, zero_sum = 0.0;
  for (std::size_t idx : indices) {
    const Sample& s = corpus.samples.at(idx);
    const PoseFrame frame = model.frame_of(s.observed);
    const SkeletonSequence rec = model.reconstruct(model.encode(s.observed), frame);
    for (Index t = 0; t < s.observed.frames(); ++t)
      for (Index k = 0; k < s.observed.joints(); ++k) {
        if (s.observed.observed(t, k)) continue;
        const Eigen::Vector2d truth = s.clean.position(t, k);
        model_sum += (rec.position(t, k) - truth).squaredNorm();
        zero_sum += (frame.center - truth).squaredNorm();
        ++score.hidden_joints;
      }
  }
  if (score.hidden_joints > 0) {
    score.model_mse = model_sum / static_cast<double>(score.hidden_joints);
    score.zero_fill_mse = zero_sum / static_cast<double>(score.hidden_joints);
  }
  return score;
}

double action_accuracy(const PrarModel& model, const Corpus& corpus, const std::vector<std::size_t>& indices,
                       unsigned threads) {
  if (indices.empty()) throw std::invalid_argument("action_accuracy: no samples");
  std::vector<int> hit(indices.size(), 0);
  parallel_for(indices.size(), threads, [&](std::size_t i) {
    const Sample& s = corpus.samples.at(indices[i]);
    hit[i] = model.recognize(model.encode(s.observed)).predicted == s.label ? 1 : 0;
  });
  double n = 0;
  for (int h : hit) n += h;
  return n / static_cast<double>(indices.size());
}

TrainedVariant train_variant(const PrarModel& pretrained, const Corpus& corpus, const FeatureSet& features,
                             const StudyConfig& cfg) {
  PrarModel prar = pretrained;
  FaModel fa(fa_config_for(pretrained.config(), features, cfg.fa), cfg.fa_seed);
  TrainFullResult training = train_full(prar, fa, features, corpus, cfg.train);
  return {features, std::move(prar), std::move(fa), std::move(training)};
}

std::vector<AblationRow> ablation_grid(const PrarModel& pretrained, const Corpus& corpus,
                                       const std::vector<FeatureSet>& subsets, const StudyConfig& cfg) {
  if (subsets.empty()) throw std::invalid_argument("ablation_grid: no feature subsets");
  std::vector<AblationRow> rows;
  for (const auto& f : subsets) {
    const TrainedVariant v = train_variant(pretrained, corpus, f, cfg);
    EvalOptions opt;
    opt.knn_k = cfg.knn_k;
    opt.threads = cfg.train.threads;
    const auto report = run_eval(f.to_string(), gprar_predictor(v.prar, v.fa, f), corpus, corpus.validation, cfg.mode, opt);
    rows.push_back({f, report.mean_ade(), report.mean_fde(), static_cast<std::size_t>(v.fa.params().parameter_count())});
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  using Source = FeatureSet::Source;
  out << "subset,X,XR,P,PR,C,A,fa_parameters,ade,fde\n";
  for (const auto& r : rows) {
    const auto& f = r.features;
    out << f.to_string() << ',' << (f.location == Source::Raw) << ',' << (f.location == Source::Reconstructed) << ','
        << (f.pose == Source::Raw) << ',' << (f.pose == Source::Reconstructed) << ',' << f.grid << ',' << f.action << ','
        << r.fa_parameters << ',' << format_double(r.ade) << ',' << format_double(r.fde) << '\n';
  }
}

std::vector<SweepRow> occlusion_sweep(const PrarModel& pretrained, const Corpus& corpus,
                                      const std::vector<FeatureSet>& variants, const std::vector<double>& ratios,
                                      const StudyConfig& cfg) {
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("occlusion_sweep: ratio " + format_double(r) + " outside [0,1]");
  std::vector<SweepRow> rows;
  for (const auto& f : variants) {
    const TrainedVariant v = train_variant(pretrained, corpus, f, cfg);
    const Predictor p = gprar_predictor(v.prar, v.fa, f);
    for (double r : ratios) {
      EvalOptions opt;
      opt.knn_k = cfg.knn_k;
      opt.occlusion = r;
      opt.threads = cfg.train.threads;
      const auto report = run_eval(f.to_string(), p, corpus, corpus.validation, cfg.mode, opt);
      rows.push_back({f, r, report.mean_ade(), report.mean_fde()});
    }
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "variant,ratio,ade,fde\n";
  for (const auto& r : rows)
    out << r.features.to_string() << ',' << format_double(r.ratio) << ',' << format_double(r.ade) << ','
        << format_double(r.fde) << '\n';
}

std::string sweep_svg(const std::vector<SweepRow>& rows) {
  std::vector<PlotSeries> series;
  for (const auto& r : rows) {
    const std::string label = r.features.to_string();
    auto it = std::find_if(series.begin(), series.end(), [&](const PlotSeries& s) { return s.label == label; });
    if (it == series.end()) {
      series.push_back({label, {}, {}});
      it = series.end() - 1;
    }
    it->x.push_back(r.ratio);
    it->y.push_back(r.ade);
  }
  return line_chart({"ADE vs occlusion ratio", "occlusion ratio", "ADE (px)"}, series);
}

}  // namespace gprar
