// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include "gprar/eval.hpp"
#include "gprar/flow.hpp"
#include "gprar/graph.hpp"
#include "gprar/random.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace gprar;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and thresholds.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradEpsilon = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kOracleTolerance = 1e-10;
constexpr double kUnitTolerance = 1e-9;
constexpr double kReconstructionRatio = 0.5;
constexpr double kReconstructionSeconds = 600.0;
constexpr double kTwoClassAccuracy = 0.90;
constexpr double kFourClassAccuracy = 0.75;

// Shared recipes.
constexpr std::size_t kCorpusSize = 500;
const std::map<Action, double> kTwoClass{{Action::Walking, 0.5}, {Action::Standing, 0.5}};
const std::map<Action, double> kFourClass{
    {Action::Walking, 0.25}, {Action::Standing, 0.25}, {Action::Bending, 0.25}, {Action::Running, 0.25}};

TrainConfig stage1_recipe(Index epochs) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.lr0 = 0.05;
  tc.batch_size = 8;
  tc.decay_every = 10;
  return tc;
}

StudyConfig stage2_recipe(bool adaptive) {
  StudyConfig sc;
  sc.train.epochs = 8;
  sc.train.lr0 = 0.01;
  sc.train.batch_size = 8;
  sc.train.decay_every = 5;
  sc.train.adaptive = adaptive;
  return sc;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

RowMatrix<double> random_matrix(Rng& rng, Index rows, Index cols) {
  RowMatrix<double> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

ModelParams random_params(std::uint64_t seed, const std::vector<std::pair<std::string, Shape>>& shapes) {
  ModelParams p(seed);
  Rng rng(seed);
  for (const auto& [name, shape] : shapes) {
    Tensor t(shape);
    for (Index i = 0; i < t.size(); ++i) t.values()[i] = rng.uniform(-1.0, 1.0);
    p.add(name, std::move(t));
  }
  return p;
}

PrarConfig toy_prar(Index frames) {
  PrarConfig c;
  c.layout = "toy5";
  c.frames = frames;
  c.temporal_kernel = 3;
  c.encoder_widths = {3, 4, 4, 4};
  c.recon_widths = {4, 4, 3, 3, 3};
  c.action_widths = {4, 4, 4, 3, 3};
  c.num_classes = 3;
  return c;
}

SkeletonSequence toy_window(Index frames) {
  SkeletonSequence s(frames, 5);
  for (Index t = 0; t < frames; ++t)
    for (Index k = 0; k < 5; ++k)
      s.set(t, k, 100.0 + 10.0 * k + 3.0 * t + 2.0 * std::sin(0.7 * t + k), 200.0 - 25.0 * k + std::cos(0.3 * t * k),
            0.5 + 0.1 * k);
  return s;
}

// 1. Gradient suite.
Outcome gradients() {
  const auto start = std::chrono::steady_clock::now();
  std::vector<std::pair<std::string, double>> errors;
  Rng rng(17);
  const RowMatrix<double> x = random_matrix(rng, 6, 3);
  const RowMatrix<double> adj = random_matrix(rng, 2, 2).cwiseAbs();
  const NamedTensors in{{"x", Tensor::from_matrix(x)}};
  const auto X = [](Tape& t, const NamedTensors& in) { return t.constant(require_input(in, "x")); };
  const auto check = [&](const std::string& name, const Graph& g, const ModelParams& p) {
    errors.emplace_back(name, finite_diff_check(g, in, p, kGradEpsilon));
  };

  check("matmul", [&](Tape& t, const NamedTensors& in) {
    return NamedVars{{"loss", sum(matmul(X(t, in), t.param("w")))}};
  }, random_params(1, {{"w", Shape{3, 4}}}));
  check("add_row", [&](Tape& t, const NamedTensors& in) {
    return NamedVars{{"loss", squared_error(add_row(matmul(X(t, in), t.param("w")), t.param("b")) - X(t, in), X(t, in))}};
  }, random_params(2, {{"b", Shape{1, 3}}, {"w", Shape{3, 3}}}));
  check("affine", [&](Tape& t, const NamedTensors& in) {
    const Eigen::VectorXd scale = Eigen::VectorXd::LinSpaced(3, 0.5, 2.0), offset = Eigen::VectorXd::Constant(3, 0.1);
    const RowMatrix<double> es = RowMatrix<double>::Constant(6, 3, 1.5), eo = RowMatrix<double>::Constant(6, 3, -0.2);
    const Var h = affine_elementwise(affine_columns(0.5 * matmul(X(t, in), t.param("w")), scale, offset), es, eo);
    return NamedVars{{"loss", squared_error(h, X(t, in))}};
  }, random_params(3, {{"w", Shape{3, 3}}}));
  check("relu", [&](Tape& t, const NamedTensors& in) {
    return NamedVars{{"loss", squared_error(relu(matmul(X(t, in), t.param("w"))), t.constant(RowMatrix<double>::Ones(6, 5)))}};
  }, random_params(4, {{"w", Shape{3, 5}}}));
  check("sigmoid", [&](Tape& t, const NamedTensors& in) {
    return NamedVars{{"loss", squared_error(sigmoid_columns(matmul(X(t, in), t.param("w")), 1, 2), X(t, in))}};
  }, random_params(5, {{"w", Shape{3, 3}}}));
  check("graph_aggregate", [&](Tape& t, const NamedTensors& in) {
    const Var h = graph_aggregate(matmul(X(t, in), t.param("w")), adj);
    return NamedVars{{"loss", squared_error(h, t.constant(RowMatrix<double>::Ones(6, 2)))}};
  }, random_params(6, {{"w", Shape{3, 2}}}));
  check("temporal_conv", [&](Tape& t, const NamedTensors& in) {
    const Var h = temporal_conv(X(t, in), t.param("w"), ConvGeometry{1, 3, 2, 1});
    return NamedVars{{"loss", squared_error(h, t.constant(RowMatrix<double>::Ones(3, 2)))}};
  }, random_params(7, {{"w", Shape{9, 2}}}));
  check("temporal_deconv", [&](Tape& t, const NamedTensors& in) {
    const Var h = temporal_deconv(X(t, in), t.param("w"), ConvGeometry{1, 4, 2, 1}, 10);
    return NamedVars{{"loss", squared_error(h, t.constant(RowMatrix<double>::Ones(10, 2)))}};
  }, random_params(8, {{"w", Shape{12, 2}}}));
  check("reshape+concat", [&](Tape& t, const NamedTensors& in) {
    const Var h = concat_columns<double>({matmul(X(t, in), t.param("w")), X(t, in)});
    return NamedVars{{"loss", squared_error(reshape(h, 3, 10), t.constant(RowMatrix<double>::Ones(3, 10)))}};
  }, random_params(9, {{"w", Shape{3, 2}}}));
  check("group_mean+cross_entropy", [&](Tape& t, const NamedTensors& in) {
    return NamedVars{{"loss", softmax_cross_entropy(group_mean(group_mean(matmul(X(t, in), t.param("w")), 2), 3), 2)}};
  }, random_params(10, {{"w", Shape{3, 4}}}));
  {
    const auto nadj = build_adjacency(build_layout("toy5"), AdjacencyStrategy::Distance);
    const StgcnLayerConfig layer{3, 3, 3, true, true};
    ModelParams p(11);
    add_stgcn_params(p, "l", layer, nadj.partitions.size());
    const RowMatrix<double> xs = random_matrix(rng, 4 * 5, 3);
    check("st_graph_conv", [&](Tape& t, const NamedTensors&) {
      const Var h = st_graph_conv(t, t.constant(xs), nadj, layer, "l");
      return NamedVars{{"loss", squared_error(h, t.constant(RowMatrix<double>::Ones(20, 3)))}};
    }, p);
  }

  // Full composite: observation -> PRAR -> aggregator -> trajectory loss.
  const Index frames = 6;
  const PrarModel prar(toy_prar(frames), 21);
  const SkeletonSequence observed = mask_joints(toy_window(frames), 0.2, 1);
  PrarModel fitted = prar;
  fitted.fit_input_statistics({&observed});
  FlowField flow(frames, 8, 6);
  for (Index t = 0; t < frames; ++t)
    for (Index yy = 0; yy < 6; ++yy)
      for (Index xx = 0; xx < 8; ++xx) flow.set(t, xx, yy, {rng.normal(), rng.normal()});
  const GridFlow grid = grid_flow(flow);
  FaConfig base;
  base.horizon = 4;
  base.stream_channels = 2;
  base.encoder_channels = {3, 4};
  base.decoder_channels = 3;
  const FeatureSet features = FeatureSet::full();
  FaModel fa(fa_config_for(fitted.config(), features, base), 11);
  {
    Tape tape(std::vector<const ModelParams*>{&fitted.params(), &fa.params()});
    const auto streams = build_streams(tape, fitted, fa, features, observed, grid).streams;
    std::map<std::string, ColumnStats> stats;
    stats["grid"] = ColumnStats::fit({streams.grid->value()}, fa.config().stream_std_floor);
    stats["pose"] = ColumnStats::fit({streams.pose->value()}, fa.config().stream_std_floor);
    stats["location"] = ColumnStats::fit({streams.location->value()}, fa.config().stream_std_floor);
    stats["action"] = ColumnStats::fit({streams.action->value()}, fa.config().stream_std_floor);
    fa.set_stream_statistics(std::move(stats));
  }
  ModelParams joint;
  for (const auto* p : {&fitted.params(), &fa.params()})
    for (const auto& [name, e] : p->entries()) joint.add(name, e.value);
  Trajectory future(4, 2);
  for (Index t = 0; t < 4; ++t) future.row(t) << 140.0 + 3.0 * t, 170.0 - t;
  check("prar+fa composite", [&](Tape& t, const NamedTensors&) {
    const auto pred = build_prediction(t, fitted, fa, features, observed, grid);
    return NamedVars{{"loss", squared_error(pred.predicted, frame_target(t, pred, future))}};
  }, joint);

  double worst = 0.0;
  std::string worst_name;
  for (const auto& [name, err] : errors)
    if (err >= worst) worst = err, worst_name = name;
  const double elapsed = seconds_since(start);
  return {worst <= kGradTolerance && elapsed < kGradSeconds,
          std::to_string(errors.size()) + " graphs, worst " + fmt(worst) + " (" + worst_name + "), " + fmt(elapsed) + " s"};
}

// 2. Graph-conv oracle.
RowMatrix<double> brute_force_layer(const RowMatrix<double>& x, const NormalizedAdjacency& adj,
                                    const StgcnLayerConfig& layer, const ModelParams& p) {
  const Index k = adj.joints(), frames = x.rows() / k, cin = layer.in_channels, cout = layer.out_channels;
  RowMatrix<double> spatial = RowMatrix<double>::Zero(frames * k, cout);
  for (std::size_t part = 0; part < adj.partitions.size(); ++part) {
    const auto w = p.value("l.spatial." + std::to_string(part)).matrix();
    for (Index t = 0; t < frames; ++t)
      for (Index i = 0; i < k; ++i)
        for (Index j = 0; j < k; ++j)
          for (Index a = 0; a < cin; ++a)
            for (Index b = 0; b < cout; ++b) spatial(t * k + i, b) += adj.partitions[part](i, j) * x(t * k + j, a) * w(a, b);
  }
  const auto tw = p.value("l.temporal").matrix();
  const Index half = layer.temporal_kernel / 2;
  RowMatrix<double> out = RowMatrix<double>::Zero(frames * k, cout);
  for (Index t = 0; t < frames; ++t)
    for (Index i = 0; i < k; ++i)
      for (Index tap = 0; tap < layer.temporal_kernel; ++tap) {
        const Index src = t + tap - half;
        if (src < 0 || src >= frames) continue;
        for (Index a = 0; a < cout; ++a)
          for (Index b = 0; b < cout; ++b) out(t * k + i, b) += spatial(src * k + i, a) * tw(tap * cout + a, b);
      }
  if (layer.relu) out = out.cwiseMax(0.0);
  if (layer.has_residual && cin == cout) out += x;
  return out;
}

Outcome graph_conv_oracle() {
  const auto layout = build_layout("toy5");
  Rng rng(13);
  double worst = 0.0;
  for (const auto strategy : {AdjacencyStrategy::Uniform, AdjacencyStrategy::Distance})
    for (const bool residual : {false, true})
      for (const bool relu : {false, true}) {
        const auto adj = build_adjacency(layout, strategy);
        const StgcnLayerConfig layer{4, residual ? 4 : 6, 5, residual, relu};
        ModelParams p(rng.below(1000));
        add_stgcn_params(p, "l", layer, adj.partitions.size());
        const RowMatrix<double> x = random_matrix(rng, 7 * 5, 4);
        Tensor xt(Shape{7, 5, 4});
        xt.matrix() = x;
        const RowMatrix<double> fast = st_graph_conv(xt, adj, layer, p, "l").matrix();
        worst = std::max(worst, (fast - brute_force_layer(x, adj, layer, p)).cwiseAbs().maxCoeff());
      }

  const auto adj = build_adjacency(layout, AdjacencyStrategy::Uniform);
  const StgcnLayerConfig layer{2, 2, 1, false, true};
  ModelParams p(5);
  for (int i = 0; i < 4; ++i) add_stgcn_params(p, "l" + std::to_string(i), layer, 1);
  for (auto& [_, e] : p.entries()) e.value.values() = e.value.values().cwiseAbs().array() + 0.1;
  int support_mismatches = 0;
  for (int source = 0; source < 5; ++source)
    for (int depth = 1; depth <= 4; ++depth) {
      Tape tape(&p);
      RowMatrix<double> x = RowMatrix<double>::Zero(5, 2);
      x.row(source).setOnes();
      Var h = tape.constant(x);
      for (int i = 0; i < depth; ++i) h = st_graph_conv(tape, h, adj, layer, "l" + std::to_string(i));
      for (int k = 0; k < 5; ++k)
        support_mismatches += (h.value().row(k).maxCoeff() > 0.0) != (layout.graph_distance(source, k) <= depth);
    }
  return {worst <= kOracleTolerance && support_mismatches == 0,
          "max deviation " + fmt(worst) + ", k-hop support mismatches " + std::to_string(support_mismatches)};
}

// 3. Loss and metric examples.
Trajectory traj(std::initializer_list<std::pair<double, double>> pts) {
  Trajectory t(static_cast<Index>(pts.size()), 2);
  Index i = 0;
  for (auto [x, y] : pts) t.row(i++) << x, y;
  return t;
}

Outcome unit_examples() {
  std::vector<std::pair<double, double>> pairs;  // computed, expected
  const auto truth = toy_window(2);
  pairs.emplace_back(loss_reconstruction(truth, truth), 0.0);
  SkeletonSequence off = truth;
  off.set(1, 3, truth.x(1, 3) + 3.0, truth.y(1, 3) + 4.0, truth.confidence(1, 3));
  pairs.emplace_back(loss_reconstruction(off, truth), 25.0);
  off = truth;
  for (Index t = 0; t < 2; ++t) off.set(t, 0, truth.x(t, 0) + 1.0, truth.y(t, 0), truth.confidence(t, 0));
  pairs.emplace_back(loss_reconstruction(off, truth), 2.0);

  pairs.emplace_back(loss_action(Eigen::Vector2d(0.7, 0.7), 0), std::log(2.0));
  pairs.emplace_back(loss_action(Eigen::Vector2d(1000.0, 0.0), 0), 0.0);
  pairs.emplace_back(loss_action(Eigen::Vector3d(1, 2, 3), 2), std::log1p(std::exp(-1.0) + std::exp(-2.0)));

  const Trajectory a = traj({{1, 2}, {3, 4}});
  Trajectory b = a;
  b(1, 0) += 3.0;
  b(1, 1) += 4.0;
  pairs.emplace_back(loss_prediction(a, a), 0.0);
  pairs.emplace_back(loss_prediction(b, a), 25.0);
  b = a;
  b.array() += 1.0;
  pairs.emplace_back(loss_prediction(b, a), 4.0);

  const Trajectory line = traj({{0, 0}, {1, 1}, {2, 2}});
  Trajectory shifted = line;
  shifted.col(0).array() += 3.0;
  shifted.col(1).array() += 4.0;
  pairs.emplace_back(ade(line, line), 0.0);
  pairs.emplace_back(ade(shifted, line), 5.0);
  pairs.emplace_back(ade(traj({{0, 1}, {0, 3}}), traj({{0, 0}, {0, 0}})), 2.0);
  pairs.emplace_back(fde(traj({{9, 9}, {4, 5}}), traj({{0, 0}, {1, 1}})), 5.0);
  pairs.emplace_back(fde(line, line), 0.0);

  const Trajectory cv = const_vel(traj({{0, 0}, {1, 0}}), 3);
  const Trajectory cv_expected = traj({{2, 0}, {3, 0}, {4, 0}});
  pairs.emplace_back((cv - cv_expected).cwiseAbs().maxCoeff(), 0.0);
  const Trajectory stop = const_vel(traj({{5, 5}, {7, 1}, {7, 1}}), 2);
  pairs.emplace_back((stop - traj({{7, 1}, {7, 1}})).cwiseAbs().maxCoeff(), 0.0);

  double worst = 0.0;
  for (auto [got, want] : pairs) worst = std::max(worst, std::abs(got - want));
  return {worst <= kUnitTolerance, std::to_string(pairs.size()) + " examples, worst deviation " + fmt(worst)};
}

// 4. Reconstruction learning.
Outcome reconstruction_learning() {
  const auto start = std::chrono::steady_clock::now();
  ScenarioConfig base;
  base.occlusion_ratio = 0.3;
  const Corpus corpus = gen_corpus(kCorpusSize, {{Action::Walking, 1.0}}, base, 11);
  PrarConfig pc;
  pc.num_classes = 1;
  PrarModel model(pc, 3);
  pretrain_prar(model, corpus, stage1_recipe(15));
  const auto score = masked_reconstruction_error(model, corpus, corpus.validation);
  const double ratio = score.model_mse / score.zero_fill_mse;
  const double elapsed = seconds_since(start);
  return {ratio <= kReconstructionRatio && elapsed < kReconstructionSeconds,
          "masked MSE " + fmt(score.model_mse) + " vs zero-fill " + fmt(score.zero_fill_mse) + " (ratio " + fmt(ratio) +
              "), " + fmt(elapsed) + " s"};
}

// 5. Action recognition.
double recognition_accuracy(const std::map<Action, double>& mix) {
  const Corpus corpus = gen_corpus(kCorpusSize, mix, ScenarioConfig{}, 21);
  PrarConfig pc;
  pc.num_classes = static_cast<Index>(mix.size());
  PrarModel model(pc, 3);
  pretrain_prar(model, corpus, stage1_recipe(10));
  return action_accuracy(model, corpus, corpus.validation);
}

Outcome action_recognition() {
  const double two = recognition_accuracy(kTwoClass);
  const double four = recognition_accuracy(kFourClass);
  return {two >= kTwoClassAccuracy && four >= kFourClassAccuracy,
          "2-class " + fmt(100.0 * two) + "%, 4-class " + fmt(100.0 * four) + "%"};
}

// 6. Warm-start effect.
Outcome warm_start_effect() {
  ScenarioConfig base;
  base.occlusion_ratio = 0.5;
  const Corpus large = gen_corpus(2000, kFourClass, base, 41);
  const Corpus small = gen_corpus(100, kFourClass, base, 42);
  PrarConfig pc;
  pc.num_classes = 4;
  PrarModel pretrained(pc, 3);
  pretrain_prar(pretrained, large, stage1_recipe(8));

  TrainConfig tc = stage1_recipe(5);
  tc.rng_seed = 9;
  PrarModel warm(pc, 4);
  warm_start(warm, pretrained);
  PrarModel cold(pc, 4);
  cold.set_input_statistics(pretrained.config().input_mean, pretrained.config().input_std);
  const double warm_lr = pretrain_prar(warm, small, tc).curve.series("validation", "L_r").at(4);
  const double cold_lr = pretrain_prar(cold, small, tc).curve.series("validation", "L_r").at(4);
  return {warm_lr < cold_lr, "epoch-5 validation L_r warm " + fmt(warm_lr) + " vs random " + fmt(cold_lr)};
}

// 7-9 share one pretrained PRAR on the occluded four-class corpus.
struct Stage2Setup {
  Corpus occluded;
  Corpus clear;
  PrarModel prar;
};

const Stage2Setup& stage2_setup() {
  static const Stage2Setup setup = [] {
    ScenarioConfig base;
    base.occlusion_ratio = 0.5;
    Stage2Setup s{gen_corpus(kCorpusSize, kFourClass, base, 31), gen_corpus(kCorpusSize, kFourClass, ScenarioConfig{}, 31),
                  PrarModel(PrarConfig{}, 3)};
    PrarConfig pc;
    pc.num_classes = 4;
    s.prar = PrarModel(pc, 3);
    TrainConfig tc = stage1_recipe(10);
    tc.decay_every = 6;
    pretrain_prar(s.prar, s.occluded, tc);
    return s;
  }();
  return setup;
}

double validation_ade(const TrainedVariant& v, const Corpus& corpus) {
  return run_eval(v.features.to_string(), gprar_predictor(v.prar, v.fa, v.features), corpus, corpus.validation,
                  ObservationMode::Noisy)
      .mean_ade();
}

Outcome feature_ordering() {
  const auto& s = stage2_setup();
  const StudyConfig sc = stage2_recipe(true);
  std::map<std::string, double> ade_of;
  for (const char* code : {"X", "XR", "XR+PR+C+A"})
    ade_of[code] = validation_ade(train_variant(s.prar, s.occluded, FeatureSet::parse(code), sc), s.occluded);
  const double full = ade_of["XR+PR+C+A"], xr = ade_of["XR"], x = ade_of["X"];
  return {full <= xr && xr <= x, "ADE full " + fmt(full) + ", XR " + fmt(xr) + ", X " + fmt(x)};
}

Outcome occlusion_robustness() {
  const auto& s = stage2_setup();
  const auto rows = occlusion_sweep(s.prar, s.clear, {FeatureSet::parse("XR+PR+C"), FeatureSet::parse("X+P+C")},
                                    {0.0, 0.25, 0.5}, stage2_recipe(true));
  std::map<std::string, std::map<double, double>> ade_of;
  for (const auto& r : rows) ade_of[r.features.to_string()][r.ratio] = r.ade;
  const auto& rec = ade_of.at("XR+PR+C");
  const auto& raw = ade_of.at("X+P+C");
  const double d_rec = rec.at(0.5) - rec.at(0.0), d_raw = raw.at(0.5) - raw.at(0.0);
  std::string detail = "ADE@{0,0.25,0.5} XR+PR+C " + fmt(rec.at(0.0)) + "/" + fmt(rec.at(0.25)) + "/" + fmt(rec.at(0.5)) +
                       ", X+P+C " + fmt(raw.at(0.0)) + "/" + fmt(raw.at(0.25)) + "/" + fmt(raw.at(0.5)) + "; delta " +
                       fmt(d_rec) + " vs " + fmt(d_raw);
  return {d_rec < d_raw, detail};
}

Outcome adaptive_learning() {
  const auto& s = stage2_setup();
  const FeatureSet full = FeatureSet::full();
  const auto final_train = [&](bool adaptive) {
    return train_variant(s.prar, s.occluded, full, stage2_recipe(adaptive)).training.curve.series("train", "L_pred").back();
  };
  const double adaptive = final_train(true), frozen = final_train(false);
  return {adaptive <= frozen, "final training loss adaptive " + fmt(adaptive) + " vs frozen " + fmt(frozen)};
}

// 10. Determinism of every command.
int run_cli(const std::string& args, std::string& output) {
  const std::string cmd = std::string("'") + GPRAR_CLI_PATH + "' " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) return -1;
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  const int status = ::pclose(pipe);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "run_manifest.json") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    out[fs::relative(e.path(), dir).string()] = os.str();
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("gprar_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::string> failures;
  std::size_t files = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path r = root / run;
    const std::string corpus = (r / "corpus").string(), prar = (r / "prar").string(), model = (r / "model").string();
    const std::string sample = (fs::path(corpus) / "samples" / "000000").string();
    const std::string study = " --corpus " + corpus + " --prar-checkpoint " + prar + " --epochs 1 --batch 8";
    const std::vector<std::string> commands = {
        "synth --n 30 --mix walking=0.5,standing=0.5 --occlusion 0.4 --seed 5 --out " + corpus,
        "pretrain --corpus " + corpus + " --epochs 2 --batch 8 --out " + prar,
        "train --corpus " + corpus + " --prar-checkpoint " + prar + " --epochs 2 --batch 8 --out " + model,
        "eval --corpus " + corpus + " --model " + model + " --mode preprocessed --out " + (r / "eval").string(),
        "eval --predictor const-vel --corpus " + corpus + " --out " + (r / "eval_cv").string(),
        "sweep" + study + " --variants X+P+C,XR+PR+C --out " + (r / "sweep").string(),
        "ablate" + study + " --subsets X,XR+PR+C+A --out " + (r / "ablate").string(),
        "predict --model " + model + " --observed " + sample + "/observed.jsonl --grid " + sample + "/grid.csv --out " +
            (r / "predict").string(),
    };
    for (const auto& c : commands) {
      std::string output;
      if (run_cli(c, output) != 0) failures.push_back("'" + c.substr(0, c.find(' ')) + "' failed: " + output);
    }
  }
  const auto a = tree_contents(root / "a"), b = tree_contents(root / "b");
  files = a.size();
  if (a.size() != b.size()) failures.push_back("file sets differ");
  for (const auto& [name, bytes] : a) {
    auto it = b.find(name);
    if (it == b.end() || it->second != bytes) failures.push_back(name + " differs");
  }
  std::set<std::string> kinds;
  for (const auto& [name, _] : a) kinds.insert(fs::path(name).extension().string());
  fs::remove_all(root);
  std::string detail = std::to_string(files) + " output files compared (";
  for (const auto& k : kinds) detail += k + (k == *kinds.rbegin() ? ")" : " ");
  if (!failures.empty()) detail += "; " + failures.front();
  return {failures.empty() && files > 0, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient suite", gradients},
      {"graph-conv oracle", graph_conv_oracle},
      {"loss and metric examples", unit_examples},
      {"reconstruction learning", reconstruction_learning},
      {"action recognition", action_recognition},
      {"warm-start effect", warm_start_effect},
      {"feature ordering", feature_ordering},
      {"occlusion robustness", occlusion_robustness},
      {"adaptive learning", adaptive_learning},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << "C" << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": " << o.detail << " ["
              << fmt(seconds_since(start)) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
