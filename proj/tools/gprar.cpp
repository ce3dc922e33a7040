// Command-line front end: corpus synthesis, both training stages, prediction,
// evaluation, occlusion sweeps and feature ablations.

#include "gprar/checkpoint.hpp"
#include "gprar/eval.hpp"
#include "gprar/svg.hpp"
#include "gprar/synth.hpp"
#include "gprar/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#ifndef GPRAR_BUILD_ID
#define GPRAR_BUILD_ID "unknown"
#endif

namespace fs = std::filesystem;
using namespace gprar;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Collects what a command did so it can be replayed and audited.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t rng_seed = 0;
  std::vector<std::string> outputs;

  void write(const fs::path& dir, double seconds) const {
    nlohmann::json j;
    j["format"] = "gprar-run/1";
    j["command"] = command;
    j["argv"] = argv;
    j["config"] = config;
    j["build"] = GPRAR_BUILD_ID;
    j["rng_seed"] = rng_seed;
    j["outputs"] = outputs;
    j["duration_seconds"] = seconds;
    write_atomic(dir / "run_manifest.json", j.dump(2) + "\n");
  }
};

fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_relative())
    if (const char* root = std::getenv("GPRAR_OUTPUT_ROOT"); root != nullptr && *root != '\0') p = fs::path(root) / p;
  return p;
}

template <typename Fn>
auto usage_guard(Fn&& fn) {
  try {
    return fn();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<FeatureSet> parse_feature_list(const std::string& text) {
  return usage_guard([&] {
    std::vector<FeatureSet> out;
    for (const auto& s : split_list(text, ',')) out.push_back(FeatureSet::parse(s));
    if (out.empty()) throw std::invalid_argument("empty feature-set list");
    return out;
  });
}

void write_file(const fs::path& path, const std::string& contents, RunManifest& manifest) {
  write_atomic(path, contents);
  manifest.outputs.push_back(path.string());
}

std::string curve_svg(const LossCurve& curve, const std::string& title) {
  std::vector<PlotSeries> series;
  for (const char* split : {"train", "validation"}) {
    const auto ys = curve.series(split, curve.columns.front());
    if (ys.empty()) continue;
    PlotSeries s{std::string(split) + " " + curve.columns.front(), {}, ys};
    for (std::size_t i = 0; i < ys.size(); ++i) s.x.push_back(static_cast<double>(i));
    series.push_back(std::move(s));
  }
  return line_chart({title, "epoch", curve.columns.front()}, series);
}

std::string to_csv(const LossCurve& curve) {
  std::ostringstream os;
  curve.write_csv(os);
  return os.str();
}

/// Training flags shared by pretrain, train, sweep and ablate.
struct TrainFlags {
  TrainConfig cfg;
  void add(CLI::App& app) {
    app.add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
    app.add_option("--lr", cfg.lr0, "Initial learning rate")->capture_default_str();
    app.add_option("--decay", cfg.decay_factor, "Learning-rate decay factor")->capture_default_str();
    app.add_option("--decay-every", cfg.decay_every, "Epochs between decays")->capture_default_str();
    app.add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
    app.add_option("--clip-norm", cfg.clip_norm, "Global gradient-norm limit (0 disables)")->capture_default_str();
    app.add_option("--seed", cfg.rng_seed, "Shuffle and initialization seed")->capture_default_str();
  }
};

struct Cli {
  CLI::App app{"GPRAR pose reconstruction, action recognition and trajectory prediction"};
  unsigned threads = 1;
  RunManifest manifest;
  std::function<fs::path()> run;
};

void add_synth(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("synth", "Generate a synthetic pedestrian corpus");
  struct Opts {
    std::size_t n = 100;
    std::string mix = "walking=1";
    double occlusion = 0.0, jitter = 1.5, pan_x = 0.0, pan_y = 0.0, shear = 0.0;
    Index t_obs = 10, t_pred = 10;
    std::uint64_t seed = 0;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--n", o->n, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--mix", o->mix, "Class mix, e.g. walking=0.5,standing=0.5")->capture_default_str();
  cmd->add_option("--occlusion", o->occlusion, "Joint occlusion ratio")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--jitter", o->jitter, "Joint jitter sigma (px)")->capture_default_str();
  cmd->add_option("--pan-x", o->pan_x, "Mean camera pan x (px/frame)")->capture_default_str();
  cmd->add_option("--pan-y", o->pan_y, "Camera pan y (px/frame)")->capture_default_str();
  cmd->add_option("--shear", o->shear, "Horizontal flow shear")->capture_default_str();
  cmd->add_option("--t-obs", o->t_obs, "Observed frames")->capture_default_str();
  cmd->add_option("--t-pred", o->t_pred, "Predicted frames")->capture_default_str();
  cmd->add_option("--seed", o->seed, "Corpus seed")->capture_default_str();
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      ScenarioConfig base;
      const auto mix = usage_guard([&] {
        base.occlusion_ratio = o->occlusion;
        base.jitter_sigma = o->jitter;
        base.camera_pan = {o->pan_x, o->pan_y};
        base.flow_shear = o->shear;
        base.t_obs = o->t_obs;
        base.t_pred = o->t_pred;
        base.validate();
        return parse_mix(o->mix);
      });
      const fs::path out = resolve_out(o->out);
      const Corpus corpus = usage_guard([&] { return gen_corpus(o->n, mix, base, o->seed); });
      save_corpus(corpus, out);
      cli.manifest.config = {{"n", o->n},         {"mix", o->mix},       {"occlusion", o->occlusion},
                             {"jitter", o->jitter}, {"pan-x", o->pan_x},   {"pan-y", o->pan_y},
                             {"shear", o->shear},   {"t-obs", o->t_obs},   {"t-pred", o->t_pred},
                             {"seed", o->seed},     {"out", o->out}};
      cli.manifest.rng_seed = o->seed;
      cli.manifest.outputs.push_back((out / "manifest.json").string());
      std::cout << out.string() << "\n";
      return out;
    };
  });
}

void add_pretrain(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("pretrain", "Stage 1: train PRAR on reconstruction and action losses");
  struct Opts {
    TrainFlags train;
    std::string corpus, out, warm_start, layout = "coco18", adjacency = "uniform";
    Index classes = 0, temporal_kernel = 9;
    std::uint64_t init_seed = 0;
  };
  auto o = std::make_shared<Opts>();
  o->train.add(*cmd);
  cmd->add_option("--corpus", o->corpus, "Corpus directory")->required();
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--warm-start", o->warm_start, "PRAR checkpoint directory to start from");
  cmd->add_option("--classes", o->classes, "Class count (default: corpus classes)");
  cmd->add_option("--layout", o->layout, "Skeleton layout")->capture_default_str()->check(CLI::IsMember({"coco18", "toy5"}));
  cmd->add_option("--adjacency", o->adjacency, "Partition strategy")->capture_default_str()->check(CLI::IsMember({"uniform", "distance"}));
  cmd->add_option("--temporal-kernel", o->temporal_kernel, "Temporal kernel span")->capture_default_str();
  cmd->add_option("--init-seed", o->init_seed, "Weight initialization seed")->capture_default_str();
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      const Corpus corpus = load_corpus(o->corpus);
      PrarConfig pc;
      TrainConfig tc = o->train.cfg;
      usage_guard([&] {
        pc.layout = o->layout;
        pc.adjacency = parse_adjacency_strategy(o->adjacency);
        pc.temporal_kernel = o->temporal_kernel;
        pc.frames = corpus.samples.at(0).config.t_obs;
        pc.num_classes = o->classes > 0 ? o->classes : static_cast<Index>(corpus.class_names.size());
        pc.validate();
        tc.threads = cli.threads;
        tc.validate();
        return 0;
      });
      PrarModel model(pc, o->init_seed);
      nlohmann::json warm = nullptr;
      if (!o->warm_start.empty()) {
        const auto report = warm_start(model, load_prar(o->warm_start));
        for (const auto& name : report.reinitialized) std::cerr << "warm start: re-initialized " << name << "\n";
        warm = {{"checkpoint", o->warm_start}, {"copied", report.copied.size()}, {"reinitialized", report.reinitialized}};
      }
      const auto result = pretrain_prar(model, corpus, tc);
      const fs::path out = resolve_out(o->out);
      save_prar(out, model);
      save_prar(out, PrarModel(model.config(), result.best), "prar_best");
      cli.manifest.outputs = {(out / "prar.params.json").string(), (out / "prar_best.params.json").string()};
      write_file(out / "pretrain_curve.csv", to_csv(result.curve), cli.manifest);
      write_file(out / "pretrain_curve.svg", curve_svg(result.curve, "Stage 1 loss"), cli.manifest);
      cli.manifest.config = {{"corpus", o->corpus}, {"out", o->out},   {"train", tc.to_json()},
                             {"model", model.config().to_json()}, {"init-seed", o->init_seed}, {"warm_start", warm}};
      cli.manifest.rng_seed = tc.rng_seed;
      std::cout << out.string() << "\n";
      return out;
    };
  });
}

void add_train(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("train", "Stage 2: train the trajectory predictor with PRAR attached");
  struct Opts {
    TrainFlags train;
    std::string corpus, out, prar_checkpoint, features = "XR+PR+C+A", output_mode = "offset";
    bool no_pretrain = false, frozen = false;
    std::uint64_t init_seed = 0;
  };
  auto o = std::make_shared<Opts>();
  o->train.add(*cmd);
  cmd->add_option("--corpus", o->corpus, "Corpus directory")->required();
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--prar-checkpoint", o->prar_checkpoint, "Stage-1 output directory");
  cmd->add_flag("--no-pretrain", o->no_pretrain, "Start PRAR from random weights");
  auto* adaptive = cmd->add_flag("--adaptive", "Back-propagate into PRAR (default)");
  cmd->add_flag("--frozen", o->frozen, "Keep PRAR fixed")->excludes(adaptive);
  cmd->add_option("--features", o->features, "Aggregator inputs, e.g. XR+PR+C+A")->capture_default_str();
  cmd->add_option("--output-mode", o->output_mode, "offset or absolute")->capture_default_str()->check(CLI::IsMember({"offset", "absolute"}));
  cmd->add_option("--init-seed", o->init_seed, "Aggregator initialization seed")->capture_default_str();
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      if (o->prar_checkpoint.empty() && !o->no_pretrain)
        throw UsageError("train: --prar-checkpoint is required unless --no-pretrain is given");
      const FeatureSet features = usage_guard([&] { return FeatureSet::parse(o->features); });
      TrainConfig tc = o->train.cfg;
      tc.adaptive = !o->frozen;
      tc.threads = cli.threads;
      usage_guard([&] { tc.validate(); return 0; });
      const Corpus corpus = load_corpus(o->corpus);
      PrarModel prar = [&] {
        if (!o->prar_checkpoint.empty()) return load_prar(o->prar_checkpoint);
        std::cerr << "warning: PRAR is not pretrained\n";
        PrarConfig pc;
        pc.frames = corpus.samples.at(0).config.t_obs;
        pc.num_classes = static_cast<Index>(corpus.class_names.size());
        PrarModel fresh(pc, o->init_seed);
        fit_input_statistics(fresh, corpus);
        return fresh;
      }();
      FaConfig base;
      base.horizon = corpus.samples.at(0).config.t_pred;
      base.output_mode = o->output_mode == "offset" ? OutputMode::Offset : OutputMode::Absolute;
      FaModel fa(fa_config_for(prar.config(), features, base), o->init_seed);
      const auto result = train_full(prar, fa, features, corpus, tc);
      const fs::path out = resolve_out(o->out);
      save_prar(out, prar);
      save_fa(out, fa, features);
      save_prar(out, PrarModel(prar.config(), result.best_prar), "prar_best");
      save_fa(out, FaModel(fa.config(), result.best_fa), features, "fa_best");
      cli.manifest.outputs = {(out / "prar.params.json").string(), (out / "fa.params.json").string(),
                              (out / "prar_best.params.json").string(), (out / "fa_best.params.json").string()};
      write_file(out / "train_curve.csv", to_csv(result.curve), cli.manifest);
      write_file(out / "train_curve.svg", curve_svg(result.curve, "Stage 2 prediction loss"), cli.manifest);
      cli.manifest.config = {{"corpus", o->corpus},     {"out", o->out},         {"prar-checkpoint", o->prar_checkpoint},
                             {"no-pretrain", o->no_pretrain}, {"frozen", o->frozen}, {"features", features.to_string()},
                             {"train", tc.to_json()},   {"fa", fa.config().to_json()}, {"init-seed", o->init_seed}};
      cli.manifest.rng_seed = tc.rng_seed;
      std::cout << out.string() << "\n";
      return out;
    };
  });
}

std::vector<std::size_t> split_indices(const Corpus& corpus, const std::string& split) {
  if (split == "validation") return corpus.validation;
  if (split == "train") return corpus.train;
  std::vector<std::size_t> all(corpus.samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return all;
}

void add_eval(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("eval", "Score a predictor with ADE/FDE");
  struct Opts {
    std::string corpus, model, out, predictor = "gprar", mode = "noisy", split = "validation";
    double occlusion = -1.0;
    Index knn_k = 5;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--corpus", o->corpus, "Corpus directory")->required();
  cmd->add_option("--model", o->model, "Stage-2 output directory (gprar predictor)");
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->add_option("--predictor", o->predictor, "gprar or const-vel")->capture_default_str()->check(CLI::IsMember({"gprar", "const-vel"}));
  cmd->add_option("--mode", o->mode, "noisy, preprocessed or complete")->capture_default_str()->check(CLI::IsMember({"noisy", "preprocessed", "complete"}));
  cmd->add_option("--split", o->split, "validation, train or all")->capture_default_str()->check(CLI::IsMember({"validation", "train", "all"}));
  cmd->add_option("--occlusion", o->occlusion, "Re-mask observations at this ratio")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--knn-k", o->knn_k, "Neighbours for preprocessing")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      if (o->predictor == "gprar" && o->model.empty()) throw UsageError("eval: --model is required for the gprar predictor");
      const Corpus corpus = load_corpus(o->corpus);
      EvalOptions opt;
      opt.knn_k = o->knn_k;
      opt.threads = cli.threads;
      if (o->occlusion >= 0.0) opt.occlusion = o->occlusion;
      const ObservationMode mode = parse_observation_mode(o->mode);
      const auto indices = split_indices(corpus, o->split);
      EvalReport report;
      if (o->predictor == "gprar") {
        const PrarModel prar = load_prar(o->model);
        const auto [fa, features] = load_fa(o->model);
        report = run_eval("gprar", gprar_predictor(prar, fa, features), corpus, indices, mode, opt);
      } else {
        report = run_eval("const-vel", const_vel_predictor(build_layout("coco18")), corpus, indices, mode, opt);
      }
      const fs::path out = resolve_out(o->out);
      std::ostringstream csv;
      report.write_csv(csv);
      write_file(out / "eval_report.csv", csv.str(), cli.manifest);
      cli.manifest.config = {{"corpus", o->corpus}, {"model", o->model},   {"out", o->out},
                             {"predictor", o->predictor}, {"mode", o->mode}, {"split", o->split},
                             {"occlusion", o->occlusion}, {"knn-k", o->knn_k}};
      std::cout << "mean_ade=" << format_double(report.mean_ade()) << " mean_fde=" << format_double(report.mean_fde())
                << " samples=" << report.rows.size() << " report=" << (out / "eval_report.csv").string() << "\n";
      return out;
    };
  });
}

/// Shared by sweep and ablate.
struct StudyFlags {
  TrainFlags train;
  std::string corpus, out, prar_checkpoint, mode = "noisy";
  bool frozen = false;
  std::uint64_t init_seed = 0;
  Index knn_k = 5;

  void add(CLI::App& cmd) {
    train.add(cmd);
    cmd.add_option("--corpus", corpus, "Corpus directory")->required();
    cmd.add_option("--out", out, "Output directory")->required();
    cmd.add_option("--prar-checkpoint", prar_checkpoint, "Stage-1 output directory")->required();
    cmd.add_option("--mode", mode, "Evaluation mode")->capture_default_str()->check(CLI::IsMember({"noisy", "preprocessed", "complete"}));
    cmd.add_flag("--frozen", frozen, "Keep PRAR fixed while training each variant");
    cmd.add_option("--init-seed", init_seed, "Aggregator initialization seed")->capture_default_str();
    cmd.add_option("--knn-k", knn_k, "Neighbours for preprocessing")->capture_default_str();
  }

  StudyConfig config(const Corpus& corpus, unsigned threads) const {
    StudyConfig sc;
    sc.train = train.cfg;
    sc.train.adaptive = !frozen;
    sc.train.threads = threads;
    sc.fa.horizon = corpus.samples.at(0).config.t_pred;
    sc.fa_seed = init_seed;
    sc.mode = parse_observation_mode(mode);
    sc.knn_k = knn_k;
    return sc;
  }

  nlohmann::json to_json(const StudyConfig& sc) const {
    return {{"corpus", corpus}, {"out", out},          {"prar-checkpoint", prar_checkpoint}, {"mode", mode},
            {"frozen", frozen}, {"init-seed", init_seed}, {"knn-k", knn_k},                   {"train", sc.train.to_json()}};
  }
};

void add_sweep(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("sweep", "Occlusion sweep: ADE per variant and occlusion ratio");
  struct Opts {
    StudyFlags study;
    std::string variants = "X+P,X+P+C,XR+PR+C", ratios = "0,0.25,0.5";
  };
  auto o = std::make_shared<Opts>();
  o->study.add(*cmd);
  cmd->add_option("--variants", o->variants, "Comma-separated feature sets")->capture_default_str();
  cmd->add_option("--ratios", o->ratios, "Comma-separated occlusion ratios")->capture_default_str();
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      const auto variants = parse_feature_list(o->variants);
      const auto ratios = usage_guard([&] {
        std::vector<double> r;
        for (const auto& s : split_list(o->ratios, ',')) {
          std::size_t used = 0;
          const double v = std::stod(s, &used);
          if (used != s.size() || !(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("bad occlusion ratio '" + s + "'");
          r.push_back(v);
        }
        if (r.empty()) throw std::invalid_argument("empty ratio list");
        return r;
      });
      const Corpus corpus = load_corpus(o->study.corpus);
      const StudyConfig sc = o->study.config(corpus, cli.threads);
      const auto rows = occlusion_sweep(load_prar(o->study.prar_checkpoint), corpus, variants, ratios, sc);
      const fs::path out = resolve_out(o->study.out);
      std::ostringstream csv;
      write_sweep_csv(csv, rows);
      write_file(out / "sweep.csv", csv.str(), cli.manifest);
      write_file(out / "sweep.svg", sweep_svg(rows), cli.manifest);
      cli.manifest.config = o->study.to_json(sc);
      cli.manifest.config["variants"] = o->variants;
      cli.manifest.config["ratios"] = o->ratios;
      cli.manifest.rng_seed = sc.train.rng_seed;
      std::cout << (out / "sweep.csv").string() << "\n" << (out / "sweep.svg").string() << "\n";
      return out;
    };
  });
}

void add_ablate(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("ablate", "Feature ablation: one aggregator per input subset");
  struct Opts {
    StudyFlags study;
    std::string subsets = "X,XR,XR+C,XR+C+A,XR+PR+C+A";
  };
  auto o = std::make_shared<Opts>();
  o->study.add(*cmd);
  cmd->add_option("--subsets", o->subsets, "Comma-separated feature sets")->capture_default_str();
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      const auto subsets = parse_feature_list(o->subsets);
      const Corpus corpus = load_corpus(o->study.corpus);
      const StudyConfig sc = o->study.config(corpus, cli.threads);
      const auto rows = ablation_grid(load_prar(o->study.prar_checkpoint), corpus, subsets, sc);
      const fs::path out = resolve_out(o->study.out);
      std::ostringstream csv;
      write_ablation_csv(csv, rows);
      write_file(out / "ablation.csv", csv.str(), cli.manifest);
      cli.manifest.config = o->study.to_json(sc);
      cli.manifest.config["subsets"] = o->subsets;
      cli.manifest.rng_seed = sc.train.rng_seed;
      std::cout << (out / "ablation.csv").string() << "\n";
      return out;
    };
  });
}

void add_predict(Cli& cli) {
  auto* cmd = cli.app.add_subcommand("predict", "Predict one trajectory from a pose window and its grid flow");
  struct Opts {
    std::string model, observed, grid, out;
  };
  auto o = std::make_shared<Opts>();
  cmd->add_option("--model", o->model, "Stage-2 output directory")->required();
  cmd->add_option("--observed", o->observed, "Pose JSON-lines file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--grid", o->grid, "Grid-flow CSV")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o->out, "Output directory")->required();
  cmd->callback([&cli, o] {
    cli.run = [&cli, o] {
      const PrarModel prar = load_prar(o->model);
      const auto [fa, features] = load_fa(o->model);
      std::ifstream pose_in(o->observed), grid_in(o->grid);
      const SkeletonSequence observed = read_pose_jsonl(pose_in);
      const GridFlow grid = read_grid_csv(grid_in);
      const Trajectory p = predict_trajectory(prar, fa, features, observed, grid);
      const fs::path out = resolve_out(o->out);
      std::ostringstream csv;
      write_trajectory_csv(csv, p);
      write_file(out / "prediction.csv", csv.str(), cli.manifest);
      cli.manifest.config = {{"model", o->model}, {"observed", o->observed}, {"grid", o->grid}, {"out", o->out}};
      std::cout << (out / "prediction.csv").string() << "\n";
      return out;
    };
  });
}

/// Expands `--config FILE` into flags placed before the command line's own,
/// so explicit flags take precedence. A run manifest is accepted too.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t i = 1; i + 1 < args.size(); ++i) {
    if (args[i] != "--config") continue;
    auto j = nlohmann::json::parse(read_text(args[i + 1]));
    if (j.contains("format") && j.contains("config")) j = j.at("config");
    args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
    const std::set<std::string> given(args.begin() + 2, args.end());
    std::vector<std::string> flags;
    const auto add = [&](const std::string& flag, const std::string& value) {
      if (!given.contains(flag)) flags.insert(flags.end(), {flag, value});
    };
    for (const auto& [key, value] : j.items()) {
      if (key == "train" && value.is_object()) {
        const std::pair<const char*, const char*> names[] = {{"epochs", "epochs"},       {"lr0", "lr"},
                                                             {"decay_factor", "decay"}, {"decay_every", "decay-every"},
                                                             {"batch_size", "batch"},   {"rng_seed", "seed"},
                                                             {"clip_norm", "clip-norm"}};
        for (const auto& [field, flag] : names)
          if (value.contains(field)) add("--" + std::string(flag), value.at(field).dump());
        continue;
      }
      if (value.is_object() || value.is_array() || value.is_null()) continue;
      if (value.is_boolean()) {
        if (value.get<bool>() && !given.contains("--" + key)) flags.push_back("--" + key);
        continue;
      }
      add("--" + key, value.is_string() ? value.get<std::string>() : value.dump());
    }
    args.insert(args.begin() + 2, flags.begin(), flags.end());
    break;
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  Cli cli;
  cli.app.require_subcommand(1);
  cli.app.add_option("--threads", cli.threads, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  add_synth(cli);
  add_pretrain(cli);
  add_train(cli);
  add_eval(cli);
  add_sweep(cli);
  add_ablate(cli);
  add_predict(cli);

  try {
    args = expand_config(std::move(args));
  } catch (const std::exception& e) {
    std::cerr << "error: --config: " << e.what() << "\n";
    return 2;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
  try {
    cli.app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = cli.app.exit(e);
    return code == 0 ? 0 : 2;
  }

  cli.manifest.command = cli.app.get_subcommands().front()->get_name();
  cli.manifest.argv = args;
  const auto start = std::chrono::steady_clock::now();
  try {
    const fs::path out = cli.run();
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    cli.manifest.write(out, seconds);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
