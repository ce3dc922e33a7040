#include "gprar/synth.hpp"

#include "gprar/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace gprar {

namespace {

// coco18 rest pose relative to the middle hip, pixels at body_size 1 (y down).
constexpr std::array<std::array<double, 2>, 18> kRestPose{{
    {0.0, -62.0},    // nose
    {0.0, -50.0},    // neck
    {-12.0, -50.0},  // r_shoulder
    {-14.0, -32.0},  // r_elbow
    {-15.0, -14.0},  // r_wrist
    {12.0, -50.0},   // l_shoulder
    {14.0, -32.0},   // l_elbow
    {15.0, -14.0},   // l_wrist
    {-8.0, 0.0},     // r_hip
    {-8.0, 24.0},    // r_knee
    {-8.0, 48.0},    // r_ankle
    {8.0, 0.0},      // l_hip
    {8.0, 24.0},     // l_knee
    {8.0, 48.0},     // l_ankle
    {-3.0, -65.0},   // r_eye
    {3.0, -65.0},    // l_eye
    {-6.0, -63.0},   // r_ear
    {6.0, -63.0},    // l_ear
}};

// Joints carried by the torso pitch when bending (everything above the knees).
constexpr std::array<bool, 18> kUpperBody{true, true, true, true, true, true, true, true, true,
                                          false, false, true, false, false, true, true, true, true};

double quantize(double v, double step) { return std::round(v / step) * step; }

}  // namespace

std::string to_string(Action a) {
  switch (a) {
    case Action::Walking: return "walking";
    case Action::Standing: return "standing";
    case Action::Bending: return "bending";
    case Action::Running: return "running";
  }
  return "unknown";
}

Action parse_action(std::string_view name) {
  for (Action a : {Action::Walking, Action::Standing, Action::Bending, Action::Running})
    if (name == to_string(a)) return a;
  throw std::invalid_argument("unknown action '" + std::string(name) + "'");
}

void ScenarioConfig::validate() const {
  if (t_obs < 2 || t_pred < 2) throw std::invalid_argument("scenario: t_obs and t_pred must be at least 2");
  if (gait_amplitude < 0.0 || gait_frequency < 0.0) throw std::invalid_argument("scenario: negative gait parameters");
  if (jitter_sigma < 0.0) throw std::invalid_argument("scenario: negative jitter");
  if (!(occlusion_ratio >= 0.0 && occlusion_ratio <= 1.0))
    throw std::invalid_argument("scenario: occlusion ratio outside [0,1]");
  if (flow_width < kGridCols || flow_height < kGridRows) throw std::invalid_argument("scenario: flow image too small");
  if (!(body_size > 0.0)) throw std::invalid_argument("scenario: body size must be positive");
  const bool moving = root_velocity.squaredNorm() > 0.0;
  if ((action == Action::Walking || action == Action::Running) && !moving)
    throw std::invalid_argument("scenario: " + to_string(action) + " requires a nonzero root velocity");
  if (action == Action::Standing && moving) throw std::invalid_argument("scenario: standing requires zero root velocity");
}

nlohmann::json ScenarioConfig::to_json() const {
  return {{"action", to_string(action)},
          {"root_velocity", {root_velocity.x(), root_velocity.y()}},
          {"gait_frequency", gait_frequency},
          {"gait_amplitude", gait_amplitude},
          {"gait_phase", gait_phase},
          {"camera_pan", {camera_pan.x(), camera_pan.y()}},
          {"flow_shear", flow_shear},
          {"image_width", image_width},
          {"image_height", image_height},
          {"flow_width", flow_width},
          {"flow_height", flow_height},
          {"start", {start.x(), start.y()}},
          {"body_size", body_size},
          {"bend_angle", bend_angle},
          {"facing", facing},
          {"t_obs", t_obs},
          {"t_pred", t_pred},
          {"rng_seed", rng_seed},
          {"occlusion_ratio", occlusion_ratio},
          {"jitter_sigma", jitter_sigma}};
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  const auto vec2 = [&](const char* key, Eigen::Vector2d fallback) -> Eigen::Vector2d {
    if (!j.contains(key)) return fallback;
    return {j.at(key).at(0).get<double>(), j.at(key).at(1).get<double>()};
  };
  c.action = parse_action(j.value("action", to_string(c.action)));
  c.root_velocity = vec2("root_velocity", c.root_velocity);
  c.gait_frequency = j.value("gait_frequency", c.gait_frequency);
  c.gait_amplitude = j.value("gait_amplitude", c.gait_amplitude);
  c.gait_phase = j.value("gait_phase", c.gait_phase);
  c.camera_pan = vec2("camera_pan", c.camera_pan);
  c.flow_shear = j.value("flow_shear", c.flow_shear);
  c.image_width = j.value("image_width", c.image_width);
  c.image_height = j.value("image_height", c.image_height);
  c.flow_width = j.value("flow_width", c.flow_width);
  c.flow_height = j.value("flow_height", c.flow_height);
  c.start = vec2("start", c.start);
  c.body_size = j.value("body_size", c.body_size);
  c.bend_angle = j.value("bend_angle", c.bend_angle);
  c.facing = j.value("facing", c.facing);
  c.t_obs = j.value("t_obs", c.t_obs);
  c.t_pred = j.value("t_pred", c.t_pred);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.occlusion_ratio = j.value("occlusion_ratio", c.occlusion_ratio);
  c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
  c.validate();
  return c;
}

SkeletonSequence render_skeleton(const ScenarioConfig& cfg, Index frames) {
  double freq = cfg.gait_frequency;
  double amp = cfg.gait_amplitude;
  switch (cfg.action) {
    case Action::Running:
      freq *= 2.0;
      amp *= 1.5;
      break;
    case Action::Standing:
    case Action::Bending:
      amp = 0.0;
      break;
    case Action::Walking:
      break;
  }
  SkeletonSequence seq(frames, 18);
  const Eigen::Vector2d motion = cfg.root_velocity + cfg.camera_pan;
  for (Index t = 0; t < frames; ++t) {
    const double td = static_cast<double>(t);
    const Eigen::Vector2d root = cfg.start + motion * td;
    const double s = amp * std::sin(2.0 * std::numbers::pi * freq * td + cfg.gait_phase);
    double pitch = 0.0;
    if (cfg.action == Action::Bending)
      pitch = cfg.facing * cfg.bend_angle * std::min(1.0, td / static_cast<double>(cfg.t_obs - 1));
    const Eigen::Rotation2Dd rot(pitch);
    for (Index k = 0; k < 18; ++k) {
      Eigen::Vector2d p(kRestPose[static_cast<std::size_t>(k)][0], kRestPose[static_cast<std::size_t>(k)][1]);
      p *= cfg.body_size;
      // Legs swing in antiphase, arms counter-swing at a quarter/half of the leg amplitude.
      switch (k) {
        case 9: p.x() += 0.5 * s; break;
        case 10: p.x() += s; break;
        case 12: p.x() -= 0.5 * s; break;
        case 13: p.x() -= s; break;
        case 3: p.x() -= 0.25 * s; break;
        case 4: p.x() -= 0.5 * s; break;
        case 6: p.x() += 0.25 * s; break;
        case 7: p.x() += 0.5 * s; break;
        default: break;
      }
      if (pitch != 0.0 && kUpperBody[static_cast<std::size_t>(k)]) p = rot * p;
      const Eigen::Vector2d q = root + p;
      seq.set(t, k, q.x(), q.y(), 1.0);
    }
  }
  return seq;
}

SkeletonSequence observe(const SkeletonSequence& clean, const ScenarioConfig& cfg, double occlusion_ratio) {
  SkeletonSequence noisy = clean;
  Rng rng(derive_seed(cfg.rng_seed, 1));
  for (Index t = 0; t < clean.frames(); ++t)
    for (Index k = 0; k < clean.joints(); ++k) {
      const double dx = cfg.jitter_sigma * rng.normal();
      const double dy = cfg.jitter_sigma * rng.normal();
      if (clean.observed(t, k)) noisy.set(t, k, clean.x(t, k) + dx, clean.y(t, k) + dy, clean.confidence(t, k));
    }
  return mask_joints(noisy, occlusion_ratio, derive_seed(cfg.rng_seed, 2));
}

Sample gen_sample(const ScenarioConfig& cfg) {
  cfg.validate();
  Sample s;
  s.config = cfg;
  s.clean = render_skeleton(cfg, cfg.t_obs + cfg.t_pred);
  s.observed = observe(s.clean.slice(0, cfg.t_obs), cfg, cfg.occlusion_ratio);
  const Trajectory track = extract_location(s.clean, build_layout("coco18"));
  s.future = track.bottomRows(cfg.t_pred);
  s.flow = FlowField(cfg.t_obs, cfg.flow_width, cfg.flow_height);
  for (Index t = 0; t < cfg.t_obs; ++t)
    for (Index y = 0; y < cfg.flow_height; ++y)
      for (Index x = 0; x < cfg.flow_width; ++x) {
        const double u = (static_cast<double>(x) + 0.5) / static_cast<double>(cfg.flow_width) - 0.5;
        s.flow.set(t, x, y, {cfg.camera_pan.x() + cfg.flow_shear * u, cfg.camera_pan.y()});
      }
  s.grid = grid_flow(s.flow);
  return s;
}

std::map<Action, double> parse_mix(std::string_view text) {
  std::map<Action, double> mix;
  std::stringstream ss{std::string(text)};
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("mix: expected class=weight, got '" + item + "'");
    const double w = std::stod(item.substr(eq + 1));
    if (w < 0.0) throw std::invalid_argument("mix: negative weight for '" + item.substr(0, eq) + "'");
    mix[parse_action(item.substr(0, eq))] += w;
  }
  return mix;
}

nlohmann::json Corpus::manifest() const {
  nlohmann::json j;
  j["format"] = "gprar-corpus/1";
  j["rng_seed"] = rng_seed;
  j["class_names"] = class_names;
  j["train"] = train;
  j["validation"] = validation;
  auto& arr = j["samples"] = nlohmann::json::array();
  std::vector<std::string> split(samples.size(), "train");
  for (std::size_t v : validation) split[v] = "validation";
  for (std::size_t i = 0; i < samples.size(); ++i)
    arr.push_back({{"index", i},
                   {"split", split[i]},
                   {"label", samples[i].label},
                   {"action", to_string(samples[i].config.action)},
                   {"config", samples[i].config.to_json()}});
  return j;
}

Corpus gen_corpus(std::size_t n, const std::map<Action, double>& mix, const ScenarioConfig& base, std::uint64_t rng_seed,
                  const CorpusRanges& ranges) {
  if (n == 0) throw std::invalid_argument("gen_corpus: need at least one sample");
  double total = 0.0;
  for (const auto& [_, w] : mix) total += w;
  if (mix.empty() || std::abs(total - 1.0) > 1e-6) throw std::invalid_argument("gen_corpus: mix must sum to 1");

  Corpus corpus;
  corpus.rng_seed = rng_seed;
  std::vector<Action> classes;
  for (const auto& [a, w] : mix)
    if (w > 0.0) {
      classes.push_back(a);
      corpus.class_names.push_back(to_string(a));
    }

  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(rng_seed, i));
    double u = rng.uniform() * total;
    Action action = classes.back();
    for (const auto& [a, w] : mix) {
      if (w <= 0.0) continue;
      if (u < w) {
        action = a;
        break;
      }
      u -= w;
    }
    ScenarioConfig cfg = base;
    cfg.action = action;
    cfg.rng_seed = derive_seed(derive_seed(rng_seed, 0x5eedULL), i);
    // Pixel quantities are snapped to dyadic steps so linear motion stays exact in floating point.
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    double speed = 0.0;
    if (action == Action::Walking) speed = rng.uniform(ranges.walk_speed_min, ranges.walk_speed_max);
    if (action == Action::Running) speed = rng.uniform(ranges.run_speed_min, ranges.run_speed_max);
    const double vy = speed > 0.0 ? rng.uniform(-ranges.vertical_speed, ranges.vertical_speed) : 0.0;
    cfg.root_velocity = {quantize(sign * speed, 1.0 / 16), quantize(vy, 1.0 / 16)};
    if (speed > 0.0 && cfg.root_velocity.x() == 0.0) cfg.root_velocity.x() = sign / 16;
    cfg.gait_frequency = rng.uniform(ranges.freq_min, ranges.freq_max);
    cfg.gait_amplitude = rng.uniform(ranges.amp_min, ranges.amp_max);
    cfg.gait_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    cfg.camera_pan = {quantize(base.camera_pan.x() + rng.uniform(-ranges.pan_range, ranges.pan_range), 1.0 / 16),
                      base.camera_pan.y()};
    cfg.start = {std::round(rng.uniform(ranges.margin, base.image_width - ranges.margin)),
                 std::round(rng.uniform(base.image_height / 2, base.image_height - 150.0))};
    cfg.body_size = quantize(rng.uniform(ranges.body_min, ranges.body_max), 1.0 / 64);
    cfg.bend_angle = rng.uniform(ranges.bend_min, ranges.bend_max);
    cfg.facing = rng.uniform() < 0.5 ? -1 : 1;

    Sample s = gen_sample(cfg);
    s.label = static_cast<Index>(std::find(classes.begin(), classes.end(), action) - classes.begin());
    corpus.samples.push_back(std::move(s));
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng(derive_seed(rng_seed, 0xa11c0de5ULL));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[split_rng.below(i)]);
  const std::size_t val = n / 5;
  corpus.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(val));
  corpus.train.assign(order.begin() + static_cast<std::ptrdiff_t>(val), order.end());
  std::sort(corpus.validation.begin(), corpus.validation.end());
  std::sort(corpus.train.begin(), corpus.train.end());
  return corpus;
}

namespace {
std::string sample_dir_name(std::size_t i) {
  std::ostringstream os;
  os.width(6);
  os.fill('0');
  os << i;
  return os.str();
}

template <typename Fn>
void write_file(const std::filesystem::path& path, Fn&& fn) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  fn(out);
}

template <typename Fn>
auto read_file(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return fn(in);
}
}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "samples");
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    const auto sd = dir / "samples" / sample_dir_name(i);
    std::filesystem::create_directories(sd);
    write_file(sd / "clean.jsonl", [&](std::ostream& o) { write_pose_jsonl(o, s.clean); });
    write_file(sd / "observed.jsonl", [&](std::ostream& o) { write_pose_jsonl(o, s.observed); });
    write_file(sd / "future.csv", [&](std::ostream& o) { write_trajectory_csv(o, s.future); });
    write_file(sd / "grid.csv", [&](std::ostream& o) { write_grid_csv(o, s.grid); });
    write_flow(sd / "flow.bin", s.flow);
  }
  write_file(dir / "manifest.json", [&](std::ostream& o) { o << corpus.manifest().dump(2) << '\n'; });
}

Corpus load_corpus(const std::filesystem::path& dir) {
  const auto manifest = read_file(dir / "manifest.json", [](std::istream& in) { return nlohmann::json::parse(in); });
  if (manifest.value("format", "") != "gprar-corpus/1") throw std::runtime_error("corpus: unsupported manifest format");
  Corpus corpus;
  corpus.rng_seed = manifest.at("rng_seed").get<std::uint64_t>();
  corpus.class_names = manifest.at("class_names").get<std::vector<std::string>>();
  corpus.train = manifest.at("train").get<std::vector<std::size_t>>();
  corpus.validation = manifest.at("validation").get<std::vector<std::size_t>>();
  for (const auto& js : manifest.at("samples")) {
    const auto i = js.at("index").get<std::size_t>();
    const auto sd = dir / "samples" / sample_dir_name(i);
    Sample s;
    s.config = ScenarioConfig::from_json(js.at("config"));
    s.label = js.at("label").get<Index>();
    s.clean = read_file(sd / "clean.jsonl", [](std::istream& in) { return read_pose_jsonl(in); });
    s.observed = read_file(sd / "observed.jsonl", [](std::istream& in) { return read_pose_jsonl(in); });
    s.future = read_file(sd / "future.csv", [](std::istream& in) { return read_trajectory_csv(in); });
    s.grid = read_file(sd / "grid.csv", [](std::istream& in) { return read_grid_csv(in); });
    s.flow = read_flow(sd / "flow.bin");
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace gprar
