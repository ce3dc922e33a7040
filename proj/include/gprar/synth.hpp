#pragma once

#include "gprar/flow.hpp"
#include "gprar/skeleton.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gprar {

enum class Action { Walking, Standing, Bending, Running };

std::string to_string(Action a);
Action parse_action(std::string_view name);

struct ScenarioConfig {
  Action action = Action::Walking;
  Eigen::Vector2d root_velocity{2.0, 0.0};  // pixels/frame
  double gait_frequency = 0.1;              // cycles/frame
  double gait_amplitude = 8.0;              // pixels
  double gait_phase = 0.0;                  // radians
  Eigen::Vector2d camera_pan{0.0, 0.0};     // pixels/frame
  double flow_shear = 0.0;                  // extra horizontal flow per unit of normalized image x
  double image_width = 1280.0;
  double image_height = 720.0;
  Index flow_width = 16;
  Index flow_height = 12;
  Eigen::Vector2d start{640.0, 400.0};  // middle hip at frame 0
  double body_size = 1.0;
  double bend_angle = 0.9;  // final torso pitch (radians) for bending
  int facing = 1;           // +1 or -1
  Index t_obs = 10;
  Index t_pred = 10;
  std::uint64_t rng_seed = 0;
  double occlusion_ratio = 0.0;
  double jitter_sigma = 1.5;

  void validate() const;
  nlohmann::json to_json() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
};

struct Sample {
  ScenarioConfig config;
  Index label = 0;
  SkeletonSequence clean;     // t_obs + t_pred frames
  SkeletonSequence observed;  // t_obs frames, jittered then occluded
  Trajectory future;          // middle hip of clean frames t_obs .. t_obs + t_pred - 1
  FlowField flow;             // t_obs frames
  GridFlow grid;
};

/// Clean coco18 skeleton of a scenario, all joints visible with confidence 1.
SkeletonSequence render_skeleton(const ScenarioConfig& cfg, Index frames);

/// Observation window of `clean`: Gaussian jitter on every joint, then
/// mask_joints at the given ratio. Deterministic per cfg.rng_seed.
SkeletonSequence observe(const SkeletonSequence& clean, const ScenarioConfig& cfg, double occlusion_ratio);

Sample gen_sample(const ScenarioConfig& cfg);

/// Per-class parameter ranges used when drawing corpus scenarios.
struct CorpusRanges {
  double walk_speed_min = 1.0, walk_speed_max = 2.5;
  double run_speed_min = 3.0, run_speed_max = 5.0;
  double vertical_speed = 0.25;
  double freq_min = 0.06, freq_max = 0.12;
  double amp_min = 6.0, amp_max = 12.0;
  double pan_range = 1.0;
  double body_min = 0.85, body_max = 1.15;
  double bend_min = 0.5, bend_max = 1.2;
  double margin = 200.0;
};

struct Corpus {
  std::vector<std::string> class_names;
  std::vector<Sample> samples;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::uint64_t rng_seed = 0;

  nlohmann::json manifest() const;
};

/// Draws n scenarios with classes from `mix` (weights summing to 1) and
/// per-sample randomized motion; 80/20 train/validation split.
Corpus gen_corpus(std::size_t n, const std::map<Action, double>& mix, const ScenarioConfig& base, std::uint64_t rng_seed,
                  const CorpusRanges& ranges = {});

std::map<Action, double> parse_mix(std::string_view text);

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace gprar
