#include "doctest.h"

#include "gprar/synth.hpp"

#include <cmath>
#include <filesystem>

using namespace gprar;

namespace {

ScenarioConfig still() {
  ScenarioConfig c;
  c.action = Action::Standing;
  c.root_velocity = {0.0, 0.0};
  c.jitter_sigma = 0.0;
  c.rng_seed = 3;
  return c;
}

double bone_length(const SkeletonSequence& s, Index t, std::pair<int, int> e) {
  return (s.position(t, e.first) - s.position(t, e.second)).norm();
}

}  // namespace

TEST_SUITE("gen_sample") {
  TEST_CASE("static scene: observation equals the clean window and the future is constant") {
    const auto s = gen_sample(still());
    CHECK(s.observed == s.clean.slice(0, 10));
    for (Index k = 1; k < s.future.rows(); ++k) CHECK(s.future.row(k) == s.future.row(0));
    CHECK(s.flow.data().values().isZero(0));
  }

  TEST_CASE("straight walk advances the future by the root velocity per frame") {
    ScenarioConfig c;
    c.root_velocity = {2.0, 0.0};
    c.jitter_sigma = 0.0;
    const auto s = gen_sample(c);
    const auto layout = build_layout("coco18");
    const Trajectory loc = extract_location(s.clean, layout);
    for (Index k = 1; k <= c.t_pred; ++k) {
      CHECK(s.future(k - 1, 0) == doctest::Approx(loc(c.t_obs - 1, 0) + 2.0 * static_cast<double>(k)).epsilon(1e-12));
      CHECK(s.future(k - 1, 1) == doctest::Approx(loc(c.t_obs - 1, 1)).epsilon(1e-12));
    }
  }

  TEST_CASE("future is the middle-hip track of the clean future frames") {
    ScenarioConfig c;
    c.action = Action::Running;
    c.root_velocity = {-3.5, 0.4};
    c.camera_pan = {0.7, -0.2};
    c.rng_seed = 17;
    const auto s = gen_sample(c);
    const Trajectory loc = extract_location(s.clean, build_layout("coco18"));
    CHECK(s.future == Trajectory(loc.bottomRows(c.t_pred)));
    CHECK(s.clean.frames() == c.t_obs + c.t_pred);
    CHECK(s.flow.frames() == c.t_obs);
    CHECK(s.grid.frames() == c.t_obs);
  }

  TEST_CASE("pan flow is uniform and equals the camera pan") {
    ScenarioConfig c;
    c.camera_pan = {1.5, -0.5};
    const auto s = gen_sample(c);
    for (Index i = 0; i < kGridCells; ++i) CHECK((s.grid.cell(3, i) - Eigen::Vector2d(1.5, -0.5)).norm() < 1e-12);
  }

  TEST_CASE("same seed gives a bitwise-identical sample") {
    ScenarioConfig c;
    c.occlusion_ratio = 0.3;
    c.rng_seed = 99;
    const auto a = gen_sample(c), b = gen_sample(c);
    CHECK(a.clean == b.clean);
    CHECK(a.observed == b.observed);
    CHECK(a.future == b.future);
    CHECK(a.flow == b.flow);
    c.rng_seed = 100;
    CHECK_FALSE(gen_sample(c).observed == a.observed);
  }

  TEST_CASE("invalid action and velocity combinations") {
    ScenarioConfig c = still();
    c.root_velocity = {1.0, 0.0};
    CHECK_THROWS(gen_sample(c));
    c = ScenarioConfig{};
    c.root_velocity = {0.0, 0.0};
    CHECK_THROWS(gen_sample(c));
    c = ScenarioConfig{};
    c.t_pred = 1;
    CHECK_THROWS(gen_sample(c));
    CHECK_THROWS(parse_action("dancing"));
  }

  TEST_CASE("torso bones are rigid and limbs stay bounded") {
    for (const Action a : {Action::Walking, Action::Running, Action::Standing}) {
      CAPTURE(to_string(a));
      ScenarioConfig c;
      c.action = a;
      c.root_velocity = a == Action::Standing ? Eigen::Vector2d::Zero() : Eigen::Vector2d(2.0, 0.0);
      const auto s = gen_sample(c).clean;
      const auto layout = build_layout("coco18");
      for (const auto& e : layout.edges) {
        const double l0 = bone_length(s, 0, e);
        double lo = l0, hi = l0;
        for (Index t = 1; t < s.frames(); ++t) {
          lo = std::min(lo, bone_length(s, t, e));
          hi = std::max(hi, bone_length(s, t, e));
        }
        const bool torso = e.first == 1 && (e.second == 8 || e.second == 11 || e.second == 2 || e.second == 5);
        if (torso) CHECK(hi - lo < 1e-6);
        CHECK(hi - lo <= 2.0 * 1.5 * c.gait_amplitude + 1e-9);
      }
    }
  }

  TEST_CASE("observation differs from clean only at masked joints and by bounded jitter") {
    ScenarioConfig c;
    c.occlusion_ratio = 0.5;
    c.jitter_sigma = 0.0;
    auto s = gen_sample(c);
    for (Index t = 0; t < c.t_obs; ++t) {
      int hidden = 0;
      for (Index k = 0; k < 18; ++k) {
        if (!s.observed.observed(t, k)) {
          ++hidden;
          continue;
        }
        CHECK(s.observed.position(t, k) == s.clean.position(t, k));
      }
      CHECK(hidden == 9);
    }
    c.jitter_sigma = 1.5;
    s = gen_sample(c);
    for (Index t = 0; t < c.t_obs; ++t)
      for (Index k = 0; k < 18; ++k)
        if (s.observed.observed(t, k)) CHECK((s.observed.position(t, k) - s.clean.position(t, k)).cwiseAbs().maxCoeff() <= 6 * 1.5);
  }
}

TEST_SUITE("gen_corpus") {
  TEST_CASE("80/20 split") {
    const auto c = gen_corpus(10, {{Action::Walking, 1.0}}, ScenarioConfig{}, 4);
    CHECK(c.samples.size() == 10);
    CHECK(c.train.size() == 8);
    CHECK(c.validation.size() == 2);
    for (const auto& s : c.samples) CHECK(s.config.action == Action::Walking);
  }

  TEST_CASE("class counts fall within the binomial 99% interval") {
    const auto c = gen_corpus(100, {{Action::Walking, 0.5}, {Action::Standing, 0.5}}, ScenarioConfig{}, 12);
    int walking = 0;
    for (const auto& s : c.samples) walking += s.config.action == Action::Walking;
    // 99% interval of Binomial(100, 0.5): 50 +- 2.576 * 5
    CHECK(walking >= 37);
    CHECK(walking <= 63);
  }

  TEST_CASE("invalid requests") {
    CHECK_THROWS(gen_corpus(0, {{Action::Walking, 1.0}}, ScenarioConfig{}, 1));
    CHECK_THROWS(gen_corpus(5, {{Action::Walking, 0.6}}, ScenarioConfig{}, 1));
    CHECK_THROWS(parse_mix("walking=0.5,standing"));
    CHECK(parse_mix("walking=0.5,standing=0.5").size() == 2);
  }

  TEST_CASE("deterministic per seed") {
    const auto a = gen_corpus(6, {{Action::Walking, 0.5}, {Action::Running, 0.5}}, ScenarioConfig{}, 8);
    const auto b = gen_corpus(6, {{Action::Walking, 0.5}, {Action::Running, 0.5}}, ScenarioConfig{}, 8);
    CHECK(a.manifest() == b.manifest());
    for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].observed == b.samples[i].observed);
  }

  TEST_CASE("save and load round trip the manifest and samples") {
    ScenarioConfig base;
    base.occlusion_ratio = 0.25;
    const auto c = gen_corpus(5, {{Action::Walking, 0.5}, {Action::Bending, 0.5}}, base, 21);
    const auto dir = std::filesystem::temp_directory_path() / "gprar_test_corpus";
    std::filesystem::remove_all(dir);
    save_corpus(c, dir);
    const auto r = load_corpus(dir);
    CHECK(r.manifest() == c.manifest());
    for (std::size_t i = 0; i < c.samples.size(); ++i) {
      CHECK(r.samples[i].clean == c.samples[i].clean);
      CHECK(r.samples[i].observed == c.samples[i].observed);
      CHECK(r.samples[i].future == c.samples[i].future);
      CHECK(r.samples[i].flow == c.samples[i].flow);
    }
    std::filesystem::remove_all(dir);
  }
}
