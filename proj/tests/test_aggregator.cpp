#include "doctest.h"

#include "golden.hpp"
#include "gprar/aggregator.hpp"
#include "gprar/flow.hpp"
#include "gprar/graph.hpp"
#include "gprar/random.hpp"

#include <filesystem>
#include <sstream>

using namespace gprar;

namespace {

FlowField random_flow(Index frames, Index w, Index h, std::uint64_t seed) {
  Rng rng(seed);
  FlowField f(frames, w, h);
  for (Index t = 0; t < frames; ++t)
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) f.set(t, x, y, {rng.normal(), rng.normal()});
  return f;
}

FaConfig toy_fa(Index frames = 6, Index horizon = 4) {
  FaConfig c;
  c.frames = frames;
  c.horizon = horizon;
  c.joints = 5;
  c.action_channels = 3;
  c.stream_channels = 2;
  c.encoder_channels = {3, 4};
  c.decoder_channels = 3;
  return c;
}

struct ToyInputs {
  GridFlow grid;
  SkeletonSequence pose;
  Trajectory location;
  Tensor action;
};

ToyInputs toy_inputs(Index frames, std::uint64_t seed) {
  Rng rng(seed);
  ToyInputs in;
  in.grid = grid_flow(random_flow(frames, 8, 6, seed));
  in.pose = SkeletonSequence(frames, 5);
  in.location = Trajectory(frames, 2);
  in.action = Tensor(Shape{frames, 3});
  for (Index t = 0; t < frames; ++t) {
    in.location.row(t) << 300.0 + 2.0 * t + rng.normal(), 200.0 + rng.normal();
    for (Index k = 0; k < 5; ++k) in.pose.set(t, k, in.location(t, 0) + 10.0 * k, in.location(t, 1) - 20.0 * k, 0.9);
    for (Index c = 0; c < 3; ++c) in.action.at({t, c}) = rng.uniform();
  }
  return in;
}

Trajectory run(const FaModel& m, const ToyInputs& in) {
  return predict(m, aggregate(m, in.grid, in.pose, in.location, in.action));
}

}  // namespace

TEST_SUITE("grid flow") {
  TEST_CASE("uniform flow gives identical cells") {
    FlowField f(2, 16, 9);
    for (Index t = 0; t < 2; ++t) f.fill(t, {2.0, 3.0});
    const auto g = grid_flow(f);
    CHECK(g.cells.rows() == 2);
    CHECK(g.cells.cols() == 24);
    for (Index i = 0; i < kGridCells; ++i) CHECK(g.cell(1, i) == Eigen::Vector2d(2.0, 3.0));
  }

  TEST_CASE("zero flow gives zero cells") { CHECK(grid_flow(FlowField(1, 4, 3)).cells.isZero(0)); }

  TEST_CASE("a 4x3 image maps one pixel per cell in row-major order") {
    FlowField f(1, 4, 3);
    f.set(0, 0, 0, {5.0, -1.0});
    f.set(0, 3, 2, {7.0, 8.0});
    f.set(0, 1, 0, {1.0, 1.0});
    const auto g = grid_flow(f);
    CHECK(g.cell(0, 0) == Eigen::Vector2d(5.0, -1.0));
    CHECK(g.cell(0, 1) == Eigen::Vector2d(1.0, 1.0));
    CHECK(g.cell(0, 11) == Eigen::Vector2d(7.0, 8.0));
  }

  TEST_CASE("cells partition the pixels and conserve total flow") {
    for (auto [w, h] : {std::pair<Index, Index>{4, 3}, {11, 7}, {64, 36}, {13, 5}}) {
      CAPTURE(w);
      CAPTURE(h);
      std::vector<int> hits(static_cast<std::size_t>(w * h), 0);
      for (Index r = 0; r < kGridRows; ++r)
        for (Index c = 0; c < kGridCols; ++c) {
          const auto [y0, y1] = grid_span(h, kGridRows, r);
          const auto [x0, x1] = grid_span(w, kGridCols, c);
          for (Index y = y0; y < y1; ++y)
            for (Index x = x0; x < x1; ++x) ++hits[static_cast<std::size_t>(y * w + x)];
        }
      CHECK(std::all_of(hits.begin(), hits.end(), [](int n) { return n == 1; }));

      const auto f = random_flow(2, w, h, static_cast<std::uint64_t>(w * h));
      const auto g = grid_flow(f);
      for (Index t = 0; t < 2; ++t) {
        Eigen::Vector2d total = Eigen::Vector2d::Zero(), weighted = Eigen::Vector2d::Zero();
        for (Index y = 0; y < h; ++y)
          for (Index x = 0; x < w; ++x) total += f.at(t, x, y);
        for (Index r = 0; r < kGridRows; ++r)
          for (Index c = 0; c < kGridCols; ++c) {
            const auto [y0, y1] = grid_span(h, kGridRows, r);
            const auto [x0, x1] = grid_span(w, kGridCols, c);
            weighted += g.cell(t, r * kGridCols + c) * static_cast<double>((y1 - y0) * (x1 - x0));
          }
        CHECK((total - weighted).norm() < 1e-10);
      }
    }
  }

  TEST_CASE("too small an image is rejected") { CHECK_THROWS(grid_flow(FlowField(1, 3, 3))); }

  TEST_CASE("flow, grid and trajectory files round trip") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto f = random_flow(3, 5, 4, 9);
    write_flow(dir / "gprar_test.flow", f);
    CHECK(read_flow(dir / "gprar_test.flow") == f);
    std::filesystem::remove(dir / "gprar_test.flow");

    const auto g = grid_flow(f);
    std::stringstream gs;
    write_grid_csv(gs, g);
    CHECK(read_grid_csv(gs) == g);

    Trajectory tr(3, 2);
    tr << 0.1, 1.0 / 3.0, -2.5, 1e-17, 640.0, 480.123456789;
    std::stringstream ts;
    write_trajectory_csv(ts, tr);
    CHECK(ts.str().rfind("t,x,y\n", 0) == 0);
    CHECK(read_trajectory_csv(ts) == tr);
  }

  TEST_CASE("truncated flow file is rejected") {
    const auto path = std::filesystem::temp_directory_path() / "gprar_test_bad.flow";
    std::ofstream(path) << "GPFLOW1";
    CHECK_THROWS(read_flow(path));
    std::filesystem::remove(path);
  }
}

TEST_SUITE("aggregator") {
  TEST_CASE("column statistics") {
    RowMatrix<double> a(2, 2), b(1, 2);
    a << 1, 5, 3, 5;
    b << 5, 5;
    const auto st = ColumnStats::fit({a, b});
    CHECK(st.mean[0] == doctest::Approx(3.0));
    CHECK(st.std[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
    CHECK(st.mean[1] == 5.0);
    CHECK(st.std[1] == 1.0);
    const auto floored = ColumnStats::fit({a, b}, 2.0);
    CHECK(floored.std[0] == 2.0);
    CHECK(floored.std[1] == 2.0);
    CHECK(floored.mean == st.mean);
    CHECK_THROWS_AS(ColumnStats::fit({a}, -1.0), std::invalid_argument);
  }

  TEST_CASE("config json round trip and validation") {
    FaConfig c = toy_fa();
    c.stream_stats["location"] = {{1.0, 2.0}, {0.5, 3.0}};
    c.output_mode = OutputMode::Absolute;
    CHECK(FaConfig::from_json(c.to_json()).to_json() == c.to_json());
    c.stream_std_floor = 0.25;
    CHECK(FaConfig::from_json(c.to_json()).stream_std_floor == 0.25);
    c.stream_std_floor = -0.1;
    CHECK_THROWS(c.validate());
    c = toy_fa();
    c.encoder_channels = {3};
    CHECK_THROWS(c.validate());
    c = toy_fa();
    c.streams = {false, false, false, false};
    CHECK_THROWS(c.validate());
    FaModel m(toy_fa(), 1);
    CHECK_THROWS(m.set_stream_statistics({{"location", ColumnStats{{0.0}, {1.0}}}}));
  }

  TEST_CASE("encoded shape is fixed by the configuration") {
    const FaModel m(toy_fa(), 3);
    for (std::uint64_t seed : {1, 2}) {
      const auto in = toy_inputs(6, seed);
      const auto enc = aggregate(m, in.grid, in.pose, in.location, in.action);
      CHECK(enc.features.shape() == Shape{m.encoded_frames(), 4});
      CHECK(m.encoded_frames() == 3);
    }
  }

  TEST_CASE("prediction has horizon rows and is deterministic") {
    const FaModel m(toy_fa(6, 4), 3);
    const auto in = toy_inputs(6, 1);
    const auto p = run(m, in);
    CHECK(p.rows() == 4);
    CHECK(p == run(m, in));
    CHECK(FaModel(FaConfig{}, 1).config().horizon == 10);
  }

  TEST_CASE("mismatched stream lengths are rejected") {
    const FaModel m(toy_fa(), 3);
    auto in = toy_inputs(6, 1);
    const auto short_loc = Trajectory(in.location.topRows(5));
    CHECK_THROWS(aggregate(m, in.grid, in.pose, short_loc, in.action));
  }

  TEST_CASE("every stream is wired into the prediction") {
    FaModel m(toy_fa(), 5);
    // Positive biases keep the ReLU units active so each stream reaches the output.
    for (auto& [name, e] : m.params().entries())
      if (name.find(".bias") != std::string::npos) e.value.values().setConstant(0.5);
    const auto in = toy_inputs(6, 2);
    const auto base = run(m, in);
    auto zeroed = in;
    zeroed.action.values().setZero();
    CHECK((run(m, zeroed) - base).cwiseAbs().maxCoeff() > 1e-9);
    zeroed = in;
    zeroed.grid.cells.setZero();
    CHECK((run(m, zeroed) - base).cwiseAbs().maxCoeff() > 1e-9);
    zeroed = in;
    zeroed.pose = SkeletonSequence(6, 5);
    CHECK((run(m, zeroed) - base).cwiseAbs().maxCoeff() > 1e-9);
    zeroed = in;
    zeroed.location.col(1).array() += 15.0;
    CHECK((run(m, zeroed) - base).cwiseAbs().maxCoeff() > 1e-9);
  }

  TEST_CASE("different encodings give different trajectories") {
    const FaModel m(toy_fa(), 5);
    const auto a = toy_inputs(6, 1), b = toy_inputs(6, 2);
    const auto ea = aggregate(m, a.grid, a.pose, a.location, a.action);
    auto eb = ea;
    eb.features.values().array() += 0.25;
    CHECK((predict(m, ea) - predict(m, eb)).cwiseAbs().maxCoeff() > 1e-9);
  }

  TEST_CASE("disabled streams need no parameters") {
    FaConfig c = toy_fa();
    c.streams.grid = false;
    c.streams.action = false;
    const FaModel m(c, 1);
    CHECK_FALSE(m.params().contains("fa.stream.grid.weight"));
    CHECK(m.params().contains("fa.stream.pose.weight"));
    const auto in = toy_inputs(6, 1);
    CHECK(run(m, in).rows() == 4);
  }

  TEST_CASE("offset mode anchors at the last location, absolute mode at the origin") {
    FaConfig c = toy_fa();
    const auto in = toy_inputs(6, 1);
    CHECK(FaModel(c, 1).frame_for(in.location).anchor == Eigen::Vector2d(in.location.row(5).transpose()));
    c.output_mode = OutputMode::Absolute;
    CHECK(FaModel(c, 1).frame_for(in.location).anchor.isZero(0));
  }

  TEST_CASE("seed-7 toy model prediction matches the golden tensor") {
    const FaModel m(toy_fa(), 7);
    gprar::testing::check_golden("fa_toy_seed7_prediction.json", Tensor::from_matrix(run(m, toy_inputs(6, 7))), 1e-10);
  }

  TEST_CASE("all paths pass the gradient check") {
    FaModel m(toy_fa(), 11);
    const auto in = toy_inputs(6, 3);
    const FaFrame frame = m.frame_for(in.location);
    std::map<std::string, ColumnStats> stats;
    stats["grid"] = ColumnStats::fit({m.normalize_grid(in.grid)});
    stats["location"] = ColumnStats::fit({m.normalize_location(in.location, frame)});
    m.set_stream_statistics(stats);
    for (auto& [name, e] : m.params().entries())
      if (name.find(".bias") != std::string::npos) e.value.values().setConstant(0.1);
    const RowMatrix<double> target = RowMatrix<double>::Constant(4, 2, 0.3);
    for (const OutputMode mode : {OutputMode::Offset, OutputMode::Absolute}) {
      FaConfig c = m.config();
      c.output_mode = mode;
      const FaModel mm(c, m.params());
      const Graph g = [&](Tape& t, const NamedTensors&) {
        FaStreams s;
        s.grid = t.constant(mm.normalize_grid(in.grid));
        s.pose = t.constant(mm.normalize_pose(in.pose, frame));
        s.location = t.constant(mm.normalize_location(in.location, frame));
        s.action = t.constant(in.action);
        return NamedVars{{"loss", squared_error(mm.predict(t, mm.aggregate(t, s)), t.constant(target))}};
      };
      CHECK(finite_diff_check(g, {}, mm.params(), 1e-6) <= 1e-4);
    }
  }

  TEST_CASE("prediction loss") {
    Trajectory a(2, 2), b(2, 2);
    a << 1, 2, 3, 4;
    CHECK(loss_prediction(a, a) == 0.0);
    b = a;
    b(1, 0) += 3.0;
    b(1, 1) += 4.0;
    CHECK(loss_prediction(b, a) == 25.0);
    b = a;
    b.array() += 1.0;
    CHECK(loss_prediction(b, a) == 4.0);
    CHECK(loss_prediction(std::vector{b, a}, std::vector{a, a}) == 2.0);
    CHECK_THROWS(loss_prediction(Trajectory(a.topRows(1)), a));
  }
}
