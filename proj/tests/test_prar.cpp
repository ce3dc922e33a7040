#include "doctest.h"

#include "golden.hpp"
#include "gprar/graph.hpp"
#include "gprar/prar.hpp"
#include "gprar/random.hpp"

#include <cmath>

using namespace gprar;

namespace {

constexpr double kGoldenTolerance = 1e-10;

PrarConfig toy_config(Index frames = 6, Index kernel = 3) {
  PrarConfig c;
  c.layout = "toy5";
  c.frames = frames;
  c.temporal_kernel = kernel;
  c.encoder_widths = {3, 4, 4, 4};
  c.recon_widths = {4, 4, 3, 3, 3};
  c.action_widths = {4, 4, 4, 3, 3};
  c.num_classes = 3;
  return c;
}

// A fixed, fully observed toy5 window in pixels.
SkeletonSequence toy_window(Index frames, double scale = 1.0) {
  SkeletonSequence s(frames, 5);
  for (Index t = 0; t < frames; ++t)
    for (Index k = 0; k < 5; ++k)
      s.set(t, k, scale * (100.0 + 10.0 * k + 3.0 * t + 2.0 * std::sin(0.7 * t + k)),
            scale * (200.0 - 25.0 * k + std::cos(0.3 * t * k)), 0.5 + 0.1 * k);
  return s;
}

ModelParams identity_layer(const StgcnLayerConfig& layer, std::size_t partitions) {
  ModelParams p;
  add_stgcn_params(p, "l", layer, partitions);
  for (std::size_t i = 0; i < partitions; ++i)
    p.value("l.spatial." + std::to_string(i)).matrix().setIdentity();
  p.value("l.temporal").matrix().setIdentity();
  return p;
}

// Direct loop implementation of one layer used as an oracle.
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
            for (Index b = 0; b < cout; ++b)
              spatial(t * k + i, b) += adj.partitions[part](i, j) * x(t * k + j, a) * w(a, b);
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

Tensor as_tensor(const RowMatrix<double>& m, Index frames, Index joints) {
  Tensor t(Shape{frames, joints, m.cols()});
  t.matrix() = m;
  return t;
}

}  // namespace

TEST_SUITE("st_graph_conv") {
  TEST_CASE("single self-looped joint with identity weights is relu") {
    SkeletonLayout l;
    l.joint_names = {"j"};
    const auto adj = build_adjacency(l, AdjacencyStrategy::Uniform);
    StgcnLayerConfig layer{2, 2, 1, false, true};
    const auto p = identity_layer(layer, 1);
    RowMatrix<double> x(3, 2);
    x << -1, 2, 3, -4, 0, 5;
    const auto y = st_graph_conv(as_tensor(x, 3, 1), adj, layer, p, "l");
    CHECK(y.matrix() == x.cwiseMax(0.0));
  }

  TEST_CASE("one-hot on toy5 joint 2 spreads exactly one hop") {
    const auto adj = build_adjacency(build_layout("toy5"), AdjacencyStrategy::Uniform);
    StgcnLayerConfig layer{1, 1, 1, false, true};
    RowMatrix<double> x = RowMatrix<double>::Zero(5, 1);
    x(2, 0) = 1.0;
    const RowMatrix<double> y = st_graph_conv(as_tensor(x, 1, 5), adj, layer, identity_layer(layer, 1), "l").matrix();
    CHECK(y(0, 0) == 0.0);
    CHECK(y(1, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(y(2, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(y(3, 0) == doctest::Approx(1.0 / 3.0));
    CHECK(y(4, 0) == 0.0);
  }

  TEST_CASE("zero input gives zero output") {
    const auto adj = build_adjacency(build_layout("coco18"), AdjacencyStrategy::Distance);
    StgcnLayerConfig layer{3, 8, 9, false, true};
    ModelParams p(3);
    add_stgcn_params(p, "l", layer, 2);
    const auto y = st_graph_conv(Tensor(Shape{10, 18, 3}), adj, layer, p, "l");
    CHECK(y.values().isZero(0));
  }

  TEST_CASE("channel mismatch is an error") {
    const auto adj = build_adjacency(build_layout("toy5"), AdjacencyStrategy::Uniform);
    StgcnLayerConfig layer{3, 4, 3, false, true};
    ModelParams p(1);
    add_stgcn_params(p, "l", layer, 1);
    CHECK_THROWS_AS(st_graph_conv(Tensor(Shape{4, 5, 2}), adj, layer, p, "l"), ShapeError);
  }

  TEST_CASE("matches a direct loop implementation") {
    Rng rng(13);
    for (const auto strategy : {AdjacencyStrategy::Uniform, AdjacencyStrategy::Distance}) {
      for (const bool residual : {false, true}) {
        for (const bool relu : {false, true}) {
          const auto adj = build_adjacency(build_layout("coco18"), strategy);
          StgcnLayerConfig layer{4, residual ? 4 : 6, 5, residual, relu};
          ModelParams p(rng.below(1000));
          add_stgcn_params(p, "l", layer, adj.partitions.size());
          RowMatrix<double> x(7 * 18, 4);
          for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-2, 2);
          const RowMatrix<double> fast = st_graph_conv(as_tensor(x, 7, 18), adj, layer, p, "l").matrix();
          CHECK((fast - brute_force_layer(x, adj, layer, p)).cwiseAbs().maxCoeff() < 1e-12);
        }
      }
    }
  }

  TEST_CASE("k stacked layers reach exactly the joints within graph distance k") {
    const auto layout = build_layout("toy5");
    const auto adj = build_adjacency(layout, AdjacencyStrategy::Uniform);
    StgcnLayerConfig layer{2, 2, 1, false, true};
    ModelParams p(5);
    for (int i = 0; i < 3; ++i) add_stgcn_params(p, "l" + std::to_string(i), layer, 1);
    for (auto& [_, e] : p.entries()) e.value.values() = e.value.values().cwiseAbs().array() + 0.1;
    for (int source = 0; source < 5; ++source) {
      for (int depth = 1; depth <= 3; ++depth) {
        CAPTURE(source);
        CAPTURE(depth);
        Tape tape(&p);
        RowMatrix<double> x = RowMatrix<double>::Zero(5, 2);
        x.row(source).setOnes();
        Var h = tape.constant(x);
        for (int i = 0; i < depth; ++i) h = st_graph_conv(tape, h, adj, layer, "l" + std::to_string(i));
        for (int k = 0; k < 5; ++k) CHECK((h.value().row(k).maxCoeff() > 0.0) == (layout.graph_distance(source, k) <= depth));
      }
    }
  }
}

TEST_SUITE("prar model") {
  TEST_CASE("config validation") {
    PrarConfig c = toy_config();
    c.encoder_widths = {3, 4, 4};
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.recon_widths.back() = 2;
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.temporal_kernel = 4;
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.action_widths = {4, 4, 4, 3};
    CHECK_THROWS(c.validate());
    c = toy_config();
    c.input_mean = {0.0, 0.0};
    c.input_std = {1.0, 1.0};
    CHECK_THROWS(PrarModel(c, 1));
  }

  TEST_CASE("default layer widths") {
    const PrarModel m(PrarConfig{}, 1);
    CHECK(m.encoder_layers().size() == 3);
    CHECK(m.recon_layers().size() == 4);
    CHECK(m.action_layers().size() == 4);
    CHECK(m.encoder_layers().back().out_channels == 64);
    CHECK(m.recon_layers().back().out_channels == 3);
    CHECK(m.action_layers().back().out_channels == 32);
    CHECK(m.config().temporal_kernel == 9);
  }

  TEST_CASE("config json round trip") {
    PrarConfig c = toy_config();
    c.input_mean = std::vector<double>(10, 0.25);
    c.input_std = std::vector<double>(10, 2.0);
    CHECK(PrarConfig::from_json(c.to_json()).to_json() == c.to_json());
  }

  TEST_CASE("all-zero input encodes to zero") {
    const PrarModel m(toy_config(), 7);
    const auto enc = m.encode(SkeletonSequence(6, 5));
    CHECK(enc.values().isZero(0));
  }

  TEST_CASE("encode is deterministic and rejects the wrong window length") {
    const PrarModel m(toy_config(), 7);
    CHECK(m.encode(toy_window(6)) == m.encode(toy_window(6)));
    CHECK_THROWS_AS(m.encode(toy_window(5)), std::invalid_argument);
  }

  TEST_CASE("toy5 seed-7 encoder output matches the golden tensor") {
    PrarConfig c;
    c.layout = "toy5";
    const PrarModel m(c, 7);
    gprar::testing::check_golden("prar_toy5_seed7_encoded.json", m.encode(toy_window(10)), kGoldenTolerance);
  }

  TEST_CASE("reconstruction shape, confidence range, and full mask") {
    const PrarModel m(toy_config(), 9);
    const auto window = mask_joints(toy_window(6), 0.4, 2);
    const auto rec = m.reconstruct(m.encode(window), m.frame_of(window));
    CHECK(rec.frames() == 6);
    CHECK(rec.joints() == 5);
    CHECK(rec.observed_count() == 30);
    for (Index t = 0; t < 6; ++t)
      for (Index k = 0; k < 5; ++k) {
        CHECK(rec.confidence(t, k) >= 0.0);
        CHECK(rec.confidence(t, k) <= 1.0);
      }
  }

  TEST_CASE("doubling the input coordinates changes the reconstruction") {
    const PrarModel m(toy_config(), 9);
    const auto a = toy_window(6), b = toy_window(6, 2.0);
    const auto ra = m.reconstruct(m.encode(a), m.frame_of(a));
    const auto rb = m.reconstruct(m.encode(b), m.frame_of(b));
    CHECK((ra.values() - rb.values()).cwiseAbs().maxCoeff() > 1e-6);
  }

  TEST_CASE("recognition output shapes and argmax shift invariance") {
    const PrarModel m(toy_config(), 11);
    const auto out = m.recognize(m.encode(toy_window(6)));
    CHECK(out.logits.size() == 3);
    CHECK(out.feature.shape() == Shape{6, 3});
    Index shifted = 0;
    (out.logits.array() + 123.0).maxCoeff(&shifted);
    CHECK(shifted == out.predicted);
  }

  TEST_CASE("input statistics are the per-joint mean and deviation of observed pose-frame coordinates") {
    PrarModel m(toy_config(), 1);
    const auto a = toy_window(6), b = mask_joints(toy_window(6, 1.5), 0.4, 3);
    m.fit_input_statistics({&a, &b});
    REQUIRE(m.has_input_statistics());
    for (Index j = 0; j < 5; ++j) {
      for (Index c = 0; c < 2; ++c) {
        std::vector<double> v;
        for (const auto* w : {&a, &b}) {
          const auto f = PoseFrame::of(*w, m.config().body_scale);
          for (Index t = 0; t < 6; ++t)
            if (w->observed(t, j)) v.push_back(((c == 0 ? w->x(t, j) : w->y(t, j)) - f.center(c)) / f.scale);
        }
        double mean = 0.0, var = 0.0;
        for (double x : v) mean += x / static_cast<double>(v.size());
        for (double x : v) var += (x - mean) * (x - mean) / static_cast<double>(v.size());
        const auto i = static_cast<std::size_t>(2 * j + c);
        CHECK(m.config().input_mean[i] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(m.config().input_std[i] == doctest::Approx(std::max(std::sqrt(var), 1e-3)).epsilon(1e-9));
      }
    }
    // Standardized inputs of hidden joints stay zero.
    const auto x = m.input_of(b);
    for (Index t = 0; t < 6; ++t)
      for (Index k = 0; k < 5; ++k)
        if (!b.observed(t, k)) CHECK(x.row(t * 5 + k).isZero(0));
  }

  TEST_CASE("every forward path passes the gradient check") {
    PrarModel m(toy_config(4, 3), 21);
    const auto window = mask_joints(toy_window(4), 0.2, 1);
    m.fit_input_statistics({&window});
    const RowMatrix<double> x = m.input_of(window);
    const RowMatrix<double> target = m.standardize(m.frame_of(window).normalize(toy_window(4)));
    const auto graph_of = [&](bool recon, bool action) {
      return Graph([&, recon, action](Tape& t, const NamedTensors&) {
        const auto v = m.forward(t, t.constant(x));
        Var loss = t.constant(RowMatrix<double>::Zero(1, 1));
        if (recon) loss = loss + squared_error(v.reconstructed_standardized, t.constant(target));
        if (action) loss = loss + softmax_cross_entropy(v.logits, 1) + 0.1 * sum(v.action_feature);
        return NamedVars{{"loss", loss}};
      });
    };
    CHECK(finite_diff_check(graph_of(true, false), {}, m.params(), 1e-6) <= 1e-4);
    CHECK(finite_diff_check(graph_of(false, true), {}, m.params(), 1e-6) <= 1e-4);
    CHECK(finite_diff_check(graph_of(true, true), {}, m.params(), 1e-6) <= 1e-4);

    // The multi-task gradient is the sum of the component gradients.
    ModelParams pr = m.params(), pa = m.params(), pm = m.params();
    backward(graph_of(true, false), {}, pr);
    backward(graph_of(false, true), {}, pa);
    backward(graph_of(true, true), {}, pm);
    for (const auto& [name, e] : pm.entries()) {
      CAPTURE(name);
      CHECK((e.grad.matrix() - pr.grad(name).matrix() - pa.grad(name).matrix()).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_SUITE("prar losses") {
  TEST_CASE("reconstruction loss") {
    const auto truth = toy_window(2);
    CHECK(loss_reconstruction(truth, truth) == 0.0);
    SkeletonSequence off = truth;
    off.set(1, 3, truth.x(1, 3) + 3.0, truth.y(1, 3) + 4.0, truth.confidence(1, 3));
    CHECK(loss_reconstruction(off, truth) == doctest::Approx(25.0).epsilon(1e-12));
    off = truth;
    for (Index t = 0; t < 2; ++t) off.set(t, 0, truth.x(t, 0) + 1.0, truth.y(t, 0), truth.confidence(t, 0));
    CHECK(loss_reconstruction(off, truth) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS(loss_reconstruction(toy_window(3), truth));
    CHECK(loss_reconstruction(std::vector{off, truth}, std::vector{truth, truth}) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("action loss") {
    CHECK(loss_action(Eigen::Vector2d(0.7, 0.7), 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(loss_action(Eigen::Vector2d(1000.0, 0.0), 0) == doctest::Approx(0.0));
    // -log softmax: log(1 + e^-1 + e^-2)
    CHECK(loss_action(Eigen::Vector3d(1, 2, 3), 2) == doctest::Approx(std::log1p(std::exp(-1.0) + std::exp(-2.0))).epsilon(1e-14));
    CHECK(loss_action(Eigen::Vector3d(1, 2, 3), 2) == doctest::Approx(0.4076).epsilon(1e-4));
    CHECK_THROWS_AS(loss_action(Eigen::Vector3d(1, 2, 3), 3), std::out_of_range);
  }

  TEST_CASE("multi-task loss is the unweighted sum") {
    const auto truth = toy_window(2);
    CHECK(loss_multitask(truth, truth, Eigen::Vector2d(1000.0, 0.0), 0) == doctest::Approx(0.0));
    SkeletonSequence off = truth;
    for (Index t = 0; t < 2; ++t) off.set(t, 0, truth.x(t, 0) + 1.0, truth.y(t, 0), truth.confidence(t, 0));
    const Eigen::Vector2d logits(0.3, -0.4);
    CHECK(loss_multitask(off, truth, logits, 1) == doctest::Approx(2.0 + loss_action(logits, 1)).epsilon(1e-14));
  }
}
