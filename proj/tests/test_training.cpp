#include <gtest/gtest.h>

#include <random>

#include "drsm/checkpoint.hpp"
#include "drsm/grad_check.hpp"
#include "drsm/training.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace drsm;
using testing_support::TempDir;

namespace {

using Rgb = std::array<double, 3>;

// Loss of the full objective on a fixed batch of rays; gradient into `grad` if given.
double batch_objective(const SceneModel<double>& m, const std::vector<Ray>& rays,
                       const std::vector<std::uint64_t>& seeds, const std::vector<Rgb>& target,
                       const std::vector<double>& depth, const LossWeights& w,
                       SceneModel<double>* grad) {
  RayBatchRenderer<double> batch;
  batch.forward(m, rays, {12, true}, seeds);
  const auto& res = batch.results();
  std::vector<Rgb> rgb(rays.size()), d_rgb(rays.size());
  std::vector<double> dep(rays.size()), d_dep(rays.size());
  std::vector<std::uint8_t> valid(rays.size(), 1);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    rgb[r] = res[r].color;
    dep[r] = res[r].depth;
  }
  LossParts parts;
  parts.color = color_loss<double>(rgb, target, d_rgb);
  parts.depth = depth_loss<double>(dep, depth, valid, d_dep).value;
  for (auto& d : d_dep) d *= w.depth;
  const auto reg = plane_regularizers(m.planes, w, grad ? &grad->planes : nullptr);
  parts.tv2d = reg.tv2d;
  parts.tv1d = reg.tv1d;
  parts.smooth = reg.smooth;
  if (grad) batch.backward(m, d_rgb, d_dep, {}, *grad);
  return total_loss(parts, w);
}

}  // namespace

TEST(ColorLoss, IdenticalIsZero) {
  const std::vector<Rgb> a{{0.1, 0.2, 0.3}, {0.9, 0.5, 0.0}};
  EXPECT_EQ(color_loss<double>(a, a), 0.0);
}

TEST(ColorLoss, SingleRayHandValue) {
  const std::vector<Rgb> r{{0, 0, 0}}, t{{1, 0, 0}};
  EXPECT_EQ(color_loss<double>(r, t), 1.0);
}

TEST(ColorLoss, MatchesScalarLoopAndGradient) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Rgb> a(37), b(37), g(37);
  for (auto& x : a) x = {u(rng), u(rng), u(rng)};
  for (auto& x : b) x = {u(rng), u(rng), u(rng)};
  double want = 0;
  for (int r = 0; r < 37; ++r)
    for (int c = 0; c < 3; ++c) want += (a[r][c] - b[r][c]) * (a[r][c] - b[r][c]);
  want /= 37;
  EXPECT_NEAR(color_loss<double>(a, b, g), want, 1e-12);
  EXPECT_NEAR(g[5][1], 2 * (a[5][1] - b[5][1]) / 37, 1e-15);
  EXPECT_THROW(color_loss<double>(std::span(a).first(3), b), InvalidInput);
}

TEST(DepthLoss, HandCases) {
  const std::vector<double> r{0.25}, t{0.5};
  const std::vector<std::uint8_t> v{1};
  EXPECT_EQ(depth_loss<double>(r, t, v).value, 0.0625);
  EXPECT_EQ(depth_loss<double>(t, t, v).value, 0.0);
}

TEST(DepthLoss, MeanOverValidSubset) {
  const std::vector<double> r{0.1, 0.2, 0.3, 0.4}, t{0.2, 0.9, 0.0, 0.4};
  const std::vector<std::uint8_t> v{1, 0, 1, 0};
  const auto d = depth_loss<double>(r, t, v);
  EXPECT_NEAR(d.value, (0.01 + 0.09) / 2, 1e-15);
  EXPECT_EQ(d.valid, 2u);
}

TEST(DepthLoss, AllInvalidFlagged) {
  const std::vector<double> r{0.1, 0.2}, t{0.5, 0.5};
  const std::vector<std::uint8_t> v{0, 0};
  const auto d = depth_loss<double>(r, t, v);
  EXPECT_EQ(d.value, 0.0);
  EXPECT_TRUE(d.all_invalid);
}

TEST(TotalLoss, Arithmetic) {
  const LossWeights w;
  EXPECT_EQ(total_loss({}, w), 0.0);
  EXPECT_EQ(total_loss({0.3, 1, 2, 3, 4}, {0, 0, 0, 0}), 0.3);
  EXPECT_NEAR(total_loss({0.5, 0.2, 10, 20, 30}, w), 0.734, 1e-15);
  EXPECT_EQ(total_loss({0.5, 0.2, 10, 20, 30}, w), 0.5 + 1.0 * 0.2 + 0.0002 * 10 + 0.0001 * 20 + 0.001 * 30);
}

TEST(PlaneRegularizers, MeanOverPlanesAndScales) {
  PlaneConfig pc;
  pc.scales = {4, 6};
  pc.feature_width = 2;
  auto set = init_planes<double>(pc, 4);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  set.for_each_plane([&](std::size_t, int, FeaturePlane<double>& p) {
    for (auto& v : p.values) v = u(rng);
  });
  double tv = 0, tv1 = 0, sm = 0;
  for (std::size_t s = 0; s < 2; ++s)
    for (int p = 0; p < 6; ++p) {
      const oracle::Grid g{pc.scales[s], 2, set.planes[s][p].values};
      if (p < 3)
        tv += oracle::tv2d(g) / 6;
      else {
        tv1 += oracle::tv1d_space(g) / 6;
        sm += oracle::smooth_time(g) / 6;
      }
    }
  const auto r = plane_regularizers(set, LossWeights{});
  EXPECT_NEAR(r.tv2d, tv, 1e-12);
  EXPECT_NEAR(r.tv1d, tv1, 1e-12);
  EXPECT_NEAR(r.smooth, sm, 1e-12);
}

TEST(Adam, ZeroGradientKeepsParameters) {
  std::vector<double> p{1.0, -2.0}, g{0.0, 0.0}, m{0.5, 0.1}, v{0.2, 0.3};
  const auto before = p;
  ASSERT_TRUE(adam_update<double>(p, g, m, v, 3, 0.01, {}));
  EXPECT_NEAR(p[1], before[1] - 0.01 * (0.9 * 0.1 / (1 - 0.729)) / (std::sqrt(0.999 * 0.3 / (1 - std::pow(0.999, 3))) + 1e-8), 1e-14);
  EXPECT_NEAR(m[0], 0.45, 1e-15);
  EXPECT_NEAR(v[0], 0.1998, 1e-15);
  std::vector<double> q{1.0}, gz{0.0}, mz{0.0}, vz{0.0};
  adam_update<double>(q, gz, mz, vz, 1, 0.01, {});
  EXPECT_EQ(q[0], 1.0);
}

TEST(Adam, FirstStepIsLearningRate) {
  std::vector<double> p{0.0}, g{1.0}, m{0.0}, v{0.0};
  adam_update<double>(p, g, m, v, 1, 0.01, {});
  EXPECT_NEAR(p[0], -0.01, 1e-9);
}

TEST(Adam, QuadraticMatchesScalarReference) {
  std::vector<double> x{1.0}, m{0.0}, v{0.0};
  oracle::ScalarAdam ref;
  double xr = 1.0, prev = 1.0;
  for (int t = 1; t <= 5; ++t) {
    const std::vector<double> g{2 * x[0]};
    adam_update<double>(x, g, m, v, t, 0.1, {});
    xr = ref.step(xr, 2 * xr, 0.1);
    EXPECT_NEAR(x[0], xr, 1e-12);
    EXPECT_LT(x[0] * x[0], prev);
    prev = x[0] * x[0];
  }
}

TEST(Adam, NonFiniteGradientSkipsTensor) {
  PlaneConfig pc;
  pc.scales = {4};
  pc.feature_width = 2;
  DecoderConfig dc;
  dc.hidden_width = 4;
  auto model = init_model<double>(pc, dc, 1);
  auto grad = zeros_like(model);
  for (auto& g : tensors(grad))
    for (auto& x : g) x = 0.5;
  grad.planes.planes[0][2].values[3] = std::nan("");
  OptimizerState<double> st(model);
  const auto before = model.planes.planes[0][2].values;
  const auto rep = adam_step(model, grad, st, AdamConfig{}, 0.01);
  ASSERT_EQ(rep.skipped_tensors, std::vector<std::size_t>{2});
  EXPECT_EQ(model.planes.planes[0][2].values, before);
  EXPECT_NE(model.planes.planes[0][1].values, init_model<double>(pc, dc, 1).planes.planes[0][1].values);
  EXPECT_EQ(st.step, 1);
}

TEST(Adam, SmallStepDoesNotIncreaseObjective) {
  PlaneConfig pc;
  pc.scales = {4, 6};
  pc.feature_width = 3;
  DecoderConfig dc;
  dc.hidden_width = 12;
  Camera cam{12, 12, 12, 12, 6, 6, 1, 10};
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto m = init_model<double>(pc, dc, trial);
    std::mt19937_64 rng(trial + 1000);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> px(0, 11);
    std::vector<Ray> rays;
    std::vector<std::uint64_t> seeds;
    std::vector<Rgb> target;
    std::vector<double> depth;
    const double t = u(rng);
    for (int r = 0; r < 16; ++r) {
      rays.push_back(make_ray(cam, px(rng), px(rng), t));
      seeds.push_back(rng());
      target.push_back({u(rng), u(rng), u(rng)});
      depth.push_back(u(rng));
    }
    auto grad = zeros_like(m);
    const LossWeights w;
    const double before = batch_objective(m, rays, seeds, target, depth, w, &grad);
    OptimizerState<double> st(m);
    adam_step(m, grad, st, AdamConfig{}, 1e-4);
    const double after = batch_objective(m, rays, seeds, target, depth, w, nullptr);
    ok += after <= before;
  }
  EXPECT_GE(ok, 95);
}

TEST(Trainer, SingleIterationProducesLogAndCheckpoint) {
  const auto scene = generate_synthetic(testing_support::tiny_spec(), 1);
  auto cfg = testing_support::tiny_config();
  cfg.iterations = 1;
  Trainer<float> tr(scene.dataset, cfg);
  int checkpoints = 0;
  const auto log = train(tr, {{}, [&](int done) {
                                EXPECT_EQ(done, 1);
                                ++checkpoints;
                              }});
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(checkpoints, 1);
  EXPECT_TRUE(std::isfinite(log[0].total));
  EXPECT_GT(log[0].parts.color, 0.0);
}

TEST(Trainer, DeterministicReplay) {
  const auto scene = generate_synthetic(testing_support::tiny_spec(), 1);
  const auto cfg = testing_support::tiny_config();
  Trainer<float> a(scene.dataset, cfg), b(scene.dataset, cfg);
  const auto la = train(a), lb = train(b);
  for (std::size_t i = 0; i < la.size(); ++i) {
    EXPECT_EQ(la[i].total, lb[i].total);
    EXPECT_EQ(la[i].frame, lb[i].frame);
  }
  auto other = cfg;
  other.seed = 4;
  Trainer<float> c(scene.dataset, other);
  EXPECT_NE(train(c)[0].total, la[0].total);
}

TEST(Trainer, MultiWorkerMatchesWithinTolerance) {
  const auto scene = generate_synthetic(testing_support::tiny_spec(), 1);
  auto cfg = testing_support::tiny_config();
  Trainer<float> a(scene.dataset, cfg);
  cfg.workers = 3;
  Trainer<float> b(scene.dataset, cfg);
  const auto la = train(a), lb = train(b);
  for (std::size_t i = 0; i < la.size(); ++i) EXPECT_NEAR(la[i].total, lb[i].total, 1e-5 * la[i].total);
}

TEST(Trainer, LossDecreasesOnTinyScene) {
  const auto scene = generate_synthetic(testing_support::tiny_spec(), 1);
  auto cfg = testing_support::tiny_config();
  cfg.iterations = 150;
  cfg.batch_rays = 128;
  Trainer<float> tr(scene.dataset, cfg);
  const auto log = train(tr);
  double early = 0, late = 0;
  for (int i = 0; i < 10; ++i) {
    early += log[i].parts.color;
    late += log[log.size() - 1 - i].parts.color;
  }
  EXPECT_LT(late, 0.5 * early);
}

TEST(Trainer, FullyOccludedFramesSkippedWithWarning) {
  auto scene = generate_synthetic(testing_support::tiny_spec(), 1);
  scene.dataset.masks[2] = Mask(16, 16, 1, 0);
  Trainer<float> tr(scene.dataset, testing_support::tiny_config());
  bool warned = false;
  for (const auto& w : tr.warnings()) warned |= w.find("frame 2") != std::string::npos;
  EXPECT_TRUE(warned);
  for (const auto& l : train(tr)) EXPECT_NE(l.frame, 2);
}

TEST(Trainer, CosineDecaySchedule) {
  const auto scene = generate_synthetic(testing_support::tiny_spec(), 1);
  auto cfg = testing_support::tiny_config();
  cfg.cosine_decay = true;
  cfg.iterations = 4;
  Trainer<float> tr(scene.dataset, cfg);
  EXPECT_DOUBLE_EQ(tr.learning_rate(), 0.01);
  tr.step();
  tr.step();
  EXPECT_NEAR(tr.learning_rate(), 0.005, 1e-12);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  c.iterations = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.adam.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.weights.tv2d = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(CsvRow, Format) {
  IterationLog l;
  l.iteration = 7;
  l.parts = {0.5, 0.25, 1, 2, 3};
  l.total = 0.75;
  l.wall_ms = 12.5;
  EXPECT_EQ(csv_header(), "iteration,L_color,L_depth,L_TV2D,L_TV1D,L_smooth,total,wall_ms");
  EXPECT_EQ(csv_row(l), "7,0.5,0.25,1,2,3,0.75,12.500");
}

TEST(Checkpoint, RoundTrip) {
  TempDir dir("ckpt");
  auto cfg = testing_support::tiny_config();
  cfg.sampler.clamp_mode = ClampMode::Min;
  cfg.use_isdm = false;
  const auto model = init_model<float>(cfg.planes, cfg.decoder, 5);
  save_checkpoint(dir.path / "m.bin", cfg, model);
  const auto ck = load_checkpoint(dir.path / "m.bin");
  EXPECT_EQ(ck.config.planes.scales, cfg.planes.scales);
  EXPECT_EQ(ck.config.sampler.clamp_mode, ClampMode::Min);
  EXPECT_FALSE(ck.config.use_isdm);
  EXPECT_EQ(ck.config.seed, cfg.seed);
  for (std::size_t s = 0; s < 2; ++s)
    for (int p = 0; p < 6; ++p) EXPECT_EQ(ck.model.planes.planes[s][p].values, model.planes.planes[s][p].values);
  for (std::size_t l = 0; l < model.decoder.color.layers.size(); ++l)
    EXPECT_EQ(ck.model.decoder.color.layers[l].weight, model.decoder.color.layers[l].weight);
}

TEST(Checkpoint, RejectsGarbage) {
  TempDir dir("ckpt_bad");
  write_text_atomic(dir.path / "x.bin", "not a checkpoint at all");
  EXPECT_THROW(load_checkpoint(dir.path / "x.bin"), LoadError);
  EXPECT_THROW(load_checkpoint(dir.path / "missing.bin"), LoadError);
}

TEST(GradCheck, DeclaredTolerances) {
  EXPECT_LT(grad_check("linear", 1, 5).max_rel_error, 1e-7);
  EXPECT_LT(grad_check("composite", 1, 5).max_rel_error, 1e-5);
  EXPECT_LT(grad_check("render_ray", 1, 3).max_rel_error, 1e-4);
}

TEST(GradCheck, UnknownComponentThrows) { EXPECT_THROW(grad_check("nope", 1), InvalidInput); }
