#include <gtest/gtest.h>

#include <random>

#include "drsm/renderer.hpp"
#include "oracles.hpp"

using namespace drsm;

namespace {

Camera test_camera(int w = 64, int h = 64, double f = 100.0) {
  Camera c;
  c.width = w;
  c.height = h;
  c.fx = c.fy = f;
  c.cx = w * 0.5;
  c.cy = h * 0.5;
  c.near = 1.0;
  c.far = 10.0;
  return c;
}

SceneModel<double> small_model(std::uint64_t seed) {
  PlaneConfig pc;
  pc.scales = {4, 8};
  pc.feature_width = 4;
  DecoderConfig dc;
  dc.hidden_width = 16;
  return init_model<double>(pc, dc, seed);
}

std::vector<SamplePrediction<double>> random_samples(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0, 1), sig(0, 6);
  std::vector<SamplePrediction<double>> s(n);
  const double delta = 1.0 / n;
  for (int k = 0; k < n; ++k) {
    s[k].s = (k + 0.5) * delta;
    s[k].delta = delta;
    s[k].sigma = sig(rng);
    s[k].rgb = {u(rng), u(rng), u(rng)};
  }
  return s;
}

using Samples = std::span<const SamplePrediction<double>>;

}  // namespace

TEST(MakeRay, PrincipalPointIsOpticalAxis) {
  const auto cam = test_camera(63, 63);
  const auto r = make_ray(cam, 31, 31, 0.0);
  EXPECT_NEAR(r.view_dir[0], 0.0, 1e-15);
  EXPECT_NEAR(r.view_dir[1], 0.0, 1e-15);
  EXPECT_NEAR(r.view_dir[2], -1.0, 1e-15);
}

TEST(MakeRay, RayParameterRangeIsUnit) {
  const auto cam = test_camera();
  for (int row : {0, 17, 63})
    for (int col : {0, 40, 63}) {
      const auto r = make_ray(cam, row, col, 0.5);
      EXPECT_EQ(r.s_near, 0.0);
      EXPECT_EQ(r.s_far, 1.0);
      const double n = std::hypot(r.view_dir[0], r.view_dir[1], r.view_dir[2]);
      EXPECT_NEAR(n, 1.0, 1e-15);
    }
}

TEST(MakeRay, CornerMatchesNdcOracle) {
  const auto cam = test_camera(64, 64, 100.0);
  for (auto [row, col] : {std::pair{0, 0}, std::pair{0, 63}, std::pair{63, 0}, std::pair{63, 63}, std::pair{10, 50}}) {
    const auto r = make_ray(cam, row, col, 0.0);
    const auto o = oracle::ndc_ray(64, 64, 100.0, 1.0, row, col);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(r.origin[i], o.o[i], 1e-9);
      EXPECT_NEAR(r.direction[i], o.d[i], 1e-9);
    }
  }
}

TEST(MakeRay, NearMapsToZeroAndFarEndApproachesOne) {
  const auto cam = test_camera();
  const auto r = make_ray(cam, 5, 9, 0.0);
  EXPECT_NEAR(ndc_point_unit(r, 0.0)[2], 0.0, 1e-15);
  EXPECT_NEAR(ndc_point_unit(r, 1.0)[2], 1.0, 1e-15);
}

TEST(MakeRay, OutOfBoundsThrows) {
  const auto cam = test_camera(8, 8);
  EXPECT_THROW(make_ray(cam, 8, 0, 0.0), InvalidInput);
  EXPECT_THROW(make_ray(cam, 0, -1, 0.0), InvalidInput);
}

TEST(Stratified, SingleSampleAtMidpoint) {
  Ray r;
  const auto s = stratified_samples(r, 1, 0, false);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].s, 0.5);
  EXPECT_EQ(s[0].delta, 1.0);
}

TEST(Stratified, FourEqualBins) {
  Ray r;
  const auto s = stratified_samples(r, 4, 0, false);
  const double want[] = {0.125, 0.375, 0.625, 0.875};
  for (int k = 0; k < 4; ++k) {
    EXPECT_EQ(s[k].s, want[k]);
    EXPECT_EQ(s[k].delta, 0.25);
  }
}

TEST(Stratified, JitterStaysInBinAndIsReproducible) {
  Ray r;
  const auto a = stratified_samples(r, 32, 77, true);
  const auto b = stratified_samples(r, 32, 77, true);
  const auto c = stratified_samples(r, 32, 78, true);
  double total = 0;
  bool differs = false;
  for (int k = 0; k < 32; ++k) {
    EXPECT_GE(a[k].s, k / 32.0);
    EXPECT_LT(a[k].s, (k + 1) / 32.0);
    EXPECT_EQ(a[k].s, b[k].s);
    differs |= a[k].s != c[k].s;
    total += a[k].delta;
  }
  EXPECT_TRUE(differs);
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_THROW(stratified_samples(r, 0, 0, false), InvalidInput);
}

TEST(Composite, EmptySpace) {
  std::mt19937_64 rng(1);
  auto s = random_samples(rng, 8);
  for (auto& p : s) p.sigma = 0;
  const auto r = composite<double>(Samples(s));
  EXPECT_EQ(r.color, (std::array<double, 3>{0, 0, 0}));
  EXPECT_EQ(r.depth, 0.0);
  EXPECT_EQ(r.opacity, 0.0);
  for (double t : r.transmittance) EXPECT_EQ(t, 1.0);
}

TEST(Composite, OpaqueFirstSample) {
  std::mt19937_64 rng(2);
  auto s = random_samples(rng, 8);
  s[0].sigma = 20.0 / s[0].delta;
  const auto r = composite<double>(Samples(s));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color[c], s[0].rgb[c], 1e-8);
  EXPECT_NEAR(r.depth, s[0].s, 1e-8);
  EXPECT_NEAR(r.opacity, 1.0, 1e-8);
}

TEST(Composite, MatchesDenseIntegration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto s = random_samples(rng, 8);
    std::vector<double> edges{0.0}, sigma, labels;
    std::vector<std::array<double, 3>> rgb;
    for (const auto& p : s) {
      edges.push_back(p.s + 0.5 * p.delta);
      sigma.push_back(p.sigma);
      rgb.push_back(p.rgb);
      labels.push_back(p.s);
    }
    const auto o = oracle::integrate(edges, sigma, rgb, labels);
    const auto r = composite<double>(Samples(s));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(r.color[c], o.color[c], 1e-9);
    EXPECT_NEAR(r.depth, o.depth, 1e-9);
    EXPECT_NEAR(r.opacity, o.opacity, 1e-9);
  }
}

TEST(Composite, UnorderedThrows) {
  std::mt19937_64 rng(4);
  auto s = random_samples(rng, 4);
  std::swap(s[1], s[2]);
  EXPECT_THROW(composite<double>(Samples(s)), InvalidInput);
}

TEST(Composite, WeightInvariants) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_samples(rng, 16);
    const auto r = composite<double>(Samples(s));
    double sum = 0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      EXPECT_GE(r.weights[k], 0.0);
      EXPECT_LE(r.transmittance[k + 1], r.transmittance[k]);
      sum += r.weights[k];
    }
    EXPECT_NEAR(sum, r.opacity, 1e-15);
    EXPECT_GE(r.opacity, 0.0);
    EXPECT_LE(r.opacity, 1.0);
  }
}

TEST(Composite, ZeroDensityInsertionIsExact) {
  std::mt19937_64 rng(6);
  const auto s = random_samples(rng, 8);
  auto t = s;
  SamplePrediction<double> empty{s[3].s + 0.01, 0.02, 0.0, {0.9, 0.1, 0.4}};
  t.insert(t.begin() + 4, empty);
  const auto a = composite<double>(Samples(s));
  const auto b = composite<double>(Samples(t));
  EXPECT_EQ(a.color, b.color);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.opacity, b.opacity);
}

TEST(Composite, IntervalSplitInvariance) {
  std::mt19937_64 rng(7);
  const auto s = random_samples(rng, 8);
  std::vector<SamplePrediction<double>> t;
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k == 2) {
      auto a = s[k], b = s[k];
      a.delta = b.delta = s[k].delta / 2;
      a.s = s[k].s - s[k].delta / 4;
      b.s = s[k].s + s[k].delta / 4;
      t.push_back(a);
      t.push_back(b);
    } else {
      t.push_back(s[k]);
    }
  }
  const auto a = composite<double>(Samples(s));
  const auto b = composite<double>(Samples(t));
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(a.color[c], b.color[c], 1e-12);
  EXPECT_NEAR(a.opacity, b.opacity, 1e-12);
  EXPECT_NEAR(a.transmittance.back(), b.transmittance.back(), 1e-12);
}

TEST(RenderRay, FreshModelIsTimeInvariant) {
  const auto m = small_model(1);
  const auto cam = test_camera(16, 16, 20.0);
  for (int row : {0, 7, 15}) {
    const auto a = render_ray(m, make_ray(cam, row, 3, 0.0), {32, false});
    const auto b = render_ray(m, make_ray(cam, row, 3, 0.8), {32, false});
    EXPECT_EQ(a.color, b.color);
    EXPECT_EQ(a.depth, b.depth);
  }
}

TEST(RenderRay, ZeroDensityIsBlack) {
  auto m = small_model(2);
  auto& last = m.decoder.geometry.layers.back();
  last.weight.row(0).setZero();
  last.bias(0) = -1000.0;
  const auto cam = test_camera(8, 8, 10.0);
  const auto r = render_ray(m, make_ray(cam, 4, 4, 0.3), {16, true}, 9);
  EXPECT_EQ(r.color, (std::array<double, 3>{0, 0, 0}));
  EXPECT_EQ(r.opacity, 0.0);
}

TEST(RenderRay, JitterDependsOnSeedOnly) {
  const auto m = small_model(3);
  const auto cam = test_camera(8, 8, 10.0);
  const auto ray = make_ray(cam, 2, 6, 0.1);
  const auto a = render_ray(m, ray, {16, true}, 5);
  const auto b = render_ray(m, ray, {16, true}, 5);
  const auto c = render_ray(m, ray, {16, true}, 6);
  EXPECT_EQ(a.color, b.color);
  EXPECT_NE(a.depth, c.depth);
}

TEST(RenderFrame, TwoByTwoRowMajor) {
  const auto m = small_model(4);
  const auto cam = test_camera(2, 2, 2.0);
  const auto f = render_frame(m, cam, 0.25, 16);
  for (int row = 0; row < 2; ++row)
    for (int col = 0; col < 2; ++col) {
      const auto r = render_ray(m, make_ray(cam, row, col, 0.25), {16, false});
      for (int c = 0; c < 3; ++c) EXPECT_EQ(f.color.at(row, col, c), static_cast<float>(r.color[c]));
      EXPECT_EQ(f.depth.at(row, col), static_cast<float>(r.depth));
      EXPECT_EQ(f.opacity.at(row, col), static_cast<float>(r.opacity));
    }
}

TEST(RenderFrame, DeterministicAndMatchesPerRay) {
  const auto m = small_model(5);
  const auto cam = test_camera(12, 10, 12.0);
  const auto a = render_frame(m, cam, 0.6, 24, 1);
  const auto b = render_frame(m, cam, 0.6, 24, 3);
  EXPECT_EQ(a.color.data, b.color.data);
  EXPECT_EQ(a.depth.data, b.depth.data);
  for (int row = 0; row < cam.height; ++row)
    for (int col = 0; col < cam.width; ++col) {
      const auto r = render_ray(m, make_ray(cam, row, col, 0.6), {24, false});
      for (int c = 0; c < 3; ++c) EXPECT_EQ(a.color.at(row, col, c), static_cast<float>(r.color[c]));
      EXPECT_EQ(a.depth.at(row, col), static_cast<float>(r.depth));
    }
}

TEST(Camera, Validation) {
  auto c = test_camera();
  c.near = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = test_camera();
  c.fx = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}
