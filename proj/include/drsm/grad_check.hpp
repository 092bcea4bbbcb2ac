#pragma once

// Finite-difference verification of every hand-written adjoint, in double.
//
// Each check draws a small random instance, contracts the op's output with a
// random cotangent g (scalar objective L = <g, f(x)>), and compares the
// analytic dL/dx against central differences coordinate by coordinate.
// Probes that flip a ReLU (or move a bilinear stencil to another cell) are
// skipped: the function is not differentiable across them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "drsm/decoder.hpp"
#include "drsm/field.hpp"
#include "drsm/renderer.hpp"
#include "drsm/training.hpp"

namespace drsm {

struct GradCheckResult {
  std::string component;
  double max_rel_error = 0;
  double tolerance = 0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  std::string worst;  // which coordinate produced max_rel_error

  bool passed() const { return checked > 0 && max_rel_error <= tolerance; }
};

struct GradCheckOptions {
  double step = 1e-4;
  // Relative error = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-8;
};

inline const std::vector<std::string>& grad_check_components() {
  static const std::vector<std::string> names = {
      "linear",     "bilerp",      "query_fused", "tv2d",      "tv1d_space", "smooth_time",
      "posenc",     "geometry_mlp", "color_mlp",  "composite", "render_ray"};
  return names;
}

inline double grad_check_tolerance(const std::string& component) {
  return component == "render_ray" ? 1e-4 : 1e-5;
}

namespace detail {

/// One differentiable scalar: a pointer into the live parameters and its
/// analytic derivative.
struct Coord {
  double* value;
  double analytic;
  std::string label;
};

struct Probe {
  std::function<long double()> loss;
  // Optional piecewise-regime id; differing ids mean the probe crossed a kink.
  std::function<std::uint64_t()> regime;
};

inline void check_coords(std::vector<Coord>& coords, const Probe& probe, const GradCheckOptions& opt,
                         GradCheckResult& res) {
  std::uint64_t base = 0;
  if (probe.regime) {
    probe.loss();
    base = probe.regime();
  }
  for (auto& c : coords) {
    const double x0 = *c.value;
    bool kink = false;
    const auto at = [&](double offset) {
      *c.value = x0 + offset;
      const long double l = probe.loss();
      if (probe.regime && probe.regime() != base) kink = true;
      return l;
    };
    // Fourth-order central stencil: the plain two-point difference carries an
    // O(h^2 w^2) truncation error that the highest encoding frequencies push
    // past the tolerance on its own.
    const double h = opt.step;
    const long double d1 = at(h) - at(-h);
    const long double d2 = at(2 * h) - at(-2 * h);
    *c.value = x0;
    if (kink) {
      ++res.skipped;
      continue;
    }
    const double numeric = static_cast<double>((8 * d1 - d2) / (12 * h));
    const double err =
        std::abs(c.analytic - numeric) / std::max({std::abs(c.analytic), std::abs(numeric), opt.floor});
    ++res.checked;
    if (err > res.max_rel_error || res.worst.empty()) {
      res.max_rel_error = err;
      std::ostringstream os;
      os.precision(12);
      os << c.label << " analytic=" << c.analytic << " numeric=" << numeric;
      res.worst = os.str();
    }
  }
}

inline void add_span(std::vector<Coord>& out, std::span<double> values, std::span<const double> grads,
                     const std::string& label) {
  for (std::size_t i = 0; i < values.size(); ++i)
    out.push_back({&values[i], grads[i], label + "[" + std::to_string(i) + "]"});
}

inline void add_mlp(std::vector<Coord>& out, Mlp<double>& net, const Mlp<double>& grad, const std::string& label) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& L = net.layers[l];
    const auto& G = grad.layers[l];
    add_span(out, {L.weight.data(), static_cast<std::size_t>(L.weight.size())},
             {G.weight.data(), static_cast<std::size_t>(G.weight.size())}, label + ".W" + std::to_string(l));
    add_span(out, {L.bias.data(), static_cast<std::size_t>(L.bias.size())},
             {G.bias.data(), static_cast<std::size_t>(G.bias.size())}, label + ".b" + std::to_string(l));
  }
}

inline std::vector<double> uniform_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void randomize_mlp(Mlp<double>& net, std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  for (auto& l : net.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = d(rng);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = d(rng);
  }
}

inline void randomize_plane(FeaturePlane<double>& p, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : p.values) v = d(rng);
}

inline DecoderConfig small_decoder_config() {
  DecoderConfig dc;
  dc.encoder = {2, 2};
  dc.hidden_width = 8;
  dc.hidden_layers = 2;
  dc.geometry_feature_dim = 4;
  return dc;
}

inline PlaneConfig small_plane_config() {
  PlaneConfig pc;
  pc.scales = {3, 5};
  pc.feature_width = 3;
  return pc;
}

/// Random point with every coordinate safely inside a stencil cell, so that
/// +-step never crosses a grid line for resolutions up to 8.
inline double interior_coord(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.02, 0.98);
  for (;;) {
    const double x = d(rng);
    bool ok = true;
    for (int n = 2; n <= 8 && ok; ++n) {
      const double f = x * (n - 1);
      ok = std::abs(f - std::round(f)) > 1e-3;
    }
    if (ok) return x;
  }
}

inline void randomize_planes(FeaturePlaneSet<double>& set, std::mt19937_64& rng) {
  set.for_each_plane([&](std::size_t, int p, FeaturePlane<double>& plane) {
    if (is_space_time_plane(p))
      randomize_plane(plane, rng, 0.6, 1.4);
    else
      randomize_plane(plane, rng, -1.0, 1.0);
  });
}

inline void add_planes(std::vector<Coord>& out, FeaturePlaneSet<double>& set, const FeaturePlaneSet<double>& grad) {
  for (std::size_t s = 0; s < set.num_scales(); ++s)
    for (int p = 0; p < kPlanesPerScale; ++p)
      add_span(out, set.planes[s][p].values, grad.planes[s][p].values,
               std::string("plane") + std::to_string(s) + kPlaneNames[p]);
}

inline void check_linear(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  const int in = 5, out = 4;
  Mlp<double> net = make_mlp<double>(in, 1, 0, out);
  randomize_mlp(net, rng, 1.0);
  Mlp<double> grad = make_mlp<double>(in, 1, 0, out);
  Mat<double> x = Mat<double>::Zero(in, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);
  Mat<double> g = Mat<double>::Zero(out, 3);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = std::uniform_real_distribution<double>(-1, 1)(rng);

  MlpTape<double> tape;
  mlp_forward(net, x, tape);
  Mat<double> dx;
  mlp_backward(net, tape, g, grad, &dx);

  std::vector<Coord> coords;
  add_mlp(coords, net, grad, "linear");
  add_span(coords, {x.data(), static_cast<std::size_t>(x.size())}, {dx.data(), static_cast<std::size_t>(dx.size())},
           "x");
  const Probe probe{[&] {
                      MlpTape<double> t;
                      return (mlp_forward(net, x, t).array() * g.array()).sum();
                    },
                    {}};
  check_coords(coords, probe, opt, res);
}

inline void check_bilerp(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  FeaturePlane<double> plane(5, 3);
  randomize_plane(plane, rng, -1, 1);
  const double u = interior_coord(rng), v = interior_coord(rng);
  const auto g = uniform_vec(rng, 3, -1, 1);
  FeaturePlane<double> grad(5, 3);
  bilerp_backward<double>(grad, u, v, g);
  std::vector<Coord> coords;
  add_span(coords, plane.values, grad.values, "plane");
  check_coords(coords, {[&] { return dot(bilerp(plane, u, v), g); }, {}}, opt, res);
}

inline void check_query_fused(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  const PlaneConfig pc = small_plane_config();
  FeaturePlaneSet<double> set(pc), grad(pc);
  randomize_planes(set, rng);
  const std::array<double, 4> pt{interior_coord(rng), interior_coord(rng), interior_coord(rng),
                                 interior_coord(rng)};
  const auto g = uniform_vec(rng, pc.fused_width(), -1, 1);
  query_fused_backward<double>(set, pt, g, grad);
  std::vector<Coord> coords;
  add_planes(coords, set, grad);
  check_coords(coords, {[&] { return dot(query_fused(set, pt), g); }, {}}, opt, res);
}

template <class Reg>
void check_regularizer(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res, Reg reg) {
  FeaturePlane<double> plane(5, 2), grad(5, 2);
  randomize_plane(plane, rng, -1, 1);
  const double scale = 0.7;
  reg(plane, &grad, scale);
  std::vector<Coord> coords;
  add_span(coords, plane.values, grad.values, "plane");
  check_coords(coords, {[&] { return scale * reg(plane, nullptr, 1.0); }, {}}, opt, res);
}

inline void check_posenc(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  auto x = uniform_vec(rng, 4, 0, 1);
  const int L = 4;
  const auto g = uniform_vec(rng, encoded_width(4, L), -1, 1);
  auto dx = posenc_backward<double>(x, L, g);
  std::vector<Coord> coords;
  add_span(coords, x, dx, "x");
  check_coords(coords, {[&] { return dot(posenc<double>(x, L), g); }, {}}, opt, res);
}

inline MlpTape<double> tape_of(const Mlp<double>& net, std::span<const double> a, std::span<const double> b) {
  MlpTape<double> t;
  mlp_forward(net, stack_columns(a, b), t);
  return t;
}

inline void check_geometry_mlp(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  const DecoderConfig dc = small_decoder_config();
  const int fw = 6;
  auto dec = make_decoder<double>(dc, fw);
  randomize_mlp(dec.geometry, rng, 0.8);
  auto grad = make_decoder<double>(dc, fw);
  auto fused = uniform_vec(rng, fw, -1, 1);
  auto enc = uniform_vec(rng, dc.point_encoding_width(), -1, 1);
  const double g_sigma = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto g_feat = uniform_vec(rng, dc.geometry_feature_dim, -1, 1);
  auto [d_fused, d_enc] = geometry_backward<double>(dec, fused, enc, g_sigma, g_feat, grad);

  std::vector<Coord> coords;
  add_mlp(coords, dec.geometry, grad.geometry, "geometry");
  add_span(coords, fused, d_fused, "fused");
  add_span(coords, enc, d_enc, "enc");
  const Probe probe{[&] {
                      const auto o = geometry_forward<double>(dec, fused, enc);
                      return g_sigma * o.sigma + dot(o.feature, g_feat);
                    },
                    [&] { return relu_signature(tape_of(dec.geometry, fused, enc)); }};
  check_coords(coords, probe, opt, res);
}

inline void check_color_mlp(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  const DecoderConfig dc = small_decoder_config();
  auto dec = make_decoder<double>(dc, 6);
  randomize_mlp(dec.color, rng, 0.8);
  auto grad = make_decoder<double>(dc, 6);
  auto feat = uniform_vec(rng, dc.geometry_feature_dim, -1, 1);
  auto enc = uniform_vec(rng, dc.direction_encoding_width(), -1, 1);
  const auto gv = uniform_vec(rng, 3, -1, 1);
  const std::array<double, 3> g{gv[0], gv[1], gv[2]};
  auto [d_feat, d_enc] = color_backward<double>(dec, feat, enc, g, grad);

  std::vector<Coord> coords;
  add_mlp(coords, dec.color, grad.color, "color");
  add_span(coords, feat, d_feat, "feature");
  add_span(coords, enc, d_enc, "enc");
  const Probe probe{[&] {
                      const auto c = color_forward<double>(dec, feat, enc);
                      return g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
                    },
                    [&] { return relu_signature(tape_of(dec.color, feat, enc)); }};
  check_coords(coords, probe, opt, res);
}

inline void check_composite(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  const int n = 8;
  std::vector<SamplePrediction<double>> samples(n);
  std::uniform_real_distribution<double> sig(0.0, 3.0), col(0.0, 1.0);
  for (int k = 0; k < n; ++k) {
    samples[k].delta = 1.0 / n;
    samples[k].s = (k + col(rng)) / n;
    samples[k].sigma = sig(rng);
    for (auto& c : samples[k].rgb) c = col(rng);
  }
  const auto gv = uniform_vec(rng, 5, -1, 1);
  const std::array<double, 3> gc{gv[0], gv[1], gv[2]};
  const double gd = gv[3], go = gv[4];
  const std::span<const SamplePrediction<double>> sp(samples);
  const auto r = composite<double>(sp);
  const auto cg = composite_backward<double>(sp, r, gc, gd, go);

  std::vector<Coord> coords;
  for (int k = 0; k < n; ++k) {
    coords.push_back({&samples[k].sigma, cg.d_sigma[k], "sigma[" + std::to_string(k) + "]"});
    for (int c = 0; c < 3; ++c)
      coords.push_back({&samples[k].rgb[c], cg.d_rgb[k][c], "rgb[" + std::to_string(k) + "]"});
  }
  const Probe probe{[&] {
                      const auto o = composite<double>(sp);
                      return gc[0] * o.color[0] + gc[1] * o.color[1] + gc[2] * o.color[2] + gd * o.depth +
                             go * o.opacity;
                    },
                    {}};
  check_coords(coords, probe, opt, res);
}

inline void check_render_ray(std::mt19937_64& rng, const GradCheckOptions& opt, GradCheckResult& res) {
  PlaneConfig pc;
  pc.scales = {4, 6};
  pc.feature_width = 3;
  const DecoderConfig dc = small_decoder_config();
  SceneModel<double> model{FeaturePlaneSet<double>(pc), make_decoder<double>(dc, pc.fused_width())};
  randomize_planes(model.planes, rng);
  randomize_mlp(model.decoder.geometry, rng, 0.6);
  randomize_mlp(model.decoder.color, rng, 0.6);
  SceneModel<double> grad = zeros_like(model);

  Camera cam{8, 8, 8.0, 8.0, 4.0, 4.0, 1.0, 10.0};
  std::uniform_int_distribution<int> px(0, 7);
  const Ray ray = make_ray(cam, px(rng), px(rng), std::uniform_real_distribution<double>(0.05, 0.95)(rng));
  const RenderOptions ro{8, true};
  const std::uint64_t seed[1] = {rng()};
  const auto gv = uniform_vec(rng, 5, -1, 1);
  const std::array<double, 3> gc{gv[0], gv[1], gv[2]};
  const double gd = gv[3], go = gv[4];

  RayBatchRenderer<double> batch;
  batch.forward(model, std::span<const Ray>(&ray, 1), ro, seed);
  batch.backward(model, std::span<const std::array<double, 3>>(&gc, 1), std::span<const double>(&gd, 1),
                 std::span<const double>(&go, 1), grad);

  std::vector<Coord> coords;
  add_planes(coords, model.planes, grad.planes);
  add_mlp(coords, model.decoder.geometry, grad.decoder.geometry, "geometry");
  add_mlp(coords, model.decoder.color, grad.decoder.color, "color");

  // The probe objective runs in extended precision: with a 1e-8 floor on the
  // error denominator, double rounding in a full render is already ~1e-12
  // absolute, which is too close to the end-to-end tolerance.
  RayBatchRenderer<long double> probe_batch;
  const Probe probe{[&] {
                      const auto m = cast_model<long double>(model);
                      probe_batch.forward(m, std::span<const Ray>(&ray, 1), ro, seed);
                      const auto& o = probe_batch.results()[0];
                      return gc[0] * o.color[0] + gc[1] * o.color[1] + gc[2] * o.color[2] +
                             gd * o.depth + go * o.opacity;
                    },
                    [&] { return probe_batch.activation_signature(); }};
  check_coords(coords, probe, opt, res);
}

}  // namespace detail

/// Runs `component` on `trials` random instances derived from `seed` and
/// reports the worst coordinate over all of them.
inline GradCheckResult grad_check(const std::string& component, std::uint64_t seed, int trials = 20,
                                  const GradCheckOptions& opt = {}) {
  GradCheckResult res;
  res.component = component;
  res.tolerance = grad_check_tolerance(component);
  for (int trial = 0; trial < trials; ++trial) {
    std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(trial)));
    using namespace detail;
    if (component == "linear") check_linear(rng, opt, res);
    else if (component == "bilerp") check_bilerp(rng, opt, res);
    else if (component == "query_fused") check_query_fused(rng, opt, res);
    else if (component == "tv2d")
      check_regularizer(rng, opt, res, [](FeaturePlane<double>& p, FeaturePlane<double>* g, double s) { return tv2d<double>(p, g, s); });
    else if (component == "tv1d_space")
      check_regularizer(rng, opt, res, [](FeaturePlane<double>& p, FeaturePlane<double>* g, double s) { return tv1d_space<double>(p, g, s); });
    else if (component == "smooth_time")
      check_regularizer(rng, opt, res, [](FeaturePlane<double>& p, FeaturePlane<double>* g, double s) { return smooth_time<double>(p, g, s); });
    else if (component == "posenc") check_posenc(rng, opt, res);
    else if (component == "geometry_mlp") check_geometry_mlp(rng, opt, res);
    else if (component == "color_mlp") check_color_mlp(rng, opt, res);
    else if (component == "composite") check_composite(rng, opt, res);
    else if (component == "render_ray") check_render_ray(rng, opt, res);
    else throw InvalidInput("grad_check: unknown component '" + component + "'");
  }
  return res;
}

}  // namespace drsm
