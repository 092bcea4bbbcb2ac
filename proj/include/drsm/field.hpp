#pragma once

// Six-plane factorized 4D feature volume.
//
// Each scale holds three space planes (XY, XZ, YZ) and three space-time planes
// (XT, YT, ZT). A 4D point is projected onto every plane, each plane is
// sampled bilinearly and the six feature vectors are multiplied elementwise.
// Per-scale products are concatenated into the fused feature.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "drsm/core.hpp"

namespace drsm {

inline constexpr int kPlanesPerScale = 6;
inline constexpr int kSpacePlanes = 3;

/// Plane order is fixed: XY, XZ, YZ, XT, YT, ZT. Coordinate indices into
/// (x, y, z, t); the first index is the plane's u axis, the second its v axis.
inline constexpr std::array<std::array<int, 2>, kPlanesPerScale> kPlaneAxes = {
    {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}}};

inline constexpr std::array<const char*, kPlanesPerScale> kPlaneNames = {
    "XY", "XZ", "YZ", "XT", "YT", "ZT"};

inline bool is_space_time_plane(int p) { return p >= kSpacePlanes; }

inline constexpr double kCoordSlack = 1e-6;

struct PlaneConfig {
  std::vector<int> scales{64, 128, 256, 512};
  int feature_width = 32;

  void validate() const {
    if (scales.empty()) throw ConfigError("plane config: scales must be non-empty");
    for (std::size_t i = 0; i < scales.size(); ++i) {
      if (scales[i] < 2) throw ConfigError("plane config: every scale must be >= 2");
      if (i > 0 && scales[i] <= scales[i - 1])
        throw ConfigError("plane config: scales must be strictly increasing");
    }
    if (feature_width < 1) throw ConfigError("plane config: feature_width must be >= 1");
  }

  int fused_width() const { return feature_width * static_cast<int>(scales.size()); }

  // The time axis of a space-time plane uses the spatial resolution of its scale.
  int time_resolution(std::size_t scale) const { return scales[scale]; }
};

/// N x N grid of W-channel feature vectors. Node (iu, iv) lives at
/// values[(iv * N + iu) * W].
template <class S>
struct FeaturePlane {
  int resolution = 0;
  int width = 0;
  std::vector<S> values;

  FeaturePlane() = default;
  FeaturePlane(int n, int w, S fill = S(0))
      : resolution(n), width(w), values(static_cast<std::size_t>(n) * n * w, fill) {}

  std::size_t offset(int iu, int iv) const {
    return (static_cast<std::size_t>(iv) * resolution + iu) * width;
  }
  S* node(int iu, int iv) { return values.data() + offset(iu, iv); }
  const S* node(int iu, int iv) const { return values.data() + offset(iu, iv); }
  void fill(S v) { std::fill(values.begin(), values.end(), v); }
};

/// The four grid nodes enclosing a query and their blend weights. The same
/// stencil drives the forward gather and the adjoint scatter.
template <class S>
struct BilerpStencil {
  std::array<std::size_t, 4> offset{};
  std::array<S, 4> weight{};
};

template <class S>
BilerpStencil<S> bilerp_stencil(int resolution, int width, S u, S v) {
  if (!std::isfinite(u) || !std::isfinite(v))
    throw InvalidInput("bilerp: non-finite coordinate");
  if (resolution < 2) throw InvalidInput("bilerp: plane must be at least 2x2");
  const S n1 = static_cast<S>(resolution - 1);
  const S fu = std::clamp(u, S(0), S(1)) * n1;
  const S fv = std::clamp(v, S(0), S(1)) * n1;
  const int iu = std::min(static_cast<int>(fu), resolution - 2);
  const int iv = std::min(static_cast<int>(fv), resolution - 2);
  const S a = fu - static_cast<S>(iu);
  const S b = fv - static_cast<S>(iv);
  const auto off = [&](int ju, int jv) {
    return (static_cast<std::size_t>(jv) * resolution + ju) * width;
  };
  BilerpStencil<S> st;
  st.offset = {off(iu, iv), off(iu + 1, iv), off(iu, iv + 1), off(iu + 1, iv + 1)};
  st.weight = {(S(1) - a) * (S(1) - b), a * (S(1) - b), (S(1) - a) * b, a * b};
  return st;
}

template <class S>
void bilerp_gather(const FeaturePlane<S>& plane, const BilerpStencil<S>& st, S* out) {
  const int w = plane.width;
  const S* p0 = plane.values.data() + st.offset[0];
  const S* p1 = plane.values.data() + st.offset[1];
  const S* p2 = plane.values.data() + st.offset[2];
  const S* p3 = plane.values.data() + st.offset[3];
  for (int c = 0; c < w; ++c)
    out[c] = st.weight[0] * p0[c] + st.weight[1] * p1[c] + st.weight[2] * p2[c] +
             st.weight[3] * p3[c];
}

/// Adjoint of bilerp_gather: adds the blend-weighted cotangent to the four nodes.
template <class S>
void bilerp_scatter(FeaturePlane<S>& grad, const BilerpStencil<S>& st, const S* d_out) {
  const int w = grad.width;
  for (int k = 0; k < 4; ++k) {
    S* g = grad.values.data() + st.offset[k];
    const S wk = st.weight[k];
    for (int c = 0; c < w; ++c) g[c] += wk * d_out[c];
  }
}

/// Bilinear sample of `plane` at normalized (u, v); coordinates are clamped to [0, 1].
template <class S>
std::vector<S> bilerp(const FeaturePlane<S>& plane, S u, S v) {
  const auto st = bilerp_stencil(plane.resolution, plane.width, u, v);
  std::vector<S> out(plane.width);
  bilerp_gather(plane, st, out.data());
  return out;
}

template <class S>
void bilerp_backward(FeaturePlane<S>& grad, S u, S v, std::span<const S> d_out) {
  const auto st = bilerp_stencil(grad.resolution, grad.width, u, v);
  bilerp_scatter(grad, st, d_out.data());
}

template <class S>
struct FeaturePlaneSet {
  PlaneConfig config;
  // planes[scale][plane], plane order XY, XZ, YZ, XT, YT, ZT.
  std::vector<std::array<FeaturePlane<S>, kPlanesPerScale>> planes;

  FeaturePlaneSet() = default;
  explicit FeaturePlaneSet(const PlaneConfig& cfg, S fill = S(0)) : config(cfg) {
    cfg.validate();
    planes.resize(cfg.scales.size());
    for (std::size_t s = 0; s < cfg.scales.size(); ++s)
      for (auto& p : planes[s]) p = FeaturePlane<S>(cfg.scales[s], cfg.feature_width, fill);
  }

  std::size_t num_scales() const { return planes.size(); }
  int feature_width() const { return config.feature_width; }
  int fused_width() const { return config.fused_width(); }

  void set_zero() {
    for (auto& sc : planes)
      for (auto& p : sc) p.fill(S(0));
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& sc : planes)
      for (const auto& p : sc) n += p.values.size();
    return n;
  }

  bool finite() const {
    for (const auto& sc : planes)
      for (const auto& p : sc)
        if (!all_finite(p.values)) return false;
    return true;
  }

  template <class F>
  void for_each_plane(F&& f) {
    for (std::size_t s = 0; s < planes.size(); ++s)
      for (int p = 0; p < kPlanesPerScale; ++p) f(s, p, planes[s][p]);
  }
  template <class F>
  void for_each_plane(F&& f) const {
    for (std::size_t s = 0; s < planes.size(); ++s)
      for (int p = 0; p < kPlanesPerScale; ++p) f(s, p, planes[s][p]);
  }

  FeaturePlaneSet& operator+=(const FeaturePlaneSet& o) {
    for (std::size_t s = 0; s < planes.size(); ++s)
      for (int p = 0; p < kPlanesPerScale; ++p) {
        auto& a = planes[s][p].values;
        const auto& b = o.planes[s][p].values;
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
      }
    return *this;
  }
};

template <class To, class From>
FeaturePlaneSet<To> cast_planes(const FeaturePlaneSet<From>& src) {
  FeaturePlaneSet<To> out(src.config);
  for (std::size_t s = 0; s < src.planes.size(); ++s)
    for (int p = 0; p < kPlanesPerScale; ++p) {
      const auto& a = src.planes[s][p].values;
      auto& b = out.planes[s][p].values;
      for (std::size_t i = 0; i < a.size(); ++i) b[i] = static_cast<To>(a[i]);
    }
  return out;
}

/// Space planes ~ U(-0.1, 0.1); space-time planes = 1 so a fresh field is
/// independent of time.
template <class S>
FeaturePlaneSet<S> init_planes(const PlaneConfig& config, std::uint64_t seed) {
  FeaturePlaneSet<S> set(config);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-0.1, 0.1);
  set.for_each_plane([&](std::size_t, int p, FeaturePlane<S>& plane) {
    if (is_space_time_plane(p)) {
      plane.fill(S(1));
    } else {
      for (auto& v : plane.values) v = static_cast<S>(dist(rng));
    }
  });
  return set;
}

using Point4 = std::array<double, 4>;

/// Per-point record of the fused query, kept for the adjoint pass.
template <class S>
struct FusedQueryTape {
  std::vector<BilerpStencil<S>> stencils;  // scale * 6 + plane
  std::vector<S> plane_features;           // (scale * 6 + plane) * W + c

  void resize(std::size_t num_scales, int width) {
    stencils.resize(num_scales * kPlanesPerScale);
    plane_features.resize(num_scales * kPlanesPerScale * width);
  }
};

template <class S>
std::array<S, 4> checked_unit_point(const std::array<S, 4>& pt) {
  std::array<S, 4> q{};
  for (int a = 0; a < 4; ++a) {
    if (!std::isfinite(pt[a])) throw InvalidInput("query_fused: non-finite coordinate");
    if (pt[a] < -kCoordSlack || pt[a] > 1 + kCoordSlack)
      throw InvalidInput("query_fused: coordinate outside [0,1]");
    q[a] = std::clamp(pt[a], S(0), S(1));
  }
  return q;
}

/// Writes the fused feature of `pt` into `out` (length W * scales). `stencils`
/// (scales * 6) and `plane_features` (scales * 6 * W) receive the record needed
/// by the adjoint.
template <class S>
void query_fused_raw(const FeaturePlaneSet<S>& set, const std::array<S, 4>& pt, S* out,
                     BilerpStencil<S>* stencils, S* plane_features) {
  const auto q = checked_unit_point(pt);
  const int w = set.feature_width();
  for (std::size_t s = 0; s < set.num_scales(); ++s) {
    S* dst = out + s * w;
    std::fill(dst, dst + w, S(1));
    for (int p = 0; p < kPlanesPerScale; ++p) {
      const auto& plane = set.planes[s][p];
      const std::size_t k = s * kPlanesPerScale + p;
      stencils[k] = bilerp_stencil(plane.resolution, w, q[kPlaneAxes[p][0]], q[kPlaneAxes[p][1]]);
      S* feat = plane_features + k * w;
      bilerp_gather(plane, stencils[k], feat);
      for (int c = 0; c < w; ++c) dst[c] *= feat[c];
    }
  }
}

template <class S>
void query_fused_into(const FeaturePlaneSet<S>& set, const std::array<S, 4>& pt, S* out,
                      FusedQueryTape<S>& tape) {
  tape.resize(set.num_scales(), set.feature_width());
  query_fused_raw(set, pt, out, tape.stencils.data(), tape.plane_features.data());
}

/// Product rule through the six factors: the cotangent of plane p is d_out times
/// the product of the other five plane features.
template <class S>
void query_fused_backward_raw(FeaturePlaneSet<S>& grad, const BilerpStencil<S>* stencils,
                              const S* plane_features, const S* d_out) {
  const int w = grad.feature_width();
  thread_local std::vector<S> g;
  g.resize(static_cast<std::size_t>(kPlanesPerScale) * w);
  for (std::size_t s = 0; s < grad.num_scales(); ++s) {
    const S* feats = plane_features + s * kPlanesPerScale * w;
    const S* d = d_out + s * w;
    for (int c = 0; c < w; ++c) {
      // Exclusive products via prefix/suffix scans; no division by a zero factor.
      S prefix = S(1);
      for (int p = 0; p < kPlanesPerScale; ++p) {
        g[p * w + c] = d[c] * prefix;
        prefix *= feats[p * w + c];
      }
      S suffix = S(1);
      for (int p = kPlanesPerScale - 1; p >= 0; --p) {
        g[p * w + c] *= suffix;
        suffix *= feats[p * w + c];
      }
    }
    for (int p = 0; p < kPlanesPerScale; ++p)
      bilerp_scatter(grad.planes[s][p], stencils[s * kPlanesPerScale + p], g.data() + p * w);
  }
}

template <class S>
void query_fused_backward_tape(FeaturePlaneSet<S>& grad, const FusedQueryTape<S>& tape,
                               const S* d_out) {
  query_fused_backward_raw(grad, tape.stencils.data(), tape.plane_features.data(), d_out);
}

template <class S>
std::vector<S> query_fused(const FeaturePlaneSet<S>& set, const std::array<S, 4>& pt) {
  std::vector<S> out(set.fused_width());
  FusedQueryTape<S> tape;
  query_fused_into(set, pt, out.data(), tape);
  return out;
}

template <class S>
void query_fused_backward(const FeaturePlaneSet<S>& set, const std::array<S, 4>& pt,
                          std::span<const S> d_out, FeaturePlaneSet<S>& grad) {
  std::vector<S> out(set.fused_width());
  FusedQueryTape<S> tape;
  query_fused_into(set, pt, out.data(), tape);
  query_fused_backward_tape(grad, tape, d_out.data());
}

// Plane regularizers. Each returns the loss and, when `grad` is non-null, adds
// scale * dloss/dplane into it.

/// Mean squared forward difference along both plane axes.
template <class S>
S tv2d(const FeaturePlane<S>& plane, FeaturePlane<S>* grad = nullptr, S scale = S(1)) {
  const int n = plane.resolution, w = plane.width;
  if (n < 2) throw InvalidInput("tv2d: plane must be at least 2x2");
  const double count = 2.0 * n * (n - 1) * w;
  const S inv = static_cast<S>(1.0 / count);
  S sum = 0;
  for (int iv = 0; iv < n; ++iv)
    for (int iu = 0; iu < n; ++iu) {
      const S* a = plane.node(iu, iv);
      if (iu + 1 < n) {
        const S* b = plane.node(iu + 1, iv);
        for (int c = 0; c < w; ++c) {
          const S d = b[c] - a[c];
          sum += d * d;
          if (grad) {
            const S g = scale * S(2) * d * inv;
            grad->node(iu + 1, iv)[c] += g;
            grad->node(iu, iv)[c] -= g;
          }
        }
      }
      if (iv + 1 < n) {
        const S* b = plane.node(iu, iv + 1);
        for (int c = 0; c < w; ++c) {
          const S d = b[c] - a[c];
          sum += d * d;
          if (grad) {
            const S g = scale * S(2) * d * inv;
            grad->node(iu, iv + 1)[c] += g;
            grad->node(iu, iv)[c] -= g;
          }
        }
      }
    }
  return sum * inv;
}

/// Mean squared forward difference along the space (u) axis of a space-time plane.
template <class S>
S tv1d_space(const FeaturePlane<S>& plane, FeaturePlane<S>* grad = nullptr, S scale = S(1)) {
  const int n = plane.resolution, w = plane.width;
  if (n < 2) throw InvalidInput("tv1d_space: plane must be at least 2x2");
  const S inv = static_cast<S>(1.0 / (static_cast<double>(n) * (n - 1) * w));
  S sum = 0;
  for (int iv = 0; iv < n; ++iv)
    for (int iu = 0; iu + 1 < n; ++iu) {
      const S* a = plane.node(iu, iv);
      const S* b = plane.node(iu + 1, iv);
      for (int c = 0; c < w; ++c) {
        const S d = b[c] - a[c];
        sum += d * d;
        if (grad) {
          const S g = scale * S(2) * d * inv;
          grad->node(iu + 1, iv)[c] += g;
          grad->node(iu, iv)[c] -= g;
        }
      }
    }
  return sum * inv;
}

/// Mean squared second difference along the time (v) axis; zero for features
/// that evolve linearly in time.
template <class S>
S smooth_time(const FeaturePlane<S>& plane, FeaturePlane<S>* grad = nullptr, S scale = S(1)) {
  const int n = plane.resolution, w = plane.width;
  if (n < 3) throw InvalidInput("smooth_time: time axis needs at least 3 nodes");
  const S inv = static_cast<S>(1.0 / (static_cast<double>(n) * (n - 2) * w));
  S sum = 0;
  for (int iv = 1; iv + 1 < n; ++iv)
    for (int iu = 0; iu < n; ++iu) {
      const S* prev = plane.node(iu, iv - 1);
      const S* mid = plane.node(iu, iv);
      const S* next = plane.node(iu, iv + 1);
      for (int c = 0; c < w; ++c) {
        const S d = next[c] - S(2) * mid[c] + prev[c];
        sum += d * d;
        if (grad) {
          const S g = scale * S(2) * d * inv;
          grad->node(iu, iv + 1)[c] += g;
          grad->node(iu, iv)[c] -= S(2) * g;
          grad->node(iu, iv - 1)[c] += g;
        }
      }
    }
  return sum * inv;
}

}  // namespace drsm
