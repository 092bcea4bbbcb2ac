#pragma once

// Ray construction in forward-facing NDC, stratified sampling along rays,
// emission-absorption compositing and the batched differentiable renderer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "drsm/core.hpp"
#include "drsm/decoder.hpp"
#include "drsm/field.hpp"
#include "drsm/parallel.hpp"

namespace drsm {

/// Pinhole camera looking down -z, +y up, image rows growing downwards.
struct Camera {
  int width = 0;
  int height = 0;
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  double near = 0, far = 0;

  void validate() const {
    if (width < 1 || height < 1) throw ConfigError("camera: image size must be positive");
    if (!(fx > 0) || !(fy > 0)) throw ConfigError("camera: focal lengths must be positive");
    if (!(near > 0) || !(far > near)) throw ConfigError("camera: require 0 < near < far");
  }
};

using Vec3d = std::array<double, 3>;

struct Ray {
  Vec3d origin{};     // NDC
  Vec3d direction{};  // NDC
  double s_near = 0;
  double s_far = 1;
  int row = 0, col = 0;
  double t = 0;
  Vec3d view_dir{};  // unit direction in camera/world space, fed to the color decoder
};

/// Forward-facing NDC warp. The near plane maps to z = -1 and infinity to
/// z = +1; pixel edges map to x, y = -1 / +1, which reduces to the usual
/// centered-principal-point formulas when cx = W/2, cy = H/2.
inline Ray make_ray(const Camera& cam, int row, int col, double t) {
  if (row < 0 || row >= cam.height || col < 0 || col >= cam.width)
    throw InvalidInput("make_ray: pixel out of bounds");
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("make_ray: time outside [0,1]");
  const Vec3d d{(col + 0.5 - cam.cx) / cam.fx, -(row + 0.5 - cam.cy) / cam.fy, -1.0};
  // Shift the origin (camera center) onto the near plane.
  const double tn = -(cam.near + 0.0) / d[2];
  const Vec3d o{tn * d[0], tn * d[1], tn * d[2]};

  const double ax = 2.0 * cam.fx / cam.width, ay = 2.0 * cam.fy / cam.height;
  const double bx = 2.0 * cam.cx / cam.width - 1.0, by = 1.0 - 2.0 * cam.cy / cam.height;

  Ray r;
  r.origin = {-ax * o[0] / o[2] + bx, -ay * o[1] / o[2] + by, 1.0 + 2.0 * cam.near / o[2]};
  r.direction = {-ax * (d[0] / d[2] - o[0] / o[2]), -ay * (d[1] / d[2] - o[1] / o[2]),
                 -2.0 * cam.near / o[2]};
  r.s_near = 0.0;
  r.s_far = 1.0;
  r.row = row;
  r.col = col;
  r.t = t;
  const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  r.view_dir = {d[0] / n, d[1] / n, d[2] / n};
  return r;
}

/// Affine map of an NDC point on the ray to the unit cube used for plane queries.
inline Vec3d ndc_point_unit(const Ray& r, double s) {
  return {(r.origin[0] + s * r.direction[0] + 1.0) * 0.5,
          (r.origin[1] + s * r.direction[1] + 1.0) * 0.5,
          (r.origin[2] + s * r.direction[2] + 1.0) * 0.5};
}

struct SampleInterval {
  double s = 0;
  double delta = 0;
};

/// n equal bins over [s_near, s_far]; one sample per bin at the center, or
/// uniformly inside it when jittered.
inline std::vector<SampleInterval> stratified_samples(const Ray& ray, int n, std::uint64_t seed,
                                                      bool jitter) {
  if (n < 1) throw InvalidInput("stratified_samples: sample count must be >= 1");
  std::vector<SampleInterval> out(n);
  const double delta = (ray.s_far - ray.s_near) / n;
  for (int k = 0; k < n; ++k) {
    const double u = jitter ? unit_from_hash(hash_combine(seed, static_cast<std::uint64_t>(k))) : 0.5;
    out[k] = {ray.s_near + (k + u) * delta, delta};
  }
  return out;
}

template <class S>
struct SamplePrediction {
  S s = 0;
  S delta = 0;
  S sigma = 0;
  std::array<S, 3> rgb{};
};

template <class S>
struct RenderResult {
  std::array<S, 3> color{};
  S depth = 0;
  S opacity = 0;
  std::vector<S> weights;
  std::vector<S> transmittance;  // T_0 .. T_n, T_0 = 1
};

/// Discrete emission-absorption quadrature over a black background.
template <class S>
RenderResult<S> composite(std::span<const SamplePrediction<S>> samples) {
  const std::size_t n = samples.size();
  RenderResult<S> r;
  r.weights.resize(n);
  r.transmittance.resize(n + 1);
  r.transmittance[0] = S(1);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& sp = samples[k];
    if (k > 0 && !(sp.s > samples[k - 1].s))
      throw InvalidInput("composite: samples must be ordered by increasing s");
    const S tau = sp.sigma * sp.delta;
    const S alpha = -std::expm1(-tau);
    const S w = r.transmittance[k] * alpha;
    r.weights[k] = w;
    r.transmittance[k + 1] = r.transmittance[k] * std::exp(-tau);
    for (int c = 0; c < 3; ++c) r.color[c] += w * sp.rgb[c];
    r.depth += w * sp.s;
    r.opacity += w;
  }
  return r;
}

template <class S>
struct CompositeGrad {
  std::vector<S> d_sigma;
  std::vector<std::array<S, 3>> d_rgb;
};

/// Adjoint of composite. With q_j = gC.c_j + gD s_j + gO:
///   dL/dsigma_k = delta_k (T_{k+1} q_k - sum_{j>k} w_j q_j),  dL/dc_k = w_k gC.
template <class S>
CompositeGrad<S> composite_backward(std::span<const SamplePrediction<S>> samples,
                                    const RenderResult<S>& r, const std::array<S, 3>& d_color,
                                    S d_depth, S d_opacity) {
  const std::size_t n = samples.size();
  CompositeGrad<S> g;
  g.d_sigma.resize(n);
  g.d_rgb.resize(n);
  S tail = 0;
  for (std::size_t k = n; k-- > 0;) {
    const auto& sp = samples[k];
    const S q = d_color[0] * sp.rgb[0] + d_color[1] * sp.rgb[1] + d_color[2] * sp.rgb[2] +
                d_depth * sp.s + d_opacity;
    g.d_sigma[k] = sp.delta * (r.transmittance[k + 1] * q - tail);
    tail += r.weights[k] * q;
    for (int c = 0; c < 3; ++c) g.d_rgb[k][c] = r.weights[k] * d_color[c];
  }
  return g;
}

/// Learnable scene: factorized field plus decoders. Also used as gradient buffer.
template <class S>
struct SceneModel {
  FeaturePlaneSet<S> planes;
  DecoderParams<S> decoder;

  void set_zero() {
    planes.set_zero();
    decoder.set_zero();
  }
  SceneModel& operator+=(const SceneModel& o) {
    planes += o.planes;
    decoder += o.decoder;
    return *this;
  }
  std::size_t parameter_count() const { return planes.parameter_count() + decoder.parameter_count(); }
};

template <class S>
SceneModel<S> zeros_like(const SceneModel<S>& m) {
  SceneModel<S> z;
  z.planes = FeaturePlaneSet<S>(m.planes.config);
  z.decoder = make_decoder<S>(m.decoder.config, m.decoder.fused_width);
  return z;
}

template <class S>
SceneModel<S> init_model(const PlaneConfig& pc, const DecoderConfig& dc, std::uint64_t seed) {
  SceneModel<S> m;
  m.planes = init_planes<S>(pc, hash_combine(seed, 0x706c616e));
  m.decoder = init_decoder<S>(dc, pc.fused_width(), hash_combine(seed, 0x6d6c70));
  return m;
}

template <class To, class From>
SceneModel<To> cast_model(const SceneModel<From>& m) {
  return {cast_planes<To>(m.planes), cast_decoder<To>(m.decoder)};
}

struct RenderOptions {
  int n_samples = 128;
  bool jitter = false;
};

/// Evaluates a batch of rays end to end and keeps everything the adjoint needs.
/// One instance per worker; not shareable between threads.
template <class S>
class RayBatchRenderer {
 public:
  /// `ray_seeds` (one per ray) seeds the jitter stream; ignored without jitter.
  void forward(const SceneModel<S>& model, std::span<const Ray> rays, const RenderOptions& opts,
               std::span<const std::uint64_t> ray_seeds = {}) {
    const auto& dc = model.decoder.config;
    const int n = opts.n_samples;
    if (n < 1) throw InvalidInput("render: sample count must be >= 1");
    if (model.decoder.fused_width != model.planes.fused_width())
      throw ConfigError("render: decoder input width does not match plane set");
    num_rays_ = rays.size();
    n_samples_ = n;
    const std::size_t ns = num_rays_ * n;
    const int fw = model.planes.fused_width();
    const int pe = dc.point_encoding_width();
    const int fdim = dc.geometry_feature_dim;
    const int de = dc.direction_encoding_width();
    const std::size_t tape_len = model.planes.num_scales() * kPlanesPerScale;
    const int width = model.planes.feature_width();

    stencils_.resize(ns * tape_len);
    plane_features_.resize(ns * tape_len * width);
    samples_.resize(ns);

    Mat<S> xg(fw + pe, static_cast<Eigen::Index>(ns));
    std::array<S, 4> pt{};
    std::array<S, 4> pt_enc_in{};
    std::vector<S> dir_enc(de);
    color_in_.resize(fdim + de, static_cast<Eigen::Index>(ns));

    for (std::size_t r = 0; r < num_rays_; ++r) {
      const Ray& ray = rays[r];
      const std::uint64_t seed = opts.jitter && !ray_seeds.empty() ? ray_seeds[r] : 0;
      const auto iv = stratified_samples(ray, n, seed, opts.jitter);
      const std::array<S, 3> vd{static_cast<S>(ray.view_dir[0]), static_cast<S>(ray.view_dir[1]),
                                static_cast<S>(ray.view_dir[2])};
      posenc_into(vd.data(), kDirectionDims, dc.encoder.direction_frequencies, dir_enc.data());
      for (int k = 0; k < n; ++k) {
        const std::size_t i = r * n + k;
        const Vec3d p = ndc_point_unit(ray, iv[k].s);
        pt = {static_cast<S>(p[0]), static_cast<S>(p[1]), static_cast<S>(p[2]), static_cast<S>(ray.t)};
        S* col = xg.col(static_cast<Eigen::Index>(i)).data();
        query_fused_raw(model.planes, pt, col, stencils_.data() + i * tape_len,
                        plane_features_.data() + i * tape_len * width);
        for (int a = 0; a < 4; ++a) pt_enc_in[a] = std::clamp(pt[a], S(0), S(1));
        posenc_into(pt_enc_in.data(), kPointDims, dc.encoder.point_frequencies, col + fw);
        S* ccol = color_in_.col(static_cast<Eigen::Index>(i)).data();
        std::copy(dir_enc.begin(), dir_enc.end(), ccol + fdim);
        samples_[i].s = static_cast<S>(iv[k].s);
        samples_[i].delta = static_cast<S>(iv[k].delta);
      }
    }

    geometry_out_ = mlp_forward(model.decoder.geometry, std::move(xg), geometry_tape_);
    color_in_.topRows(fdim) = geometry_out_.bottomRows(fdim);
    Mat<S> color_logits = mlp_forward(model.decoder.color, std::move(color_in_), color_tape_);

    for (std::size_t i = 0; i < ns; ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      samples_[i].sigma = softplus(geometry_out_(0, c));
      for (int ch = 0; ch < 3; ++ch) samples_[i].rgb[ch] = sigmoid(color_logits(ch, c));
    }
    results_.resize(num_rays_);
    for (std::size_t r = 0; r < num_rays_; ++r)
      results_[r] = composite<S>(std::span<const SamplePrediction<S>>(samples_.data() + r * n, n));
  }

  const std::vector<RenderResult<S>>& results() const { return results_; }

  /// Hash of the ReLU on/off pattern of the last forward pass. Finite-difference
  /// probes whose pattern differs from the base point straddle a kink.
  std::uint64_t activation_signature() const {
    return hash_combine(relu_signature(geometry_tape_), relu_signature(color_tape_));
  }
  std::span<const SamplePrediction<S>> ray_samples(std::size_t r) const {
    return {samples_.data() + r * n_samples_, static_cast<std::size_t>(n_samples_)};
  }

  /// Accumulates d(loss)/d(parameters) into `grad` given per-ray cotangents of
  /// color, depth and opacity.
  void backward(const SceneModel<S>& model, std::span<const std::array<S, 3>> d_color,
                std::span<const S> d_depth, std::span<const S> d_opacity, SceneModel<S>& grad) {
    const int n = n_samples_;
    const std::size_t ns = num_rays_ * n;
    const int fdim = model.decoder.config.geometry_feature_dim;
    const std::size_t tape_len = model.planes.num_scales() * kPlanesPerScale;
    const int width = model.planes.feature_width();

    Mat<S> d_color_logits(3, static_cast<Eigen::Index>(ns));
    Mat<S> d_geom(1 + fdim, static_cast<Eigen::Index>(ns));
    for (std::size_t r = 0; r < num_rays_; ++r) {
      const std::array<S, 3> dc = d_color.empty() ? std::array<S, 3>{} : d_color[r];
      const S dd = d_depth.empty() ? S(0) : d_depth[r];
      const S dop = d_opacity.empty() ? S(0) : d_opacity[r];
      const auto cg = composite_backward<S>(ray_samples(r), results_[r], dc, dd, dop);
      for (int k = 0; k < n; ++k) {
        const std::size_t i = r * n + k;
        const auto c = static_cast<Eigen::Index>(i);
        for (int ch = 0; ch < 3; ++ch) {
          const S v = samples_[i].rgb[ch];
          d_color_logits(ch, c) = cg.d_rgb[k][ch] * v * (S(1) - v);
        }
        d_geom(0, c) = cg.d_sigma[k] * sigmoid(geometry_out_(0, c));
      }
    }
    Mat<S> d_color_in;
    mlp_backward(model.decoder.color, color_tape_, std::move(d_color_logits), grad.decoder.color,
                 &d_color_in);
    d_geom.bottomRows(fdim) = d_color_in.topRows(fdim);
    Mat<S> d_geom_in;
    mlp_backward(model.decoder.geometry, geometry_tape_, std::move(d_geom), grad.decoder.geometry,
                 &d_geom_in);
    for (std::size_t i = 0; i < ns; ++i)
      query_fused_backward_raw(grad.planes, stencils_.data() + i * tape_len,
                               plane_features_.data() + i * tape_len * width,
                               d_geom_in.col(static_cast<Eigen::Index>(i)).data());
  }

 private:
  std::size_t num_rays_ = 0;
  int n_samples_ = 0;
  std::vector<BilerpStencil<S>> stencils_;
  std::vector<S> plane_features_;
  std::vector<SamplePrediction<S>> samples_;
  Mat<S> color_in_;
  Mat<S> geometry_out_;
  MlpTape<S> geometry_tape_;
  MlpTape<S> color_tape_;
  std::vector<RenderResult<S>> results_;
};

template <class S>
RenderResult<S> render_ray(const SceneModel<S>& model, const Ray& ray, const RenderOptions& opts,
                           std::uint64_t seed = 0) {
  RayBatchRenderer<S> batch;
  const std::uint64_t seeds[1] = {seed};
  batch.forward(model, std::span<const Ray>(&ray, 1), opts, seeds);
  return batch.results()[0];
}

struct FrameRender {
  ImageF color;    // 3 channels
  ImageF depth;    // expected NDC ray parameter
  ImageF opacity;
};

/// Renders every pixel at time t without jitter; rows are split across workers.
template <class S>
FrameRender render_frame(const SceneModel<S>& model, const Camera& cam, double t, int n_samples,
                         int workers = 1) {
  cam.validate();
  FrameRender out{ImageF(cam.width, cam.height, 3), ImageF(cam.width, cam.height, 1),
                  ImageF(cam.width, cam.height, 1)};
  const RenderOptions opts{n_samples, false};
  const std::size_t rows = cam.height;
  parallel_ranges(rows, effective_workers(workers, rows),
                  [&](int, std::size_t r0, std::size_t r1) {
                    RayBatchRenderer<S> batch;
                    std::vector<Ray> rays(cam.width);
                    for (std::size_t row = r0; row < r1; ++row) {
                      for (int col = 0; col < cam.width; ++col)
                        rays[col] = make_ray(cam, static_cast<int>(row), col, t);
                      batch.forward(model, rays, opts);
                      const auto& res = batch.results();
                      for (int col = 0; col < cam.width; ++col) {
                        for (int c = 0; c < 3; ++c)
                          out.color.at(row, col, c) = static_cast<float>(res[col].color[c]);
                        out.depth.at(row, col) = static_cast<float>(res[col].depth);
                        out.opacity.at(row, col) = static_cast<float>(res[col].opacity);
                      }
                    }
                  });
  return out;
}

}  // namespace drsm
