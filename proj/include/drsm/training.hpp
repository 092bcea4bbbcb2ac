#pragma once

// Losses, Adam and the training loop.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "drsm/core.hpp"
#include "drsm/parallel.hpp"
#include "drsm/renderer.hpp"
#include "drsm/sampler.hpp"
#include "drsm/scene_io.hpp"

namespace drsm {

// ---------------------------------------------------------------------------
// Losses

/// (1/R) sum_r ||C_r - C^_r||^2. Writes dL/dC^ into `grad` when non-empty.
template <class S>
double color_loss(std::span<const std::array<S, 3>> rendered, std::span<const std::array<S, 3>> target,
                  std::span<std::array<S, 3>> grad = {}) {
  if (rendered.size() != target.size()) throw InvalidInput("color_loss: batch sizes differ");
  if (rendered.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(rendered.size());
  double sum = 0.0;
  for (std::size_t r = 0; r < rendered.size(); ++r)
    for (int c = 0; c < 3; ++c) {
      const double d = static_cast<double>(rendered[r][c]) - target[r][c];
      sum += d * d;
      if (!grad.empty()) grad[r][c] = static_cast<S>(2.0 * d * inv);
    }
  return sum * inv;
}

struct DepthLoss {
  double value = 0.0;
  std::size_t valid = 0;
  bool all_invalid = false;
};

/// Mean squared error over rays with valid depth; invalid rays contribute
/// nothing and are excluded from the denominator.
template <class S>
DepthLoss depth_loss(std::span<const S> rendered, std::span<const S> target,
                     std::span<const std::uint8_t> valid, std::span<S> grad = {}) {
  if (rendered.size() != target.size() || rendered.size() != valid.size())
    throw InvalidInput("depth_loss: batch sizes differ");
  DepthLoss out;
  for (auto v : valid) out.valid += v != 0;
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), S(0));
  if (out.valid == 0) {
    out.all_invalid = true;
    return out;
  }
  const double inv = 1.0 / static_cast<double>(out.valid);
  double sum = 0.0;
  for (std::size_t r = 0; r < rendered.size(); ++r) {
    if (!valid[r]) continue;
    const double d = static_cast<double>(rendered[r]) - target[r];
    sum += d * d;
    if (!grad.empty()) grad[r] = static_cast<S>(2.0 * d * inv);
  }
  out.value = sum * inv;
  return out;
}

struct LossWeights {
  double depth = 1.0;     // lambda1
  double tv2d = 0.0002;   // lambda2
  double tv1d = 0.0001;   // lambda3
  double smooth = 0.001;  // lambda4

  void validate() const {
    if (depth < 0 || tv2d < 0 || tv1d < 0 || smooth < 0)
      throw ConfigError("loss weights must be non-negative");
  }
};

struct LossParts {
  double color = 0, depth = 0, tv2d = 0, tv1d = 0, smooth = 0;
};

inline double total_loss(const LossParts& p, const LossWeights& w) {
  return p.color + w.depth * p.depth + w.tv2d * p.tv2d + w.tv1d * p.tv1d + w.smooth * p.smooth;
}

struct Regularizers {
  double tv2d = 0, tv1d = 0, smooth = 0;
};

/// Plane regularizers averaged over every plane of the relevant kind and every
/// scale. When `grad` is given, adds the gradient of
/// w.tv2d * tv2d + w.tv1d * tv1d + w.smooth * smooth.
template <class S>
Regularizers plane_regularizers(const FeaturePlaneSet<S>& planes, const LossWeights& w,
                                FeaturePlaneSet<S>* grad = nullptr) {
  const double ns = static_cast<double>(planes.num_scales());
  const double n_space = kSpacePlanes * ns, n_time = (kPlanesPerScale - kSpacePlanes) * ns;
  Regularizers r;
  for (std::size_t s = 0; s < planes.num_scales(); ++s)
    for (int p = 0; p < kPlanesPerScale; ++p) {
      const auto& plane = planes.planes[s][p];
      FeaturePlane<S>* g = grad ? &grad->planes[s][p] : nullptr;
      if (!is_space_time_plane(p)) {
        r.tv2d += tv2d(plane, w.tv2d > 0 ? g : nullptr, static_cast<S>(w.tv2d / n_space)) / n_space;
      } else {
        r.tv1d += tv1d_space(plane, w.tv1d > 0 ? g : nullptr, static_cast<S>(w.tv1d / n_time)) / n_time;
        r.smooth +=
            smooth_time(plane, w.smooth > 0 ? g : nullptr, static_cast<S>(w.smooth / n_time)) / n_time;
      }
    }
  return r;
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam update of one tensor at step `t` (1-based). Returns false
/// and leaves everything untouched if the gradient has a non-finite entry.
template <class S>
bool adam_update(std::span<S> param, std::span<const S> grad, std::span<S> m, std::span<S> v,
                 std::int64_t t, double lr, const AdamConfig& cfg) {
  for (S g : grad)
    if (!std::isfinite(g)) return false;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S step = static_cast<S>(lr / bc1);
  const S inv_sqrt_bc2 = static_cast<S>(1.0 / std::sqrt(bc2));
  const S eps = static_cast<S>(cfg.epsilon);
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = b1 * m[i] + (S(1) - b1) * grad[i];
    v[i] = b2 * v[i] + (S(1) - b2) * grad[i] * grad[i];
    param[i] -= step * m[i] / (std::sqrt(v[i]) * inv_sqrt_bc2 + eps);
  }
  return true;
}

/// Flat views of every parameter tensor in a fixed order: planes (scale-major,
/// XY..ZT), then geometry and color layers (weight, bias).
template <class S>
std::vector<std::span<S>> tensors(SceneModel<S>& m) {
  std::vector<std::span<S>> out;
  m.planes.for_each_plane([&](std::size_t, int, FeaturePlane<S>& p) { out.emplace_back(p.values); });
  for (Mlp<S>* net : {&m.decoder.geometry, &m.decoder.color})
    for (auto& l : net->layers) {
      out.emplace_back(l.weight.data(), static_cast<std::size_t>(l.weight.size()));
      out.emplace_back(l.bias.data(), static_cast<std::size_t>(l.bias.size()));
    }
  return out;
}

template <class S>
struct OptimizerState {
  SceneModel<S> first_moment;
  SceneModel<S> second_moment;
  std::int64_t step = 0;

  OptimizerState() = default;
  explicit OptimizerState(const SceneModel<S>& like)
      : first_moment(zeros_like(like)), second_moment(zeros_like(like)) {}
};

struct AdamReport {
  std::vector<std::size_t> skipped_tensors;  // indices into tensors()
};

template <class S>
AdamReport adam_step(SceneModel<S>& params, SceneModel<S>& grads, OptimizerState<S>& state,
                     const AdamConfig& cfg, double lr) {
  ++state.step;
  auto p = tensors(params);
  auto g = tensors(grads);
  auto m = tensors(state.first_moment);
  auto v = tensors(state.second_moment);
  AdamReport rep;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (!adam_update<S>(p[i], g[i], m[i], v[i], state.step, lr, cfg)) rep.skipped_tensors.push_back(i);
  return rep;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int iterations = 5000;
  int batch_rays = 2048;
  AdamConfig adam;
  bool cosine_decay = false;
  int n_samples = 128;
  std::uint64_t seed = 0;
  int workers = 1;
  int checkpoint_every = 0;  // 0: only at the end
  PlaneConfig planes;
  DecoderConfig decoder;
  SamplerConfig sampler{0.1, 25, 1e-6, ClampMode::Max, 5};
  LossWeights weights;
  bool use_isdm = true;
  bool use_depth_loss = true;

  void validate() const {
    if (iterations < 1) throw ConfigError("train config: iterations must be >= 1");
    if (batch_rays < 1) throw ConfigError("train config: batch_rays must be >= 1");
    if (!(adam.learning_rate > 0)) throw ConfigError("train config: learning_rate must be > 0");
    if (n_samples < 1) throw ConfigError("train config: n_samples must be >= 1");
    if (workers < 1) throw ConfigError("train config: workers must be >= 1");
    planes.validate();
    decoder.validate();
    sampler.validate();
    weights.validate();
  }
};

struct IterationLog {
  int iteration = 0;
  LossParts parts;
  double total = 0;
  double wall_ms = 0;
  int frame = 0;
};

inline std::string csv_header() { return "iteration,L_color,L_depth,L_TV2D,L_TV1D,L_smooth,total,wall_ms"; }

inline std::string csv_row(const IterationLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f", r.iteration, r.parts.color,
                r.parts.depth, r.parts.tv2d, r.parts.tv1d, r.parts.smooth, r.total, r.wall_ms);
  return buf;
}

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Owns the model, optimizer state and precomputed sampling maps; step() runs
/// one iteration. Everything random is keyed by (seed, iteration), so a run is
/// reproducible for a fixed worker count.
template <class S>
class Trainer {
 public:
  Trainer(const Dataset& data, const TrainConfig& cfg) : data_(data), cfg_(cfg) {
    cfg_.validate();
    data_.validate();
    model_ = init_model<S>(cfg_.planes, cfg_.decoder, cfg_.seed);
    opt_ = OptimizerState<S>(model_);
    const int t = data_.num_frames();
    if (cfg_.use_isdm) {
      maps_ = build_importance_maps(data_.frames, data_.masks, cfg_.sampler, cfg_.workers);
      pmf_ = maps_.pmf;
      degenerate_ = maps_.degenerate;
    } else {
      pmf_.resize(t);
      degenerate_.assign(t, false);
      for (int i = 0; i < t; ++i) {
        try {
          pmf_[i] = uniform_unoccluded(data_.masks[i]);
        } catch (const DegenerateFrame&) {
          degenerate_[i] = true;
        }
      }
    }
    for (int i = 0; i < t; ++i) {
      if (degenerate_[i]) {
        warnings_.push_back("frame " + std::to_string(i) + " is fully occluded; skipped");
        continue;
      }
      usable_frames_.push_back(i);
    }
    if (usable_frames_.empty()) throw DegenerateFrame("train: every frame is fully occluded");
    depth_targets_.reserve(t);
    for (int i = 0; i < t; ++i) {
      auto rd = metric_depth_to_ray_depth(data_.depths[i], data_.camera);
      if (rd.clamped)
        warnings_.push_back("frame " + std::to_string(i) + ": " + std::to_string(rd.clamped) +
                            " depths clamped to [near, far]");
      depth_targets_.push_back(std::move(rd));
    }
    const int w = effective_workers(cfg_.workers, static_cast<std::size_t>(cfg_.batch_rays));
    renderers_.resize(w);
    worker_grads_.assign(w, zeros_like(model_));
  }

  const SceneModel<S>& model() const { return model_; }
  SceneModel<S>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const ImportanceMaps& importance_maps() const { return maps_; }
  const std::vector<std::string>& warnings() const { return warnings_; }
  int iteration() const { return iteration_; }

  double learning_rate() const {
    if (!cfg_.cosine_decay) return cfg_.adam.learning_rate;
    const double progress = static_cast<double>(iteration_) / cfg_.iterations;
    return cfg_.adam.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }

  IterationLog step() {
    const auto start = std::chrono::steady_clock::now();
    const int it = iteration_;
    std::mt19937_64 frame_rng(hash_combine(cfg_.seed, hash_combine(0x6672616d65, it)));
    const int frame = usable_frames_[std::uniform_int_distribution<std::size_t>(
        0, usable_frames_.size() - 1)(frame_rng)];
    const double t = data_.time_of(frame);
    const auto pixels = draw_rays(pmf_[frame], cfg_.batch_rays, cfg_.seed,
                                  hash_combine(0x72617973, static_cast<std::uint64_t>(it)));

    const std::size_t nr = pixels.size();
    const Camera& cam = data_.camera;
    rays_.resize(nr);
    seeds_.resize(nr);
    target_rgb_.resize(nr);
    target_depth_.resize(nr);
    valid_.resize(nr);
    const auto& rd = depth_targets_[frame];
    for (std::size_t r = 0; r < nr; ++r) {
      const int row = static_cast<int>(pixels[r] / cam.width);
      const int col = static_cast<int>(pixels[r] % cam.width);
      rays_[r] = make_ray(cam, row, col, t);
      seeds_[r] = hash_combine(hash_combine(cfg_.seed, static_cast<std::uint64_t>(it)), pixels[r]);
      for (int c = 0; c < 3; ++c) target_rgb_[r][c] = static_cast<S>(data_.frames[frame].at(row, col, c));
      target_depth_[r] = static_cast<S>(rd.depth.data[pixels[r]]);
      valid_[r] = cfg_.use_depth_loss ? rd.valid.data[pixels[r]] : 0;
    }
    std::size_t valid_count = 0;
    for (auto v : valid_) valid_count += v;
    const double color_norm = 1.0 / static_cast<double>(nr);
    const double depth_norm = valid_count ? 1.0 / static_cast<double>(valid_count) : 0.0;
    const double lambda_depth = cfg_.use_depth_loss ? cfg_.weights.depth : 0.0;

    const int workers = static_cast<int>(renderers_.size());
    std::vector<double> color_sum(workers, 0.0), depth_sum(workers, 0.0);
    const RenderOptions opts{cfg_.n_samples, true};
    parallel_ranges(nr, workers, [&](int w, std::size_t b, std::size_t e) {
      auto& batch = renderers_[w];
      auto& grad = worker_grads_[w];
      grad.set_zero();
      const std::size_t n = e - b;
      batch.forward(model_, std::span<const Ray>(rays_.data() + b, n), opts,
                    std::span<const std::uint64_t>(seeds_.data() + b, n));
      std::vector<std::array<S, 3>> d_rgb(n);
      std::vector<S> d_depth(n, S(0));
      const auto& res = batch.results();
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t r = b + k;
        for (int c = 0; c < 3; ++c) {
          const double d = static_cast<double>(res[k].color[c]) - target_rgb_[r][c];
          color_sum[w] += d * d;
          d_rgb[k][c] = static_cast<S>(2.0 * d * color_norm);
        }
        if (valid_[r]) {
          const double d = static_cast<double>(res[k].depth) - target_depth_[r];
          depth_sum[w] += d * d;
          d_depth[k] = static_cast<S>(lambda_depth * 2.0 * d * depth_norm);
        }
      }
      batch.backward(model_, d_rgb, d_depth, {}, grad);
    });

    auto& grad = worker_grads_[0];
    for (int w = 1; w < workers; ++w) grad += worker_grads_[w];

    LossParts parts;
    for (int w = 0; w < workers; ++w) {
      parts.color += color_sum[w];
      parts.depth += depth_sum[w];
    }
    parts.color *= color_norm;
    parts.depth *= depth_norm;
    const auto reg = plane_regularizers(model_.planes, cfg_.weights, &grad.planes);
    parts.tv2d = reg.tv2d;
    parts.tv1d = reg.tv1d;
    parts.smooth = reg.smooth;
    LossWeights effective = cfg_.weights;
    effective.depth = lambda_depth;
    const double total = total_loss(parts, effective);
    if (!std::isfinite(total))
      throw TrainingDiverged("non-finite loss at iteration " + std::to_string(it) + " (frame " +
                             std::to_string(frame) + "): color=" + std::to_string(parts.color) +
                             " depth=" + std::to_string(parts.depth));

    const auto rep = adam_step(model_, grad, opt_, cfg_.adam, learning_rate());
    if (!rep.skipped_tensors.empty())
      warnings_.push_back("iteration " + std::to_string(it) + ": skipped " +
                          std::to_string(rep.skipped_tensors.size()) + " tensors with non-finite gradients");
    ++iteration_;
    IterationLog log;
    log.iteration = it;
    log.parts = parts;
    log.total = total;
    log.frame = frame;
    log.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return log;
  }

 private:
  Dataset data_;
  TrainConfig cfg_;
  SceneModel<S> model_;
  OptimizerState<S> opt_;
  ImportanceMaps maps_;
  std::vector<PixelPmf> pmf_;
  std::vector<bool> degenerate_;
  std::vector<int> usable_frames_;
  std::vector<RayDepthMap> depth_targets_;
  std::vector<RayBatchRenderer<S>> renderers_;
  std::vector<SceneModel<S>> worker_grads_;
  std::vector<std::string> warnings_;
  int iteration_ = 0;

  std::vector<Ray> rays_;
  std::vector<std::uint64_t> seeds_;
  std::vector<std::array<S, 3>> target_rgb_;
  std::vector<S> target_depth_;
  std::vector<std::uint8_t> valid_;
};

struct TrainHooks {
  std::function<void(const IterationLog&)> on_iteration;
  // Called with the completed iteration count at checkpoint boundaries.
  std::function<void(int)> on_checkpoint;
};

/// Runs cfg.iterations steps; returns the per-iteration log.
template <class S>
std::vector<IterationLog> train(Trainer<S>& trainer, const TrainHooks& hooks = {}) {
  const auto& cfg = trainer.config();
  std::vector<IterationLog> log;
  log.reserve(cfg.iterations);
  while (trainer.iteration() < cfg.iterations) {
    log.push_back(trainer.step());
    if (hooks.on_iteration) hooks.on_iteration(log.back());
    const int done = trainer.iteration();
    if (hooks.on_checkpoint && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 &&
        done < cfg.iterations)
      hooks.on_checkpoint(done);
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(trainer.iteration());
  return log;
}

}  // namespace drsm
