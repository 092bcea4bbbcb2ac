#pragma once

// Occlusion- and motion-aware pixel sampling.
//
// Occlusion importance boosts pixels in proportion to how often they are
// hidden across the video; the motion term boosts pixels whose color changes
// against nearby frames. Their product, normalized per frame, is the PMF that
// training rays are drawn from.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "drsm/core.hpp"
#include "drsm/parallel.hpp"

namespace drsm {

enum class ClampMode {
  Min,  // min(diff, alpha): motion weights in [0, alpha]
  Max,  // max(diff, alpha): alpha is a floor, static pixels stay sampleable
};

inline ClampMode parse_clamp_mode(const std::string& s) {
  if (s == "min") return ClampMode::Min;
  if (s == "max") return ClampMode::Max;
  throw ConfigError("clamp mode must be 'min' or 'max', got '" + s + "'");
}

inline const char* to_string(ClampMode m) { return m == ClampMode::Min ? "min" : "max"; }

struct SamplerConfig {
  double alpha = 0.1;
  int tau = 25;
  double epsilon = 1e-6;
  ClampMode clamp_mode = ClampMode::Min;
  // Offsets j - i are multiples of this stride (capped at tau - 1 so the window
  // is never empty).
  int window_stride = 5;

  void validate() const {
    if (!(alpha > 0)) throw ConfigError("sampler config: alpha must be > 0");
    if (tau < 1) throw ConfigError("sampler config: tau must be >= 1");
    if (!(epsilon > 0)) throw ConfigError("sampler config: epsilon must be > 0");
    if (window_stride < 1) throw ConfigError("sampler config: window_stride must be >= 1");
  }
};

/// Per-pixel weights of one frame, row-major.
using WeightMap = std::vector<double>;

/// P~_i = M_i * T / (sum_k M_k + eps), elementwise.
inline std::vector<WeightMap> occlusion_importance(std::span<const Mask> masks, double epsilon) {
  if (masks.empty()) throw InvalidInput("occlusion_importance: no masks");
  const Mask& first = masks.front();
  for (const auto& m : masks)
    if (!m.same_shape(first) || m.channels != 1)
      throw InvalidInput("occlusion_importance: mask dimensions differ");
  const std::size_t px = first.pixel_count();
  const double frames = static_cast<double>(masks.size());
  std::vector<double> visible(px, 0.0);
  for (const auto& m : masks)
    for (std::size_t p = 0; p < px; ++p) visible[p] += m.data[p] ? 1.0 : 0.0;
  std::vector<WeightMap> out(masks.size(), WeightMap(px, 0.0));
  for (std::size_t i = 0; i < masks.size(); ++i)
    for (std::size_t p = 0; p < px; ++p)
      out[i][p] = masks[i].data[p] ? frames / (visible[p] + epsilon) : 0.0;
  return out;
}

/// Frame indices j != i with |j - i| < tau, visited at the configured stride.
/// Short clips where the stride skips every neighbour fall back to stride 1.
inline std::vector<int> motion_window(int i, int num_frames, const SamplerConfig& cfg) {
  const auto collect = [&](int stride) {
    std::vector<int> js;
    for (int off = stride; off < cfg.tau; off += stride) {
      if (i - off >= 0) js.push_back(i - off);
      if (i + off < num_frames) js.push_back(i + off);
    }
    std::sort(js.begin(), js.end());
    return js;
  };
  auto js = collect(std::max(1, std::min(cfg.window_stride, cfg.tau - 1)));
  if (js.empty()) js = collect(1);
  return js;
}

/// Max over the window of the channel-mean absolute difference, then clamped
/// against alpha per the configured mode.
inline WeightMap motion_weight(std::span<const ImageF> frames, int i, const SamplerConfig& cfg) {
  cfg.validate();
  const int num = static_cast<int>(frames.size());
  if (i < 0 || i >= num) throw InvalidInput("motion_weight: frame index out of range");
  const auto window = motion_window(i, num, cfg);
  if (window.empty()) throw InvalidInput("motion_weight: empty temporal window");
  const ImageF& fi = frames[i];
  const std::size_t px = fi.pixel_count();
  const int ch = fi.channels;
  WeightMap diff(px, 0.0);
  for (int j : window) {
    const ImageF& fj = frames[j];
    if (!fj.same_shape(fi)) throw InvalidInput("motion_weight: frame dimensions differ");
    for (std::size_t p = 0; p < px; ++p) {
      double l1 = 0.0;
      for (int c = 0; c < ch; ++c)
        l1 += std::abs(static_cast<double>(fi.data[p * ch + c]) - fj.data[p * ch + c]);
      diff[p] = std::max(diff[p], l1 / ch);
    }
  }
  for (auto& d : diff) d = cfg.clamp_mode == ClampMode::Min ? std::min(d, cfg.alpha) : std::max(d, cfg.alpha);
  return diff;
}

/// Normalized per-frame sampling distribution with its cumulative sums.
struct PixelPmf {
  std::vector<double> prob;
  std::vector<double> cdf;  // inclusive prefix sums of prob
  bool fallback_uniform = false;
};

inline PixelPmf pmf_from_weights(std::vector<double> w) {
  PixelPmf pmf;
  double total = 0.0;
  for (double v : w) total += v;
  for (auto& v : w) v /= total;
  pmf.prob = std::move(w);
  pmf.cdf.resize(pmf.prob.size());
  std::partial_sum(pmf.prob.begin(), pmf.prob.end(), pmf.cdf.begin());
  return pmf;
}

/// P_i = P~_i * motion_i normalized to sum 1. Falls back to uniform over the
/// unoccluded pixels (P~ > 0) when the product vanishes everywhere.
inline PixelPmf combine_and_normalize(const WeightMap& occlusion, const WeightMap& motion) {
  if (occlusion.size() != motion.size())
    throw InvalidInput("combine_and_normalize: map sizes differ");
  std::vector<double> p(occlusion.size());
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (occlusion[k] < 0 || motion[k] < 0)
      throw InvalidInput("combine_and_normalize: negative weight");
    p[k] = occlusion[k] * motion[k];
    total += p[k];
  }
  if (total > 0.0) return pmf_from_weights(std::move(p));
  std::size_t visible = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = occlusion[k] > 0 ? 1.0 : 0.0;
    visible += occlusion[k] > 0;
  }
  if (visible == 0) throw DegenerateFrame("combine_and_normalize: frame fully occluded");
  auto pmf = pmf_from_weights(std::move(p));
  pmf.fallback_uniform = true;
  return pmf;
}

/// Uniform over unoccluded pixels; the sampling ablation.
inline PixelPmf uniform_unoccluded(const Mask& mask) {
  std::vector<double> p(mask.pixel_count());
  std::size_t visible = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = mask.data[k] ? 1.0 : 0.0;
    visible += mask.data[k] != 0;
  }
  if (visible == 0) throw DegenerateFrame("uniform_unoccluded: frame fully occluded");
  return pmf_from_weights(std::move(p));
}

/// R draws with replacement by inverse CDF. The stream is keyed by (seed, stream).
inline std::vector<std::size_t> draw_rays(const PixelPmf& pmf, std::size_t count,
                                          std::uint64_t seed, std::uint64_t stream = 0) {
  if (pmf.cdf.empty()) throw InvalidInput("draw_rays: empty distribution");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::mt19937_64 rng(seq);
  // Last index with nonzero mass; guards u * total landing past the final cdf entry.
  std::size_t last = pmf.prob.size() - 1;
  while (last > 0 && pmf.prob[last] <= 0.0) --last;
  const double total = pmf.cdf.back();
  std::vector<std::size_t> out(count);
  for (auto& o : out) {
    const double u = unit_from_hash(rng()) * total;
    const auto it = std::upper_bound(pmf.cdf.begin(), pmf.cdf.end(), u);
    o = std::min(static_cast<std::size_t>(it - pmf.cdf.begin()), last);
  }
  return out;
}

/// Precomputed sampling state for a whole video.
struct ImportanceMaps {
  std::vector<WeightMap> occlusion;  // P~_i
  std::vector<WeightMap> combined;   // P_i
  std::vector<PixelPmf> pmf;
  std::vector<bool> degenerate;      // frames with no sampleable pixel
};

inline ImportanceMaps build_importance_maps(std::span<const ImageF> frames,
                                            std::span<const Mask> masks,
                                            const SamplerConfig& cfg, int workers = 1) {
  cfg.validate();
  if (frames.size() != masks.size())
    throw InvalidInput("build_importance_maps: frame/mask count mismatch");
  ImportanceMaps maps;
  maps.occlusion = occlusion_importance(masks, cfg.epsilon);
  const std::size_t n = frames.size();
  maps.combined.resize(n);
  maps.pmf.resize(n);
  maps.degenerate.assign(n, false);
  std::vector<char> degenerate(n, 0);
  parallel_ranges(n, effective_workers(workers, n), [&](int, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const auto motion = motion_weight(frames, static_cast<int>(i), cfg);
      auto& comb = maps.combined[i];
      comb.resize(motion.size());
      for (std::size_t k = 0; k < motion.size(); ++k) comb[k] = maps.occlusion[i][k] * motion[k];
      try {
        maps.pmf[i] = combine_and_normalize(maps.occlusion[i], motion);
      } catch (const DegenerateFrame&) {
        degenerate[i] = 1;
      }
    }
  });
  for (std::size_t i = 0; i < n; ++i) maps.degenerate[i] = degenerate[i] != 0;
  return maps;
}

}  // namespace drsm
