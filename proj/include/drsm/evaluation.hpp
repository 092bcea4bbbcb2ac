#pragma once

// Reconstruction quality on held-out frames: whole-frame and occluded-region
// PSNR, SSIM, depth error, and the occluder-passthrough baseline.

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "drsm/metrics.hpp"
#include "drsm/renderer.hpp"
#include "drsm/scene_io.hpp"

namespace drsm {

struct FrameMetrics {
  double t = 0;
  double psnr_full = 0;
  double psnr_occluded = 0;           // NaN when the frame has no occluded pixel
  double ssim_full = 0;
  double baseline_psnr_full = 0;      // captured frame (occluder left in) vs ground truth
  double baseline_psnr_occluded = 0;
  double depth_mae = 0;               // mean |rendered - analytic| NDC ray depth
};

struct EvalReport {
  std::vector<FrameMetrics> frames;

  /// Per-column mean over frames, skipping NaN entries.
  FrameMetrics mean() const {
    FrameMetrics m;
    const auto avg = [&](double FrameMetrics::*f) {
      double s = 0.0;
      int n = 0;
      for (const auto& fm : frames)
        if (!std::isnan(fm.*f)) {
          s += fm.*f;
          ++n;
        }
      return n ? s / n : std::nan("");
    };
    m.t = std::nan("");
    m.psnr_full = avg(&FrameMetrics::psnr_full);
    m.psnr_occluded = avg(&FrameMetrics::psnr_occluded);
    m.ssim_full = avg(&FrameMetrics::ssim_full);
    m.baseline_psnr_full = avg(&FrameMetrics::baseline_psnr_full);
    m.baseline_psnr_occluded = avg(&FrameMetrics::baseline_psnr_occluded);
    m.depth_mae = avg(&FrameMetrics::depth_mae);
    return m;
  }
};

inline Mask occluded_region(const Mask& visibility) {
  Mask r(visibility.width, visibility.height, 1);
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = visibility.data[i] ? 0 : 1;
  return r;
}

template <class S>
FrameMetrics evaluate_frame(const SceneModel<S>& model, const Camera& cam, const HeldoutFrame& h,
                            int n_samples, int workers, FrameRender* rendered = nullptr) {
  FrameRender fr = render_frame(model, cam, h.t, n_samples, workers);
  const Mask region = occluded_region(h.mask);
  FrameMetrics m;
  m.t = h.t;
  m.psnr_full = psnr(fr.color, h.ground_truth);
  m.psnr_occluded = psnr_masked(fr.color, h.ground_truth, region);
  m.ssim_full = ssim(fr.color, h.ground_truth);
  m.baseline_psnr_full = psnr(h.frame, h.ground_truth);
  m.baseline_psnr_occluded = psnr_masked(h.frame, h.ground_truth, region);
  const auto target = metric_depth_to_ray_depth(h.depth, cam);
  double err = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < target.depth.pixel_count(); ++p) {
    if (!target.valid.data[p]) continue;
    err += std::abs(static_cast<double>(fr.depth.data[p]) - target.depth.data[p]);
    ++n;
  }
  m.depth_mae = n ? err / n : std::nan("");
  if (rendered) *rendered = std::move(fr);
  return m;
}

template <class S>
EvalReport evaluate(const SceneModel<S>& model, const Camera& cam, std::span<const HeldoutFrame> heldout,
                    int n_samples, int workers = 1) {
  EvalReport rep;
  for (const auto& h : heldout) rep.frames.push_back(evaluate_frame(model, cam, h, n_samples, workers));
  return rep;
}

inline std::string eval_csv(const EvalReport& rep) {
  std::string out =
      "t,psnr_full,psnr_occluded,ssim_full,baseline_psnr_full,baseline_psnr_occluded,depth_mae\n";
  const auto row = [&](const char* label, const FrameMetrics& m) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", label, m.psnr_full,
                  m.psnr_occluded, m.ssim_full, m.baseline_psnr_full, m.baseline_psnr_occluded,
                  m.depth_mae);
    out += buf;
  };
  for (const auto& m : rep.frames) {
    char t[32];
    std::snprintf(t, sizeof(t), "%.6f", m.t);
    row(t, m);
  }
  row("mean", rep.mean());
  return out;
}

}  // namespace drsm
