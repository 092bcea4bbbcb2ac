#pragma once

// Image quality metrics: PSNR (whole image or masked) and SSIM.

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "drsm/core.hpp"

namespace drsm {

inline double psnr_from_mse(double mse) {
  if (mse <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Peak signal-to-noise ratio for values in [0,1]; +inf for identical images.
inline double psnr(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b)) throw InvalidInput("psnr: image dimensions differ");
  if (a.data.empty()) throw InvalidInput("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  return psnr_from_mse(se / static_cast<double>(a.data.size()));
}

/// PSNR over the pixels where `region` is nonzero. NaN if the region is empty.
inline double psnr_masked(const ImageF& a, const ImageF& b, const Mask& region) {
  if (!a.same_shape(b) || region.width != a.width || region.height != a.height)
    throw InvalidInput("psnr_masked: image dimensions differ");
  double se = 0.0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < a.pixel_count(); ++p) {
    if (!region.data[p]) continue;
    for (int c = 0; c < a.channels; ++c) {
      const double d = static_cast<double>(a.data[p * a.channels + c]) - b.data[p * a.channels + c];
      se += d * d;
    }
    count += a.channels;
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return psnr_from_mse(se / static_cast<double>(count));
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

inline std::vector<double> gaussian_kernel(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Mean structural similarity over all fully-covered window positions, averaged
/// over channels. Window statistics use a separable Gaussian filter.
inline double ssim(const ImageF& a, const ImageF& b, const SsimParams& prm = {}) {
  if (!a.same_shape(b)) throw InvalidInput("ssim: image dimensions differ");
  if (a.width < prm.window || a.height < prm.window)
    throw InvalidInput("ssim: image smaller than the window");
  const double c1 = (prm.k1 * prm.dynamic_range) * (prm.k1 * prm.dynamic_range);
  const double c2 = (prm.k2 * prm.dynamic_range) * (prm.k2 * prm.dynamic_range);
  const auto kern = gaussian_kernel(prm.window, prm.sigma);
  const int w = a.width, h = a.height, win = prm.window;
  const int ow = w - win + 1, oh = h - win + 1;

  // Horizontal then vertical pass of the five moment images.
  const auto filter = [&](const std::vector<double>& img) {
    std::vector<double> tmp(static_cast<std::size_t>(ow) * h), out(static_cast<std::size_t>(ow) * oh);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < win; ++k) s += kern[k] * img[static_cast<std::size_t>(y) * w + x + k];
        tmp[static_cast<std::size_t>(y) * ow + x] = s;
      }
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double s = 0.0;
        for (int k = 0; k < win; ++k) s += kern[k] * tmp[static_cast<std::size_t>(y + k) * ow + x];
        out[static_cast<std::size_t>(y) * ow + x] = s;
      }
    return out;
  };

  double total = 0.0;
  const std::size_t px = a.pixel_count();
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> va(px), vb(px), aa(px), bb(px), ab(px);
    for (std::size_t p = 0; p < px; ++p) {
      va[p] = a.data[p * a.channels + c];
      vb[p] = b.data[p * a.channels + c];
      aa[p] = va[p] * va[p];
      bb[p] = vb[p] * vb[p];
      ab[p] = va[p] * vb[p];
    }
    const auto mu_a = filter(va), mu_b = filter(vb);
    const auto e_aa = filter(aa), e_bb = filter(bb), e_ab = filter(ab);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

}  // namespace drsm
