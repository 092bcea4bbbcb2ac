#pragma once

// Independent brute-force reference implementations used by the unit and
// acceptance tests. Each one is written from the defining formula with plain
// loops and deliberately shares no code path with the library.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

/// Plain node grid: value(iu, iv, c).
struct Grid {
  int n = 0, w = 0;
  std::vector<double> v;  // [(iv * n + iu) * w + c]
  double at(int iu, int iv, int c) const { return v[(static_cast<std::size_t>(iv) * n + iu) * w + c]; }
};

/// Bilinear interpolation written as a sum of tent kernels over every node.
inline std::vector<double> bilerp(const Grid& g, double u, double v) {
  u = std::clamp(u, 0.0, 1.0);
  v = std::clamp(v, 0.0, 1.0);
  const double x = u * (g.n - 1), y = v * (g.n - 1);
  std::vector<double> out(g.w, 0.0);
  for (int iv = 0; iv < g.n; ++iv)
    for (int iu = 0; iu < g.n; ++iu) {
      const double k = std::max(0.0, 1.0 - std::abs(x - iu)) * std::max(0.0, 1.0 - std::abs(y - iv));
      if (k == 0.0) continue;
      for (int c = 0; c < g.w; ++c) out[c] += k * g.at(iu, iv, c);
    }
  return out;
}

inline double tv2d(const Grid& g) {
  double s = 0.0;
  int count = 0;
  for (int c = 0; c < g.w; ++c)
    for (int iv = 0; iv < g.n; ++iv)
      for (int iu = 0; iu + 1 < g.n; ++iu) {
        const double d = g.at(iu + 1, iv, c) - g.at(iu, iv, c);
        s += d * d;
        ++count;
      }
  for (int c = 0; c < g.w; ++c)
    for (int iu = 0; iu < g.n; ++iu)
      for (int iv = 0; iv + 1 < g.n; ++iv) {
        const double d = g.at(iu, iv + 1, c) - g.at(iu, iv, c);
        s += d * d;
        ++count;
      }
  return s / count;
}

/// First-order differences along the space axis (u) only.
inline double tv1d_space(const Grid& g) {
  double s = 0.0;
  int count = 0;
  for (int c = 0; c < g.w; ++c)
    for (int iv = 0; iv < g.n; ++iv)
      for (int iu = 0; iu + 1 < g.n; ++iu) {
        const double d = g.at(iu + 1, iv, c) - g.at(iu, iv, c);
        s += d * d;
        ++count;
      }
  return s / count;
}

/// Second-order differences along the time axis (v).
inline double smooth_time(const Grid& g) {
  double s = 0.0;
  int count = 0;
  for (int c = 0; c < g.w; ++c)
    for (int iu = 0; iu < g.n; ++iu)
      for (int iv = 1; iv + 1 < g.n; ++iv) {
        const double d = g.at(iu, iv + 1, c) - 2.0 * g.at(iu, iv, c) + g.at(iu, iv - 1, c);
        s += d * d;
        ++count;
      }
  return s / count;
}

/// Naive dense layer stack: weights[l][r][c], biases[l][r]; ReLU between layers.
struct Net {
  std::vector<std::vector<std::vector<double>>> weights;
  std::vector<std::vector<double>> biases;
};

inline std::vector<double> mlp(const Net& net, std::vector<double> x) {
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    std::vector<double> y(net.weights[l].size());
    for (std::size_t r = 0; r < y.size(); ++r) {
      double s = net.biases[l][r];
      for (std::size_t c = 0; c < x.size(); ++c) s += net.weights[l][r][c] * x[c];
      y[r] = (l + 1 < net.weights.size()) ? (s > 0 ? s : 0.0) : s;
    }
    x = std::move(y);
  }
  return x;
}

/// Forward-facing NDC conversion as commonly published for LLFF-style scenes
/// (principal point at the image center, single focal length).
struct NdcRay {
  std::array<double, 3> o, d;
};

inline NdcRay ndc_ray(int width, int height, double focal, double near, int row, int col) {
  // Camera-space ray from the pinhole through the pixel center.
  std::array<double, 3> o{0, 0, 0};
  std::array<double, 3> d{(col + 0.5 - width * 0.5) / focal, -(row + 0.5 - height * 0.5) / focal, -1.0};
  const double t = -(near + o[2]) / d[2];
  for (int i = 0; i < 3; ++i) o[i] += t * d[i];
  NdcRay r;
  r.o = {-1.0 / (width / (2.0 * focal)) * o[0] / o[2], -1.0 / (height / (2.0 * focal)) * o[1] / o[2],
         1.0 + 2.0 * near / o[2]};
  r.d = {-1.0 / (width / (2.0 * focal)) * (d[0] / d[2] - o[0] / o[2]),
         -1.0 / (height / (2.0 * focal)) * (d[1] / d[2] - o[1] / o[2]), -2.0 * near / o[2]};
  return r;
}

/// Piecewise-constant volume: bin k covers [edges[k], edges[k+1]] with density
/// sigma[k], color rgb[k] and depth label s[k]. Integrates the continuous
/// emission-absorption model with composite Simpson's rule on `points` nodes
/// (split evenly across bins), with transmittance from the exact integral of
/// the step-function density.
struct DenseResult {
  std::array<double, 3> color{};
  double depth = 0, opacity = 0;
};

inline DenseResult integrate(const std::vector<double>& edges, const std::vector<double>& sigma,
                             const std::vector<std::array<double, 3>>& rgb, const std::vector<double>& s,
                             int points = 10000) {
  const std::size_t bins = sigma.size();
  const int per_bin = std::max(2, points / static_cast<int>(bins)) / 2 * 2;  // even interval count
  DenseResult out;
  double optical = 0.0;  // integral of sigma up to the current bin start
  for (std::size_t k = 0; k < bins; ++k) {
    const double a = edges[k], b = edges[k + 1];
    const double h = (b - a) / per_bin;
    double acc = 0.0;
    for (int i = 0; i <= per_bin; ++i) {
      const double x = a + i * h;
      const double f = std::exp(-(optical + sigma[k] * (x - a))) * sigma[k];
      const double wgt = (i == 0 || i == per_bin) ? 1.0 : (i % 2 ? 4.0 : 2.0);
      acc += wgt * f;
    }
    acc *= h / 3.0;
    for (int c = 0; c < 3; ++c) out.color[c] += acc * rgb[k][c];
    out.depth += acc * s[k];
    out.opacity += acc;
    optical += sigma[k] * (b - a);
  }
  return out;
}

/// Per-pixel max over |i - j| < tau (j != i, visited at `stride`) of the mean
/// absolute channel difference, then clamped.
inline std::vector<double> motion(const std::vector<std::vector<double>>& frames, int channels, int i, int tau,
                                  int stride, double alpha, bool clamp_min) {
  const int t = static_cast<int>(frames.size());
  const std::size_t px = frames[0].size() / channels;
  std::vector<double> out(px, 0.0);
  for (int j = 0; j < t; ++j) {
    if (j == i || std::abs(j - i) >= tau || std::abs(j - i) % stride != 0) continue;
    for (std::size_t p = 0; p < px; ++p) {
      double m = 0.0;
      for (int c = 0; c < channels; ++c) m += std::abs(frames[i][p * channels + c] - frames[j][p * channels + c]);
      out[p] = std::max(out[p], m / channels);
    }
  }
  for (auto& v : out) v = clamp_min ? std::min(v, alpha) : std::max(v, alpha);
  return out;
}

/// SSIM with an explicit 2D Gaussian window at every fully covered position.
inline double ssim(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
                   int channels) {
  const int win = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> k2(win * win);
  double ksum = 0.0;
  for (int y = 0; y < win; ++y)
    for (int x = 0; x < win; ++x) {
      const double dx = x - 5, dy = y - 5;
      k2[y * win + x] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      ksum += k2[y * win + x];
    }
  for (auto& v : k2) v /= ksum;
  double total = 0.0;
  for (int c = 0; c < channels; ++c) {
    double sum = 0.0;
    int n = 0;
    for (int y0 = 0; y0 + win <= height; ++y0)
      for (int x0 = 0; x0 + win <= width; ++x0) {
        double ma = 0, mb = 0;
        for (int y = 0; y < win; ++y)
          for (int x = 0; x < win; ++x) {
            const std::size_t p = (static_cast<std::size_t>(y0 + y) * width + x0 + x) * channels + c;
            ma += k2[y * win + x] * a[p];
            mb += k2[y * win + x] * b[p];
          }
        double va = 0, vb = 0, cov = 0;
        for (int y = 0; y < win; ++y)
          for (int x = 0; x < win; ++x) {
            const std::size_t p = (static_cast<std::size_t>(y0 + y) * width + x0 + x) * channels + c;
            const double k = k2[y * win + x];
            va += k * (a[p] - ma) * (a[p] - ma);
            vb += k * (b[p] - mb) * (b[p] - mb);
            cov += k * (a[p] - ma) * (b[p] - mb);
          }
        sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++n;
      }
    total += sum / n;
  }
  return total / channels;
}

/// Textbook bias-corrected Adam on one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  int t = 0;
  double step(double x, double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    return x - lr * mh / (std::sqrt(vh) + eps);
  }
};

}  // namespace oracle
