#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace drsm {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A frame whose every pixel is occluded and therefore cannot be sampled.
class DegenerateFrame : public Error {
 public:
  using Error::Error;
};

class LoadError : public Error {
 public:
  using Error::Error;
};

class ExportError : public Error {
 public:
  using Error::Error;
};

/// Interleaved row-major image, `channels` values per pixel.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
  T& at(int row, int col, int c = 0) {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
  const T& at(int row, int col, int c = 0) const {
    return data[(static_cast<std::size_t>(row) * width + col) * channels + c];
  }
};

using ImageF = Image<float>;
using Mask = Image<std::uint8_t>;

/// splitmix64 finalizer; used to derive independent per-ray / per-step streams
/// from (seed, counters) so results do not depend on evaluation order.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

/// Uniform double in [0, 1) from a 64-bit hash.
inline double unit_from_hash(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

template <class S>
inline bool all_finite(const std::vector<S>& v) {
  for (const S& x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace drsm
