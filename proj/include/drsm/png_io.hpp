#pragma once

// Minimal libpng wrappers: 8/16-bit gray, RGB and RGBA, no color management.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "drsm/core.hpp"

namespace drsm {

/// Decoded PNG; samples widened to 16 bits regardless of the file bit depth.
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<std::uint16_t> samples;
};

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline int color_type_for(int channels) {
  switch (channels) {
    case 1: return PNG_COLOR_TYPE_GRAY;
    case 2: return PNG_COLOR_TYPE_GRAY_ALPHA;
    case 3: return PNG_COLOR_TYPE_RGB;
    case 4: return PNG_COLOR_TYPE_RGBA;
    default: throw InvalidInput("png: unsupported channel count");
  }
}

}  // namespace detail

/// `samples` are row-major interleaved; values must fit the bit depth (8 or 16).
inline void write_png(const std::string& path, int width, int height, int channels, int bit_depth,
                      const std::vector<std::uint16_t>& samples) {
  if (bit_depth != 8 && bit_depth != 16) throw InvalidInput("png: bit depth must be 8 or 16");
  if (samples.size() != static_cast<std::size_t>(width) * height * channels)
    throw InvalidInput("png: sample count does not match dimensions");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ExportError("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw ExportError("png: out of memory");
  }
  const int bytes = bit_depth / 8;
  std::vector<png_byte> row(static_cast<std::size_t>(width) * channels * bytes);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw ExportError("png: failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, bit_depth, detail::color_type_for(channels),
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    const std::uint16_t* src = samples.data() + static_cast<std::size_t>(y) * width * channels;
    for (int i = 0; i < width * channels; ++i) {
      if (bytes == 1) {
        row[i] = static_cast<png_byte>(src[i]);
      } else {  // PNG stores 16-bit samples big-endian
        row[2 * i] = static_cast<png_byte>(src[i] >> 8);
        row[2 * i + 1] = static_cast<png_byte>(src[i] & 0xff);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline PngData read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw LoadError("cannot open '" + path + "'");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw LoadError("'" + path + "' is not a PNG file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("png: out of memory");
  }
  PngData out;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("png: corrupt file '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const int bytes = out.bit_depth / 8;
  row.resize(png_get_rowbytes(png, info));
  out.samples.resize(static_cast<std::size_t>(out.width) * out.height * out.channels);
  for (int y = 0; y < out.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    std::uint16_t* dst = out.samples.data() + static_cast<std::size_t>(y) * out.width * out.channels;
    for (int i = 0; i < out.width * out.channels; ++i)
      dst[i] = bytes == 1 ? row[i] : static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1]);
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline std::uint16_t quantize(double v, double max_value) {
  const double q = std::round(std::clamp(v, 0.0, 1.0) * max_value);
  return static_cast<std::uint16_t>(q);
}

/// Float image in [0,1] written as 8-bit.
inline void write_png8(const std::string& path, const ImageF& img) {
  std::vector<std::uint16_t> s(img.data.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize(img.data[i], 255.0);
  write_png(path, img.width, img.height, img.channels, 8, s);
}

/// Float image in [0,1] written as 16-bit.
inline void write_png16(const std::string& path, const ImageF& img) {
  std::vector<std::uint16_t> s(img.data.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = quantize(img.data[i], 65535.0);
  write_png(path, img.width, img.height, img.channels, 16, s);
}

}  // namespace drsm
