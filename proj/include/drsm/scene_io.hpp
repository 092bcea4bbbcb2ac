#pragma once

// RGBD video datasets on disk, the analytic synthetic scene, depth-space
// conversions and PLY point-cloud export.
//
// Dataset directory layout:
//   manifest.json                 frame count, fps, intrinsics, near/far, depth scale
//   frame_%04d.png                8-bit RGB
//   depth_%04d.png                16-bit gray, metric depth * depth_scale (0 = invalid)
//   mask_%04d.png                 8-bit gray, 0 = occluded
// Synthetic datasets add gt_%04d.png (occluder-free frames) and a heldout/
// directory with the same triplets plus gt_ frames at off-grid timestamps.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "drsm/core.hpp"
#include "drsm/png_io.hpp"
#include "drsm/renderer.hpp"

namespace drsm {

namespace fs = std::filesystem;

struct Dataset {
  std::vector<ImageF> frames;  // RGB in [0,1]
  std::vector<ImageF> depths;  // metric, 0 = invalid
  std::vector<Mask> masks;     // 1 = visible, 0 = occluded
  Camera camera;
  double fps = 10.0;
  double depth_scale = 1000.0;

  int num_frames() const { return static_cast<int>(frames.size()); }
  /// Normalized timestamp of frame i (0-based): i / T.
  double time_of(int i) const { return static_cast<double>(i) / num_frames(); }

  void validate() const {
    camera.validate();
    const std::size_t t = frames.size();
    if (t < 2) throw InvalidInput("dataset: need at least 2 frames");
    if (depths.size() != t || masks.size() != t)
      throw InvalidInput("dataset: frame, depth and mask counts differ");
    for (std::size_t i = 0; i < t; ++i) {
      if (frames[i].width != camera.width || frames[i].height != camera.height ||
          frames[i].channels != 3)
        throw InvalidInput("dataset: frame " + std::to_string(i) + " has wrong dimensions");
      if (depths[i].width != camera.width || depths[i].height != camera.height ||
          depths[i].channels != 1)
        throw InvalidInput("dataset: depth " + std::to_string(i) + " has wrong dimensions");
      if (masks[i].width != camera.width || masks[i].height != camera.height ||
          masks[i].channels != 1)
        throw InvalidInput("dataset: mask " + std::to_string(i) + " has wrong dimensions");
    }
  }
};

/// A frame at an off-grid timestamp, used only for evaluation.
struct HeldoutFrame {
  double t = 0;
  ImageF frame;         // as captured, occluder included
  ImageF ground_truth;  // occluder removed
  ImageF depth;         // occluder-free metric depth
  Mask mask;            // 0 where the occluder covers the frame
};

struct SyntheticScene {
  Dataset dataset;
  std::vector<ImageF> ground_truth;  // occluder-free frames at the training timestamps
  std::vector<ImageF> ground_truth_depth;
  std::vector<HeldoutFrame> heldout;
};

// ---------------------------------------------------------------------------
// Depth conversions

/// Ray parameter in forward-facing NDC for metric depth z: s = 1 - near / z.
inline double ray_depth_from_metric(double z, double near) { return 1.0 - near / z; }

inline double metric_from_ray_depth(double s, double near) { return near / (1.0 - s); }

struct RayDepthMap {
  ImageF depth;  // NDC ray parameter
  Mask valid;
  std::size_t clamped = 0;  // valid depths that fell outside [near, far]
};

inline RayDepthMap metric_depth_to_ray_depth(const ImageF& metric, const Camera& cam) {
  RayDepthMap out{ImageF(metric.width, metric.height, 1), Mask(metric.width, metric.height, 1), 0};
  for (std::size_t p = 0; p < metric.pixel_count(); ++p) {
    double z = metric.data[p];
    if (!(z > 0.0) || !std::isfinite(z)) continue;
    if (z < cam.near || z > cam.far) {
      z = std::clamp(z, cam.near, cam.far);
      ++out.clamped;
    }
    out.depth.data[p] = static_cast<float>(ray_depth_from_metric(z, cam.near));
    out.valid.data[p] = 1;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Atomic file output

/// Runs `write(tmp_path)` and renames the result onto `path`.
inline void atomic_write(const fs::path& path, const std::function<void(const std::string&)>& write) {
  const fs::path tmp = path.string() + ".tmp";
  try {
    write(tmp.string());
    fs::rename(tmp, path);
  } catch (...) {
    std::error_code ec;
    fs::remove(tmp, ec);
    throw;
  }
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  atomic_write(path, [&](const std::string& tmp) {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ExportError("cannot open '" + tmp + "' for writing");
    f << text;
    if (!f) throw ExportError("failed writing '" + tmp + "'");
  });
}

// ---------------------------------------------------------------------------
// Dataset files

inline std::string indexed_name(const char* stem, int i) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.png", stem, i);
  return buf;
}

inline nlohmann::json camera_to_json(const Camera& c) {
  return {{"width", c.width}, {"height", c.height}, {"fx", c.fx}, {"fy", c.fy},
          {"cx", c.cx},       {"cy", c.cy},         {"near", c.near}, {"far", c.far}};
}

inline Camera camera_from_json(const nlohmann::json& j) {
  Camera c;
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.near = j.at("near").get<double>();
  c.far = j.at("far").get<double>();
  return c;
}

inline void save_rgb(const fs::path& p, const ImageF& img) {
  atomic_write(p, [&](const std::string& tmp) { write_png8(tmp, img); });
}

inline void save_mask(const fs::path& p, const Mask& m) {
  std::vector<std::uint16_t> s(m.data.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = m.data[i] ? 255 : 0;
  atomic_write(p, [&](const std::string& tmp) { write_png(tmp, m.width, m.height, 1, 8, s); });
}

inline void save_metric_depth(const fs::path& p, const ImageF& depth, double scale) {
  std::vector<std::uint16_t> s(depth.data.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = static_cast<std::uint16_t>(std::clamp(std::round(depth.data[i] * scale), 0.0, 65535.0));
  atomic_write(p, [&](const std::string& tmp) { write_png(tmp, depth.width, depth.height, 1, 16, s); });
}

inline PngData read_checked(const fs::path& p, int width, int height, int channels) {
  if (!fs::exists(p)) throw LoadError("missing file '" + p.string() + "'");
  PngData d = read_png(p.string());
  if (d.width != width || d.height != height)
    throw LoadError("'" + p.string() + "' has inconsistent dimensions");
  if (d.channels != channels)
    throw LoadError("'" + p.string() + "' has " + std::to_string(d.channels) +
                    " channels, expected " + std::to_string(channels));
  return d;
}

inline ImageF load_rgb(const fs::path& p, int width, int height) {
  const PngData d = read_checked(p, width, height, 3);
  const double maxv = d.bit_depth == 16 ? 65535.0 : 255.0;
  ImageF img(width, height, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>(d.samples[i] / maxv);
  return img;
}

inline Mask load_mask(const fs::path& p, int width, int height) {
  const PngData d = read_checked(p, width, height, 1);
  const double maxv = d.bit_depth == 16 ? 65535.0 : 255.0;
  Mask m(width, height, 1);
  for (std::size_t i = 0; i < m.data.size(); ++i) m.data[i] = d.samples[i] / maxv >= 0.5 ? 1 : 0;
  return m;
}

inline ImageF load_metric_depth(const fs::path& p, int width, int height, double scale) {
  const PngData d = read_checked(p, width, height, 1);
  ImageF img(width, height, 1);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<float>(d.samples[i] / scale);
  return img;
}

inline void save_dataset(const fs::path& dir, const Dataset& ds) {
  ds.validate();
  fs::create_directories(dir);
  nlohmann::json m;
  m["format"] = "drsm-rgbd-v1";
  m["frames"] = ds.num_frames();
  m["fps"] = ds.fps;
  m["depth_scale"] = ds.depth_scale;
  m["camera"] = camera_to_json(ds.camera);
  for (int i = 0; i < ds.num_frames(); ++i) {
    save_rgb(dir / indexed_name("frame", i), ds.frames[i]);
    save_metric_depth(dir / indexed_name("depth", i), ds.depths[i], ds.depth_scale);
    save_mask(dir / indexed_name("mask", i), ds.masks[i]);
  }
  write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

inline nlohmann::json read_manifest(const fs::path& dir) {
  const fs::path mp = dir / "manifest.json";
  std::ifstream f(mp);
  if (!f) throw LoadError("missing manifest '" + mp.string() + "'");
  try {
    return nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("invalid manifest '" + mp.string() + "': " + e.what());
  }
}

inline Dataset load_dataset(const fs::path& dir) {
  const nlohmann::json m = read_manifest(dir);
  Dataset ds;
  int count = 0;
  try {
    count = m.at("frames").get<int>();
    ds.fps = m.value("fps", 10.0);
    ds.depth_scale = m.at("depth_scale").get<double>();
    ds.camera = camera_from_json(m.at("camera"));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("invalid manifest '" + (dir / "manifest.json").string() + "': " + e.what());
  }
  if (count < 2) throw LoadError("manifest: frame count must be >= 2");
  if (!(ds.depth_scale > 0)) throw LoadError("manifest: depth_scale must be positive");
  try {
    ds.camera.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("manifest: ") + e.what());
  }
  const int w = ds.camera.width, h = ds.camera.height;
  for (int i = 0; i < count; ++i) {
    ds.frames.push_back(load_rgb(dir / indexed_name("frame", i), w, h));
    ds.depths.push_back(load_metric_depth(dir / indexed_name("depth", i), w, h, ds.depth_scale));
    ds.masks.push_back(load_mask(dir / indexed_name("mask", i), w, h));
  }
  return ds;
}

inline void save_synthetic(const fs::path& dir, const SyntheticScene& scene) {
  save_dataset(dir, scene.dataset);
  const auto& ds = scene.dataset;
  for (std::size_t i = 0; i < scene.ground_truth.size(); ++i)
    save_rgb(dir / indexed_name("gt", static_cast<int>(i)), scene.ground_truth[i]);
  const fs::path hd = dir / "heldout";
  fs::create_directories(hd);
  nlohmann::json times = nlohmann::json::array();
  for (std::size_t k = 0; k < scene.heldout.size(); ++k) {
    const auto& h = scene.heldout[k];
    const int i = static_cast<int>(k);
    save_rgb(hd / indexed_name("frame", i), h.frame);
    save_rgb(hd / indexed_name("gt", i), h.ground_truth);
    save_metric_depth(hd / indexed_name("depth", i), h.depth, ds.depth_scale);
    save_mask(hd / indexed_name("mask", i), h.mask);
    times.push_back(h.t);
  }
  nlohmann::json m = read_manifest(dir);
  m["ground_truth"] = true;
  m["heldout_times"] = times;
  write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

/// Held-out evaluation frames of a synthetic dataset; empty if there are none.
inline std::vector<HeldoutFrame> load_heldout(const fs::path& dir) {
  const nlohmann::json m = read_manifest(dir);
  std::vector<HeldoutFrame> out;
  if (!m.contains("heldout_times")) return out;
  const Camera cam = camera_from_json(m.at("camera"));
  const double scale = m.at("depth_scale").get<double>();
  const fs::path hd = dir / "heldout";
  int i = 0;
  for (const auto& t : m.at("heldout_times")) {
    HeldoutFrame h;
    h.t = t.get<double>();
    h.frame = load_rgb(hd / indexed_name("frame", i), cam.width, cam.height);
    h.ground_truth = load_rgb(hd / indexed_name("gt", i), cam.width, cam.height);
    h.depth = load_metric_depth(hd / indexed_name("depth", i), cam.width, cam.height, scale);
    h.mask = load_mask(hd / indexed_name("mask", i), cam.width, cam.height);
    out.push_back(std::move(h));
    ++i;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic scene

/// Analytic stand-in for a captured clip: a textured fronto-parallel background,
/// a colored disk moving on a sinusoidal path in front of it, and a vertical
/// occluder bar sweeping across the frame. Lengths are in pixels unless noted.
struct SynthSceneSpec {
  int width = 64;
  int height = 64;
  int frames = 30;
  double fps = 10.0;
  double focal = 64.0;
  double near = 1.0;
  double far = 10.0;
  double depth_scale = 1000.0;

  std::uint64_t background_seed = 7;
  int texture_terms = 4;
  double texture_max_cycles = 3.0;  // per image width
  double background_depth = 4.0;    // scene units

  double object_depth = 2.0;  // scene units
  double disk_radius = 9.0;
  std::array<double, 3> disk_color{0.95, 0.75, 0.15};
  double center_x = 32.0, center_y = 32.0;
  double amplitude_x = 14.0, amplitude_y = 6.0;
  double cycles = 1.0;  // trajectory periods over the clip
  double phase_y = 0.5 * std::numbers::pi;

  bool occluder = true;
  double bar_width = 6.0;
  double occluder_depth = 1.3;
  std::array<double, 3> bar_color{0.85, 0.1, 0.6};

  std::vector<double> heldout_times{3.5 / 30, 9.5 / 30, 15.5 / 30, 21.5 / 30, 27.5 / 30};

  void validate() const {
    if (width < 1 || height < 1 || frames < 2) throw ConfigError("synthetic: invalid size");
    if (!(object_depth < background_depth)) throw ConfigError("synthetic: object must be nearer than background");
    if (!(near > 0) || !(far > background_depth)) throw ConfigError("synthetic: depths outside near/far");
    if (occluder && !(occluder_depth >= near && occluder_depth < object_depth))
      throw ConfigError("synthetic: occluder must lie between near plane and object");
    if (occluder && !(bar_width < 0.5 * width)) throw ConfigError("synthetic: occluder covers >= 50% of a frame");
  }

  Camera camera() const {
    return {width, height, focal, focal, width / 2.0, height / 2.0, near, far};
  }
};

struct SyntheticFrame {
  ImageF captured;      // with occluder
  ImageF ground_truth;  // occluder removed
  ImageF depth;         // captured metric depth (occluder included)
  ImageF depth_gt;      // occluder-free metric depth
  Mask mask;
};

class SyntheticSceneModel {
 public:
  explicit SyntheticSceneModel(const SynthSceneSpec& spec) : spec_(spec) {
    spec.validate();
    std::mt19937_64 rng(spec.background_seed);
    std::uniform_real_distribution<double> freq(-spec.texture_max_cycles, spec.texture_max_cycles);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < spec.texture_terms; ++k)
        terms_.push_back({c, freq(rng), freq(rng), phase(rng)});
  }

  const SynthSceneSpec& spec() const { return spec_; }

  std::array<double, 3> background(double u, double v) const {
    std::array<double, 3> rgb{0.5, 0.5, 0.5};
    const double amp = 0.35 / std::max(1, spec_.texture_terms);
    for (const auto& t : terms_)
      rgb[t.channel] += amp * std::sin(2.0 * std::numbers::pi *
                                           (t.fu * u / spec_.width + t.fv * v / spec_.height) +
                                       t.phase);
    return rgb;
  }

  std::array<double, 2> disk_center(double t) const {
    const double w = 2.0 * std::numbers::pi * spec_.cycles * t;
    return {spec_.center_x + spec_.amplitude_x * std::sin(w),
            spec_.center_y + spec_.amplitude_y * std::sin(w + spec_.phase_y)};
  }

  bool in_disk(double u, double v, double t) const {
    const auto c = disk_center(t);
    return (u - c[0]) * (u - c[0]) + (v - c[1]) * (v - c[1]) <= spec_.disk_radius * spec_.disk_radius;
  }

  /// Left edge of the occluder bar; it enters from the left at t = 0 and has
  /// left the frame at t = 1.
  double bar_left(double t) const {
    return -spec_.bar_width + (spec_.width + spec_.bar_width) * t;
  }

  bool in_bar(double u, double t) const {
    if (!spec_.occluder) return false;
    const double l = bar_left(t);
    return u >= l && u < l + spec_.bar_width;
  }

  SyntheticFrame render(double t) const {
    const int w = spec_.width, h = spec_.height;
    SyntheticFrame f{ImageF(w, h, 3), ImageF(w, h, 3), ImageF(w, h, 1), ImageF(w, h, 1), Mask(w, h, 1, 1)};
    for (int row = 0; row < h; ++row)
      for (int col = 0; col < w; ++col) {
        const double u = col + 0.5, v = row + 0.5;
        std::array<double, 3> rgb;
        double z;
        if (in_disk(u, v, t)) {
          rgb = spec_.disk_color;
          z = spec_.object_depth;
        } else {
          rgb = background(u, v);
          z = spec_.background_depth;
        }
        for (int c = 0; c < 3; ++c) f.ground_truth.at(row, col, c) = static_cast<float>(rgb[c]);
        f.depth_gt.at(row, col) = static_cast<float>(z);
        if (in_bar(u, t)) {
          for (int c = 0; c < 3; ++c) f.captured.at(row, col, c) = static_cast<float>(spec_.bar_color[c]);
          f.depth.at(row, col) = static_cast<float>(spec_.occluder_depth);
          f.mask.at(row, col) = 0;
        } else {
          for (int c = 0; c < 3; ++c) f.captured.at(row, col, c) = static_cast<float>(rgb[c]);
          f.depth.at(row, col) = static_cast<float>(z);
        }
      }
    return f;
  }

 private:
  struct Term {
    int channel;
    double fu, fv, phase;
  };
  SynthSceneSpec spec_;
  std::vector<Term> terms_;
};

/// Renders the training clip at t_i = i / T plus the held-out frames.
/// `seed` perturbs the background texture seed; equal inputs give bit-identical output.
inline SyntheticScene generate_synthetic(SynthSceneSpec spec, std::uint64_t seed = 0) {
  if (seed != 0) spec.background_seed = hash_combine(spec.background_seed, seed);
  const SyntheticSceneModel scene(spec);
  SyntheticScene out;
  auto& ds = out.dataset;
  ds.camera = spec.camera();
  ds.fps = spec.fps;
  ds.depth_scale = spec.depth_scale;
  for (int i = 0; i < spec.frames; ++i) {
    auto f = scene.render(static_cast<double>(i) / spec.frames);
    ds.frames.push_back(std::move(f.captured));
    ds.depths.push_back(std::move(f.depth));
    ds.masks.push_back(std::move(f.mask));
    out.ground_truth.push_back(std::move(f.ground_truth));
    out.ground_truth_depth.push_back(std::move(f.depth_gt));
  }
  for (double t : spec.heldout_times) {
    auto f = scene.render(t);
    out.heldout.push_back({t, std::move(f.captured), std::move(f.ground_truth), std::move(f.depth_gt),
                           std::move(f.mask)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Point clouds

struct ColoredPoint {
  float x = 0, y = 0, z = 0;
  std::uint8_t r = 0, g = 0, b = 0;
};

/// Backprojects every pixel with opacity >= threshold (all pixels when
/// `opacity` is null) from NDC ray depth to a metric camera-space point.
inline std::vector<ColoredPoint> backproject(const ImageF& color, const ImageF& ray_depth,
                                             const Camera& cam, const ImageF* opacity = nullptr,
                                             double threshold = 0.5) {
  if (color.width != ray_depth.width || color.height != ray_depth.height ||
      (opacity && (opacity->width != color.width || opacity->height != color.height)))
    throw InvalidInput("export_pointcloud: image dimensions differ");
  if (color.width != cam.width || color.height != cam.height)
    throw InvalidInput("export_pointcloud: camera does not match images");
  std::vector<ColoredPoint> pts;
  for (int row = 0; row < color.height; ++row)
    for (int col = 0; col < color.width; ++col) {
      if (opacity && opacity->at(row, col) < threshold) continue;
      const double s = std::min<double>(ray_depth.at(row, col), 1.0 - 1e-9);
      const double z = metric_from_ray_depth(s, cam.near);
      ColoredPoint p;
      p.x = static_cast<float>((col + 0.5 - cam.cx) / cam.fx * z);
      p.y = static_cast<float>(-(row + 0.5 - cam.cy) / cam.fy * z);
      p.z = static_cast<float>(-z);
      p.r = static_cast<std::uint8_t>(quantize(color.at(row, col, 0), 255.0));
      p.g = static_cast<std::uint8_t>(quantize(color.at(row, col, 1), 255.0));
      p.b = static_cast<std::uint8_t>(quantize(color.at(row, col, 2), 255.0));
      pts.push_back(p);
    }
  return pts;
}

namespace detail {
template <class T>
void put_le(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}
template <class T>
T get_le(std::istream& is) {
  unsigned char b[sizeof(T)];
  is.read(reinterpret_cast<char*>(b), sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}
}  // namespace detail

/// Binary little-endian PLY: float x, y, z; uchar red, green, blue.
inline void write_ply(const fs::path& path, const std::vector<ColoredPoint>& pts) {
  atomic_write(path, [&](const std::string& tmp) {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ExportError("cannot open '" + tmp + "' for writing");
    f << "ply\nformat binary_little_endian 1.0\nelement vertex " << pts.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (const auto& p : pts) {
      detail::put_le(f, p.x);
      detail::put_le(f, p.y);
      detail::put_le(f, p.z);
      detail::put_le(f, p.r);
      detail::put_le(f, p.g);
      detail::put_le(f, p.b);
    }
    if (!f) throw ExportError("failed writing '" + tmp + "'");
  });
}

/// Reads files produced by write_ply.
inline std::vector<ColoredPoint> read_ply(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t n = 0;
  bool binary_le = false;
  while (std::getline(f, line)) {
    if (line.rfind("format binary_little_endian", 0) == 0) binary_le = true;
    if (line.rfind("element vertex ", 0) == 0) n = std::stoull(line.substr(15));
    if (line == "end_header") break;
  }
  if (!binary_le) throw LoadError("'" + path.string() + "' is not a binary little-endian PLY");
  std::vector<ColoredPoint> pts(n);
  for (auto& p : pts) {
    p.x = detail::get_le<float>(f);
    p.y = detail::get_le<float>(f);
    p.z = detail::get_le<float>(f);
    p.r = detail::get_le<std::uint8_t>(f);
    p.g = detail::get_le<std::uint8_t>(f);
    p.b = detail::get_le<std::uint8_t>(f);
  }
  if (!f) throw LoadError("'" + path.string() + "' is truncated");
  return pts;
}

inline std::size_t export_pointcloud(const fs::path& path, const ImageF& color, const ImageF& ray_depth,
                                     const Camera& cam, const ImageF* opacity = nullptr,
                                     double threshold = 0.5) {
  const auto pts = backproject(color, ray_depth, cam, opacity, threshold);
  write_ply(path, pts);
  return pts.size();
}

}  // namespace drsm
