#pragma once

// Checkpoint files and the JSON form of the training configuration.
//
// Layout (all integers uint32, all values float32, little-endian):
//   "DRSMCKPT" | version | config_len | config JSON (config_len bytes)
//   plane segment:   scale count | per scale: N, W | per scale, planes XY XZ YZ XT YT ZT,
//                    each N*N*W values in node order
//   decoder segment: for geometry then color: layer count | per layer: rows, cols,
//                    weights (row-major), bias (rows values)

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"

#include "drsm/core.hpp"
#include "drsm/renderer.hpp"
#include "drsm/scene_io.hpp"
#include "drsm/training.hpp"

namespace drsm {

inline constexpr char kCheckpointMagic[8] = {'D', 'R', 'S', 'M', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["iterations"] = c.iterations;
  j["batch_rays"] = c.batch_rays;
  j["learning_rate"] = c.adam.learning_rate;
  j["adam_beta1"] = c.adam.beta1;
  j["adam_beta2"] = c.adam.beta2;
  j["adam_epsilon"] = c.adam.epsilon;
  j["cosine_decay"] = c.cosine_decay;
  j["n_samples"] = c.n_samples;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["checkpoint_every"] = c.checkpoint_every;
  j["scales"] = c.planes.scales;
  j["feature_width"] = c.planes.feature_width;
  j["point_frequencies"] = c.decoder.encoder.point_frequencies;
  j["direction_frequencies"] = c.decoder.encoder.direction_frequencies;
  j["hidden_width"] = c.decoder.hidden_width;
  j["hidden_layers"] = c.decoder.hidden_layers;
  j["geometry_feature_dim"] = c.decoder.geometry_feature_dim;
  j["alpha"] = c.sampler.alpha;
  j["tau"] = c.sampler.tau;
  j["epsilon"] = c.sampler.epsilon;
  j["clamp_mode"] = to_string(c.sampler.clamp_mode);
  j["window_stride"] = c.sampler.window_stride;
  j["lambda_depth"] = c.weights.depth;
  j["lambda_tv2d"] = c.weights.tv2d;
  j["lambda_tv1d"] = c.weights.tv1d;
  j["lambda_smooth"] = c.weights.smooth;
  j["isdm"] = c.use_isdm;
  j["depth_loss"] = c.use_depth_loss;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.iterations = j.value("iterations", c.iterations);
  c.batch_rays = j.value("batch_rays", c.batch_rays);
  c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
  c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
  c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
  c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
  c.cosine_decay = j.value("cosine_decay", c.cosine_decay);
  c.n_samples = j.value("n_samples", c.n_samples);
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.planes.scales = j.value("scales", c.planes.scales);
  c.planes.feature_width = j.value("feature_width", c.planes.feature_width);
  c.decoder.encoder.point_frequencies = j.value("point_frequencies", c.decoder.encoder.point_frequencies);
  c.decoder.encoder.direction_frequencies =
      j.value("direction_frequencies", c.decoder.encoder.direction_frequencies);
  c.decoder.hidden_width = j.value("hidden_width", c.decoder.hidden_width);
  c.decoder.hidden_layers = j.value("hidden_layers", c.decoder.hidden_layers);
  c.decoder.geometry_feature_dim = j.value("geometry_feature_dim", c.decoder.geometry_feature_dim);
  c.sampler.alpha = j.value("alpha", c.sampler.alpha);
  c.sampler.tau = j.value("tau", c.sampler.tau);
  c.sampler.epsilon = j.value("epsilon", c.sampler.epsilon);
  c.sampler.clamp_mode = parse_clamp_mode(j.value("clamp_mode", std::string(to_string(c.sampler.clamp_mode))));
  c.sampler.window_stride = j.value("window_stride", c.sampler.window_stride);
  c.weights.depth = j.value("lambda_depth", c.weights.depth);
  c.weights.tv2d = j.value("lambda_tv2d", c.weights.tv2d);
  c.weights.tv1d = j.value("lambda_tv1d", c.weights.tv1d);
  c.weights.smooth = j.value("lambda_smooth", c.weights.smooth);
  c.use_isdm = j.value("isdm", c.use_isdm);
  c.use_depth_loss = j.value("depth_loss", c.use_depth_loss);
  return c;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
inline std::uint32_t get_u32(std::istream& is) { return get_le<std::uint32_t>(is); }

template <class S>
void put_floats(std::ostream& os, const S* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) put_le(os, static_cast<float>(data[i]));
}

template <class S>
void get_floats(std::istream& is, S* data, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<S>(get_le<float>(is));
}

}  // namespace detail

template <class S>
void write_plane_segment(std::ostream& os, const FeaturePlaneSet<S>& planes) {
  detail::put_u32(os, static_cast<std::uint32_t>(planes.num_scales()));
  for (std::size_t s = 0; s < planes.num_scales(); ++s) {
    detail::put_u32(os, static_cast<std::uint32_t>(planes.config.scales[s]));
    detail::put_u32(os, static_cast<std::uint32_t>(planes.config.feature_width));
  }
  planes.for_each_plane([&](std::size_t, int, const FeaturePlane<S>& p) {
    detail::put_floats(os, p.values.data(), p.values.size());
  });
}

template <class S>
FeaturePlaneSet<S> read_plane_segment(std::istream& is) {
  PlaneConfig cfg;
  cfg.scales.clear();
  const std::uint32_t n = detail::get_u32(is);
  if (!is || n == 0 || n > 64) throw LoadError("checkpoint: bad plane segment header");
  for (std::uint32_t s = 0; s < n; ++s) {
    cfg.scales.push_back(static_cast<int>(detail::get_u32(is)));
    const int w = static_cast<int>(detail::get_u32(is));
    if (s > 0 && w != cfg.feature_width) throw LoadError("checkpoint: inconsistent feature width");
    cfg.feature_width = w;
  }
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
  FeaturePlaneSet<S> planes(cfg);
  planes.for_each_plane([&](std::size_t, int, FeaturePlane<S>& p) {
    detail::get_floats(is, p.values.data(), p.values.size());
  });
  if (!is) throw LoadError("checkpoint: truncated plane segment");
  return planes;
}

template <class S>
void write_mlp(std::ostream& os, const Mlp<S>& net) {
  detail::put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    detail::put_u32(os, static_cast<std::uint32_t>(l.weight.rows()));
    detail::put_u32(os, static_cast<std::uint32_t>(l.weight.cols()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) detail::put_le(os, static_cast<float>(l.weight(r, c)));
    detail::put_floats(os, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
}

template <class S>
void read_mlp_into(std::istream& is, Mlp<S>& net) {
  const std::uint32_t n = detail::get_u32(is);
  if (!is || n != net.layers.size()) throw LoadError("checkpoint: decoder layer count mismatch");
  for (auto& l : net.layers) {
    const std::uint32_t rows = detail::get_u32(is), cols = detail::get_u32(is);
    if (!is || rows != l.weight.rows() || cols != l.weight.cols())
      throw LoadError("checkpoint: decoder layer shape mismatch");
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = static_cast<S>(detail::get_le<float>(is));
    detail::get_floats(is, l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  }
  if (!is) throw LoadError("checkpoint: truncated decoder segment");
}

struct Checkpoint {
  TrainConfig config;
  SceneModel<float> model;
};

template <class S>
void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const SceneModel<S>& model) {
  atomic_write(path, [&](const std::string& tmp) {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw ExportError("cannot open '" + tmp + "' for writing");
    f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u32(f, kCheckpointVersion);
    const std::string echo = to_json(cfg).dump();
    detail::put_u32(f, static_cast<std::uint32_t>(echo.size()));
    f.write(echo.data(), static_cast<std::streamsize>(echo.size()));
    write_plane_segment(f, model.planes);
    write_mlp(f, model.decoder.geometry);
    write_mlp(f, model.decoder.color);
    if (!f) throw ExportError("failed writing checkpoint '" + tmp + "'");
  });
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  f.read(magic, sizeof(magic));
  if (!f || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw LoadError("'" + path.string() + "' is not a checkpoint");
  if (detail::get_u32(f) != kCheckpointVersion) throw LoadError("checkpoint: unsupported version");
  const std::uint32_t len = detail::get_u32(f);
  std::string echo(len, '\0');
  f.read(echo.data(), len);
  if (!f) throw LoadError("checkpoint: truncated config");
  Checkpoint ck;
  try {
    ck.config = train_config_from_json(nlohmann::json::parse(echo));
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint: bad config echo: ") + e.what());
  }
  ck.model.planes = read_plane_segment<float>(f);
  ck.model.decoder = make_decoder<float>(ck.config.decoder, ck.model.planes.fused_width());
  read_mlp_into(f, ck.model.decoder.geometry);
  read_mlp_into(f, ck.model.decoder.color);
  ck.config.planes = ck.model.planes.config;
  return ck;
}

}  // namespace drsm
