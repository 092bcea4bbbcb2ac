#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "drsm/scene_io.hpp"
#include "drsm/training.hpp"

namespace testing_support {

/// Small synthetic scene that trains in well under a second per iteration.
inline drsm::SynthSceneSpec tiny_spec() {
  drsm::SynthSceneSpec s;
  s.width = 16;
  s.height = 16;
  s.frames = 6;
  s.focal = 16.0;
  s.center_x = 8.0;
  s.center_y = 8.0;
  s.amplitude_x = 3.0;
  s.amplitude_y = 1.5;
  s.disk_radius = 3.0;
  s.bar_width = 3.0;
  s.heldout_times = {0.25, 0.75};
  return s;
}

inline drsm::TrainConfig tiny_config() {
  drsm::TrainConfig c;
  c.iterations = 3;
  c.batch_rays = 64;
  c.n_samples = 16;
  c.planes.scales = {4, 8};
  c.planes.feature_width = 4;
  c.decoder.hidden_width = 16;
  c.seed = 3;
  return c;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("drsm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace testing_support
