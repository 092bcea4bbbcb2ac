// drsm: command-line front end.
//
//   drsm synth   --out-dir DATA
//   drsm train   --data DATA --out-dir RUN [--config run.toml] [overrides]
//   drsm render  --data DATA --checkpoint RUN/checkpoint.bin --times 0.1,0.5 --out-dir OUT
//   drsm eval    --data DATA --checkpoint RUN/checkpoint.bin --out-dir OUT
//   drsm export-pointcloud --data DATA --checkpoint CKPT --time 0.5 --out-dir OUT
//   drsm grad-check
//
// Exit codes: 0 success, 1 runtime failure, 2 usage / configuration error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "drsm/checkpoint.hpp"
#include "drsm/evaluation.hpp"
#include "drsm/grad_check.hpp"
#include "drsm/png_io.hpp"
#include "drsm/sampler.hpp"
#include "drsm/scene_io.hpp"
#include "drsm/training.hpp"

namespace fs = std::filesystem;
using namespace drsm;

namespace {

struct CommonOptions {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string out_dir = ".";
  std::string data_dir;
  std::string checkpoint;
  int n_samples = 0;  // 0: take the checkpoint's value
};

struct TrainOptions {
  TrainConfig cfg;
  std::string clamp_mode = "max";
  bool no_isdm = false;
  bool no_depth_loss = false;
  bool single_scale = false;
  bool dump_maps = false;
  bool quiet = false;
};

struct SynthOptions {
  SynthSceneSpec spec;
  bool no_occluder = false;
  bool explicit_amplitude_x = false, explicit_amplitude_y = false;
};

void add_common(CLI::App* cmd, CommonOptions& c, bool needs_data, bool needs_checkpoint) {
  cmd->add_option("--seed", c.seed, "Seed for every random choice");
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out-dir", c.out_dir, "Output directory");
  if (needs_data) cmd->add_option("--data", c.data_dir, "Dataset directory")->required();
  if (needs_checkpoint) {
    cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint file")->required();
    cmd->add_option("--n-samples", c.n_samples, "Samples per ray (default: training value)");
  }
}

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  auto& c = o.cfg;
  cmd->add_option("--iterations", c.iterations)->check(CLI::PositiveNumber);
  cmd->add_option("--batch-rays", c.batch_rays)->check(CLI::PositiveNumber);
  cmd->add_option("--n-samples", c.n_samples)->check(CLI::PositiveNumber);
  cmd->add_option("--lr", c.adam.learning_rate);
  cmd->add_flag("--cosine-decay", c.cosine_decay);
  cmd->add_option("--checkpoint-every", c.checkpoint_every);
  cmd->add_option("--scales", c.planes.scales)->delimiter(',');
  cmd->add_option("--feature-width", c.planes.feature_width);
  cmd->add_option("--hidden-width", c.decoder.hidden_width);
  cmd->add_option("--hidden-layers", c.decoder.hidden_layers);
  cmd->add_option("--point-frequencies", c.decoder.encoder.point_frequencies);
  cmd->add_option("--direction-frequencies", c.decoder.encoder.direction_frequencies);
  cmd->add_option("--alpha", c.sampler.alpha);
  cmd->add_option("--tau", c.sampler.tau);
  cmd->add_option("--epsilon", c.sampler.epsilon);
  cmd->add_option("--window-stride", c.sampler.window_stride);
  cmd->add_option("--clamp-mode", o.clamp_mode)->check(CLI::IsMember({"min", "max"}));
  cmd->add_option("--lambda-depth", c.weights.depth);
  cmd->add_option("--lambda-tv2d", c.weights.tv2d);
  cmd->add_option("--lambda-tv1d", c.weights.tv1d);
  cmd->add_option("--lambda-smooth", c.weights.smooth);
  cmd->add_flag("--no-isdm", o.no_isdm, "Uniform ray sampling over unoccluded pixels");
  cmd->add_flag("--no-depth-loss", o.no_depth_loss, "Drop the depth term");
  cmd->add_flag("--single-scale", o.single_scale, "Keep only the coarsest plane scale");
  cmd->add_flag("--dump-maps", o.dump_maps, "Write sampling maps as 16-bit PNG heatmaps");
  cmd->add_flag("--quiet", o.quiet, "No per-iteration progress on stderr");
}

fs::path ensure_dir(const std::string& dir) {
  fs::create_directories(dir);
  return dir;
}

Camera dataset_camera(const std::string& dir) { return camera_from_json(read_manifest(dir).at("camera")); }

// The default scene is laid out for 64 x 64; other sizes scale its pixel
// lengths. Explicit amplitudes are taken as given.
void rescale_scene(SynthOptions& o) {
  const SynthSceneSpec base;
  auto& s = o.spec;
  const double sx = static_cast<double>(s.width) / base.width, sy = static_cast<double>(s.height) / base.height;
  s.focal = base.focal * sx;
  s.center_x = base.center_x * sx;
  s.center_y = base.center_y * sy;
  s.disk_radius = base.disk_radius * std::min(sx, sy);
  s.bar_width = base.bar_width * sx;
  if (!o.explicit_amplitude_x) s.amplitude_x = base.amplitude_x * sx;
  if (!o.explicit_amplitude_y) s.amplitude_y = base.amplitude_y * sy;
}

int cmd_synth(const CommonOptions& c, SynthOptions& o) {
  rescale_scene(o);
  if (o.no_occluder) o.spec.occluder = false;
  o.spec.validate();
  const auto scene = generate_synthetic(o.spec, c.seed);
  save_synthetic(ensure_dir(c.out_dir), scene);
  std::printf("wrote %d frames and %zu held-out frames to %s\n", scene.dataset.num_frames(),
              scene.heldout.size(), c.out_dir.c_str());
  return 0;
}

void write_heatmap(const fs::path& path, const WeightMap& w, int width, int height) {
  double peak = 0.0;
  for (double v : w) peak = std::max(peak, v);
  ImageF img(width, height, 1);
  for (std::size_t i = 0; i < w.size(); ++i) img.data[i] = static_cast<float>(peak > 0 ? w[i] / peak : 0.0);
  atomic_write(path, [&](const std::string& tmp) { write_png16(tmp, img); });
}

int cmd_train(const CommonOptions& c, TrainOptions& o) {
  auto& cfg = o.cfg;
  cfg.seed = c.seed;
  cfg.workers = c.workers;
  cfg.sampler.clamp_mode = parse_clamp_mode(o.clamp_mode);
  if (o.no_isdm) cfg.use_isdm = false;
  if (o.no_depth_loss) cfg.use_depth_loss = false;
  if (o.single_scale) cfg.planes.scales.resize(1);
  cfg.validate();

  const Dataset data = load_dataset(c.data_dir);
  const fs::path out = ensure_dir(c.out_dir);
  Trainer<float> trainer(data, cfg);
  for (const auto& w : trainer.warnings()) std::fprintf(stderr, "warning: %s\n", w.c_str());

  if (o.dump_maps && cfg.use_isdm) {
    const fs::path maps = ensure_dir((out / "maps").string());
    const auto& m = trainer.importance_maps();
    for (int i = 0; i < data.num_frames(); ++i) {
      write_heatmap(maps / indexed_name("occlusion", i), m.occlusion[i], data.camera.width, data.camera.height);
      write_heatmap(maps / indexed_name("importance", i), m.combined[i], data.camera.width, data.camera.height);
    }
  }

  // Rows are appended as training runs; the file only replaces metrics.csv once
  // the run has finished.
  const fs::path csv = out / "metrics.csv";
  const fs::path csv_tmp = csv.string() + ".tmp";
  std::ofstream log(csv_tmp);
  if (!log) throw ExportError("cannot open '" + csv_tmp.string() + "' for writing");
  log << csv_header() << '\n';

  TrainHooks hooks;
  hooks.on_iteration = [&](const IterationLog& r) {
    log << csv_row(r) << '\n';
    if (!o.quiet && (r.iteration % 100 == 0 || r.iteration + 1 == cfg.iterations))
      std::fprintf(stderr, "iter %5d  color %.6f  depth %.6f  total %.6f  (%.0f ms)\n", r.iteration,
                   r.parts.color, r.parts.depth, r.total, r.wall_ms);
  };
  hooks.on_checkpoint = [&](int done) {
    if (done < cfg.iterations) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_%06d.bin", done);
      save_checkpoint(out / name, cfg, trainer.model());
    }
  };
  try {
    train(trainer, hooks);
  } catch (const TrainingDiverged&) {
    log.close();
    save_checkpoint(out / "diverged.bin", cfg, trainer.model());
    std::fprintf(stderr, "state at divergence written to %s\n", (out / "diverged.bin").c_str());
    throw;
  }
  log.close();
  if (!log) throw ExportError("failed writing '" + csv_tmp.string() + "'");
  fs::rename(csv_tmp, csv);
  save_checkpoint(out / "checkpoint.bin", cfg, trainer.model());
  for (std::size_t i = 0; i < trainer.warnings().size(); ++i)
    if (trainer.warnings()[i].rfind("iteration", 0) == 0)
      std::fprintf(stderr, "warning: %s\n", trainer.warnings()[i].c_str());
  std::printf("wrote %s and %s\n", (out / "checkpoint.bin").c_str(), csv.c_str());
  return 0;
}

int samples_for(const CommonOptions& c, const Checkpoint& ck) {
  return c.n_samples > 0 ? c.n_samples : ck.config.n_samples;
}

int cmd_render(const CommonOptions& c, const std::vector<double>& times) {
  const Camera cam = dataset_camera(c.data_dir);
  const auto ck = load_checkpoint(c.checkpoint);
  const fs::path out = ensure_dir(c.out_dir);
  int index = 0;
  for (double t : times) {
    if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("render: time " + std::to_string(t) + " outside [0,1]");
    const auto fr = render_frame(ck.model, cam, t, samples_for(c, ck), c.workers);
    const fs::path color_path = out / indexed_name("render", index);
    const fs::path depth_path = out / indexed_name("render_depth", index);
    atomic_write(color_path, [&](const std::string& tmp) { write_png8(tmp, fr.color); });
    atomic_write(depth_path, [&](const std::string& tmp) { write_png16(tmp, fr.depth); });
    const nlohmann::json side{{"t", t},
                              {"color", color_path.filename().string()},
                              {"depth", depth_path.filename().string()},
                              {"depth_space", "ndc_ray_parameter"},
                              {"depth_scale", 65535.0},
                              {"near", cam.near}};
    write_text_atomic(out / (color_path.stem().string() + ".json"), side.dump(2) + "\n");
    ++index;
  }
  std::printf("rendered %d frame(s) to %s\n", index, c.out_dir.c_str());
  return 0;
}

int cmd_eval(const CommonOptions& c) {
  const Camera cam = dataset_camera(c.data_dir);
  const auto heldout = load_heldout(c.data_dir);
  if (heldout.empty()) throw LoadError("eval: dataset has no held-out frames");
  const auto ck = load_checkpoint(c.checkpoint);
  const auto rep = evaluate(ck.model, cam, std::span<const HeldoutFrame>(heldout), samples_for(c, ck), c.workers);
  const fs::path out = ensure_dir(c.out_dir) / "eval.csv";
  const std::string csv = eval_csv(rep);
  write_text_atomic(out, csv);
  std::fputs(csv.c_str(), stdout);
  return 0;
}

int cmd_export(const CommonOptions& c, double t, double threshold) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidInput("export-pointcloud: time outside [0,1]");
  const Camera cam = dataset_camera(c.data_dir);
  const auto ck = load_checkpoint(c.checkpoint);
  const auto fr = render_frame(ck.model, cam, t, samples_for(c, ck), c.workers);
  const fs::path out = ensure_dir(c.out_dir) / "pointcloud.ply";
  const auto n = export_pointcloud(out, fr.color, fr.depth, cam, &fr.opacity, threshold);
  std::printf("wrote %zu points to %s\n", n, out.c_str());
  return 0;
}

int cmd_grad_check(std::uint64_t seed, int trials, const std::vector<std::string>& only) {
  bool ok = true;
  for (const auto& name : grad_check_components()) {
    if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
    const auto r = grad_check(name, seed, trials);
    std::printf("%-13s max_rel_err %.3e  tol %.0e  checked %zu  skipped %zu  %s\n", name.c_str(),
                r.max_rel_error, r.tolerance, r.checked, r.skipped, r.passed() ? "ok" : "FAILED");
    if (!r.passed()) {
      std::printf("  worst: %s\n", r.worst.c_str());
      ok = false;
    }
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic scene reconstruction from stationary-camera RGBD video"};
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML-style key = value file; flags override it");
  app.fallthrough();  // lets `drsm train --config f` reach the app-level option

  CommonOptions common;
  SynthOptions synth;
  TrainOptions train_opts;
  std::vector<double> times;
  double export_time = 0.5, threshold = 0.5;
  int trials = 20;
  std::vector<std::string> only;

  auto* synth_cmd = app.add_subcommand("synth", "Generate the synthetic benchmark clip");
  add_common(synth_cmd, common, false, false);
  synth_cmd->add_option("--width", synth.spec.width);
  synth_cmd->add_option("--height", synth.spec.height);
  synth_cmd->add_option("--frames", synth.spec.frames);
  synth_cmd->add_option("--amplitude-x", synth.spec.amplitude_x);
  synth_cmd->add_option("--amplitude-y", synth.spec.amplitude_y);
  synth_cmd->add_flag("--no-occluder", synth.no_occluder);

  auto* train_cmd = app.add_subcommand("train", "Fit a scene model to a dataset");
  add_common(train_cmd, common, true, false);
  add_train_options(train_cmd, train_opts);

  auto* render_cmd = app.add_subcommand("render", "Render frames from a checkpoint");
  add_common(render_cmd, common, true, true);
  render_cmd->add_option("--times", times, "Normalized timestamps")->delimiter(',')->required();

  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint on the held-out frames");
  add_common(eval_cmd, common, true, true);

  auto* export_cmd = app.add_subcommand("export-pointcloud", "Write a PLY point cloud for one timestamp");
  add_common(export_cmd, common, true, true);
  export_cmd->add_option("--time", export_time);
  export_cmd->add_option("--opacity-threshold", threshold);

  auto* grad_cmd = app.add_subcommand("grad-check", "Verify analytic gradients against finite differences");
  grad_cmd->add_option("--seed", common.seed);
  grad_cmd->add_option("--trials", trials)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--only", only)->delimiter(',')->check(CLI::IsMember(grad_check_components()));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth_cmd) {
      synth.explicit_amplitude_x = synth_cmd->count("--amplitude-x") > 0;
      synth.explicit_amplitude_y = synth_cmd->count("--amplitude-y") > 0;
      return cmd_synth(common, synth);
    }
    if (*train_cmd) return cmd_train(common, train_opts);
    if (*render_cmd) return cmd_render(common, times);
    if (*eval_cmd) return cmd_eval(common);
    if (*export_cmd) return cmd_export(common, export_time, threshold);
    if (*grad_cmd) return cmd_grad_check(common.seed, trials, only);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
