#include "ndvg/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "ndvg/checkpoint.hpp"
#include "ndvg/metrics.hpp"
#include "ndvg/scene.hpp"
#include "ndvg/training.hpp"

namespace ndvg {
namespace {

// Failure carrying its machine-readable code; rendered as
// `error: <code>: <message>` at the top level.
struct CliError {
  std::string code;
  std::string msg;
  int exit_code;
};

[[noreturn]] void fail(const std::string& code, const std::string& msg, int exit_code = 2) {
  throw CliError{code, msg, exit_code};
}

// Tags any exception escaping `f` with the given error code.
template <typename F>
auto with_code(const char* code, F&& f) {
  try {
    return f();
  } catch (const CliError&) {
    throw;
  } catch (const std::exception& e) {
    fail(code, e.what());
  }
}

int log_level() {
  const char* v = std::getenv("NDVG_LOG");
  if (!v || !*v) return 1;
  return std::atoi(v);
}

RenderOpts<real> opts_from_checkpoint(const LoadedCheckpoint& lc, const Vec3<real>& bg) {
  RenderOpts<real> o;
  o.background = bg;
  const bool fine = lc.model.canonical.stage == Stage::Fine;
  const long long k = kv_integer(lc.extra.config, fine ? "k_target_fine" : "k_target_coarse",
                                 fine ? 192 : 128);
  o.step = lc.model.canonical.density_grid.bbox.diag_norm() / real(k);
  if (lc.extra.deform_mask) o.deform_mask = &*lc.extra.deform_mask;
  if (lc.extra.canon_mask) o.canon_mask = &*lc.extra.canon_mask;
  return o;
}

Camera<double> camera_from_pose_file(const std::string& path, double* time_out) {
  std::ifstream in(path);
  check(in.good(), "cannot open pose file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const std::exception& e) {
    check(false, "pose file '" + path + "' is not valid JSON: " + e.what());
  }
  check(j.contains("camera_angle_x"), "pose file '" + path + "' lacks camera_angle_x");
  check(j.contains("transform_matrix"), "pose file '" + path + "' lacks transform_matrix");
  const auto& tm = j.at("transform_matrix");
  check(tm.is_array() && tm.size() == 4, "pose file transform_matrix must be 4x4");
  Eigen::Matrix4d M;
  for (int r = 0; r < 4; ++r) {
    check(tm[r].is_array() && tm[r].size() == 4, "pose file transform_matrix must be 4x4");
    for (int c = 0; c < 4; ++c) M(r, c) = tm[r][c].get<double>();
  }
  const int w = j.value("w", 64), h = j.value("h", 64);
  if (time_out && j.contains("time")) *time_out = j.at("time").get<double>();
  return Camera<double>::from_fov(w, h, j.at("camera_angle_x").get<double>(), M);
}

int run_gen_scene(const SceneSpec& spec, const std::string& out_dir, std::ostream& out) {
  with_code("data", [&] {
    const GeneratedScene g = gen_scene(spec);
    write_scene_dataset(g, spec, out_dir);
  });
  if (log_level() >= 1)
    out << "wrote " << spec.name << " dataset (" << spec.train_views << " train / "
        << spec.test_views << " test views) to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& data_dir, const std::string& out_dir,
              const std::string& config_path, const std::vector<std::string>& sets,
              bool seed_given, long long seed, std::ostream& out, std::ostream& err) {
  TrainConfig cfg;
  if (!config_path.empty())
    with_code("config", [&] { cfg.apply(parse_kv_file(config_path)); });
  if (!sets.empty()) {
    KvMap kv;
    for (const auto& s : sets) {
      try {
        const auto [k, v] = parse_kv_assignment(s);
        kv[k] = v;
      } catch (const std::exception& e) {
        fail("usage", e.what(), 1);
      }
    }
    with_code("config", [&] { cfg.apply(kv); });
  }
  if (seed_given) cfg.seed = uint32_t(seed);
  const Dataset data = with_code("data", [&] { return load_dataset(data_dir); });
  std::ostream* log = log_level() >= 1 ? &err : nullptr;
  const TrainResult res =
      with_code("runtime", [&] { return train(data, cfg, out_dir, log); });
  out << "checkpoints written to " << out_dir << "\n";
  return 0;
}

int run_render(const std::string& ckpt, const std::string& pose_file,
               const std::string& data_dir, const std::string& split, int frame,
               bool time_given, double time, const std::string& out_path,
               std::ostream& out) {
  const bool by_pose = !pose_file.empty();
  const bool by_frame = frame >= 0;
  if (by_pose == by_frame)
    fail("usage", "give either --pose-file or --frame (with --data)", 1);
  if (by_frame && data_dir.empty())
    fail("usage", "--frame needs --data to resolve the pose", 1);

  const LoadedCheckpoint lc = with_code("io", [&] { return load_checkpoint(ckpt); });
  Camera<double> cam;
  double t = 0.0;
  Vec3<real> bg =
      kv_vec3(lc.extra.config, "resolved_background", Vec3<double>::Zero()).cast<real>();
  if (by_pose) {
    cam = with_code("io", [&] { return camera_from_pose_file(pose_file, &t); });
  } else {
    const Dataset data = with_code("data", [&] { return load_dataset(data_dir); });
    const auto& frames =
        split == "train" ? data.manifest.train_frames : data.manifest.test_frames;
    if (frame >= int(frames.size()))
      fail("usage",
           "frame index " + std::to_string(frame) + " is outside the " + split + " split (" +
               std::to_string(frames.size()) + " frames)",
           1);
    cam = data.camera(frames[frame]);
    t = frames[frame].time;
    bg = data.manifest.background.cast<real>();
  }
  if (time_given) t = time;
  check(t >= 0.0 && t <= 1.0, "render time must lie in [0,1]");

  RenderOpts<real> opts = opts_from_checkpoint(lc, bg);
  const bool use_occ = kv_flag(lc.extra.config, "use_occ", true);
  const Image img = with_code("runtime", [&] {
    return render_image(lc.model, cam.cast<real>(), real(t), opts, true, use_occ);
  });
  with_code("io", [&] { save_png(out_path, img); });
  if (log_level() >= 1) out << "wrote " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data_dir, const std::string& split,
             const std::string& out_path, std::ostream& out) {
  const LoadedCheckpoint lc = with_code("io", [&] { return load_checkpoint(ckpt); });
  const Dataset data = with_code("data", [&] { return load_dataset(data_dir); });
  const bool use_train = split == "train";
  const auto& frames = use_train ? data.manifest.train_frames : data.manifest.test_frames;
  const auto& images = use_train ? data.train_images : data.test_images;
  if (frames.empty()) fail("data", "the " + split + " split has no frames");

  RenderOpts<real> opts = opts_from_checkpoint(lc, data.manifest.background.cast<real>());
  const bool use_occ = kv_flag(lc.extra.config, "use_occ", true);
  std::FILE* csv = std::fopen(out_path.c_str(), "wb");
  if (!csv) fail("io", "cannot open '" + out_path + "' for writing");
  std::fprintf(csv, "frame,psnr,ssim\n");
  double sum_psnr = 0, sum_ssim = 0;
  try {
    for (size_t i = 0; i < frames.size(); ++i) {
      const Camera<real> cam = data.camera(frames[i]).cast<real>();
      const Image img =
          render_image(lc.model, cam, real(frames[i].time), opts, true, use_occ);
      const double p = psnr_capped(img, images[i]);
      const double s = ssim(img, images[i]);
      sum_psnr += p;
      sum_ssim += s;
      std::fprintf(csv, "%zu,%.9g,%.9g\n", i, p, s);
    }
  } catch (...) {
    std::fclose(csv);
    throw;
  }
  std::fclose(csv);
  char line[96];
  std::snprintf(line, sizeof(line), "mean PSNR %.4f / mean SSIM %.4f\n",
                sum_psnr / double(frames.size()), sum_ssim / double(frames.size()));
  out << line;
  return 0;
}

}  // namespace

int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"deformable voxel radiance fields: fit a dynamic scene from posed images "
               "and render it at novel views and times"};
  app.name("ndvg");
  app.require_subcommand(1);
  int threads = 1;  // single-threaded engine; accepted for interface stability

  SceneSpec spec;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-scene", "write a synthetic benchmark dataset");
  gen->add_option("--spec", spec.name,
                  "scene name: translating-sphere | bouncing-ball | occluder | static")
      ->required();
  gen->add_option("--out", gen_out, "output dataset directory")->required();
  gen->add_option("--seed", spec.seed, "camera jitter seed");
  gen->add_option("--views", spec.train_views, "training views")->check(CLI::PositiveNumber);
  gen->add_option("--times", spec.time_steps, "distinct time steps")
      ->check(CLI::PositiveNumber);
  gen->add_option("--test-views", spec.test_views, "held-out views")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--width", spec.width, "image width")->check(CLI::PositiveNumber);
  gen->add_option("--height", spec.height, "image height")->check(CLI::PositiveNumber);
  gen->add_option("--threads", threads, "worker threads");

  std::string train_data, train_out, train_config;
  std::vector<std::string> train_sets;
  long long train_seed = 0;
  auto* tr = app.add_subcommand("train", "optimize a model on a dataset");
  tr->add_option("--data", train_data, "dataset directory")->required();
  tr->add_option("--out", train_out, "output directory for checkpoints and the loss log")
      ->required();
  tr->add_option("--config", train_config, "key=value config file");
  tr->add_option("--set", train_sets, "config override key=value (repeatable)");
  auto* seed_opt = tr->add_option("--seed", train_seed, "RNG seed (overrides config)");
  tr->add_option("--threads", threads, "worker threads");

  std::string r_ckpt, r_pose, r_data, r_split = "test", r_out = "render.png";
  int r_frame = -1;
  double r_time = 0.0;
  auto* rd = app.add_subcommand("render", "render one view from a checkpoint");
  rd->add_option("--ckpt", r_ckpt, "checkpoint file")->required();
  rd->add_option("--pose-file", r_pose, "JSON camera pose (camera_angle_x, "
                                        "transform_matrix, optional w/h/time)");
  rd->add_option("--frame", r_frame, "frame index into the dataset split")
      ->check(CLI::NonNegativeNumber);
  rd->add_option("--data", r_data, "dataset directory (with --frame)");
  rd->add_option("--split", r_split, "split for --frame")
      ->check(CLI::IsMember({"train", "test"}));
  auto* time_opt = rd->add_option("--time", r_time, "render time");
  time_opt->check(CLI::Range(0.0, 1.0));
  rd->add_option("--out", r_out, "output PNG path");
  rd->add_option("--seed", "unused; accepted for interface uniformity");
  rd->add_option("--threads", threads, "worker threads");

  std::string e_ckpt, e_data, e_split = "test", e_out = "metrics.csv";
  auto* ev = app.add_subcommand("eval", "compute image metrics over a dataset split");
  ev->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  ev->add_option("--data", e_data, "dataset directory")->required();
  ev->add_option("--split", e_split, "dataset split")
      ->check(CLI::IsMember({"train", "test"}));
  ev->add_option("--out", e_out, "metrics CSV path");
  ev->add_option("--seed", "unused; accepted for interface uniformity");
  ev->add_option("--threads", threads, "worker threads");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (args.empty()) err << app.help();
    err << "error: usage: " << e.what() << "\n";
    return 1;
  }

  try {
    if (gen->parsed()) return run_gen_scene(spec, gen_out, out);
    if (tr->parsed())
      return run_train(train_data, train_out, train_config, train_sets,
                       seed_opt->count() > 0, train_seed, out, err);
    if (rd->parsed())
      return run_render(r_ckpt, r_pose, r_data, r_split, r_frame, time_opt->count() > 0,
                        r_time, r_out, out);
    if (ev->parsed()) return run_eval(e_ckpt, e_data, e_split, e_out, out);
    err << "error: usage: a subcommand is required\n";
    return 1;
  } catch (const CliError& e) {
    err << "error: " << e.code << ": " << e.msg << "\n";
    return e.exit_code;
  } catch (const std::exception& e) {
    err << "error: runtime: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ndvg
