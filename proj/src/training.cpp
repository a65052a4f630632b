#include "ndvg/training.hpp"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

#include "ndvg/adam.hpp"
#include "ndvg/checkpoint.hpp"

namespace ndvg {

void TrainConfig::validate() const {
  check(coarse_iters >= 0 && fine_iters >= 0, "iteration counts must be >= 0");
  check(rays_per_iter >= 1, "rays_per_iter must be >= 1");
  check(deform_voxels_coarse >= 8 && deform_voxels_fine >= 8 && canon_voxels_coarse >= 8 &&
            canon_voxels_fine >= 8,
        "voxel budgets must be >= 8");
  check(deform_channels >= 1, "deform_channels must be >= 1");
  check(lr_grid > 0 && lr_mlp > 0, "learning rates must be positive");
  check(alpha_init > 0 && alpha_init < 1, "alpha_init must lie in (0,1)");
  check(alpha_thresh > 0 && alpha_thresh < 1, "alpha_thresh must lie in (0,1)");
  check(ramp_frac >= 0 && ramp_frac <= 1, "ramp_frac must lie in [0,1]");
  check(k_target_coarse >= 1 && k_target_fine >= 1, "sample budgets must be >= 1");
  check(mask_res >= 2, "mask_res must be >= 2");
  check(t_can >= 0 && t_can <= 1, "t_can must lie in [0,1]");
  check(ptc_top_n >= 1, "ptc_top_n must be >= 1");
  check(log_every >= 1, "log_every must be >= 1");
  bbox.validate();
}

void TrainConfig::apply(const KvMap& kv) {
  static const std::set<std::string> known = {
      "coarse_iters",   "fine_iters",          "rays_per_iter",
      "deform_voxels_coarse", "deform_voxels_fine", "canon_voxels_coarse",
      "canon_voxels_fine",    "deform_channels", "lr_grid",
      "lr_mlp",         "alpha_init",          "alpha_thresh",
      "ramp_frac",      "k_target_coarse",     "k_target_fine",
      "mask_res",       "t_can",               "large_motion",
      "use_occ",        "ptc_top_n",           "log_every",
      "seed",           "bbox_min",            "bbox_max",
      "background"};
  for (const auto& [k, v] : kv)
    check(known.count(k) != 0, "unknown config key '" + k + "'");
  coarse_iters = int(kv_integer(kv, "coarse_iters", coarse_iters));
  fine_iters = int(kv_integer(kv, "fine_iters", fine_iters));
  rays_per_iter = int(kv_integer(kv, "rays_per_iter", rays_per_iter));
  deform_voxels_coarse = kv_integer(kv, "deform_voxels_coarse", deform_voxels_coarse);
  deform_voxels_fine = kv_integer(kv, "deform_voxels_fine", deform_voxels_fine);
  canon_voxels_coarse = kv_integer(kv, "canon_voxels_coarse", canon_voxels_coarse);
  canon_voxels_fine = kv_integer(kv, "canon_voxels_fine", canon_voxels_fine);
  deform_channels = int(kv_integer(kv, "deform_channels", deform_channels));
  lr_grid = real(kv_number(kv, "lr_grid", lr_grid));
  lr_mlp = real(kv_number(kv, "lr_mlp", lr_mlp));
  alpha_init = real(kv_number(kv, "alpha_init", alpha_init));
  alpha_thresh = real(kv_number(kv, "alpha_thresh", alpha_thresh));
  ramp_frac = real(kv_number(kv, "ramp_frac", ramp_frac));
  k_target_coarse = int(kv_integer(kv, "k_target_coarse", k_target_coarse));
  k_target_fine = int(kv_integer(kv, "k_target_fine", k_target_fine));
  mask_res = int(kv_integer(kv, "mask_res", mask_res));
  t_can = real(kv_number(kv, "t_can", t_can));
  large_motion = kv_flag(kv, "large_motion", large_motion);
  use_occ = kv_flag(kv, "use_occ", use_occ);
  ptc_top_n = int(kv_integer(kv, "ptc_top_n", ptc_top_n));
  log_every = int(kv_integer(kv, "log_every", log_every));
  seed = uint32_t(kv_integer(kv, "seed", (long long)seed));
  if (kv.count("bbox_min") || kv.count("bbox_max")) {
    bbox.min = kv_vec3(kv, "bbox_min", bbox.min.cast<double>()).cast<real>();
    bbox.max = kv_vec3(kv, "bbox_max", bbox.max.cast<double>()).cast<real>();
    bbox_from_config = true;
  }
  if (kv.count("background"))
    background = kv_vec3(kv, "background", Vec3<double>::Zero()).cast<real>();
  validate();
}

KvMap TrainConfig::to_kv() const {
  auto num = [](double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  KvMap kv;
  kv["coarse_iters"] = std::to_string(coarse_iters);
  kv["fine_iters"] = std::to_string(fine_iters);
  kv["rays_per_iter"] = std::to_string(rays_per_iter);
  kv["deform_voxels_coarse"] = std::to_string(deform_voxels_coarse);
  kv["deform_voxels_fine"] = std::to_string(deform_voxels_fine);
  kv["canon_voxels_coarse"] = std::to_string(canon_voxels_coarse);
  kv["canon_voxels_fine"] = std::to_string(canon_voxels_fine);
  kv["deform_channels"] = std::to_string(deform_channels);
  kv["lr_grid"] = num(lr_grid);
  kv["lr_mlp"] = num(lr_mlp);
  kv["alpha_init"] = num(alpha_init);
  kv["alpha_thresh"] = num(alpha_thresh);
  kv["ramp_frac"] = num(ramp_frac);
  kv["k_target_coarse"] = std::to_string(k_target_coarse);
  kv["k_target_fine"] = std::to_string(k_target_fine);
  kv["mask_res"] = std::to_string(mask_res);
  kv["t_can"] = num(t_can);
  kv["large_motion"] = large_motion ? "1" : "0";
  kv["use_occ"] = use_occ ? "1" : "0";
  kv["ptc_top_n"] = std::to_string(ptc_top_n);
  kv["log_every"] = std::to_string(log_every);
  kv["seed"] = std::to_string(seed);
  kv["bbox_min"] = format_vec3(bbox.min.cast<double>());
  kv["bbox_max"] = format_vec3(bbox.max.cast<double>());
  if (background) kv["background"] = format_vec3(background->cast<double>());
  return kv;
}

std::vector<int> progressive_time_window(int iter, int ramp_end, double t_can,
                                         const std::vector<double>& times) {
  check(!times.empty(), "the time window needs at least one frame");
  std::vector<int> out;
  if (ramp_end <= 0 || iter >= ramp_end) {
    out.resize(times.size());
    for (size_t i = 0; i < times.size(); ++i) out[i] = int(i);
    return out;
  }
  double full = 0;
  for (double t : times) full = std::max(full, std::abs(t - t_can));
  const double radius = full * double(iter) / double(ramp_end);
  for (size_t i = 0; i < times.size(); ++i)
    if (std::abs(times[i] - t_can) <= radius) out.push_back(int(i));
  if (out.empty()) {
    // no frame sits exactly at the canonical time; admit the nearest ones
    double best = std::numeric_limits<double>::max();
    for (double t : times) best = std::min(best, std::abs(t - t_can));
    for (size_t i = 0; i < times.size(); ++i)
      if (std::abs(times[i] - t_can) <= best) out.push_back(int(i));
  }
  return out;
}

namespace {

// Warps a point set at one time. Off the canonical time this is one matrix
// product over all points; at it, the exact bypass.
std::vector<DeformResult<real>> warp_points(const DeformationField<real>& field,
                                            const std::vector<Vec3<real>>& pts, real t) {
  std::vector<DeformResult<real>> out(pts.size());
  if (t == field.t_can) {
    for (size_t i = 0; i < pts.size(); ++i) {
      out[i].p_prime = pts[i];
      out[i].dp = Vec3<real>::Zero();
      out[i].w_occ = real(1);
      out[i].bypass = true;
    }
    return out;
  }
  const int dp_pos = posenc_dim(3, field.pos_enc);
  const int dp_time = posenc_dim(1, field.time_enc);
  VecX<real> tenc(dp_time);
  posenc(&t, 1, field.time_enc, tenc.data());
  MatX<real> X(field.input_dim(), pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    real* col = X.data() + i * size_t(X.rows());
    const Vec3<real> p_norm = normalize_to_box(field.grid.bbox, pts[i]);
    posenc(p_norm.data(), 3, field.pos_enc, col);
    std::copy(tenc.data(), tenc.data() + dp_time, col + dp_pos);
    field.grid.interp(pts[i], col + dp_pos + dp_time);
  }
  const MatX<real> Y = mlp_forward(field.net, X);
  for (size_t i = 0; i < pts.size(); ++i) {
    out[i].dp = Vec3<real>(Y(0, i), Y(1, i), Y(2, i));
    out[i].w_occ = Y(3, i);
    out[i].p_prime = pts[i] + out[i].dp;
    out[i].bypass = false;
  }
  return out;
}

real gated_alpha(const Model<real>& model, const DeformResult<real>& def, real delta_ref) {
  const real sigma = density(model.canonical, def.p_prime);
  return -std::expm1(-sigma * def.w_occ * delta_ref);
}

std::vector<uint8_t> occupied_any_time(const Model<real>& model,
                                       const std::vector<Vec3<real>>& pts,
                                       const std::vector<double>& times, real alpha_thresh,
                                       real delta_ref) {
  std::vector<uint8_t> occ(pts.size(), 0);
  for (double t : times) {
    const auto defs = warp_points(model.deform, pts, real(t));
    for (size_t i = 0; i < pts.size(); ++i)
      if (!occ[i] && gated_alpha(model, defs[i], delta_ref) > alpha_thresh) occ[i] = 1;
  }
  return occ;
}

std::vector<uint8_t> occupied_at_canonical(const Model<real>& model,
                                           const std::vector<Vec3<real>>& pts,
                                           real alpha_thresh, real delta_ref) {
  const auto defs = warp_points(model.deform, pts, model.deform.t_can);
  std::vector<uint8_t> occ(pts.size(), 0);
  for (size_t i = 0; i < pts.size(); ++i)
    if (gated_alpha(model, defs[i], delta_ref) > alpha_thresh) occ[i] = 1;
  return occ;
}

}  // namespace

Aabb<real> compute_scene_bbox(const Model<real>& model, const std::vector<double>& times,
                              real alpha_thresh, real delta_ref) {
  check(!times.empty(), "scene box estimation needs at least one time");
  check(delta_ref > 0, "delta_ref must be positive");
  const DenseGrid<real>& g = model.deform.grid;
  std::vector<Vec3<real>> verts;
  verts.reserve(g.num_vertices());
  for (int i = 0; i < g.res[0]; ++i)
    for (int j = 0; j < g.res[1]; ++j)
      for (int k = 0; k < g.res[2]; ++k) verts.push_back(g.vertex_pos(i, j, k));
  const auto occ = occupied_any_time(model, verts, times, alpha_thresh, delta_ref);
  Vec3<real> lo = Vec3<real>::Constant(std::numeric_limits<real>::max());
  Vec3<real> hi = Vec3<real>::Constant(std::numeric_limits<real>::lowest());
  bool any = false;
  for (size_t v = 0; v < verts.size(); ++v)
    if (occ[v]) {
      any = true;
      lo = lo.cwiseMin(verts[v]);
      hi = hi.cwiseMax(verts[v]);
    }
  check(any, "scene appears empty: no grid vertex exceeds the opacity threshold at any "
             "training time (try lowering alpha_thresh)");
  Vec3<real> margin;
  for (int a = 0; a < 3; ++a) margin[a] = g.bbox.diag()[a] / real(g.res[a] - 1);
  Aabb<real> out{lo - margin, hi + margin};
  out.validate();
  return out;
}

bool point_occupied(const Model<real>& model, const Vec3<real>& p,
                    const std::vector<double>& times, real alpha_thresh, real delta_ref,
                    MaskMode mode) {
  const std::vector<Vec3<real>> pts{p};
  const auto occ = mode == MaskMode::Deform
                       ? occupied_any_time(model, pts, times, alpha_thresh, delta_ref)
                       : occupied_at_canonical(model, pts, alpha_thresh, delta_ref);
  return occ[0] != 0;
}

OccupancyCache<real> build_empty_mask(const Model<real>& model, MaskMode mode,
                                      const std::vector<double>& times, real alpha_thresh,
                                      real delta_ref, const Vec3i& res,
                                      const Aabb<real>& bbox) {
  for (int a = 0; a < 3; ++a) check(res[a] >= 2, "mask resolution must be >= 2 per axis");
  bbox.validate();
  OccupancyCache<real> mask(res, bbox);
  std::vector<Vec3<real>> pts;
  pts.reserve(mask.occ.size());
  for (int i = 0; i < res[0]; ++i)
    for (int j = 0; j < res[1]; ++j)
      for (int k = 0; k < res[2]; ++k) {
        Vec3<real> p;
        const int idx[3] = {i, j, k};
        for (int a = 0; a < 3; ++a)
          p[a] = bbox.min[a] + (bbox.max[a] - bbox.min[a]) * real(idx[a]) / real(res[a] - 1);
        pts.push_back(p);
      }
  mask.occ = mode == MaskMode::Deform
                 ? occupied_any_time(model, pts, times, alpha_thresh, delta_ref)
                 : occupied_at_canonical(model, pts, alpha_thresh, delta_ref);
  return mask;
}

namespace {

// Same box and non-shrinking resolution go through exact index-space
// upscaling; anything else through world-space resampling.
DenseGrid<real> regrid(const DenseGrid<real>& g, const Aabb<real>& bbox, const Vec3i& res) {
  const bool same_box = (g.bbox.min.array() == bbox.min.array()).all() &&
                        (g.bbox.max.array() == bbox.max.array()).all();
  const bool growing = res[0] >= g.res[0] && res[1] >= g.res[1] && res[2] >= g.res[2];
  if (same_box && growing) return upscale(g, res);
  return resample_to(g, bbox, res);
}

}  // namespace

Model<real> init_fine_from_coarse(const Model<real>& coarse, const Aabb<real>& new_bbox,
                                  const Vec3i& deform_res, const Vec3i& density_res,
                                  const Vec3i& color_res, uint32_t seed) {
  check(coarse.canonical.stage == Stage::Coarse,
        "fine initialization requires a coarse-stage model");
  new_bbox.validate();
  Model<real> fine;
  fine.deform.t_can = coarse.deform.t_can;
  fine.deform.pos_enc = coarse.deform.pos_enc;
  fine.deform.time_enc = coarse.deform.time_enc;
  fine.deform.net = coarse.deform.net;
  fine.deform.net.zero_grads();
  fine.deform.grid = regrid(coarse.deform.grid, new_bbox, deform_res);
  fine.canonical = make_canonical_field<real>(new_bbox, density_res, color_res, Stage::Fine,
                                              coarse.canonical.density_shift, seed);
  fine.canonical.pos_enc = coarse.canonical.pos_enc;
  fine.canonical.dir_enc = coarse.canonical.dir_enc;
  fine.canonical.density_grid = regrid(coarse.canonical.density_grid, new_bbox, density_res);
  return fine;
}

namespace {

double train_psnr(double photo_mse) {
  if (photo_mse <= 0) return 99.0;
  return std::min(99.0, -10.0 * std::log10(photo_mse / 3.0));
}

void write_ckpt(const std::string& path, Model<real>& model, const KvMap& cfg_kv,
                const std::optional<OccupancyCache<real>>& dm,
                const std::optional<OccupancyCache<real>>& cm) {
  CheckpointExtra ex;
  ex.config = cfg_kv;
  ex.deform_mask = dm;
  ex.canon_mask = cm;
  save_checkpoint(path, model, ex);
}

struct StageSetup {
  Stage stage;
  int iters;
  int iter_offset;
  int ramp_end;  // 0 disables the progressive time window
  RenderOpts<real> opts;
  LossWeights<real> weights;
  Vec3i upscale_target[3];  // deform, density, color; ignored in the coarse stage
};

LossTerms<real> run_stage(Model<real>& model, const Dataset& data,
                          const std::vector<Camera<real>>& cams, const TrainConfig& cfg,
                          const StageSetup& st, ModelOptimizer<real>& opt, std::mt19937& rng,
                          std::FILE* csv, std::ostream* log) {
  LossTerms<real> last;
  const char* tag = st.stage == Stage::Coarse ? "coarse" : "fine";
  std::vector<double> frame_times(data.manifest.train_frames.size());
  for (size_t i = 0; i < frame_times.size(); ++i)
    frame_times[i] = data.manifest.train_frames[i].time;
  std::vector<Ray<real>> rays;
  rays.reserve(cfg.rays_per_iter);
  for (int iter = 0; iter < st.iters; ++iter) {
    if (st.stage == Stage::Fine) {
      const bool due = iter == st.iters / 3 || iter == 2 * st.iters / 3;
      if (due) {
        auto bump = [&](DenseGrid<real>& g, const Vec3i& target) {
          Vec3i next;
          for (int a = 0; a < 3; ++a)
            next[a] = std::max(g.res[a], std::min(2 * g.res[a], target[a]));
          if (next != g.res) g = upscale(g, next);
        };
        bump(model.deform.grid, st.upscale_target[0]);
        bump(model.canonical.density_grid, st.upscale_target[1]);
        bump(model.canonical.color_grid, st.upscale_target[2]);
        if (log)
          *log << "[" << tag << "] iter " << iter << ": grids now "
               << model.deform.grid.res.transpose() << " / "
               << model.canonical.density_grid.res.transpose() << "\n";
      }
    }
    std::vector<int> admissible;
    if (st.stage == Stage::Coarse)
      admissible = progressive_time_window(iter, st.ramp_end, double(cfg.t_can), frame_times);
    else {
      admissible.resize(frame_times.size());
      for (size_t i = 0; i < admissible.size(); ++i) admissible[i] = int(i);
    }
    std::uniform_int_distribution<int> pick(0, int(admissible.size()) - 1);
    std::uniform_int_distribution<int> px(0, data.width - 1), py(0, data.height - 1);
    rays.clear();
    for (int i = 0; i < cfg.rays_per_iter; ++i) {
      const int fi = admissible[pick(rng)];
      const int x = px(rng), y = py(rng);
      Ray<real> ray = cams[fi].make_ray(real(x), real(y));
      ray.t = real(data.manifest.train_frames[fi].time);
      const Image& img = data.train_images[fi];
      ray.target = Vec3<real>(img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2));
      rays.push_back(ray);
    }
    const auto out = train_step(model, rays, st.opts, st.weights, cfg.ptc_top_n, cfg.use_occ);
    last = out.losses;
    const real total = out.losses.total(st.weights);
    if (!std::isfinite(total))
      throw std::runtime_error("non-finite loss at iteration " +
                               std::to_string(st.iter_offset + iter) +
                               "; last checkpoint retained");
    const real decay_t = st.iters <= 1 ? real(0) : real(iter) / real(st.iters);
    opt.step(model, decay_t);
    const double psnr = train_psnr(double(out.losses.photo));
    std::fprintf(csv, "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", st.iter_offset + iter,
                 double(out.losses.photo), double(out.losses.ptc), double(out.losses.bg),
                 double(out.losses.d_norm), double(out.losses.d_tv), double(total), psnr);
    if (log && (iter % cfg.log_every == 0 || iter + 1 == st.iters))
      *log << "[" << tag << "] iter " << iter << "/" << st.iters << " loss " << total
           << " psnr " << psnr << "\n";
  }
  return last;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::string& out_dir,
                  std::ostream* log) {
  cfg.validate();
  check(!data.manifest.train_frames.empty(), "training needs at least one frame");
  std::filesystem::create_directories(out_dir);

  // precedence for the scene box: built-in default < manifest < config
  Aabb<real> box = cfg.bbox;
  if (!cfg.bbox_from_config && data.manifest.scene_bbox)
    box = data.manifest.scene_bbox->cast<real>();
  box.validate();
  const Vec3<real> bg =
      cfg.background ? *cfg.background : data.manifest.background.cast<real>();
  KvMap cfg_kv = cfg.to_kv();
  cfg_kv["resolved_bbox_min"] = format_vec3(box.min.cast<double>());
  cfg_kv["resolved_bbox_max"] = format_vec3(box.max.cast<double>());
  cfg_kv["resolved_background"] = format_vec3(bg.cast<double>());

  std::vector<double> unique_times;
  for (const auto& f : data.manifest.train_frames) unique_times.push_back(f.time);
  std::sort(unique_times.begin(), unique_times.end());
  unique_times.erase(std::unique(unique_times.begin(), unique_times.end()),
                     unique_times.end());

  std::vector<Camera<real>> cams;
  cams.reserve(data.manifest.train_frames.size());
  for (const auto& f : data.manifest.train_frames)
    cams.push_back(data.camera(f).cast<real>());

  // alpha thresholds and the density shift share one reference spacing
  const real delta_ref = box.diag_norm() / real(cfg.k_target_fine);
  const real shift = density_shift_for_alpha(cfg.alpha_init, delta_ref);

  TrainResult res;
  res.coarse_ckpt = (std::filesystem::path(out_dir) / "coarse.ckpt").string();
  res.fine_ckpt = (std::filesystem::path(out_dir) / "fine.ckpt").string();
  res.loss_csv = (std::filesystem::path(out_dir) / "loss.csv").string();

  std::FILE* csv = std::fopen(res.loss_csv.c_str(), "wb");
  check(csv != nullptr, "cannot open '" + res.loss_csv + "' for writing");
  std::fprintf(csv, "iter,photo,ptc,bg,d_norm,d_tv,total,psnr_train\n");

  std::mt19937 rng(cfg.seed);
  try {
    // ---- coarse stage
    Model<real> model;
    model.deform = make_deformation_field<real>(
        box, resolution_from_voxel_count(box, cfg.deform_voxels_coarse), cfg.deform_channels,
        cfg.t_can, cfg.seed);
    const Vec3i canon_res_c = resolution_from_voxel_count(box, cfg.canon_voxels_coarse);
    model.canonical =
        make_canonical_field<real>(box, canon_res_c, canon_res_c, Stage::Coarse, shift,
                                   cfg.seed + 1);
    write_ckpt(res.coarse_ckpt, model, cfg_kv, {}, {});

    StageSetup coarse;
    coarse.stage = Stage::Coarse;
    coarse.iters = cfg.coarse_iters;
    coarse.iter_offset = 0;
    coarse.ramp_end = int(double(cfg.ramp_frac) * double(cfg.coarse_iters));
    coarse.opts.background = bg;
    coarse.opts.step = box.diag_norm() / real(cfg.k_target_coarse);
    coarse.weights = LossWeights<real>::coarse(cfg.large_motion);
    ModelOptimizer<real> opt_c;
    opt_c.lr_grid = cfg.lr_grid;
    opt_c.lr_mlp = cfg.lr_mlp;
    res.last_losses = run_stage(model, data, cams, cfg, coarse, opt_c, rng, csv, log);
    write_ckpt(res.coarse_ckpt, model, cfg_kv, {}, {});

    // ---- shrink the scene box and bake the empty-space filters
    res.scene_box = box;
    try {
      res.scene_box = compute_scene_bbox(model, unique_times, cfg.alpha_thresh, delta_ref);
      const Vec3i mres = Vec3i::Constant(cfg.mask_res);
      res.deform_mask = build_empty_mask(model, MaskMode::Deform, unique_times,
                                         cfg.alpha_thresh, delta_ref, mres, res.scene_box);
      res.canon_mask = build_empty_mask(model, MaskMode::Canonical, unique_times,
                                        cfg.alpha_thresh, delta_ref, mres, res.scene_box);
      if (log)
        *log << "[filter] scene box " << res.scene_box.min.transpose() << " .. "
             << res.scene_box.max.transpose() << ", filter fill "
             << res.deform_mask->fill_fraction() << " / "
             << res.canon_mask->fill_fraction() << "\n";
    } catch (const std::exception& e) {
      if (log)
        *log << "[filter] " << e.what() << " — keeping the full box, filters disabled\n";
    }

    // ---- fine stage: start at half resolution, double on schedule
    const Vec3i deform_res_f =
        resolution_from_voxel_count(res.scene_box, cfg.deform_voxels_fine);
    const Vec3i canon_res_f =
        resolution_from_voxel_count(res.scene_box, cfg.canon_voxels_fine);
    auto half = [](const Vec3i& v) {
      return Vec3i(std::max(2, (v[0] + 1) / 2), std::max(2, (v[1] + 1) / 2),
                   std::max(2, (v[2] + 1) / 2));
    };
    model = init_fine_from_coarse(model, res.scene_box, half(deform_res_f),
                                  half(canon_res_f), half(canon_res_f), cfg.seed + 2);
    write_ckpt(res.fine_ckpt, model, cfg_kv, res.deform_mask, res.canon_mask);

    StageSetup fine;
    fine.stage = Stage::Fine;
    fine.iters = cfg.fine_iters;
    fine.iter_offset = cfg.coarse_iters;
    fine.ramp_end = 0;
    fine.opts.background = bg;
    fine.opts.step = res.scene_box.diag_norm() / real(cfg.k_target_fine);
    fine.opts.deform_mask = res.deform_mask ? &*res.deform_mask : nullptr;
    fine.opts.canon_mask = res.canon_mask ? &*res.canon_mask : nullptr;
    fine.weights = LossWeights<real>::fine(cfg.large_motion);
    fine.upscale_target[0] = deform_res_f;
    fine.upscale_target[1] = canon_res_f;
    fine.upscale_target[2] = canon_res_f;
    ModelOptimizer<real> opt_f;
    opt_f.lr_grid = cfg.lr_grid;
    opt_f.lr_mlp = cfg.lr_mlp;
    if (cfg.fine_iters > 0)
      res.last_losses = run_stage(model, data, cams, cfg, fine, opt_f, rng, csv, log);
    write_ckpt(res.fine_ckpt, model, cfg_kv, res.deform_mask, res.canon_mask);

    res.model = std::move(model);
  } catch (...) {
    std::fclose(csv);
    throw;
  }
  std::fclose(csv);
  return res;
}

}  // namespace ndvg
