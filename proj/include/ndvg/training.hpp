#pragma once

#include <optional>

#include "ndvg/config.hpp"
#include "ndvg/dataset.hpp"
#include "ndvg/pipeline.hpp"

namespace ndvg {

// Every knob of the two-stage optimization. Defaults are the full-scale
// settings; toy runs shrink them through a config file or --set overrides.
struct TrainConfig {
  int coarse_iters = 10000;
  int fine_iters = 20000;
  int rays_per_iter = 8192;
  long long deform_voxels_coarse = 1664000;
  long long deform_voxels_fine = 190LL * 190 * 190;
  long long canon_voxels_coarse = 1024000;
  long long canon_voxels_fine = 160LL * 160 * 160;
  int deform_channels = 44;
  real lr_grid = real(0.1);
  real lr_mlp = real(1e-3);
  real alpha_init = real(1e-6);    // target opacity of the zero-initialized density
  real alpha_thresh = real(1e-3);  // empty-space decision threshold
  real ramp_frac = real(0.2);      // share of coarse iters spent widening the time window
  int k_target_coarse = 128;       // ray-march sample budget across the scene box
  int k_target_fine = 192;
  int mask_res = 48;               // empty-space filter lattice resolution per axis
  real t_can = real(0);
  bool large_motion = false;
  bool use_occ = true;
  int ptc_top_n = 8;
  int log_every = 500;
  uint32_t seed = 0;
  Aabb<real> bbox{Vec3<real>(-1.5f, -1.5f, -1.5f), Vec3<real>(1.5f, 1.5f, 1.5f)};
  bool bbox_from_config = false;  // config beats the manifest's scene_bbox
  std::optional<Vec3<real>> background;

  void validate() const;
  // Applies key=value overrides; unknown keys are an error.
  void apply(const KvMap& kv);
  KvMap to_kv() const;
};

// Frames admissible at a training iteration: the time window around the
// canonical time grows linearly from zero width at iteration 0 to the full
// range at `ramp_end`. A non-positive ramp_end admits everything; if the
// window would be empty, the frames nearest the canonical time stand in.
std::vector<int> progressive_time_window(int iter, int ramp_end, double t_can,
                                         const std::vector<double>& times);

// Smallest box covering everything the coarse model considers occupied:
// every deformation-grid vertex is warped through every training time and
// kept if its gated opacity alpha = 1 - exp(-sigma' * delta_ref) exceeds the
// threshold at any time; the tight bound grows by one voxel margin.
// Throws "scene appears empty" when nothing passes.
Aabb<real> compute_scene_bbox(const Model<real>& model, const std::vector<double>& times,
                              real alpha_thresh, real delta_ref);

enum class MaskMode { Deform, Canonical };

// Is a point non-empty under the coarse model? Deform mode calls a point
// occupied if its opacity passes the threshold at ANY training time (empty
// space is assumed static); canonical mode checks the canonical time only.
bool point_occupied(const Model<real>& model, const Vec3<real>& p,
                    const std::vector<double>& times, real alpha_thresh, real delta_ref,
                    MaskMode mode);

// Evaluates point_occupied on a vertex lattice over `bbox`. Queries through
// OccupancyCache are conservative: a point counts as occupied if any vertex
// of its enclosing cell is.
OccupancyCache<real> build_empty_mask(const Model<real>& model, MaskMode mode,
                                      const std::vector<double>& times, real alpha_thresh,
                                      real delta_ref, const Vec3i& res, const Aabb<real>& bbox);

// Fine-stage model carrying the coarse solution over: warp feature grid and
// density resampled onto the new box, warp MLP copied verbatim, appearance
// (12-channel feature grid + color MLP) freshly initialized.
Model<real> init_fine_from_coarse(const Model<real>& coarse, const Aabb<real>& new_bbox,
                                  const Vec3i& deform_res, const Vec3i& density_res,
                                  const Vec3i& color_res, uint32_t seed);

struct TrainResult {
  Model<real> model;  // final fine model
  Aabb<real> scene_box;
  std::optional<OccupancyCache<real>> deform_mask, canon_mask;
  std::string coarse_ckpt, fine_ckpt, loss_csv;
  LossTerms<real> last_losses;
};

// Runs both stages end to end: coarse with the progressive time window, box
// shrinking + empty-space filters in between, fine with progressive grid
// upscaling. Writes <out_dir>/coarse.ckpt, <out_dir>/fine.ckpt (each first at
// stage start, overwritten at stage end) and <out_dir>/loss.csv with one row
// per iteration: iter,photo,ptc,bg,d_norm,d_tv,total,psnr_train.
TrainResult train(const Dataset& data, const TrainConfig& cfg, const std::string& out_dir,
                  std::ostream* log = nullptr);

}  // namespace ndvg
