#pragma once

#include "ndvg/image.hpp"
#include "ndvg/losses.hpp"
#include "ndvg/rendering.hpp"

namespace ndvg {

// Work counters for the filtering ablation: how many samples survived each
// stage of the per-sample cascade.
struct PipelineStats {
  long long candidates = 0;     // samples inside the scene box before masking
  long long kept = 0;           // after the observation-space filter
  long long density_evals = 0;  // canonical-space filter passed
  long long color_evals = 0;    // density > 0, color decoded
  long long warp_evals = 0;     // samples through the warp network

  PipelineStats& operator+=(const PipelineStats& o) {
    candidates += o.candidates;
    kept += o.kept;
    density_evals += o.density_evals;
    color_evals += o.color_evals;
    warp_evals += o.warp_evals;
    return *this;
  }
};

// Flattened forward state for a batch of rays. The warp and color networks
// run as single matrix products over all participating samples; grid lookups
// and compositing stay per-sample/per-ray. Numerically this matches the
// per-ray reference path up to float summation order.
template <typename T>
struct BatchForward {
  int n_rays = 0;
  std::vector<int> start, count;  // per-ray slice into the sample arrays
  std::vector<Vec3<T>> colors;
  std::vector<CompositeResult<T>> comp;

  // per kept sample
  std::vector<T> w, delta;
  std::vector<Vec3<T>> p;
  std::vector<int> ray_of;
  std::vector<uint8_t> warped;       // went through the warp network
  std::vector<uint8_t> canonical_evaluated;
  std::vector<uint8_t> color_evaluated;
  std::vector<Vec3<T>> p_prime, dp;
  std::vector<T> w_occ;
  std::vector<T> sigma;
  std::vector<Vec3<T>> c;
  std::vector<T> sigma_eff;
  std::vector<Vec3<T>> c_eff;

  // caches for backward
  std::vector<InterpStencil<T>> feat_stencil;   // warp feature grid, per warped sample
  std::vector<int> warp_col;                    // sample -> column in Xd (-1 if bypass)
  std::vector<int> warp_sample;                 // column -> sample
  MlpCache<T> warp_cache;
  std::vector<DensityCache<T>> dcache;          // per sample
  std::vector<InterpStencil<T>> color_stencil;  // per color-evaluated sample
  std::vector<int> color_col;                   // sample -> column in Xc (-1 if none)
  std::vector<int> color_sample;                // column -> sample
  std::vector<Vec3<T>> color_p_norm;            // per color column (net input chain)
  MlpCache<T> color_cache;
  std::vector<ColorCache<T>> coarse_cache;      // per color column, coarse stage only
};

// Samples every ray against the canonical box, applies the observation-space
// filter, runs the warp network in one batch, evaluates the canonical fields
// (color network batched in the fine stage), gates, and composites.
// `apply_warp = false` renders the canonical field directly; rays at the
// canonical time take the identical bypass path, bit for bit.
template <typename T>
inline BatchForward<T> batch_forward(const Model<T>& model, const std::vector<Ray<T>>& rays,
                                     const RenderOpts<T>& opts, bool apply_warp, bool use_occ,
                                     PipelineStats* stats = nullptr) {
  const DeformationField<T>& field = model.deform;
  const CanonicalField<T>& canonical = model.canonical;
  BatchForward<T> f;
  f.n_rays = int(rays.size());
  f.start.resize(rays.size());
  f.count.resize(rays.size());
  f.colors.resize(rays.size());
  f.comp.resize(rays.size());

  // phase 1: sampling + observation-space filter
  PipelineStats st;
  for (size_t r = 0; r < rays.size(); ++r) {
    const SampleSet<T> set = sample_points(rays[r], canonical.density_grid.bbox, opts.step);
    const bool dynamic = apply_warp && rays[r].t != field.t_can;
    f.start[r] = int(f.w.size());
    st.candidates += set.count();
    for (int k = 0; k < set.count(); ++k) {
      const Vec3<T> p = rays[r].o + set.w[k] * rays[r].d;
      if (dynamic && opts.deform_mask && !opts.deform_mask->occupied(p)) continue;
      f.w.push_back(set.w[k]);
      f.delta.push_back(set.delta[k]);
      f.p.push_back(p);
      f.ray_of.push_back(int(r));
      f.warped.push_back(dynamic ? 1 : 0);
    }
    f.count[r] = int(f.w.size()) - f.start[r];
  }
  const int n = int(f.w.size());
  st.kept = n;
  f.p_prime.resize(n);
  f.dp.assign(n, Vec3<T>::Zero());
  f.w_occ.assign(n, T(1));
  f.sigma.assign(n, T(0));
  f.c.assign(n, Vec3<T>::Zero());
  f.sigma_eff.assign(n, T(0));
  f.c_eff.assign(n, Vec3<T>::Zero());
  f.canonical_evaluated.assign(n, 0);
  f.color_evaluated.assign(n, 0);
  f.warp_col.assign(n, -1);
  f.dcache.resize(n);

  // phase 2: warp network over all dynamic samples in one batch
  for (int i = 0; i < n; ++i)
    if (f.warped[i]) {
      f.warp_col[i] = int(f.warp_sample.size());
      f.warp_sample.push_back(i);
    }
  const int m = int(f.warp_sample.size());
  st.warp_evals = m;
  if (m > 0) {
    const int dp_pos = posenc_dim(3, field.pos_enc);
    const int dp_time = posenc_dim(1, field.time_enc);
    MatX<T> Xd(field.input_dim(), m);
    f.feat_stencil.resize(m);
    // per-ray time encodings, shared by the ray's samples
    std::vector<VecX<T>> tenc(rays.size());
    for (int j = 0; j < m; ++j) {
      const int i = f.warp_sample[j];
      const int r = f.ray_of[i];
      T* col = Xd.data() + size_t(j) * Xd.rows();
      const Vec3<T> p_norm = normalize_to_box(field.grid.bbox, f.p[i]);
      posenc(p_norm.data(), 3, field.pos_enc, col);
      if (tenc[r].size() == 0) {
        tenc[r].resize(dp_time);
        posenc(&rays[r].t, 1, field.time_enc, tenc[r].data());
      }
      std::copy(tenc[r].data(), tenc[r].data() + dp_time, col + dp_pos);
      f.feat_stencil[j] = field.grid.stencil(f.p[i]);
      field.grid.interp(f.feat_stencil[j], col + dp_pos + dp_time);
    }
    const MatX<T> Yd = mlp_forward(field.net, Xd, &f.warp_cache);
    for (int j = 0; j < m; ++j) {
      const int i = f.warp_sample[j];
      f.dp[i] = Vec3<T>(Yd(0, j), Yd(1, j), Yd(2, j));
      f.w_occ[i] = use_occ ? Yd(3, j) : T(1);
      f.p_prime[i] = f.p[i] + f.dp[i];
    }
  }
  for (int i = 0; i < n; ++i)
    if (!f.warped[i]) f.p_prime[i] = f.p[i];

  // phase 3: canonical-space filter + density, then color
  std::vector<int> color_rows;
  for (int i = 0; i < n; ++i) {
    f.canonical_evaluated[i] =
        (!opts.canon_mask || opts.canon_mask->occupied(f.p_prime[i])) ? 1 : 0;
    if (!f.canonical_evaluated[i]) continue;
    ++st.density_evals;
    f.sigma[i] = density(canonical, f.p_prime[i], &f.dcache[i]);
    if (f.sigma[i] > T(0)) {
      f.color_evaluated[i] = 1;
      ++st.color_evals;
      color_rows.push_back(i);
    }
  }
  f.color_col.assign(n, -1);
  if (canonical.stage == Stage::Coarse) {
    f.coarse_cache.resize(color_rows.size());
    for (size_t k = 0; k < color_rows.size(); ++k) {
      const int i = color_rows[k];
      f.color_col[i] = int(k);
      f.color_sample.push_back(i);
      f.c[i] = color(canonical, f.p_prime[i], rays[f.ray_of[i]].d, &f.coarse_cache[k]);
    }
  } else if (!color_rows.empty()) {
    const int dp_pos = posenc_dim(3, canonical.pos_enc);
    const int dp_dir = posenc_dim(3, canonical.dir_enc);
    const int m2 = int(color_rows.size());
    MatX<T> Xc(canonical.color_net_input_dim(), m2);
    f.color_stencil.resize(m2);
    f.color_p_norm.resize(m2);
    std::vector<VecX<T>> denc(rays.size());
    for (int k = 0; k < m2; ++k) {
      const int i = color_rows[k];
      const int r = f.ray_of[i];
      f.color_col[i] = k;
      f.color_sample.push_back(i);
      T* col = Xc.data() + size_t(k) * Xc.rows();
      const Vec3<T> p_norm = normalize_to_box(canonical.color_grid.bbox, f.p_prime[i]);
      f.color_p_norm[k] = p_norm;
      posenc(p_norm.data(), 3, canonical.pos_enc, col);
      if (denc[r].size() == 0) {
        denc[r].resize(dp_dir);
        posenc(rays[r].d.data(), 3, canonical.dir_enc, denc[r].data());
      }
      std::copy(denc[r].data(), denc[r].data() + dp_dir, col + dp_pos);
      f.color_stencil[k] = canonical.color_grid.stencil(f.p_prime[i]);
      canonical.color_grid.interp(f.color_stencil[k], col + dp_pos + dp_dir);
    }
    const MatX<T> Yc = mlp_forward(*canonical.color_net, Xc, &f.color_cache);
    for (int k = 0; k < m2; ++k) f.c[color_rows[k]] = Vec3<T>(Yc(0, k), Yc(1, k), Yc(2, k));
  }

  // phase 4: gate + per-ray compositing
  for (int i = 0; i < n; ++i)
    occlusion_gate(f.sigma[i], f.c[i], f.w_occ[i], f.sigma_eff[i], f.c_eff[i]);
  for (size_t r = 0; r < rays.size(); ++r) {
    f.comp[r] = composite(f.sigma_eff.data() + f.start[r], f.c_eff.data() + f.start[r],
                          f.delta.data() + f.start[r], f.count[r], opts.background);
    f.colors[r] = f.comp[r].color;
  }
  if (stats) *stats += st;
  return f;
}

// Per-sample upstreams entering mid-chain, indexed like the flattened arrays.
template <typename T>
struct BatchUpstream {
  std::vector<Vec3<T>> d_color;  // per ray
  std::vector<T> d_t_final;      // per ray
  std::vector<Vec3<T>> d_c_pre;  // per sample; empty means zero
  std::vector<Vec3<T>> d_dp;     // per sample; empty means zero
};

// Reverse pass of batch_forward, accumulating into the model's gradient
// buffers. `use_occ` must match the forward call.
template <typename T>
inline void batch_backward(Model<T>& model, const BatchForward<T>& f,
                           const RenderOpts<T>& opts, const BatchUpstream<T>& up,
                           bool use_occ) {
  DeformationField<T>& field = model.deform;
  CanonicalField<T>& canonical = model.canonical;
  const int n = int(f.w.size());
  std::vector<T> d_sigma_eff(n, T(0));
  std::vector<Vec3<T>> d_c_eff(n, Vec3<T>::Zero());
  for (int r = 0; r < f.n_rays; ++r) {
    if (f.count[r] == 0) continue;
    composite_backward(f.sigma_eff.data() + f.start[r], f.c_eff.data() + f.start[r],
                       f.delta.data() + f.start[r], f.count[r], opts.background,
                       up.d_color[r], up.d_t_final[r], d_sigma_eff.data() + f.start[r],
                       d_c_eff.data() + f.start[r]);
  }

  std::vector<Vec3<T>> up_p_prime(n, Vec3<T>::Zero());
  std::vector<T> d_w_occ(n, T(0));
  const int m2 = int(f.color_sample.size());
  MatX<T> dYc;
  if (canonical.stage == Stage::Fine && m2 > 0) dYc = MatX<T>::Zero(3, m2);

  for (int i = 0; i < n; ++i) {
    if (!f.canonical_evaluated[i]) continue;
    T d_sigma;
    Vec3<T> d_c;
    occlusion_gate_backward(f.sigma[i], f.c[i], f.w_occ[i], d_sigma_eff[i], d_c_eff[i],
                            d_sigma, d_c, d_w_occ[i]);
    if (!up.d_c_pre.empty()) d_c += up.d_c_pre[i];
    up_p_prime[i] += density_backward(canonical, f.dcache[i], d_sigma);
    if (!f.color_evaluated[i]) continue;
    const int k = f.color_col[i];
    if (canonical.stage == Stage::Coarse) {
      up_p_prime[i] += color_backward(canonical, f.coarse_cache[k], d_c);
    } else {
      dYc.col(k) = d_c;
    }
  }

  if (canonical.stage == Stage::Fine && m2 > 0) {
    const MatX<T> dXc = mlp_backward(*canonical.color_net, f.color_cache, dYc);
    const int dp_pos = posenc_dim(3, canonical.pos_enc);
    const int dp_dir = posenc_dim(3, canonical.dir_enc);
    for (int k = 0; k < m2; ++k) {
      const int i = f.color_sample[k];
      const T* gcol = dXc.data() + size_t(k) * dXc.rows();
      Vec3<T> g_p_norm = Vec3<T>::Zero();
      posenc_backward(f.color_p_norm[k].data(), 3, canonical.pos_enc, gcol, g_p_norm.data());
      Vec3<T> g_p =
          canonical.color_grid.interp_backward(f.color_stencil[k], gcol + dp_pos + dp_dir);
      for (int a = 0; a < 3; ++a)
        g_p[a] += g_p_norm[a] * T(2) /
                  (canonical.color_grid.bbox.max[a] - canonical.color_grid.bbox.min[a]);
      up_p_prime[i] += g_p;
    }
  }

  // warp network: p' = p + dp routes the canonical spatial gradient into the
  // offset head; the gate gradient enters the occlusion head
  const int m = int(f.warp_sample.size());
  if (m > 0) {
    MatX<T> dYd = MatX<T>::Zero(4, m);
    for (int j = 0; j < m; ++j) {
      const int i = f.warp_sample[j];
      Vec3<T> total = up_p_prime[i];
      if (!up.d_dp.empty()) total += up.d_dp[i];
      dYd(0, j) = total[0];
      dYd(1, j) = total[1];
      dYd(2, j) = total[2];
      dYd(3, j) = use_occ ? d_w_occ[i] : T(0);
    }
    const MatX<T> dXd = mlp_backward(field.net, f.warp_cache, dYd);
    const int off = posenc_dim(3, field.pos_enc) + posenc_dim(1, field.time_enc);
    for (int j = 0; j < m; ++j) {
      // sample positions are data, so only the feature slice reaches
      // parameters; the encoding rows are dropped
      field.grid.interp_backward(f.feat_stencil[j],
                                 dXd.data() + size_t(j) * dXd.rows() + off);
    }
  }
}

// Full training objective on one ray batch: forward, all five losses, and the
// fused backward. Gradients accumulate into the model buffers.
template <typename T>
struct TrainStepResult {
  LossTerms<T> losses;
  PipelineStats stats;
  int selected_points = 0;
};

template <typename T>
inline TrainStepResult<T> train_step(Model<T>& model, const std::vector<Ray<T>>& rays,
                                     const RenderOpts<T>& opts, const LossWeights<T>& weights,
                                     int ptc_top_n, bool use_occ, T tv_eps = T(1e-6)) {
  TrainStepResult<T> out;
  const BatchForward<T> f =
      batch_forward(model, rays, opts, /*apply_warp=*/true, use_occ, &out.stats);
  const int n_rays = int(rays.size());

  std::vector<Vec3<T>> targets(n_rays);
  for (int r = 0; r < n_rays; ++r) targets[r] = rays[r].target;
  out.losses.photo = photometric(f.colors, targets);

  std::vector<T> t_finals(n_rays);
  for (int r = 0; r < n_rays; ++r) t_finals[r] = f.comp[r].t_final;
  out.losses.bg = background_entropy(t_finals);

  // selected-point color: candidates are this ray's contributing samples with
  // their pre-gate colors
  std::vector<std::vector<PtcCandidate<T>>> cand(n_rays);
  for (int r = 0; r < n_rays; ++r)
    for (int k = 0; k < f.count[r]; ++k) {
      const int i = f.start[r] + k;
      if (f.comp[r].weights[k] <= T(0)) continue;
      cand[r].push_back({k, f.comp[r].weights[k], f.w[i], f.c[i]});
    }
  const PtcSelection<T> sel = point_color_select(cand, ptc_top_n);
  out.losses.ptc = point_color(cand, targets, sel);
  out.selected_points = int(sel.total);

  std::vector<std::vector<Vec3<T>>> dp_per_ray(n_rays);
  for (int r = 0; r < n_rays; ++r) {
    dp_per_ray[r].resize(f.count[r]);
    for (int k = 0; k < f.count[r]; ++k) dp_per_ray[r][k] = f.dp[f.start[r] + k];
  }
  out.losses.d_norm = deformation_norm(dp_per_ray);
  out.losses.d_tv = tv_loss(model.deform.grid, tv_eps);

  // backward: each sub-loss enters with its weight in the total
  BatchUpstream<T> up;
  photometric_backward(f.colors, targets, T(1), up.d_color);
  background_entropy_backward(t_finals, weights.bg, up.d_t_final);

  std::vector<std::vector<Vec3<T>>> d_cand;
  point_color_backward(cand, targets, sel, weights.ptc, d_cand);
  up.d_c_pre.assign(f.w.size(), Vec3<T>::Zero());
  for (int r = 0; r < n_rays; ++r)
    for (size_t j = 0; j < cand[r].size(); ++j)
      up.d_c_pre[f.start[r] + cand[r][j].index] = d_cand[r][j];

  std::vector<std::vector<Vec3<T>>> d_dp_per_ray;
  deformation_norm_backward(dp_per_ray, weights.d_norm, d_dp_per_ray);
  up.d_dp.assign(f.w.size(), Vec3<T>::Zero());
  for (int r = 0; r < n_rays; ++r)
    for (int k = 0; k < f.count[r]; ++k) up.d_dp[f.start[r] + k] = d_dp_per_ray[r][k];

  batch_backward(model, f, opts, up, use_occ);
  tv_backward(model.deform.grid, weights.d_tv, tv_eps);
  return out;
}

// Forward-only batched render of a full image.
template <typename T>
inline Image render_image(const Model<T>& model, const Camera<T>& cam, T t,
                          const RenderOpts<T>& opts, bool apply_warp, bool use_occ,
                          PipelineStats* stats = nullptr) {
  std::vector<Ray<T>> rays;
  rays.reserve(size_t(cam.width) * cam.height);
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u) {
      Ray<T> ray = cam.make_ray(T(u), T(v));
      ray.t = t;
      rays.push_back(ray);
    }
  const BatchForward<T> f = batch_forward(model, rays, opts, apply_warp, use_occ, stats);
  Image img(cam.width, cam.height);
  size_t idx = 0;
  for (int v = 0; v < cam.height; ++v)
    for (int u = 0; u < cam.width; ++u, ++idx)
      for (int ch = 0; ch < 3; ++ch) img.at(u, v, ch) = float(f.colors[idx][ch]);
  return img;
}

}  // namespace ndvg
