#pragma once

#include "ndvg/compositing.hpp"
#include "ndvg/model.hpp"
#include "ndvg/sampling.hpp"

namespace ndvg {

// Conservative binary occupancy over a lattice: a query point counts as
// occupied if any vertex of its enclosing cell is occupied; anything outside
// the lattice box counts as free space.
template <typename T>
struct OccupancyCache {
  Vec3i res{2, 2, 2};
  Aabb<T> bbox;
  std::vector<uint8_t> occ;

  OccupancyCache() = default;
  OccupancyCache(const Vec3i& r, const Aabb<T>& box) : res(r), bbox(box) {
    occ.assign(size_t(res[0]) * res[1] * res[2], 0);
  }
  size_t vertex_index(int i, int j, int k) const {
    return (size_t(i) * res[1] + j) * res[2] + k;
  }
  bool occupied(const Vec3<T>& p) const {
    if (!bbox.contains(p)) return false;
    int i0[3];
    for (int a = 0; a < 3; ++a) {
      const T u = (p[a] - bbox.min[a]) / (bbox.max[a] - bbox.min[a]) * T(res[a] - 1);
      int i = int(std::floor(u));
      i0[a] = std::min(std::max(i, 0), res[a] - 2);
    }
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz)
          if (occ[vertex_index(i0[0] + dx, i0[1] + dy, i0[2] + dz)]) return true;
    return false;
  }
  double fill_fraction() const {
    size_t n = 0;
    for (uint8_t v : occ) n += v;
    return occ.empty() ? 0.0 : double(n) / double(occ.size());
  }
};

template <typename T>
struct RenderOpts {
  Vec3<T> background = Vec3<T>::Zero();
  T step = T(0.01);
  const OccupancyCache<T>* deform_mask = nullptr;  // observation-space filter
  const OccupancyCache<T>* canon_mask = nullptr;   // canonical-space filter
};

template <typename T>
struct SampleForward {
  T w = T(0);
  T delta = T(0);
  Vec3<T> p = Vec3<T>::Zero();
  bool deform_evaluated = false;    // warp MLP ran (t != t_can, sample kept)
  bool canonical_evaluated = false; // canonical-space filter passed
  bool color_evaluated = false;     // density > 0, color decoded
  DeformResult<T> def;
  T sigma = T(0);
  Vec3<T> c = Vec3<T>::Zero();
  T sigma_eff = T(0);
  Vec3<T> c_eff = Vec3<T>::Zero();
  DeformCache<T> dcache;
  DensityCache<T> scache;
  ColorCache<T> ccache;
};

template <typename T>
struct RayForward {
  std::vector<SampleForward<T>> recs;
  CompositeResult<T> comp;
  Vec3<T> color = Vec3<T>::Zero();
};

// Reference single-ray forward pass. `field` may be null to render the
// canonical model with no warp (static view); at t == t_can the warp
// bypasses itself, which makes the two paths bit-identical by construction.
template <typename T>
inline RayForward<T> render_ray_impl(const DeformationField<T>* field,
                                     const CanonicalField<T>& canonical, const Ray<T>& ray,
                                     const RenderOpts<T>& opts, bool want_cache) {
  RayForward<T> out;
  const SampleSet<T> set = sample_points(ray, canonical.density_grid.bbox, opts.step);
  const bool dynamic = field != nullptr && ray.t != field->t_can;
  out.recs.reserve(set.w.size());
  for (int k = 0; k < set.count(); ++k) {
    SampleForward<T> rec;
    rec.w = set.w[k];
    rec.delta = set.delta[k];
    rec.p = ray.o + set.w[k] * ray.d;
    if (dynamic && opts.deform_mask && !opts.deform_mask->occupied(rec.p)) continue;
    if (field != nullptr) {
      rec.def = deform(*field, rec.p, ray.t, want_cache ? &rec.dcache : nullptr);
      rec.deform_evaluated = !rec.def.bypass;
    } else {
      rec.def.p_prime = rec.p;
      rec.def.dp = Vec3<T>::Zero();
      rec.def.w_occ = T(1);
      rec.def.bypass = true;
      rec.dcache.bypass = true;
    }
    rec.canonical_evaluated = !opts.canon_mask || opts.canon_mask->occupied(rec.def.p_prime);
    if (rec.canonical_evaluated) {
      rec.sigma = density(canonical, rec.def.p_prime, want_cache ? &rec.scache : nullptr);
      if (rec.sigma > T(0)) {
        rec.c = color(canonical, rec.def.p_prime, ray.d, want_cache ? &rec.ccache : nullptr);
        rec.color_evaluated = true;
      }
    }
    occlusion_gate(rec.sigma, rec.c, rec.def.w_occ, rec.sigma_eff, rec.c_eff);
    out.recs.push_back(std::move(rec));
  }
  const int n = int(out.recs.size());
  std::vector<T> sigma_eff(n), delta(n);
  std::vector<Vec3<T>> c_eff(n);
  for (int k = 0; k < n; ++k) {
    sigma_eff[k] = out.recs[k].sigma_eff;
    c_eff[k] = out.recs[k].c_eff;
    delta[k] = out.recs[k].delta;
  }
  out.comp = composite(sigma_eff.data(), c_eff.data(), delta.data(), n, opts.background);
  out.color = out.comp.color;
  return out;
}

template <typename T>
inline RayForward<T> render_ray(const Model<T>& model, const Ray<T>& ray,
                                const RenderOpts<T>& opts, bool want_cache = false) {
  return render_ray_impl(&model.deform, model.canonical, ray, opts, want_cache);
}

template <typename T>
inline RayForward<T> render_ray_static(const CanonicalField<T>& canonical, const Ray<T>& ray,
                                       const RenderOpts<T>& opts) {
  return render_ray_impl<T>(nullptr, canonical, ray, opts, false);
}

// Per-sample loss upstreams that enter mid-chain (selected-point color on the
// pre-gate color, L1 prior directly on the offsets).
template <typename T>
struct RayUpstream {
  Vec3<T> d_color = Vec3<T>::Zero();
  T d_t_final = T(0);
  std::vector<Vec3<T>> d_c_pre;  // per rec; empty means zero
  std::vector<Vec3<T>> d_dp;     // per rec; empty means zero
};

template <typename T>
inline void render_ray_backward(Model<T>& model, const RayForward<T>& fwd,
                                const RenderOpts<T>& opts, const RayUpstream<T>& up) {
  const int n = int(fwd.recs.size());
  if (n == 0) return;
  std::vector<T> sigma_eff(n), delta(n), d_sigma_eff(n);
  std::vector<Vec3<T>> c_eff(n), d_c_eff(n);
  for (int k = 0; k < n; ++k) {
    sigma_eff[k] = fwd.recs[k].sigma_eff;
    c_eff[k] = fwd.recs[k].c_eff;
    delta[k] = fwd.recs[k].delta;
  }
  composite_backward(sigma_eff.data(), c_eff.data(), delta.data(), n, opts.background,
                     up.d_color, up.d_t_final, d_sigma_eff.data(), d_c_eff.data());
  for (int k = 0; k < n; ++k) {
    const SampleForward<T>& rec = fwd.recs[k];
    Vec3<T> up_p_prime = Vec3<T>::Zero();
    T d_w_occ = T(0);
    if (rec.canonical_evaluated) {
      T d_sigma;
      Vec3<T> d_c;
      occlusion_gate_backward(rec.sigma, rec.c, rec.def.w_occ, d_sigma_eff[k], d_c_eff[k],
                              d_sigma, d_c, d_w_occ);
      if (!up.d_c_pre.empty()) d_c += up.d_c_pre[k];
      up_p_prime += density_backward(model.canonical, rec.scache, d_sigma);
      if (rec.color_evaluated)
        up_p_prime += color_backward(model.canonical, rec.ccache, d_c);
    }
    if (rec.deform_evaluated) {
      Vec3<T> total = up_p_prime;
      if (!up.d_dp.empty()) total += up.d_dp[k];
      deform_backward(model.deform, rec.dcache, total, d_w_occ);
    }
  }
}

// Generic march over analytic fields sharing the sampling and compositing
// kernels with the model renderer. `eval(p, dir, sigma, rgb)` fills density
// and color at a point.
template <typename T, typename F>
inline Vec3<T> march_fields(F&& eval, const Ray<T>& ray, const Aabb<T>& box, int n_samples,
                            const Vec3<T>& background, T* t_final_out = nullptr) {
  T w0, w1;
  if (!ray_aabb_intersect(box, ray.o, ray.d, w0, w1) || !(w1 > w0)) {
    if (t_final_out) *t_final_out = T(1);
    return background;
  }
  const T step = (w1 - w0) / T(n_samples);
  std::vector<T> sigma(n_samples), delta(n_samples, step);
  std::vector<Vec3<T>> c(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    const T w = w0 + T(k) * step;
    const Vec3<T> p = ray.o + w * ray.d;
    eval(p, ray.d, sigma[k], c[k]);
  }
  delta[n_samples - 1] = w1 - (w0 + T(n_samples - 1) * step);
  const CompositeResult<T> r = composite(sigma.data(), c.data(), delta.data(), n_samples,
                                         background);
  if (t_final_out) *t_final_out = r.t_final;
  return r.color;
}

}  // namespace ndvg
