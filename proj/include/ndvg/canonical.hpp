#pragma once

#include <optional>

#include "ndvg/deformation.hpp"
#include "ndvg/encoding.hpp"
#include "ndvg/grid.hpp"
#include "ndvg/mlp.hpp"

namespace ndvg {

enum class Stage { Coarse, Fine };

// Static reference-frame geometry and appearance. Density comes from a
// one-channel logit grid through a shifted softplus; color is a direct
// sigmoid RGB grid in the coarse stage and a 12-channel feature grid decoded
// by a view-conditioned MLP in the fine stage.
template <typename T>
struct CanonicalField {
  DenseGrid<T> density_grid;
  DenseGrid<T> color_grid;
  std::optional<MlpParams<T>> color_net;
  T density_shift = T(0);
  Stage stage = Stage::Coarse;
  PosEncConfig pos_enc{5};
  PosEncConfig dir_enc{4};

  int color_net_input_dim() const {
    return posenc_dim(3, pos_enc) + posenc_dim(3, dir_enc) + color_grid.channels;
  }
};

// Picks the logit shift so a zero grid yields per-sample opacity alpha_init
// at the reference spacing: softplus(b) = -ln(1 - alpha_init) / delta_ref.
template <typename T>
inline T density_shift_for_alpha(T alpha_init, T delta_ref) {
  check(alpha_init > T(0) && alpha_init < T(1), "alpha_init must lie in (0,1)");
  check(delta_ref > T(0), "delta_ref must be positive");
  return inv_softplus(-std::log1p(-alpha_init) / delta_ref);
}

template <typename T>
CanonicalField<T> make_canonical_field(const Aabb<T>& bbox, const Vec3i& density_res,
                                       const Vec3i& color_res, Stage stage, T density_shift,
                                       uint32_t seed) {
  CanonicalField<T> f;
  f.stage = stage;
  f.density_shift = density_shift;
  f.density_grid = DenseGrid<T>(density_res, 1, bbox);
  f.color_grid = DenseGrid<T>(color_res, stage == Stage::Fine ? 12 : 3, bbox);
  if (stage == Stage::Fine) f.color_net = make_color_net<T>(f.color_net_input_dim(), seed);
  return f;
}

template <typename T>
struct DensityCache {
  InterpStencil<T> stencil{};
  T logit = T(0);
  bool inside = false;
};

template <typename T>
inline T density(const CanonicalField<T>& field, const Vec3<T>& p,
                 DensityCache<T>* cache = nullptr) {
  const bool inside = field.density_grid.contains(p);
  if (!inside) {
    if (cache) cache->inside = false;
    return T(0);
  }
  const InterpStencil<T> st = field.density_grid.stencil(p);
  T logit;
  field.density_grid.interp(st, &logit);
  if (cache) {
    cache->stencil = st;
    cache->logit = logit;
    cache->inside = true;
  }
  return softplus(logit + field.density_shift);
}

// Accumulates density-grid gradients; returns d(sigma)/dp contracted with
// upstream. Outside the box both are hard zero.
template <typename T>
inline Vec3<T> density_backward(CanonicalField<T>& field, const DensityCache<T>& cache,
                                T upstream) {
  if (!cache.inside) return Vec3<T>::Zero();
  const T dlogit = upstream * sigmoid(cache.logit + field.density_shift);
  return field.density_grid.interp_backward(cache.stencil, &dlogit);
}

template <typename T>
struct ColorCache {
  InterpStencil<T> stencil;
  Vec3<T> rgb;       // coarse: sigmoid outputs
  Vec3<T> p_norm;    // fine
  MlpCache<T> mlp;   // fine
};

template <typename T>
inline Vec3<T> color(const CanonicalField<T>& field, const Vec3<T>& p, const Vec3<T>& d,
                     ColorCache<T>* cache = nullptr) {
  check(std::abs(d.norm() - T(1)) <= T(1e-6), "view direction must be unit length");
  const InterpStencil<T> st = field.color_grid.stencil(p);
  if (field.stage == Stage::Coarse) {
    T logits[3];
    field.color_grid.interp(st, logits);
    Vec3<T> rgb(sigmoid(logits[0]), sigmoid(logits[1]), sigmoid(logits[2]));
    if (cache) {
      cache->stencil = st;
      cache->rgb = rgb;
    }
    return rgb;
  }
  const int dp_pos = posenc_dim(3, field.pos_enc);
  const int dp_dir = posenc_dim(3, field.dir_enc);
  VecX<T> input(field.color_net_input_dim());
  const Vec3<T> p_norm = normalize_to_box(field.color_grid.bbox, p);
  posenc(p_norm.data(), 3, field.pos_enc, input.data());
  posenc(d.data(), 3, field.dir_enc, input.data() + dp_pos);
  field.color_grid.interp(st, input.data() + dp_pos + dp_dir);
  MlpCache<T> local;
  MlpCache<T>* mc = cache ? &cache->mlp : &local;
  const VecX<T> out = mlp_forward(*field.color_net, VecX<T>(input), mc);
  if (cache) {
    cache->stencil = st;
    cache->p_norm = p_norm;
  }
  return Vec3<T>(out[0], out[1], out[2]);
}

// Accumulates color-grid (and net) gradients; returns d(color . upstream)/dp.
// The view direction is sampling data, not a parameter, so its gradient is
// dropped.
template <typename T>
inline Vec3<T> color_backward(CanonicalField<T>& field, const ColorCache<T>& cache,
                              const Vec3<T>& upstream) {
  if (field.stage == Stage::Coarse) {
    T dlogits[3];
    for (int c = 0; c < 3; ++c)
      dlogits[c] = upstream[c] * cache.rgb[c] * (T(1) - cache.rgb[c]);
    return field.color_grid.interp_backward(cache.stencil, dlogits);
  }
  const VecX<T> g_in = mlp_backward(*field.color_net, cache.mlp, VecX<T>(upstream));
  const int dp_pos = posenc_dim(3, field.pos_enc);
  const int dp_dir = posenc_dim(3, field.dir_enc);
  Vec3<T> g_p_norm = Vec3<T>::Zero();
  posenc_backward(cache.p_norm.data(), 3, field.pos_enc, g_in.data(), g_p_norm.data());
  Vec3<T> g_p = field.color_grid.interp_backward(cache.stencil, g_in.data() + dp_pos + dp_dir);
  for (int a = 0; a < 3; ++a)
    g_p[a] += g_p_norm[a] * T(2) / (field.color_grid.bbox.max[a] - field.color_grid.bbox.min[a]);
  return g_p;
}

}  // namespace ndvg
