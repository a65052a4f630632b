#pragma once

#include "ndvg/encoding.hpp"
#include "ndvg/grid.hpp"
#include "ndvg/mlp.hpp"

namespace ndvg {

// Warp field: maps an observation-space point and time to a canonical-space
// point plus an occlusion weight. A feature grid provides a local latent
// vector; a small MLP decodes (encoded position, encoded time, feature) into
// the offset and the gate. At the canonical time the map is pinned to the
// exact identity with the gate fully open.
template <typename T>
struct DeformationField {
  DenseGrid<T> grid;  // latent features over the observation-space box
  MlpParams<T> net;
  T t_can = T(0);
  PosEncConfig pos_enc{5};
  PosEncConfig time_enc{5};

  int input_dim() const {
    return posenc_dim(3, pos_enc) + posenc_dim(1, time_enc) + grid.channels;
  }
};

template <typename T>
DeformationField<T> make_deformation_field(const Aabb<T>& bbox, const Vec3i& res, int channels,
                                           T t_can, uint32_t seed) {
  DeformationField<T> f;
  f.grid = DenseGrid<T>(res, channels, bbox);
  f.t_can = t_can;
  f.net = make_deform_net<T>(f.input_dim(), seed);
  return f;
}

template <typename T>
struct DeformResult {
  Vec3<T> p_prime;
  Vec3<T> dp;
  T w_occ;
  bool bypass;
};

template <typename T>
struct DeformCache {
  Vec3<T> p = Vec3<T>::Zero();
  Vec3<T> p_norm = Vec3<T>::Zero();
  InterpStencil<T> stencil{};
  MlpCache<T> mlp;
  bool bypass = true;
};

// Maps p into [-1,1]^3 via the field's box before frequency encoding.
template <typename T>
inline Vec3<T> normalize_to_box(const Aabb<T>& box, const Vec3<T>& p) {
  Vec3<T> n;
  for (int a = 0; a < 3; ++a)
    n[a] = T(2) * (p[a] - box.min[a]) / (box.max[a] - box.min[a]) - T(1);
  return n;
}

template <typename T>
inline DeformResult<T> deform(const DeformationField<T>& field, const Vec3<T>& p, T t,
                              DeformCache<T>* cache = nullptr) {
  DeformResult<T> r;
  if (t == field.t_can) {
    r.p_prime = p;
    r.dp = Vec3<T>::Zero();
    r.w_occ = T(1);
    r.bypass = true;
    if (cache) cache->bypass = true;
    return r;
  }
  const int dp_pos = posenc_dim(3, field.pos_enc);
  const int dp_time = posenc_dim(1, field.time_enc);
  VecX<T> input(field.input_dim());
  const Vec3<T> p_norm = normalize_to_box(field.grid.bbox, p);
  posenc(p_norm.data(), 3, field.pos_enc, input.data());
  posenc(&t, 1, field.time_enc, input.data() + dp_pos);
  const InterpStencil<T> st = field.grid.stencil(p);
  field.grid.interp(st, input.data() + dp_pos + dp_time);
  MlpCache<T> local;
  MlpCache<T>* mc = cache ? &cache->mlp : &local;
  const VecX<T> out = mlp_forward(field.net, VecX<T>(input), mc);
  r.dp = out.template head<3>();
  r.w_occ = out[3];
  r.p_prime = p + r.dp;
  r.bypass = false;
  if (cache) {
    cache->p = p;
    cache->p_norm = p_norm;
    cache->stencil = st;
    cache->bypass = false;
  }
  return r;
}

// Accumulates grid and net gradients; returns the gradient w.r.t. p (the
// identity path of p' = p + dp plus the encoding and feature paths).
template <typename T>
inline Vec3<T> deform_backward(DeformationField<T>& field, const DeformCache<T>& cache,
                               const Vec3<T>& upstream_p_prime, T upstream_occ) {
  if (cache.bypass) return upstream_p_prime;
  VecX<T> up(4);
  up << upstream_p_prime[0], upstream_p_prime[1], upstream_p_prime[2], upstream_occ;
  const VecX<T> g_in = mlp_backward(field.net, cache.mlp, up);
  const int dp_pos = posenc_dim(3, field.pos_enc);
  const int dp_time = posenc_dim(1, field.time_enc);
  Vec3<T> g_p_norm = Vec3<T>::Zero();
  posenc_backward(cache.p_norm.data(), 3, field.pos_enc, g_in.data(), g_p_norm.data());
  const Vec3<T> g_feat_p =
      field.grid.interp_backward(cache.stencil, g_in.data() + dp_pos + dp_time);
  Vec3<T> g_p = upstream_p_prime + g_feat_p;
  for (int a = 0; a < 3; ++a)
    g_p[a] += g_p_norm[a] * T(2) / (field.grid.bbox.max[a] - field.grid.bbox.min[a]);
  return g_p;
}

}  // namespace ndvg
