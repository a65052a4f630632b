#pragma once

#include "ndvg/common.hpp"

namespace ndvg {

// Gates density and color by the occlusion weight.
template <typename T>
inline void occlusion_gate(T sigma, const Vec3<T>& c, T w_occ, T& sigma_eff, Vec3<T>& c_eff) {
  sigma_eff = sigma * w_occ;
  c_eff = c * w_occ;
}

// Chain rule through the gate; returns (d_sigma, d_c, d_w_occ) contributions.
template <typename T>
inline void occlusion_gate_backward(T sigma, const Vec3<T>& c, T w_occ, T up_sigma_eff,
                                    const Vec3<T>& up_c_eff, T& d_sigma, Vec3<T>& d_c,
                                    T& d_w_occ) {
  d_sigma = up_sigma_eff * w_occ;
  d_c = up_c_eff * w_occ;
  d_w_occ = up_sigma_eff * sigma + up_c_eff.dot(c);
}

template <typename T>
struct CompositeResult {
  Vec3<T> color = Vec3<T>::Zero();
  T t_final = T(1);            // transmittance surviving past the last sample
  std::vector<T> weights;      // per-sample compositing weight T_k * alpha_k
};

// Emission-absorption compositing over ordered samples: alpha_k =
// 1 - exp(-sigma_k * delta_k), weight_k = alpha_k * prod_{j<k} (1 - alpha_j),
// with the background added through the surviving transmittance.
template <typename T>
inline CompositeResult<T> composite(const T* sigma, const Vec3<T>* c, const T* delta, int n,
                                    const Vec3<T>& background) {
  CompositeResult<T> r;
  r.weights.resize(n);
  T trans = T(1);
  for (int k = 0; k < n; ++k) {
    const T alpha = -std::expm1(-sigma[k] * delta[k]);
    const T weight = trans * alpha;
    r.weights[k] = weight;
    r.color += weight * c[k];
    trans *= T(1) - alpha;
  }
  r.color += trans * background;
  r.t_final = trans;
  return r;
}

// Reverse pass. Writes d_sigma[k] and d_c[k]; uses a suffix accumulator so
// no division by (1 - alpha) is ever needed (stable at opaque samples).
template <typename T>
inline void composite_backward(const T* sigma, const Vec3<T>* c, const T* delta, int n,
                               const Vec3<T>& background, const Vec3<T>& up_color,
                               T up_t_final, T* d_sigma, Vec3<T>* d_c) {
  std::vector<T> trans_next(n);  // transmittance after sample k
  std::vector<T> weight(n);
  T trans = T(1);
  for (int k = 0; k < n; ++k) {
    const T alpha = -std::expm1(-sigma[k] * delta[k]);
    weight[k] = trans * alpha;
    trans *= T(1) - alpha;
    trans_next[k] = trans;
  }
  // suffix = sum_{j>k} weight_j <up_color, c_j> + T_final*(<up_color,bg> + up_t_final)
  T suffix = trans * (up_color.dot(background) + up_t_final);
  for (int k = n - 1; k >= 0; --k) {
    const T dot_c = up_color.dot(c[k]);
    d_sigma[k] = delta[k] * (trans_next[k] * dot_c - suffix);
    d_c[k] = weight[k] * up_color;
    suffix += weight[k] * dot_c;
  }
}

}  // namespace ndvg
