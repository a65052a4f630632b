#pragma once

#include <algorithm>
#include <numeric>

#include "ndvg/rendering.hpp"

namespace ndvg {

template <typename T>
struct LossWeights {
  T ptc = T(0);
  T bg = T(0);
  T d_norm = T(0);
  T d_tv = T(0);

  static LossWeights coarse(bool large_motion = false) {
    return {T(0.1), T(0.01), large_motion ? T(0.01) : T(0.1), T(1)};
  }
  static LossWeights fine(bool large_motion = false) {
    return {T(0.01), T(0.001), large_motion ? T(0.001) : T(0.01), T(1)};
  }
};

// Mean squared error over rays: (1/|R|) sum_r ||C_hat - C||^2.
template <typename T>
inline T photometric(const std::vector<Vec3<T>>& pred, const std::vector<Vec3<T>>& target) {
  check(!pred.empty(), "photometric loss needs a non-empty batch");
  check(pred.size() == target.size(), "photometric batch size mismatch");
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i)
    acc += (pred[i] - target[i]).template cast<double>().squaredNorm();
  return T(acc / double(pred.size()));
}

template <typename T>
inline void photometric_backward(const std::vector<Vec3<T>>& pred,
                                 const std::vector<Vec3<T>>& target, T upstream,
                                 std::vector<Vec3<T>>& d_pred) {
  const T s = T(2) * upstream / T(pred.size());
  d_pred.resize(pred.size());
  for (size_t i = 0; i < pred.size(); ++i) d_pred[i] = s * (pred[i] - target[i]);
}

// Per-ray candidates for the selected-point color loss: index, compositing
// weight, ray parameter, pre-gate color.
template <typename T>
struct PtcCandidate {
  int index;  // position within the ray's record list
  T weight;
  T w;
  Vec3<T> c;
};

template <typename T>
struct PtcSelection {
  std::vector<std::vector<int>> picked;  // per ray, indices into the record list
  long long total = 0;
};

// Picks the N samples with the largest compositing weight on each ray (ties
// to the nearer sample) — the points that dominate the rendered color.
template <typename T>
inline PtcSelection<T> point_color_select(const std::vector<std::vector<PtcCandidate<T>>>& rays,
                                          int n_top) {
  check(n_top >= 1, "top-N selection needs N >= 1");
  PtcSelection<T> sel;
  sel.picked.resize(rays.size());
  for (size_t r = 0; r < rays.size(); ++r) {
    std::vector<int> order(rays[r].size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      const auto& ca = rays[r][a];
      const auto& cb = rays[r][b];
      if (ca.weight != cb.weight) return ca.weight > cb.weight;
      return ca.w < cb.w;
    });
    const int n = std::min<int>(n_top, int(order.size()));
    sel.picked[r].assign(order.begin(), order.begin() + n);
    sel.total += n;
  }
  return sel;
}

// Mean squared error between selected sample colors and their ray's target,
// averaged over every selected sample in the batch.
template <typename T>
inline T point_color(const std::vector<std::vector<PtcCandidate<T>>>& rays,
                     const std::vector<Vec3<T>>& targets, const PtcSelection<T>& sel) {
  if (sel.total == 0) return T(0);
  double acc = 0;
  for (size_t r = 0; r < rays.size(); ++r)
    for (int i : sel.picked[r])
      acc += (rays[r][i].c - targets[r]).template cast<double>().squaredNorm();
  return T(acc / double(sel.total));
}

// d/dc for each selected sample; unselected samples get zero.
template <typename T>
inline void point_color_backward(const std::vector<std::vector<PtcCandidate<T>>>& rays,
                                 const std::vector<Vec3<T>>& targets,
                                 const PtcSelection<T>& sel, T upstream,
                                 std::vector<std::vector<Vec3<T>>>& d_c) {
  d_c.resize(rays.size());
  for (size_t r = 0; r < rays.size(); ++r)
    d_c[r].assign(rays[r].size(), Vec3<T>::Zero());
  if (sel.total == 0) return;
  const T s = T(2) * upstream / T(sel.total);
  for (size_t r = 0; r < rays.size(); ++r)
    for (int i : sel.picked[r]) d_c[r][i] = s * (rays[r][i].c - targets[r]);
}

inline constexpr double kEntropyClamp = 1e-6;

// Mean binary entropy of the surviving transmittance, pushing rays to commit
// to foreground or background.
template <typename T>
inline T background_entropy(const std::vector<T>& t_final) {
  check(!t_final.empty(), "background entropy needs a non-empty batch");
  double acc = 0;
  for (T tf : t_final) {
    const double x = clamp(double(tf), kEntropyClamp, 1.0 - kEntropyClamp);
    acc += -(x * std::log(x) + (1.0 - x) * std::log1p(-x));
  }
  return T(acc / double(t_final.size()));
}

template <typename T>
inline void background_entropy_backward(const std::vector<T>& t_final, T upstream,
                                        std::vector<T>& d_t_final) {
  const T s = upstream / T(t_final.size());
  d_t_final.resize(t_final.size());
  for (size_t i = 0; i < t_final.size(); ++i) {
    const double x = double(t_final[i]);
    if (x <= kEntropyClamp || x >= 1.0 - kEntropyClamp) {
      d_t_final[i] = T(0);
    } else {
      d_t_final[i] = s * T(std::log((1.0 - x) / x));
    }
  }
}

// Static-scene prior: (1/|R|) sum over rays and samples of ||dp||_1. The
// subgradient of |x| at 0 is taken as 0.
template <typename T>
inline T deformation_norm(const std::vector<std::vector<Vec3<T>>>& dp_per_ray) {
  check(!dp_per_ray.empty(), "deformation norm needs a non-empty batch");
  double acc = 0;
  for (const auto& ray : dp_per_ray)
    for (const auto& dp : ray)
      acc += std::abs(double(dp[0])) + std::abs(double(dp[1])) + std::abs(double(dp[2]));
  return T(acc / double(dp_per_ray.size()));
}

template <typename T>
inline void deformation_norm_backward(const std::vector<std::vector<Vec3<T>>>& dp_per_ray,
                                      T upstream, std::vector<std::vector<Vec3<T>>>& d_dp) {
  const T s = upstream / T(dp_per_ray.size());
  d_dp.resize(dp_per_ray.size());
  for (size_t r = 0; r < dp_per_ray.size(); ++r) {
    d_dp[r].resize(dp_per_ray[r].size());
    for (size_t k = 0; k < dp_per_ray[r].size(); ++k)
      for (int a = 0; a < 3; ++a) {
        const T v = dp_per_ray[r][k][a];
        d_dp[r][k][a] = v > T(0) ? s : (v < T(0) ? -s : T(0));
      }
  }
}

template <typename T>
struct LossTerms {
  T photo = T(0), ptc = T(0), bg = T(0), d_norm = T(0), d_tv = T(0);
  T total(const LossWeights<T>& w) const {
    return photo + w.ptc * ptc + w.bg * bg + w.d_norm * d_norm + w.d_tv * d_tv;
  }
};

}  // namespace ndvg
