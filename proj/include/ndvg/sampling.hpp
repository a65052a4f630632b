#pragma once

#include "ndvg/camera.hpp"
#include "ndvg/grid.hpp"

namespace ndvg {

// Slab intersection of the forward ray o + w*d (w >= 0) with a box.
// Returns false on a miss; otherwise [w0, w1] is the covered interval with
// w0 clamped to 0 when the origin is inside.
template <typename T>
inline bool ray_aabb_intersect(const Aabb<T>& box, const Vec3<T>& o, const Vec3<T>& d, T& w0,
                               T& w1) {
  w0 = T(0);
  w1 = std::numeric_limits<T>::max();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == T(0)) {
      if (o[a] < box.min[a] || o[a] > box.max[a]) return false;
      continue;
    }
    const T inv = T(1) / d[a];
    T tn = (box.min[a] - o[a]) * inv;
    T tf = (box.max[a] - o[a]) * inv;
    if (inv < T(0)) std::swap(tn, tf);
    if (tn > w0) w0 = tn;
    if (tf < w1) w1 = tf;
    if (w0 > w1) return false;
  }
  return true;
}

template <typename T>
struct SampleSet {
  T w_near = T(0), w_far = T(0);
  std::vector<T> w;      // ray parameters, strictly increasing
  std::vector<T> delta;  // spacing to the next sample (last one truncated)
  int count() const { return int(w.size()); }
};

// Uniform marching: samples at w_near + k*step for every k with k*step
// strictly inside the covered span; the last spacing is truncated at w_far.
template <typename T>
inline SampleSet<T> sample_points(const Ray<T>& ray, const Aabb<T>& box, T step) {
  check(step > T(0), "sampling step must be positive");
  SampleSet<T> s;
  T w0, w1;
  if (!ray_aabb_intersect(box, ray.o, ray.d, w0, w1)) return s;
  s.w_near = w0;
  s.w_far = w1;
  const T span = w1 - w0;
  for (int k = 0;; ++k) {
    const T offset = T(k) * step;
    if (!(offset < span)) break;
    s.w.push_back(w0 + offset);
  }
  const int n = int(s.w.size());
  s.delta.resize(n, step);
  if (n > 0) s.delta[n - 1] = s.w_far - s.w[n - 1];
  return s;
}

}  // namespace ndvg
