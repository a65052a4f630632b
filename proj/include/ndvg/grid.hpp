#pragma once

#include <algorithm>
#include <cstddef>

#include "ndvg/common.hpp"

namespace ndvg {

template <typename T>
struct Aabb {
  Vec3<T> min = Vec3<T>::Zero();
  Vec3<T> max = Vec3<T>::Ones();

  bool contains(const Vec3<T>& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] < min[a] || p[a] > max[a]) return false;
    return true;
  }
  Vec3<T> diag() const { return max - min; }
  Vec3<T> center() const { return (min + max) / T(2); }
  T diag_norm() const { return diag().norm(); }
  void validate() const {
    for (int a = 0; a < 3; ++a)
      check(max[a] > min[a], "degenerate bounding box");
  }

  template <typename U>
  Aabb<U> cast() const {
    return {min.template cast<U>(), max.template cast<U>()};
  }
};

// Trilinear lookup stencil for one query point: base vertex, fractional
// offsets, index-space scale du/dp, and whether each axis was clamped.
template <typename T>
struct InterpStencil {
  int i0[3];
  T f[3];
  T scale[3];
  bool active[3];  // false when the query clamped on that axis (d/dp = 0)
  bool inside;
};

// Dense vertex-sampled grid over an axis-aligned box. Values are stored
// channel-last: index ((i*Ny + j)*Nz + k)*Nc + c with vertex (0,0,0) at
// bbox.min and (Nx-1,Ny-1,Nz-1) at bbox.max.
template <typename T>
struct DenseGrid {
  Vec3i res{2, 2, 2};
  int channels = 1;
  Aabb<T> bbox;
  std::vector<T> values;
  std::vector<T> grads;

  DenseGrid() = default;
  DenseGrid(const Vec3i& r, int nc, const Aabb<T>& box) : res(r), channels(nc), bbox(box) {
    for (int a = 0; a < 3; ++a) check(res[a] >= 2, "grid resolution must be >= 2 per axis");
    check(channels >= 1, "grid needs at least one channel");
    box.validate();
    values.assign(size(), T(0));
    grads.assign(size(), T(0));
  }

  size_t num_vertices() const { return size_t(res[0]) * res[1] * res[2]; }
  size_t size() const { return num_vertices() * channels; }
  size_t vertex_index(int i, int j, int k) const {
    return (size_t(i) * res[1] + j) * res[2] + k;
  }
  T& at(int i, int j, int k, int c) { return values[vertex_index(i, j, k) * channels + c]; }
  const T& at(int i, int j, int k, int c) const {
    return values[vertex_index(i, j, k) * channels + c];
  }
  T& grad_at(int i, int j, int k, int c) { return grads[vertex_index(i, j, k) * channels + c]; }

  Vec3<T> vertex_pos(int i, int j, int k) const {
    Vec3<T> p;
    const int idx[3] = {i, j, k};
    for (int a = 0; a < 3; ++a)
      p[a] = bbox.min[a] + (bbox.max[a] - bbox.min[a]) * T(idx[a]) / T(res[a] - 1);
    return p;
  }

  void zero_grads() { std::fill(grads.begin(), grads.end(), T(0)); }

  // Stencil from index-space coordinates u in [0, N-1] per axis.
  InterpStencil<T> stencil_from_index(const T* u_raw) const {
    InterpStencil<T> s;
    s.inside = true;
    for (int a = 0; a < 3; ++a) {
      const T hi = T(res[a] - 1);
      const T u = clamp(u_raw[a], T(0), hi);
      int i0 = int(std::floor(u));
      if (i0 > res[a] - 2) i0 = res[a] - 2;
      s.i0[a] = i0;
      s.f[a] = u - T(i0);
      s.scale[a] = T(1);
      s.active[a] = (u_raw[a] >= T(0) && u_raw[a] <= hi);
      s.inside = s.inside && s.active[a];
    }
    return s;
  }

  InterpStencil<T> stencil(const Vec3<T>& p) const {
    T u[3], scale[3];
    for (int a = 0; a < 3; ++a) {
      const T len = bbox.max[a] - bbox.min[a];
      scale[a] = T(res[a] - 1) / len;
      u[a] = (p[a] - bbox.min[a]) * scale[a];
    }
    InterpStencil<T> s = stencil_from_index(u);
    for (int a = 0; a < 3; ++a) s.scale[a] = scale[a];
    return s;
  }

  bool contains(const Vec3<T>& p) const { return bbox.contains(p); }

  // Writes the interpolated channel vector to out[0..channels).
  void interp(const InterpStencil<T>& s, T* out) const {
    const T wx[2] = {T(1) - s.f[0], s.f[0]};
    const T wy[2] = {T(1) - s.f[1], s.f[1]};
    const T wz[2] = {T(1) - s.f[2], s.f[2]};
    for (int c = 0; c < channels; ++c) out[c] = T(0);
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz) {
          const T w = wx[dx] * wy[dy] * wz[dz];
          const T* v = &values[vertex_index(s.i0[0] + dx, s.i0[1] + dy, s.i0[2] + dz) * channels];
          for (int c = 0; c < channels; ++c) out[c] += w * v[c];
        }
  }
  void interp(const Vec3<T>& p, T* out) const { interp(stencil(p), out); }
  VecX<T> interp(const Vec3<T>& p) const {
    VecX<T> out(channels);
    interp(stencil(p), out.data());
    return out;
  }

  // Accumulates upstream-weighted trilinear weights into grads and returns
  // the spatial gradient d(out . upstream)/dp (zero on clamped axes).
  Vec3<T> interp_backward(const InterpStencil<T>& s, const T* upstream) {
    return interp_backward_impl<true>(s, upstream);
  }
  Vec3<T> interp_backward(const Vec3<T>& p, const T* upstream) {
    return interp_backward_impl<true>(stencil(p), upstream);
  }
  // Spatial gradient only; vertex grads untouched (frozen-grid path).
  Vec3<T> interp_point_grad(const InterpStencil<T>& s, const T* upstream) const {
    return const_cast<DenseGrid*>(this)->template interp_backward_impl<false>(s, upstream);
  }

  template <typename U>
  DenseGrid<U> cast() const {
    DenseGrid<U> g(res, channels, bbox.template cast<U>());
    for (size_t i = 0; i < values.size(); ++i) g.values[i] = U(values[i]);
    return g;
  }

 private:
  template <bool Accumulate>
  Vec3<T> interp_backward_impl(const InterpStencil<T>& s, const T* upstream) {
    const T wx[2] = {T(1) - s.f[0], s.f[0]};
    const T wy[2] = {T(1) - s.f[1], s.f[1]};
    const T wz[2] = {T(1) - s.f[2], s.f[2]};
    T gu[3] = {T(0), T(0), T(0)};
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz) {
          const size_t base =
              vertex_index(s.i0[0] + dx, s.i0[1] + dy, s.i0[2] + dz) * channels;
          const T w = wx[dx] * wy[dy] * wz[dz];
          T dot = T(0);
          for (int c = 0; c < channels; ++c) dot += upstream[c] * values[base + c];
          gu[0] += (dx ? T(1) : T(-1)) * wy[dy] * wz[dz] * dot;
          gu[1] += (dy ? T(1) : T(-1)) * wx[dx] * wz[dz] * dot;
          gu[2] += (dz ? T(1) : T(-1)) * wx[dx] * wy[dy] * dot;
          if constexpr (Accumulate)
            for (int c = 0; c < channels; ++c) grads[base + c] += w * upstream[c];
        }
    Vec3<T> gp;
    for (int a = 0; a < 3; ++a) gp[a] = s.active[a] ? gu[a] * s.scale[a] : T(0);
    return gp;
  }
};

// Smoothness penalty: mean over interior voxels of the per-channel root of
// summed squared forward differences, each axis term cushioned by eps.
template <typename T>
T tv_loss(const DenseGrid<T>& g, T eps) {
  const int nx = g.res[0], ny = g.res[1], nz = g.res[2];
  double acc = 0;
  for (int i = 0; i + 1 < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j)
      for (int k = 0; k + 1 < nz; ++k)
        for (int c = 0; c < g.channels; ++c) {
          const double v = double(g.at(i, j, k, c));
          const double dx = double(g.at(i + 1, j, k, c)) - v;
          const double dy = double(g.at(i, j + 1, k, c)) - v;
          const double dz = double(g.at(i, j, k + 1, c)) - v;
          acc += std::sqrt(dx * dx + dy * dy + dz * dz + 3.0 * double(eps));
        }
  const double count = double(nx - 1) * double(ny - 1) * double(nz - 1);
  return T(acc / count);
}

template <typename T>
void tv_backward(DenseGrid<T>& g, T upstream, T eps) {
  const int nx = g.res[0], ny = g.res[1], nz = g.res[2];
  const T inv_count = upstream / (T(nx - 1) * T(ny - 1) * T(nz - 1));
  for (int i = 0; i + 1 < nx; ++i)
    for (int j = 0; j + 1 < ny; ++j)
      for (int k = 0; k + 1 < nz; ++k)
        for (int c = 0; c < g.channels; ++c) {
          const T v = g.at(i, j, k, c);
          const T dx = g.at(i + 1, j, k, c) - v;
          const T dy = g.at(i, j + 1, k, c) - v;
          const T dz = g.at(i, j, k + 1, c) - v;
          const T r = std::sqrt(dx * dx + dy * dy + dz * dz + T(3) * eps);
          const T s = inv_count / r;
          g.grad_at(i + 1, j, k, c) += s * dx;
          g.grad_at(i, j + 1, k, c) += s * dy;
          g.grad_at(i, j, k + 1, c) += s * dz;
          g.grad_at(i, j, k, c) -= s * (dx + dy + dz);
        }
}

// Resamples onto a finer lattice over the same box. Index-space arithmetic
// keeps vertex-aligned cases (new = 2*old - 1) exact.
template <typename T>
DenseGrid<T> upscale(const DenseGrid<T>& g, const Vec3i& new_res) {
  for (int a = 0; a < 3; ++a) {
    check(new_res[a] >= 2, "upscale target resolution must be >= 2 per axis");
    check(new_res[a] >= g.res[a], "upscale cannot shrink the grid");
  }
  DenseGrid<T> out(new_res, g.channels, g.bbox);
  for (int i = 0; i < new_res[0]; ++i)
    for (int j = 0; j < new_res[1]; ++j)
      for (int k = 0; k < new_res[2]; ++k) {
        const int idx[3] = {i, j, k};
        T u[3];
        for (int a = 0; a < 3; ++a)
          u[a] = T(idx[a]) * T(g.res[a] - 1) / T(new_res[a] - 1);
        g.interp(g.stencil_from_index(u), &out.at(i, j, k, 0));
      }
  return out;
}

// World-space resampling onto a new box/resolution; queries outside the
// source box clamp to its boundary.
template <typename T>
DenseGrid<T> resample_to(const DenseGrid<T>& g, const Aabb<T>& new_bbox, const Vec3i& new_res) {
  DenseGrid<T> out(new_res, g.channels, new_bbox);
  for (int i = 0; i < new_res[0]; ++i)
    for (int j = 0; j < new_res[1]; ++j)
      for (int k = 0; k < new_res[2]; ++k)
        g.interp(out.vertex_pos(i, j, k), &out.at(i, j, k, 0));
  return out;
}

// Splits a total voxel budget into per-axis counts proportional to the box
// edge lengths: floor the proportional solution, then greedily add one to the
// axes with the largest fractional remainder while the product stays within
// budget. Counts never drop below 2; if clamping pushed the product over
// budget, the largest axes give back until it fits or everything is at 2.
template <typename T>
Vec3i resolution_from_voxel_count(const Aabb<T>& bbox, long long expected_voxels) {
  bbox.validate();
  check(expected_voxels >= 8, "expected voxel count must be >= 8");
  const Vec3<T> d = bbox.diag();
  const double vol = double(d[0]) * double(d[1]) * double(d[2]);
  const double s = std::cbrt(vol / double(expected_voxels));
  double raw[3], rem[3];
  Vec3i n;
  for (int a = 0; a < 3; ++a) {
    raw[a] = double(d[a]) / s;
    const double fl = std::floor(raw[a]);
    rem[a] = raw[a] - fl;
    n[a] = std::max(2, int(fl));
  }
  auto product = [&n]() { return (long long)(n[0]) * n[1] * n[2]; };
  int order[3] = {0, 1, 2};
  std::sort(order, order + 3, [&](int a, int b) {
    return rem[a] != rem[b] ? rem[a] > rem[b] : a < b;
  });
  for (int idx = 0; idx < 3; ++idx) {
    const int a = order[idx];
    n[a] += 1;
    if (product() > expected_voxels) n[a] -= 1;
  }
  while (product() > expected_voxels) {
    int a = 0;
    for (int b = 1; b < 3; ++b)
      if (n[b] > n[a]) a = b;
    if (n[a] <= 2) break;
    n[a] -= 1;
  }
  return n;
}

}  // namespace ndvg
