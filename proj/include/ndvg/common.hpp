#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ndvg {

// Scalar used by the shipped engine. Core templates also instantiate with
// double so tests can run finite differences at wide precision.
using real = float;

template <typename T>
using Vec3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Vec3f = Vec3<real>;
using Vec3i = Eigen::Matrix<int, 3, 1>;

// softplus(x) = ln(1 + e^x), computed without overflow for large |x|.
template <typename T>
inline T softplus(T x) {
  if (x > T(20)) return x;
  if (x < T(-20)) return std::exp(x);
  return std::log1p(std::exp(x));
}

// d/dx softplus(x) = sigmoid(x).
template <typename T>
inline T sigmoid(T x) {
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Inverse of softplus: y > 0 -> x with softplus(x) = y.
template <typename T>
inline T inv_softplus(T y) {
  if (y > T(20)) return y;
  return std::log(std::expm1(y));
}

template <typename T>
inline T clamp(T v, T lo, T hi) {
  return v < lo ? lo : (v > hi ? hi : v);
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::runtime_error(msg);
}

}  // namespace ndvg
