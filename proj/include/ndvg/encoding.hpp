#pragma once

#include "ndvg/common.hpp"

namespace ndvg {

// Frequency feature expansion: [x | sin(2^k x), cos(2^k x) for k = 0..L-1],
// raw input always included. Output dim = d * (1 + 2L).
struct PosEncConfig {
  int num_freqs = 0;
};

inline int posenc_dim(int d, const PosEncConfig& cfg) { return d * (1 + 2 * cfg.num_freqs); }

template <typename T>
inline void posenc(const T* x, int d, const PosEncConfig& cfg, T* out) {
  for (int i = 0; i < d; ++i) out[i] = x[i];
  int o = d;
  T freq = T(1);
  for (int k = 0; k < cfg.num_freqs; ++k) {
    for (int i = 0; i < d; ++i) out[o + i] = std::sin(freq * x[i]);
    for (int i = 0; i < d; ++i) out[o + d + i] = std::cos(freq * x[i]);
    o += 2 * d;
    freq *= T(2);
  }
}

// Accumulates d(enc . upstream)/dx into grad_x.
template <typename T>
inline void posenc_backward(const T* x, int d, const PosEncConfig& cfg, const T* upstream,
                            T* grad_x) {
  for (int i = 0; i < d; ++i) grad_x[i] += upstream[i];
  int o = d;
  T freq = T(1);
  for (int k = 0; k < cfg.num_freqs; ++k) {
    for (int i = 0; i < d; ++i) {
      const T a = freq * x[i];
      grad_x[i] += freq * (std::cos(a) * upstream[o + i] - std::sin(a) * upstream[o + d + i]);
    }
    o += 2 * d;
    freq *= T(2);
  }
}

}  // namespace ndvg
