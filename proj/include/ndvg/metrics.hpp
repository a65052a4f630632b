#pragma once

#include "ndvg/image.hpp"

namespace ndvg {

// Peak signal-to-noise ratio in dB over all pixels and channels; +infinity
// for identical images (callers cap it when writing reports).
double psnr(const Image& a, const Image& b);

inline double psnr_capped(const Image& a, const Image& b, double cap = 99.0) {
  const double v = psnr(a, b);
  return std::isfinite(v) ? std::min(v, cap) : cap;
}

// Structural similarity: 11x11 Gaussian window (sigma 1.5), valid-region
// convolution, channel-averaged.
double ssim(const Image& a, const Image& b);

}  // namespace ndvg
