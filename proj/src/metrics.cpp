#include "ndvg/metrics.hpp"

#include <array>
#include <cmath>
#include <limits>

namespace ndvg {

namespace {

void check_pair(const Image& a, const Image& b) {
  check(a.width == b.width && a.height == b.height, "image dimensions differ");
  check(a.width > 0 && a.height > 0, "empty image");
}

constexpr int kWin = 11;

std::array<double, kWin> gaussian_kernel() {
  std::array<double, kWin> k{};
  const double sigma = 1.5;
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double x = double(i - kWin / 2);
    k[i] = std::exp(-x * x / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Separable valid-region convolution of a (w,h) plane with the 11-tap kernel.
std::vector<double> blur_valid(const std::vector<double>& src, int w, int h, int& ow, int& oh) {
  static const std::array<double, kWin> k = gaussian_kernel();
  ow = w - kWin + 1;
  oh = h - kWin + 1;
  std::vector<double> tmp(size_t(ow) * h, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * src[size_t(y) * w + x + i];
      tmp[size_t(y) * ow + x] = acc;
    }
  std::vector<double> out(size_t(ow) * oh, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int i = 0; i < kWin; ++i) acc += k[i] * tmp[size_t(y + i) * ow + x];
      out[size_t(y) * ow + x] = acc;
    }
  return out;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_pair(a, b);
  double acc = 0;
  for (size_t i = 0; i < a.rgb.size(); ++i) {
    const double d = double(a.rgb[i]) - double(b.rgb[i]);
    acc += d * d;
  }
  const double mse = acc / double(a.rgb.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return -10.0 * std::log10(mse);
}

double ssim(const Image& a, const Image& b) {
  check_pair(a, b);
  check(a.width >= kWin && a.height >= kWin, "image smaller than the ssim window");
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const int w = a.width, h = a.height;
  double channel_acc = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> x(size_t(w) * h), y(size_t(w) * h), xx(size_t(w) * h),
        yy(size_t(w) * h), xy(size_t(w) * h);
    for (int py = 0; py < h; ++py)
      for (int px = 0; px < w; ++px) {
        const size_t i = size_t(py) * w + px;
        x[i] = double(a.at(px, py, c));
        y[i] = double(b.at(px, py, c));
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
      }
    int ow, oh;
    const auto mx = blur_valid(x, w, h, ow, oh);
    const auto my = blur_valid(y, w, h, ow, oh);
    const auto mxx = blur_valid(xx, w, h, ow, oh);
    const auto myy = blur_valid(yy, w, h, ow, oh);
    const auto mxy = blur_valid(xy, w, h, ow, oh);
    double acc = 0;
    for (size_t i = 0; i < mx.size(); ++i) {
      const double vx = mxx[i] - mx[i] * mx[i];
      const double vy = myy[i] - my[i] * my[i];
      const double cov = mxy[i] - mx[i] * my[i];
      acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    channel_acc += acc / double(mx.size());
  }
  return channel_acc / 3.0;
}

}  // namespace ndvg
