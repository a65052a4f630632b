#pragma once

#include <string>
#include <vector>

#include "ndvg/common.hpp"

namespace ndvg {

// Float RGB image, values in [0,1], row-major from the top-left corner.
struct Image {
  int width = 0, height = 0;
  std::vector<real> rgb;  // width*height*3

  Image() = default;
  Image(int w, int h) : width(w), height(h), rgb(size_t(w) * h * 3, 0.f) {}
  real& at(int x, int y, int c) { return rgb[(size_t(y) * width + x) * 3 + c]; }
  const real& at(int x, int y, int c) const { return rgb[(size_t(y) * width + x) * 3 + c]; }
};

// Writes an opaque 8-bit RGBA PNG; channels quantized as round(255*v).
void save_png(const std::string& path, const Image& img);

// Reads an 8-bit RGBA/RGB/gray PNG and composites straight alpha over the
// given background color.
Image load_png(const std::string& path, const Vec3f& background);

}  // namespace ndvg
