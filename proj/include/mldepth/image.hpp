#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mldepth {

// Dense single-channel image, row major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> v;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("image dimensions must be positive");
  }
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x]; }
};

struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> v;

  Mask() = default;
  Mask(int h, int w, bool fill = true)
      : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {
    if (h <= 0 || w <= 0) throw std::invalid_argument("mask dimensions must be positive");
  }
  bool at(int x, int y) const { return v[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool b) { v[static_cast<std::size_t>(y) * width + x] = b ? 1 : 0; }
};

}  // namespace mldepth
