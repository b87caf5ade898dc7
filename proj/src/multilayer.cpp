#include "mldepth/multilayer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "mldepth/common.hpp"

namespace mldepth {

MultiLayerDepthMap::MultiLayerDepthMap(int height, int width, DepthUnits units)
    : height_(height), width_(width), units_(units) {
  if (height <= 0 || width <= 0) {
    throw std::invalid_argument("depth map dimensions must be positive");
  }
  pixels_.resize(static_cast<std::size_t>(height) * width);
}

std::size_t MultiLayerDepthMap::index(int x, int y) const {
  if (x < 0 || x >= width_ || y < 0 || y >= height_) {
    throw std::invalid_argument("pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                ") out of range");
  }
  return static_cast<std::size_t>(y) * width_ + x;
}

void MultiLayerDepthMap::set_layers(int x, int y, std::vector<double> depths) {
  for (std::size_t i = 0; i < depths.size(); ++i) {
    if (!std::isfinite(depths[i])) {
      throw std::invalid_argument("depth values must be finite");
    }
    if (units_ == DepthUnits::Raw && depths[i] <= 0.0) {
      throw std::invalid_argument("raw depths must be strictly positive");
    }
    if (i > 0 && depths[i] <= depths[i - 1]) {
      throw std::invalid_argument("per-pixel depths must be strictly increasing");
    }
  }
  pixels_[index(x, y)] = std::move(depths);
}

const std::vector<double>& MultiLayerDepthMap::layers(int x, int y) const {
  return pixels_[index(x, y)];
}

int MultiLayerDepthMap::layer_count(int x, int y) const {
  return static_cast<int>(pixels_[index(x, y)].size());
}

std::size_t MultiLayerDepthMap::total_depth_count() const {
  std::size_t n = 0;
  for (const auto& p : pixels_) n += p.size();
  return n;
}

int MultiLayerDepthMap::max_layer_count() const {
  std::size_t n = 0;
  for (const auto& p : pixels_) n = std::max(n, p.size());
  return static_cast<int>(n);
}

NormalizedMap normalize_scale_invariant(const MultiLayerDepthMap& map) {
  std::vector<double> all;
  all.reserve(map.total_depth_count());
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const auto& d = map.layers(x, y);
      all.insert(all.end(), d.begin(), d.end());
    }
  }
  if (all.empty()) {
    throw std::invalid_argument("cannot normalize a map with no depth values");
  }

  std::sort(all.begin(), all.end());
  const std::size_t n = all.size();
  const double median =
      (n % 2 == 1) ? all[n / 2] : 0.5 * (all[n / 2 - 1] + all[n / 2]);

  double abs_dev = 0.0;
  for (double d : all) abs_dev += std::abs(d - median);
  const double scale = abs_dev / static_cast<double>(n);
  if (scale <= 0.0) {
    throw DegenerateScaleError("all depths identical; scale-invariant normalization undefined");
  }

  NormalizedMap out;
  out.params = {median, scale};
  out.map = MultiLayerDepthMap(map.height(), map.width(), DepthUnits::Normalized);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const auto& d = map.layers(x, y);
      std::vector<double> nd(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) nd[i] = (d[i] - median) / scale;
      out.map.set_layers(x, y, std::move(nd));
    }
  }
  return out;
}

MultiLayerDepthMap denormalize_map(const MultiLayerDepthMap& map, const NormParams& params) {
  if (!(params.scale > 0.0)) {
    throw std::invalid_argument("denormalization scale must be positive");
  }
  MultiLayerDepthMap out(map.height(), map.width(), DepthUnits::Raw);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < map.width(); ++x) {
      const auto& d = map.layers(x, y);
      std::vector<double> rd(d.size());
      for (std::size_t i = 0; i < d.size(); ++i) rd[i] = d[i] * params.scale + params.shift;
      out.set_layers(x, y, std::move(rd));
    }
  }
  return out;
}

}  // namespace mldepth
