#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mldepth {

enum class DepthUnits : std::uint8_t {
  Raw = 0,        // metric depths, strictly positive
  Normalized = 1  // shift/scale normalized, may be negative
};

// Ragged per-pixel depth sequences: pixel (x, y) holds the sorted depths of
// every surface transition along its ray. Layer counts vary per pixel and
// may be zero.
class MultiLayerDepthMap {
 public:
  MultiLayerDepthMap() = default;
  MultiLayerDepthMap(int height, int width, DepthUnits units = DepthUnits::Raw);

  int height() const { return height_; }
  int width() const { return width_; }
  DepthUnits units() const { return units_; }
  void set_units(DepthUnits u) { units_ = u; }

  // depths must be finite, strictly increasing, and (for raw maps) positive.
  void set_layers(int x, int y, std::vector<double> depths);
  const std::vector<double>& layers(int x, int y) const;
  int layer_count(int x, int y) const;

  std::size_t pixel_count() const { return pixels_.size(); }
  std::size_t total_depth_count() const;
  int max_layer_count() const;

 private:
  std::size_t index(int x, int y) const;

  int height_ = 0;
  int width_ = 0;
  DepthUnits units_ = DepthUnits::Raw;
  std::vector<std::vector<double>> pixels_;
};

struct NormParams {
  double shift = 0.0;  // median of all depths
  double scale = 1.0;  // mean absolute deviation from the median
};

struct NormalizedMap {
  MultiLayerDepthMap map;
  NormParams params;
};

// Shift by the median and divide by the mean absolute deviation, computed
// jointly over every layer of every pixel so one affine map preserves
// cross-layer ordering. Throws DegenerateScaleError when all depths are
// identical and std::invalid_argument when the map is empty.
NormalizedMap normalize_scale_invariant(const MultiLayerDepthMap& map);

// Inverse affine map d * scale + shift applied to a whole map.
MultiLayerDepthMap denormalize_map(const MultiLayerDepthMap& map, const NormParams& params);

}  // namespace mldepth
