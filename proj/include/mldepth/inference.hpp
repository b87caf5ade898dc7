#pragma once

#include <optional>
#include <span>
#include <vector>

#include "mldepth/laplace.hpp"
#include "mldepth/multilayer.hpp"

namespace mldepth {

// Peak extraction -> minimum-intensity filter -> greedy suppression keeping
// the stronger of any pair closer than suppression_radius (ties keep the
// smaller depth) -> ascending sort. Peaks at exactly the radius both survive.
std::vector<double> extract_layers(const IntensityMixture& m, double suppression_radius = 0.02,
                                   double min_peak_intensity = 0.05);

// d * scale + shift per depth; requires scale > 0. Preserves ordering.
std::vector<double> denormalize(std::span<const double> depths, const NormParams& params);

struct PredictOptions {
  double suppression_radius = 0.02;
  double min_peak_intensity = 0.05;
  // When set, peak depths are mapped back to raw units; suppression happens
  // in normalized space unless suppress_after_denormalize.
  std::optional<NormParams> norm;
  bool suppress_after_denormalize = false;
  int threads = 1;
};

struct PredictStats {
  std::size_t dropped_nonpositive = 0;  // raw-space layers at depth <= 0
};

// Per-pixel peak extraction over a whole mixture field. Output is a ragged
// map with strictly increasing depths; raw-space layers that denormalize to
// a nonpositive depth are dropped and counted.
MultiLayerDepthMap predict_image(const MixtureField& field, const PredictOptions& opts,
                                 PredictStats* stats = nullptr);

}  // namespace mldepth
