#include "mldepth/inference.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

#include "mldepth/common.hpp"

namespace mldepth {

namespace {

// Greedy non-maximum suppression: strongest peak first, a peak survives only
// if every already-kept peak is at least `radius` away.
std::vector<Peak> suppress_peaks(std::vector<Peak> peaks, double radius) {
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    if (a.intensity != b.intensity) return a.intensity > b.intensity;
    return a.depth < b.depth;
  });
  std::vector<Peak> kept;
  for (const Peak& p : peaks) {
    bool ok = true;
    for (const Peak& k : kept) {
      if (std::abs(p.depth - k.depth) < radius) {
        ok = false;
        break;
      }
    }
    if (ok) kept.push_back(p);
  }
  return kept;
}

std::vector<double> extract_impl(const IntensityMixture& m, double suppression_radius,
                                 double min_peak_intensity, const std::optional<NormParams>& norm,
                                 bool suppress_after_denorm) {
  std::vector<Peak> peaks = peak_set(m);
  std::erase_if(peaks, [&](const Peak& p) { return p.intensity < min_peak_intensity; });
  if (norm && suppress_after_denorm) {
    for (Peak& p : peaks) p.depth = p.depth * norm->scale + norm->shift;
  }
  peaks = suppress_peaks(std::move(peaks), suppression_radius);
  if (norm && !suppress_after_denorm) {
    for (Peak& p : peaks) p.depth = p.depth * norm->scale + norm->shift;
  }
  std::vector<double> depths;
  depths.reserve(peaks.size());
  for (const Peak& p : peaks) depths.push_back(p.depth);
  std::sort(depths.begin(), depths.end());
  return depths;
}

}  // namespace

std::vector<double> extract_layers(const IntensityMixture& m, double suppression_radius,
                                   double min_peak_intensity) {
  return extract_impl(m, suppression_radius, min_peak_intensity, std::nullopt, false);
}

std::vector<double> denormalize(std::span<const double> depths, const NormParams& params) {
  if (!(params.scale > 0.0)) {
    throw std::invalid_argument("denormalization scale must be positive");
  }
  std::vector<double> out(depths.size());
  for (std::size_t i = 0; i < depths.size(); ++i) {
    out[i] = depths[i] * params.scale + params.shift;
  }
  return out;
}

MultiLayerDepthMap predict_image(const MixtureField& field, const PredictOptions& opts,
                                 PredictStats* stats) {
  if (opts.norm && !(opts.norm->scale > 0.0)) {
    throw std::invalid_argument("denormalization scale must be positive");
  }
  const bool raw_output = opts.norm.has_value();
  MultiLayerDepthMap out(field.height, field.width,
                         raw_output ? DepthUnits::Raw : DepthUnits::Normalized);
  const std::size_t pixels = field.plane_size();
  std::atomic<std::size_t> dropped{0};

  parallel_for(pixels, opts.threads, [&](std::size_t begin, std::size_t end) {
    std::size_t local_dropped = 0;
    for (std::size_t i = begin; i < end; ++i) {
      const int x = static_cast<int>(i % field.width);
      const int y = static_cast<int>(i / field.width);
      std::vector<double> layers;
      if (field.rule == MixtureRule::Ordered) {
        // depth-ordered grouping: component i is layer i; emit all centers
        for (int c = 0; c < field.num_components; ++c) {
          double d = field.center_at(c, x, y);
          if (opts.norm) d = d * opts.norm->scale + opts.norm->shift;
          layers.push_back(d);
        }
        std::sort(layers.begin(), layers.end());
        layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
      } else {
        layers = extract_impl(mixture_at(field, x, y), opts.suppression_radius,
                              opts.min_peak_intensity, opts.norm,
                              opts.suppress_after_denormalize);
      }
      if (raw_output) {
        const std::size_t before = layers.size();
        std::erase_if(layers, [](double d) { return d <= 0.0; });
        local_dropped += before - layers.size();
      }
      out.set_layers(x, y, std::move(layers));
    }
    dropped += local_dropped;
  });

  if (stats) stats->dropped_nonpositive = dropped.load();
  return out;
}

}  // namespace mldepth
