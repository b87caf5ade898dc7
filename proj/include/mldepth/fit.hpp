#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mldepth/decomposition.hpp"
#include "mldepth/laplace.hpp"
#include "mldepth/losses.hpp"
#include "mldepth/multilayer.hpp"

namespace mldepth {

struct TraceRow {
  int step = 0;
  double lr = 0.0;
  double total = 0.0;
  double intensity = 0.0;
  double coverage = 0.0;
  double gradient_matching = 0.0;
};

// ---------------------------------------------------------------------------
// Direct per-pixel optimization of (center, scale) parameters.
// ---------------------------------------------------------------------------

struct PixelFitOptions {
  int num_components = 4;
  int steps = 2000;
  double lr = 0.05;
  double lr_decay_power = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.0;  // parameters are coordinates, not weights
  double grad_clip_norm = 0.1;
  double lambda_int = 1.0;
  double lambda_cov = 0.1;
  double scale_clip_lo = 1.0;
  double scale_clip_hi = 10.0;
  double init_margin = 1.0;  // centers start in [min(gt)-margin, max(gt)+margin]
  std::uint64_t seed = 0;
};

struct PixelFitResult {
  IntensityMixture mixture;
  std::vector<double> trace;  // loss per step
  bool diverged = false;
};

// Fits a max-mixture to one pixel's ground-truth depths (normalized space)
// under lambda_int * L_int + lambda_cov * L_cov. Scales are projected into
// [scale_clip_lo, scale_clip_hi] after every optimizer step.
PixelFitResult fit_pixel(std::span<const double> gts, const PixelFitOptions& opts);

// Independent fit per pixel; pixels with no GT layers get a single broad
// mixture at the origin. Per-pixel seeds derive from (seed, pixel index), so
// results do not depend on the thread count. mean_trace (optional) receives
// the per-step loss averaged over fitted pixels.
MixtureField fit_pixel_map(const MultiLayerDepthMap& gt, const PixelFitOptions& opts,
                           int threads = 1, std::vector<double>* mean_trace = nullptr);

// ---------------------------------------------------------------------------
// End-to-end training of the decomposition network.
// ---------------------------------------------------------------------------

struct NetFitOptions {
  int component_dim = 8;
  int iterations = 4;
  int steps = 2000;
  double lr = 0.02;
  double lr_decay_power = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double weight_decay = 0.01;
  double grad_clip_norm = 0.1;
  double init_scale = 0.5;
  bool shared_predictor = true;
  // Spreads the per-iteration predictor center biases over the GT depth
  // range so components start specialized in separate depth bands instead of
  // all competing for the same peaks. Requires a per-iteration predictor;
  // ignored when the predictor is shared.
  bool spread_center_init = true;
  // Independent runs from derived seeds; the result with the lowest final
  // training loss wins. Mixture losses have assignment local minima, so a
  // few restarts make the fit robust to initialization.
  int restarts = 1;
  std::uint64_t seed = 0;
  LossConfig loss;
  RecurrenceOptions recurrence;  // rule = Ordered trains the per-layer ablation
};

struct NetFitResult {
  DecompParams params;
  std::vector<TraceRow> trace;
  LossBreakdown final_loss;
  double max_eta_identity_error = 0.0;
  int degenerate_steps = 0;
  bool diverged = false;
};

// gt must be in normalized units (see normalize_scale_invariant).
NetFitResult fit_decomposition(const FeatureImage& features, const MultiLayerDepthMap& gt,
                               const NetFitOptions& opts);

}  // namespace mldepth
