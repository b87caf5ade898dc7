#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mldepth/image.hpp"
#include "mldepth/laplace.hpp"
#include "mldepth/multilayer.hpp"

namespace mldepth {

enum class GmWeightMode : std::uint8_t {
  PerLayer,  // gm_weights[i] scales layer i's term (all scales weighted 1)
  PerScale   // gm_weights[k] scales pyramid level k's term (all layers weighted 1)
};

struct LossConfig {
  double lambda_int = 1.0;
  double lambda_cov = 0.1;
  double lambda_gm = 1.0;
  int gm_num_scales = 4;
  std::vector<double> gm_weights = {1.2, 1.0, 1.0, 1.0};
  GmWeightMode gm_weight_mode = GmWeightMode::PerLayer;
  double scale_clip_lo = 1.0;
  double scale_clip_hi = 10.0;
};

// ---------------------------------------------------------------------------
// Per-pixel set losses.
// ---------------------------------------------------------------------------

// -sum_i log max_j L_j(g_i). Per-depth terms are sorted before summation so
// the result is bitwise invariant to any reordering of components or depths.
// An empty gts list contributes zero (such pixels are skipped upstream).
double loss_intensity(const IntensityMixture& m, std::span<const double> gts);

// -sum_j log max_i L_j(g_i): every component pays for its distance to the
// nearest ground-truth depth. Same permutation and empty-input conventions
// as loss_intensity.
double loss_coverage(const IntensityMixture& m, std::span<const double> gts);

// Partials of a per-pixel loss w.r.t. every component's (center, scale).
struct ParamGrad {
  std::vector<double> center;
  std::vector<double> scale;
};

// Subgradient conventions: sign(0) = 0, max/min ties attribute to the lowest
// index. Only the selected component receives a contribution per term.
ParamGrad grad_loss_intensity(const IntensityMixture& m, std::span<const double> gts);
ParamGrad grad_loss_coverage(const IntensityMixture& m, std::span<const double> gts);

// lambda_int * grad L_int + lambda_cov * grad L_cov.
ParamGrad grad_losses(const IntensityMixture& m, std::span<const double> gts,
                      double lambda_int, double lambda_cov);

// ---------------------------------------------------------------------------
// Gradient matching.
// ---------------------------------------------------------------------------

struct GmTerm {
  double value = 0.0;
  bool empty_mask = false;
};

// Multi-scale mean of |dx R| + |dy R| with R = pred - gt, forward differences
// between valid pixels, scales built by stride-2 subsampling. scale_weights
// may be empty (all ones); extra entries are ignored.
GmTerm gradient_matching_term(const Image& pred, const Image& gt, const Mask& valid,
                              int num_scales, std::span<const double> scale_weights);

// Accumulates upstream * d(term)/d(pred) into grad_pred (same shape as pred).
void gradient_matching_backward(const Image& pred, const Image& gt, const Mask& valid,
                                int num_scales, std::span<const double> scale_weights,
                                double upstream, Image& grad_pred);

// ---------------------------------------------------------------------------
// Whole-image objective.
// ---------------------------------------------------------------------------

struct LossBreakdown {
  double total = 0.0;
  double intensity = 0.0;
  double coverage = 0.0;
  double gradient_matching = 0.0;
  std::size_t contributing_pixels = 0;  // pixels with at least one GT layer
  std::size_t skipped_pixels = 0;       // pixels with zero GT layers
  bool gm_empty_mask = false;
};

// Greedy one-to-one pairing of component center maps to GT layer indices by
// ascending mean absolute distance over pixels where the layer exists.
// pairing[c] is the GT layer index for component c, or -1 if unpaired.
std::vector<int> compute_gm_pairing(const MixtureField& field, const MultiLayerDepthMap& gt);

// lambda_int * mean L_int + lambda_cov * mean L_cov + lambda_gm * L_gm.
// Means run over contributing pixels only. gt must be in normalized units.
// An empty pairing is computed on the fly (max-mixture) or taken as the
// identity (ordered rule).
LossBreakdown loss_total(const MixtureField& field, const MultiLayerDepthMap& gt,
                         const LossConfig& cfg, std::span<const int> gm_pairing = {});

// loss_total plus gradients w.r.t. every per-pixel center and scale, laid out
// like the MixtureField planes.
struct FieldGradients {
  std::vector<double> center;
  std::vector<double> scale;
  LossBreakdown breakdown;
};

FieldGradients loss_total_with_grads(const MixtureField& field, const MultiLayerDepthMap& gt,
                                     const LossConfig& cfg,
                                     std::span<const int> gm_pairing = {});

// ---------------------------------------------------------------------------
// Ablation losses (index-matched, sorted inputs).
// ---------------------------------------------------------------------------

struct MatchedLoss {
  double value = 0.0;
  int matched = 0;
  int ignored = 0;  // layer-count mismatch remainder
};

MatchedLoss loss_l1(std::span<const double> pred_sorted, std::span<const double> gt_sorted);

// Scale-invariant log loss mean(e^2) - variance_weight * mean(e)^2 with
// e = log(pred) - log(gt); requires positive inputs.
MatchedLoss loss_silog(std::span<const double> pred_sorted, std::span<const double> gt_sorted,
                       double variance_weight = 1.0);

// Per-layer Laplace NLL: component i models the i-th sorted GT depth.
MatchedLoss loss_ordered(const IntensityMixture& m, std::span<const double> gt_sorted);

ParamGrad grad_loss_ordered(const IntensityMixture& m, std::span<const double> gt_sorted);

}  // namespace mldepth
