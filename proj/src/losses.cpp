#include "mldepth/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mldepth {

namespace {

double sign0(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_max_rule(const IntensityMixture& m, const char* what) {
  if (m.components.empty()) throw std::invalid_argument("intensity mixture has no components");
  if (m.rule != MixtureRule::MaxMixture) {
    throw std::invalid_argument(std::string(what) + " requires a max-mixture");
  }
}

// Sorting the per-term values before accumulation makes the sum independent
// of component/GT order at the bit level, not just within rounding.
double sorted_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

}  // namespace

double loss_intensity(const IntensityMixture& m, std::span<const double> gts) {
  check_max_rule(m, "loss_intensity");
  if (gts.empty()) return 0.0;
  std::vector<double> terms;
  terms.reserve(gts.size());
  for (double g : gts) terms.push_back(-log_intensity(m, g));
  return sorted_sum(terms);
}

double loss_coverage(const IntensityMixture& m, std::span<const double> gts) {
  check_max_rule(m, "loss_coverage");
  if (gts.empty()) return 0.0;
  std::vector<double> terms;
  terms.reserve(m.components.size());
  for (const auto& c : m.components) {
    double dmin = std::numeric_limits<double>::infinity();
    for (double g : gts) dmin = std::min(dmin, std::abs(g - c.center));
    terms.push_back(std::log(2.0 * c.scale) + dmin / c.scale);
  }
  return sorted_sum(terms);
}

ParamGrad grad_loss_intensity(const IntensityMixture& m, std::span<const double> gts) {
  check_max_rule(m, "grad_loss_intensity");
  ParamGrad grad;
  grad.center.assign(m.components.size(), 0.0);
  grad.scale.assign(m.components.size(), 0.0);
  for (double g : gts) {
    const std::size_t j = argmax_component(m, g);
    const auto& c = m.components[j];
    const double r = g - c.center;
    grad.center[j] += -sign0(r) / c.scale;
    grad.scale[j] += 1.0 / c.scale - std::abs(r) / (c.scale * c.scale);
  }
  return grad;
}

ParamGrad grad_loss_coverage(const IntensityMixture& m, std::span<const double> gts) {
  check_max_rule(m, "grad_loss_coverage");
  ParamGrad grad;
  grad.center.assign(m.components.size(), 0.0);
  grad.scale.assign(m.components.size(), 0.0);
  if (gts.empty()) return grad;
  for (std::size_t j = 0; j < m.components.size(); ++j) {
    const auto& c = m.components[j];
    std::size_t best = 0;
    double best_dist = std::abs(gts[0] - c.center);
    for (std::size_t i = 1; i < gts.size(); ++i) {
      const double d = std::abs(gts[i] - c.center);
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    const double r = gts[best] - c.center;
    grad.center[j] += -sign0(r) / c.scale;
    grad.scale[j] += 1.0 / c.scale - std::abs(r) / (c.scale * c.scale);
  }
  return grad;
}

ParamGrad grad_losses(const IntensityMixture& m, std::span<const double> gts,
                      double lambda_int, double lambda_cov) {
  ParamGrad gi = grad_loss_intensity(m, gts);
  ParamGrad gc = grad_loss_coverage(m, gts);
  ParamGrad out;
  out.center.resize(gi.center.size());
  out.scale.resize(gi.scale.size());
  for (std::size_t j = 0; j < gi.center.size(); ++j) {
    out.center[j] = lambda_int * gi.center[j] + lambda_cov * gc.center[j];
    out.scale[j] = lambda_int * gi.scale[j] + lambda_cov * gc.scale[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Gradient matching.
// ---------------------------------------------------------------------------

namespace {

void check_gm_shapes(const Image& pred, const Image& gt, const Mask& valid) {
  if (pred.height != gt.height || pred.width != gt.width || pred.height != valid.height ||
      pred.width != valid.width) {
    throw std::invalid_argument("gradient matching inputs must share one shape");
  }
}

}  // namespace

GmTerm gradient_matching_term(const Image& pred, const Image& gt, const Mask& valid,
                              int num_scales, std::span<const double> scale_weights) {
  check_gm_shapes(pred, gt, valid);
  if (num_scales < 1) throw std::invalid_argument("gm_num_scales must be >= 1");

  GmTerm out;
  for (int k = 0; k < num_scales; ++k) {
    const int stride = 1 << k;
    if (stride >= pred.width && stride >= pred.height) break;
    const double w = k < static_cast<int>(scale_weights.size()) ? scale_weights[k] : 1.0;
    double acc = 0.0;
    std::size_t count = 0;
    for (int y = 0; y < pred.height; y += stride) {
      for (int x = 0; x < pred.width; x += stride) {
        if (!valid.at(x, y)) continue;
        ++count;
        const double r = pred.at(x, y) - gt.at(x, y);
        if (x + stride < pred.width && valid.at(x + stride, y)) {
          acc += std::abs(pred.at(x + stride, y) - gt.at(x + stride, y) - r);
        }
        if (y + stride < pred.height && valid.at(x, y + stride)) {
          acc += std::abs(pred.at(x, y + stride) - gt.at(x, y + stride) - r);
        }
      }
    }
    if (k == 0 && count == 0) out.empty_mask = true;
    if (count > 0) out.value += w * acc / static_cast<double>(count);
  }
  return out;
}

void gradient_matching_backward(const Image& pred, const Image& gt, const Mask& valid,
                                int num_scales, std::span<const double> scale_weights,
                                double upstream, Image& grad_pred) {
  check_gm_shapes(pred, gt, valid);
  if (grad_pred.height != pred.height || grad_pred.width != pred.width) {
    throw std::invalid_argument("grad_pred shape mismatch");
  }
  for (int k = 0; k < num_scales; ++k) {
    const int stride = 1 << k;
    if (stride >= pred.width && stride >= pred.height) break;
    const double w = k < static_cast<int>(scale_weights.size()) ? scale_weights[k] : 1.0;
    std::size_t count = 0;
    for (int y = 0; y < pred.height; y += stride) {
      for (int x = 0; x < pred.width; x += stride) {
        if (valid.at(x, y)) ++count;
      }
    }
    if (count == 0) continue;
    const double c = upstream * w / static_cast<double>(count);
    for (int y = 0; y < pred.height; y += stride) {
      for (int x = 0; x < pred.width; x += stride) {
        if (!valid.at(x, y)) continue;
        const double r = pred.at(x, y) - gt.at(x, y);
        if (x + stride < pred.width && valid.at(x + stride, y)) {
          const double s = sign0(pred.at(x + stride, y) - gt.at(x + stride, y) - r);
          grad_pred.at(x + stride, y) += c * s;
          grad_pred.at(x, y) -= c * s;
        }
        if (y + stride < pred.height && valid.at(x, y + stride)) {
          const double s = sign0(pred.at(x, y + stride) - gt.at(x, y + stride) - r);
          grad_pred.at(x, y + stride) += c * s;
          grad_pred.at(x, y) -= c * s;
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Whole-image objective.
// ---------------------------------------------------------------------------

namespace {

struct GtLayerImages {
  std::vector<Image> value;
  std::vector<Mask> exists;
};

GtLayerImages build_gt_layers(const MultiLayerDepthMap& gt) {
  GtLayerImages out;
  const int layers = gt.max_layer_count();
  for (int i = 0; i < layers; ++i) {
    out.value.emplace_back(gt.height(), gt.width(), 0.0);
    out.exists.emplace_back(gt.height(), gt.width(), false);
  }
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const auto& d = gt.layers(x, y);
      for (std::size_t i = 0; i < d.size(); ++i) {
        out.value[i].at(x, y) = d[i];
        out.exists[i].set(x, y, true);
      }
    }
  }
  return out;
}

Image component_center_image(const MixtureField& field, int c) {
  Image img(field.height, field.width);
  for (int y = 0; y < field.height; ++y) {
    for (int x = 0; x < field.width; ++x) img.at(x, y) = field.center_at(c, x, y);
  }
  return img;
}

void check_field_gt(const MixtureField& field, const MultiLayerDepthMap& gt) {
  if (field.height != gt.height() || field.width != gt.width()) {
    throw std::invalid_argument("mixture field and depth map shapes differ");
  }
  if (gt.units() != DepthUnits::Normalized) {
    throw std::invalid_argument("training losses expect a normalized depth map");
  }
}

std::vector<int> identity_pairing(int num_components, int num_layers) {
  std::vector<int> pairing(num_components, -1);
  for (int c = 0; c < std::min(num_components, num_layers); ++c) pairing[c] = c;
  return pairing;
}

}  // namespace

std::vector<int> compute_gm_pairing(const MixtureField& field, const MultiLayerDepthMap& gt) {
  check_field_gt(field, gt);
  const int layers = gt.max_layer_count();
  if (field.rule == MixtureRule::Ordered) {
    return identity_pairing(field.num_components, layers);
  }
  struct Cand {
    double cost;
    int comp;
    int layer;
  };
  std::vector<Cand> cands;
  for (int c = 0; c < field.num_components; ++c) {
    for (int l = 0; l < layers; ++l) {
      double acc = 0.0;
      std::size_t n = 0;
      for (int y = 0; y < gt.height(); ++y) {
        for (int x = 0; x < gt.width(); ++x) {
          const auto& d = gt.layers(x, y);
          if (static_cast<int>(d.size()) <= l) continue;
          acc += std::abs(field.center_at(c, x, y) - d[l]);
          ++n;
        }
      }
      if (n > 0) cands.push_back({acc / static_cast<double>(n), c, l});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    if (a.comp != b.comp) return a.comp < b.comp;
    return a.layer < b.layer;
  });
  std::vector<int> pairing(field.num_components, -1);
  std::vector<bool> layer_used(layers, false);
  for (const auto& cand : cands) {
    if (pairing[cand.comp] != -1 || layer_used[cand.layer]) continue;
    pairing[cand.comp] = cand.layer;
    layer_used[cand.layer] = true;
  }
  return pairing;
}

namespace {

// Shared skeleton for loss_total / loss_total_with_grads; grads may be null.
// The pixel loop is fused and allocation-free: per-pixel gradients are
// deferred by one scaling factor (the contributing-pixel count is only known
// at the end), so raw sums are accumulated and divided afterwards.
LossBreakdown accumulate_total(const MixtureField& field, const MultiLayerDepthMap& gt,
                               const LossConfig& cfg, std::span<const int> gm_pairing,
                               FieldGradients* grads) {
  check_field_gt(field, gt);
  LossBreakdown bd;

  if (grads) {
    grads->center.assign(field.centers.size(), 0.0);
    grads->scale.assign(field.scales.size(), 0.0);
  }

  const int n = field.num_components;
  const std::size_t plane = field.plane_size();
  const bool ordered = field.rule == MixtureRule::Ordered;

  double int_sum = 0.0;
  double cov_sum = 0.0;
  std::vector<double> terms;
  terms.reserve(64);

  std::size_t pix = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x, ++pix) {
      const auto& gts = gt.layers(x, y);
      if (gts.empty()) {
        ++bd.skipped_pixels;
        continue;
      }
      ++bd.contributing_pixels;
      const std::size_t m = gts.size();

      if (ordered) {
        const std::size_t k = std::min<std::size_t>(n, m);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double d = field.centers[i * plane + pix];
          const double b = field.scales[i * plane + pix];
          const double r = gts[i] - d;
          acc += std::log(2.0 * b) + std::abs(r) / b;
          if (grads) {
            grads->center[i * plane + pix] = -cfg.lambda_int * sign0(r) / b;
            grads->scale[i * plane + pix] =
                cfg.lambda_int * (1.0 / b - std::abs(r) / (b * b));
          }
        }
        int_sum += acc;
        continue;
      }

      // intensity: per GT depth, the best component in log space
      terms.clear();
      for (std::size_t i = 0; i < m; ++i) {
        const double g = gts[i];
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_c = 0;
        for (int c = 0; c < n; ++c) {
          const double b = field.scales[c * plane + pix];
          const double l = -std::log(2.0 * b) - std::abs(g - field.centers[c * plane + pix]) / b;
          if (l > best) {
            best = l;
            best_c = static_cast<std::size_t>(c);
          }
        }
        terms.push_back(-best);
        if (grads) {
          const double d = field.centers[best_c * plane + pix];
          const double b = field.scales[best_c * plane + pix];
          const double r = g - d;
          grads->center[best_c * plane + pix] += -cfg.lambda_int * sign0(r) / b;
          grads->scale[best_c * plane + pix] +=
              cfg.lambda_int * (1.0 / b - std::abs(r) / (b * b));
        }
      }
      // per-pixel subtotal in canonical (sorted) order, added as one value so
      // the aggregate matches a loop over loss_intensity() bit for bit
      std::sort(terms.begin(), terms.end());
      double pixel_sum = 0.0;
      for (double t : terms) pixel_sum += t;
      int_sum += pixel_sum;

      // coverage: per component, the nearest GT depth
      terms.clear();
      for (int c = 0; c < n; ++c) {
        const double d = field.centers[c * plane + pix];
        const double b = field.scales[c * plane + pix];
        double dmin = std::numeric_limits<double>::infinity();
        double rbest = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double dist = std::abs(gts[i] - d);
          if (dist < dmin) {
            dmin = dist;
            rbest = gts[i] - d;
          }
        }
        terms.push_back(std::log(2.0 * b) + dmin / b);
        if (grads) {
          grads->center[c * plane + pix] += -cfg.lambda_cov * sign0(rbest) / b;
          grads->scale[c * plane + pix] += cfg.lambda_cov * (1.0 / b - dmin / (b * b));
        }
      }
      std::sort(terms.begin(), terms.end());
      double cov_pixel = 0.0;
      for (double t : terms) cov_pixel += t;
      cov_sum += cov_pixel;
    }
  }
  const double denom =
      bd.contributing_pixels > 0 ? static_cast<double>(bd.contributing_pixels) : 1.0;
  bd.intensity = int_sum / denom;
  bd.coverage = cov_sum / denom;
  if (grads) {
    for (double& v : grads->center) v /= denom;
    for (double& v : grads->scale) v /= denom;
  }

  // Gradient matching over paired (component, GT layer) maps.
  if (cfg.lambda_gm != 0.0) {
    const GtLayerImages gtl = build_gt_layers(gt);
    std::vector<int> pairing(gm_pairing.begin(), gm_pairing.end());
    if (pairing.empty()) pairing = compute_gm_pairing(field, gt);
    if (static_cast<int>(pairing.size()) != field.num_components) {
      throw std::invalid_argument("gm pairing size must equal the component count");
    }
    const bool per_scale = cfg.gm_weight_mode == GmWeightMode::PerScale;
    const std::span<const double> scale_w =
        per_scale ? std::span<const double>(cfg.gm_weights) : std::span<const double>();
    bool any_valid = false;
    for (int c = 0; c < field.num_components; ++c) {
      const int l = pairing[c];
      if (l < 0) continue;
      if (l >= static_cast<int>(gtl.value.size())) {
        throw std::invalid_argument("gm pairing references a missing GT layer");
      }
      double layer_w = 1.0;
      if (!per_scale) {
        layer_w = l < static_cast<int>(cfg.gm_weights.size()) ? cfg.gm_weights[l] : 1.0;
      }
      const Image pred = component_center_image(field, c);
      const GmTerm term =
          gradient_matching_term(pred, gtl.value[l], gtl.exists[l], cfg.gm_num_scales, scale_w);
      if (!term.empty_mask) any_valid = true;
      bd.gradient_matching += layer_w * term.value;
      if (grads) {
        Image gimg(field.height, field.width, 0.0);
        gradient_matching_backward(pred, gtl.value[l], gtl.exists[l], cfg.gm_num_scales, scale_w,
                                   cfg.lambda_gm * layer_w, gimg);
        for (int y = 0; y < field.height; ++y) {
          for (int x = 0; x < field.width; ++x) {
            grads->center[field.index(c, x, y)] += gimg.at(x, y);
          }
        }
      }
    }
    bd.gm_empty_mask = !any_valid;
  }

  bd.total = cfg.lambda_int * bd.intensity + cfg.lambda_cov * bd.coverage +
             cfg.lambda_gm * bd.gradient_matching;
  return bd;
}

}  // namespace

LossBreakdown loss_total(const MixtureField& field, const MultiLayerDepthMap& gt,
                         const LossConfig& cfg, std::span<const int> gm_pairing) {
  return accumulate_total(field, gt, cfg, gm_pairing, nullptr);
}

FieldGradients loss_total_with_grads(const MixtureField& field, const MultiLayerDepthMap& gt,
                                     const LossConfig& cfg, std::span<const int> gm_pairing) {
  FieldGradients out;
  out.breakdown = accumulate_total(field, gt, cfg, gm_pairing, &out);
  return out;
}

// ---------------------------------------------------------------------------
// Ablation losses.
// ---------------------------------------------------------------------------

MatchedLoss loss_l1(std::span<const double> pred_sorted, std::span<const double> gt_sorted) {
  MatchedLoss out;
  const std::size_t k = std::min(pred_sorted.size(), gt_sorted.size());
  out.matched = static_cast<int>(k);
  out.ignored = static_cast<int>(std::max(pred_sorted.size(), gt_sorted.size()) - k);
  if (k == 0) return out;
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) acc += std::abs(pred_sorted[i] - gt_sorted[i]);
  out.value = acc / static_cast<double>(k);
  return out;
}

MatchedLoss loss_silog(std::span<const double> pred_sorted, std::span<const double> gt_sorted,
                       double variance_weight) {
  MatchedLoss out;
  const std::size_t k = std::min(pred_sorted.size(), gt_sorted.size());
  out.matched = static_cast<int>(k);
  out.ignored = static_cast<int>(std::max(pred_sorted.size(), gt_sorted.size()) - k);
  if (k == 0) return out;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (pred_sorted[i] <= 0.0 || gt_sorted[i] <= 0.0) {
      throw std::invalid_argument("loss_silog requires strictly positive depths");
    }
    const double e = std::log(pred_sorted[i]) - std::log(gt_sorted[i]);
    sum += e;
    sum2 += e * e;
  }
  const double n = static_cast<double>(k);
  out.value = sum2 / n - variance_weight * (sum / n) * (sum / n);
  return out;
}

MatchedLoss loss_ordered(const IntensityMixture& m, std::span<const double> gt_sorted) {
  if (m.components.empty()) throw std::invalid_argument("intensity mixture has no components");
  MatchedLoss out;
  const std::size_t k = std::min(m.components.size(), gt_sorted.size());
  out.matched = static_cast<int>(k);
  out.ignored = static_cast<int>(std::max(m.components.size(), gt_sorted.size()) - k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& c = m.components[i];
    out.value += std::log(2.0 * c.scale) + std::abs(gt_sorted[i] - c.center) / c.scale;
  }
  return out;
}

ParamGrad grad_loss_ordered(const IntensityMixture& m, std::span<const double> gt_sorted) {
  if (m.components.empty()) throw std::invalid_argument("intensity mixture has no components");
  ParamGrad grad;
  grad.center.assign(m.components.size(), 0.0);
  grad.scale.assign(m.components.size(), 0.0);
  const std::size_t k = std::min(m.components.size(), gt_sorted.size());
  for (std::size_t i = 0; i < k; ++i) {
    const auto& c = m.components[i];
    const double r = gt_sorted[i] - c.center;
    grad.center[i] = -sign0(r) / c.scale;
    grad.scale[i] = 1.0 / c.scale - std::abs(r) / (c.scale * c.scale);
  }
  return grad;
}

}  // namespace mldepth
