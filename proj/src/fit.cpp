#include "mldepth/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "mldepth/common.hpp"
#include "mldepth/optimizer.hpp"

namespace mldepth {

PixelFitResult fit_pixel(std::span<const double> gts, const PixelFitOptions& opts) {
  if (gts.empty()) throw std::invalid_argument("fit_pixel needs at least one GT depth");
  if (opts.num_components < 1) throw std::invalid_argument("need at least one component");

  const auto [lo_it, hi_it] = std::minmax_element(gts.begin(), gts.end());
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> center_init(*lo_it - opts.init_margin,
                                                     *hi_it + opts.init_margin);
  std::uniform_real_distribution<double> scale_init(
      opts.scale_clip_lo, std::min(opts.scale_clip_hi, opts.scale_clip_lo + 1.0));

  const int n = opts.num_components;
  std::vector<double> params(2 * n);
  for (int j = 0; j < n; ++j) params[j] = center_init(rng);
  for (int j = 0; j < n; ++j) params[n + j] = scale_init(rng);

  AdamWConfig acfg;
  acfg.lr = opts.lr;
  acfg.beta1 = opts.beta1;
  acfg.beta2 = opts.beta2;
  acfg.weight_decay = opts.weight_decay;
  acfg.grad_clip_norm = opts.grad_clip_norm;
  acfg.lr_decay_power = opts.lr_decay_power;
  acfg.total_steps = opts.steps;
  AdamW optimizer(params.size(), acfg);

  PixelFitResult out;
  out.mixture.rule = MixtureRule::MaxMixture;
  out.mixture.components.resize(n);
  out.trace.reserve(opts.steps);

  std::vector<double> grad(2 * n);
  for (int step = 0; step < opts.steps; ++step) {
    for (int j = 0; j < n; ++j) out.mixture.components[j] = {params[j], params[n + j]};
    const double loss = opts.lambda_int * loss_intensity(out.mixture, gts) +
                        opts.lambda_cov * loss_coverage(out.mixture, gts);
    out.trace.push_back(loss);
    if (!std::isfinite(loss)) {
      out.diverged = true;
      return out;
    }
    const ParamGrad g = grad_losses(out.mixture, gts, opts.lambda_int, opts.lambda_cov);
    for (int j = 0; j < n; ++j) {
      grad[j] = g.center[j];
      grad[n + j] = g.scale[j];
    }
    optimizer.step(params, grad);
    for (int j = 0; j < n; ++j) {
      params[n + j] = std::clamp(params[n + j], opts.scale_clip_lo, opts.scale_clip_hi);
    }
  }
  for (int j = 0; j < n; ++j) out.mixture.components[j] = {params[j], params[n + j]};
  return out;
}

MixtureField fit_pixel_map(const MultiLayerDepthMap& gt, const PixelFitOptions& opts,
                           int threads, std::vector<double>* mean_trace) {
  MixtureField field =
      make_mixture_field(gt.height(), gt.width(), opts.num_components, MixtureRule::MaxMixture);
  const std::size_t pixels = static_cast<std::size_t>(gt.height()) * gt.width();

  std::vector<double> loss_sum(mean_trace ? opts.steps : 0, 0.0);
  std::size_t fitted = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      if (gt.layer_count(x, y) > 0) ++fitted;
    }
  }

  const int nthreads = std::max(1, threads);
  // Mirror parallel_for's chunking so each worker owns one partial slot.
  const std::size_t nt = std::min<std::size_t>(nthreads, std::max<std::size_t>(pixels, 1));
  const std::size_t chunk = (pixels + nt - 1) / nt;
  std::vector<std::vector<double>> partial(nt);

  parallel_for(pixels, nthreads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> local(mean_trace ? opts.steps : 0, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const int x = static_cast<int>(i % gt.width());
      const int y = static_cast<int>(i / gt.width());
      const auto& gts = gt.layers(x, y);
      if (gts.empty()) {
        // No evidence: one broad bump at the origin, well below peak cutoffs.
        for (int c = 0; c < field.num_components; ++c) {
          field.centers[field.index(c, x, y)] = 0.0;
          field.scales[field.index(c, x, y)] = opts.scale_clip_hi;
        }
        continue;
      }
      PixelFitOptions popts = opts;
      popts.seed = mix_seed(opts.seed, i);
      const PixelFitResult r = fit_pixel(gts, popts);
      for (int c = 0; c < field.num_components; ++c) {
        field.centers[field.index(c, x, y)] = r.mixture.components[c].center;
        field.scales[field.index(c, x, y)] = r.mixture.components[c].scale;
      }
      if (mean_trace) {
        for (std::size_t s = 0; s < r.trace.size(); ++s) local[s] += r.trace[s];
      }
    }
    if (mean_trace) partial[begin / chunk] = std::move(local);
  });

  if (mean_trace) {
    for (const auto& local : partial) {
      for (std::size_t s = 0; s < local.size(); ++s) loss_sum[s] += local[s];
    }
    mean_trace->assign(opts.steps, 0.0);
    if (fitted > 0) {
      for (int s = 0; s < opts.steps; ++s) {
        (*mean_trace)[s] = loss_sum[s] / static_cast<double>(fitted);
      }
    }
  }
  return field;
}

namespace {

NetFitResult fit_decomposition_once(const FeatureImage& features, const MultiLayerDepthMap& gt,
                                    const NetFitOptions& opts);

}  // namespace

NetFitResult fit_decomposition(const FeatureImage& features, const MultiLayerDepthMap& gt,
                               const NetFitOptions& opts) {
  if (opts.restarts < 1) throw std::invalid_argument("restarts must be >= 1");
  if (opts.restarts == 1) return fit_decomposition_once(features, gt, opts);
  NetFitResult best;
  bool have = false;
  for (int r = 0; r < opts.restarts; ++r) {
    NetFitOptions ropts = opts;
    ropts.restarts = 1;
    ropts.seed = mix_seed(opts.seed, static_cast<std::uint64_t>(r));
    NetFitResult candidate = fit_decomposition_once(features, gt, ropts);
    const bool better = !have || (!candidate.diverged &&
                                  candidate.final_loss.total < best.final_loss.total) ||
                        (best.diverged && !candidate.diverged);
    if (better) {
      best = std::move(candidate);
      have = true;
    }
  }
  return best;
}

namespace {

NetFitResult fit_decomposition_once(const FeatureImage& features, const MultiLayerDepthMap& gt,
                                    const NetFitOptions& opts) {
  if (features.height != gt.height() || features.width != gt.width()) {
    throw std::invalid_argument("feature image and depth map shapes differ");
  }

  RecurrenceOptions ropts = opts.recurrence;
  ropts.scale_clip_lo = opts.loss.scale_clip_lo;
  ropts.scale_clip_hi = opts.loss.scale_clip_hi;
  ropts.degenerate_eta_fallback = true;

  NetFitResult out;
  out.params = random_decomp_params(features.feature_dim(), opts.component_dim,
                                    opts.iterations, opts.init_scale, opts.seed,
                                    opts.shared_predictor);

  if (opts.spread_center_init && !opts.shared_predictor && opts.iterations > 1) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int y = 0; y < gt.height(); ++y) {
      for (int x = 0; x < gt.width(); ++x) {
        for (double d : gt.layers(x, y)) {
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
      }
    }
    if (std::isfinite(lo) && hi > lo) {
      for (int i = 0; i < opts.iterations; ++i) {
        out.params.b_predictor[i](0) =
            lo + (hi - lo) * static_cast<double>(i) / (opts.iterations - 1);
      }
    }
  }

  std::vector<double> flat = flatten_params(out.params);
  AdamWConfig acfg;
  acfg.lr = opts.lr;
  acfg.beta1 = opts.beta1;
  acfg.beta2 = opts.beta2;
  acfg.weight_decay = opts.weight_decay;
  acfg.grad_clip_norm = opts.grad_clip_norm;
  acfg.lr_decay_power = opts.lr_decay_power;
  acfg.total_steps = opts.steps;
  AdamW optimizer(flat.size(), acfg);

  out.trace.reserve(opts.steps);
  for (int step = 0; step < opts.steps; ++step) {
    const RecurrenceResult fwd = run_recurrence(features, out.params, ropts, true);
    out.max_eta_identity_error =
        std::max(out.max_eta_identity_error, fwd.tape.max_eta_identity_error);
    for (std::uint8_t d : fwd.tape.degenerate) out.degenerate_steps += d;

    const FieldGradients fg = loss_total_with_grads(fwd.field, gt, opts.loss);
    out.final_loss = fg.breakdown;
    if (!std::isfinite(fg.breakdown.total)) {
      out.diverged = true;
      unflatten_params(flat, out.params);
      return out;
    }

    const DecompParamGrads pg =
        backward_recurrence(out.params, fwd.tape, ropts, fg.center, fg.scale);
    std::vector<double> grad = flatten_grads(pg);
    const double lr = optimizer.step(flat, grad);
    unflatten_params(flat, out.params);

    out.trace.push_back({step, lr, fg.breakdown.total, fg.breakdown.intensity,
                         fg.breakdown.coverage, fg.breakdown.gradient_matching});
  }

  // Report the loss of the parameters actually returned.
  const RecurrenceResult fwd = run_recurrence(features, out.params, ropts, false);
  out.final_loss = loss_total(fwd.field, gt, opts.loss);
  return out;
}

}  // namespace

}  // namespace mldepth
