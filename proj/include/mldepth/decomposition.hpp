#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mldepth/laplace.hpp"

namespace mldepth {

// Dense per-pixel feature vectors, one row per pixel (row-major pixels).
// Norms are Frobenius norms over the whole image.
struct FeatureImage {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;  // (height*width) x feature_dim

  int feature_dim() const { return static_cast<int>(values.cols()); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
};

FeatureImage make_feature_image(int height, int width, int feature_dim);

struct ComponentMap {
  int height = 0;
  int width = 0;
  Eigen::MatrixXd values;  // (height*width) x component_dim
};

enum class CenterLink : std::uint8_t {
  Identity,  // centers live in normalized depth space and may be negative
  Softplus   // strictly positive centers
};

// Linear decomposer/remapper/predictor weights. The predictor maps each
// component vector to (raw center, raw scale); one shared predictor by
// default, optionally one per iteration.
struct DecompParams {
  int feature_dim = 0;
  int component_dim = 0;
  int iterations = 4;
  Eigen::MatrixXd w_decomposer;  // C x F
  Eigen::VectorXd b_decomposer;  // C
  Eigen::MatrixXd w_remapper;    // F x C
  Eigen::VectorXd b_remapper;    // F
  std::vector<Eigen::MatrixXd> w_predictor;  // each 2 x C; size 1 or iterations
  std::vector<Eigen::VectorXd> b_predictor;  // each 2

  bool shared_predictor() const { return w_predictor.size() == 1; }
  const Eigen::MatrixXd& predictor_w(int iter) const {
    return w_predictor[shared_predictor() ? 0 : iter];
  }
  const Eigen::VectorXd& predictor_b(int iter) const {
    return b_predictor[shared_predictor() ? 0 : iter];
  }
};

DecompParams make_decomp_params(int feature_dim, int component_dim, int iterations,
                                bool shared_predictor = true);

// Small uniform random weights in [-init_scale, init_scale].
DecompParams random_decomp_params(int feature_dim, int component_dim, int iterations,
                                  double init_scale, std::uint64_t seed,
                                  bool shared_predictor = true);

struct RecurrenceOptions {
  CenterLink center_link = CenterLink::Identity;
  double scale_clip_lo = 1.0;
  double scale_clip_hi = 10.0;
  bool eta_detached = false;            // stop-gradient through the rescaling factor
  bool degenerate_eta_fallback = false; // use eta = 0 instead of throwing
  MixtureRule rule = MixtureRule::MaxMixture;
};

// One decomposition step: C = D(F_prev), F' = R(C), eta = |F_prev| / |F'|,
// F_next = F_prev - eta * F'. Throws RescaleDegenerateError when |F'| < 1e-12.
struct DecompStep {
  ComponentMap component;
  FeatureImage next;
  Eigen::MatrixXd remapped;    // R(C), kept for the backward pass
  double eta = 0.0;
  double norm_prev = 0.0;      // |F_prev|
  double norm_remapped = 0.0;  // |F'|
  bool degenerate = false;
};

DecompStep decompose_step(const FeatureImage& f_prev, const DecompParams& p);

// Everything the backward pass needs from one forward run.
struct RecurrenceTape {
  std::vector<FeatureImage> features;      // F_0 .. F_n
  std::vector<ComponentMap> components;    // C_1 .. C_n
  std::vector<Eigen::MatrixXd> remapped;   // R(C_i)
  std::vector<Eigen::MatrixXd> raw_pred;   // (H*W) x 2 raw predictor outputs
  std::vector<double> eta, norm_prev, norm_remapped;
  std::vector<std::uint8_t> degenerate;
  double max_eta_identity_error = 0.0;  // max relative | |eta*F'| - |F_prev| |
};

struct RecurrenceResult {
  MixtureField field;
  RecurrenceTape tape;
};

// Runs `iterations` decomposition steps and maps each component through the
// predictor and links into per-pixel (center, scale) planes.
RecurrenceResult run_recurrence(const FeatureImage& f0, const DecompParams& p,
                                const RecurrenceOptions& opts, bool record_tape = true);

// Gradients with the same shapes as DecompParams.
struct DecompParamGrads {
  Eigen::MatrixXd w_decomposer;
  Eigen::VectorXd b_decomposer;
  Eigen::MatrixXd w_remapper;
  Eigen::VectorXd b_remapper;
  std::vector<Eigen::MatrixXd> w_predictor;
  std::vector<Eigen::VectorXd> b_predictor;
  Eigen::MatrixXd f0;  // dL/dF_0
};

// Reverse-mode pass through predictor links, remapper, decomposer, and the
// eta rescaling (full gradient through both norms unless eta_detached).
// grad_centers/grad_scales use MixtureField plane layout.
DecompParamGrads backward_recurrence(const DecompParams& p, const RecurrenceTape& tape,
                                     const RecurrenceOptions& opts,
                                     const std::vector<double>& grad_centers,
                                     const std::vector<double>& grad_scales);

// Flat parameter views used by the optimizer and finite-difference checks.
std::vector<double> flatten_params(const DecompParams& p);
void unflatten_params(const std::vector<double>& flat, DecompParams& p);
std::vector<double> flatten_grads(const DecompParamGrads& g);

}  // namespace mldepth
