#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace mldepth {

struct AdamWConfig {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip_norm = 0.1;  // <= 0 disables clipping
  double lr_decay_power = 0.9;
  int total_steps = 1;
};

// (1 - k/total)^power, the polynomial decay multiplier at step k (0-based).
inline double poly_lr_multiplier(int step, int total_steps, double power) {
  if (total_steps <= 0) return 1.0;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
  return std::pow(std::max(frac, 0.0), power);
}

// In-place global-norm clip; returns the pre-clip norm.
inline double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (double& g : grad) g *= f;
  }
  return norm;
}

// Adam with decoupled weight decay over one flat parameter vector.
class AdamW {
 public:
  AdamW(std::size_t dim, const AdamWConfig& cfg)
      : cfg_(cfg), m_(dim, 0.0), v_(dim, 0.0) {}

  // Clips grad in place, then applies one update. Returns the effective lr.
  double step(std::span<double> params, std::span<double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw std::invalid_argument("optimizer dimension mismatch");
    }
    clip_grad_norm(grad, cfg_.grad_clip_norm);
    const double lr =
        cfg_.lr * poly_lr_multiplier(step_, cfg_.total_steps, cfg_.lr_decay_power);
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, step_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, step_);
    for (std::size_t i = 0; i < m_.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * params[i]);
    }
    return lr;
  }

  int steps_taken() const { return step_; }

 private:
  AdamWConfig cfg_;
  int step_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace mldepth
