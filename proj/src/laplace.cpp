#include "mldepth/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace mldepth {

namespace {

void check_component(const LaplaceComponent& c) {
  if (!std::isfinite(c.center) || !std::isfinite(c.scale) || c.scale <= 0.0) {
    throw std::invalid_argument("invalid Laplace component: center=" +
                                std::to_string(c.center) +
                                " scale=" + std::to_string(c.scale));
  }
}

void check_mixture(const IntensityMixture& m) {
  if (m.components.empty()) {
    throw std::invalid_argument("intensity mixture has no components");
  }
  for (const auto& c : m.components) check_component(c);
}

void check_x(double x) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument("depth argument must be finite");
  }
}

}  // namespace

double eval_component(const LaplaceComponent& c, double x) {
  check_component(c);
  check_x(x);
  return std::exp(-std::abs(x - c.center) / c.scale) / (2.0 * c.scale);
}

double log_component(const LaplaceComponent& c, double x) {
  check_component(c);
  check_x(x);
  return -std::log(2.0 * c.scale) - std::abs(x - c.center) / c.scale;
}

double eval_intensity(const IntensityMixture& m, double x) {
  check_mixture(m);
  check_x(x);
  switch (m.rule) {
    case MixtureRule::MaxMixture: {
      double best = 0.0;
      for (const auto& c : m.components) {
        best = std::max(best, std::exp(-std::abs(x - c.center) / c.scale) / (2.0 * c.scale));
      }
      return best;
    }
    case MixtureRule::WeightedUniform: {
      double sum = 0.0;
      for (const auto& c : m.components) {
        sum += std::exp(-std::abs(x - c.center) / c.scale) / (2.0 * c.scale);
      }
      return sum / static_cast<double>(m.components.size());
    }
    case MixtureRule::Ordered:
      throw std::invalid_argument(
          "ordered mixtures have no pooled intensity; evaluate a component by index");
  }
  throw std::invalid_argument("unknown mixture rule");
}

double log_intensity(const IntensityMixture& m, double x) {
  check_mixture(m);
  check_x(x);
  switch (m.rule) {
    case MixtureRule::MaxMixture: {
      double best = -std::numeric_limits<double>::infinity();
      for (const auto& c : m.components) {
        best = std::max(best, -std::log(2.0 * c.scale) - std::abs(x - c.center) / c.scale);
      }
      return best;
    }
    case MixtureRule::WeightedUniform: {
      // log-sum-exp over component log densities, then the 1/n factor.
      double peak = -std::numeric_limits<double>::infinity();
      for (const auto& c : m.components) {
        peak = std::max(peak, -std::log(2.0 * c.scale) - std::abs(x - c.center) / c.scale);
      }
      double acc = 0.0;
      for (const auto& c : m.components) {
        acc += std::exp(-std::log(2.0 * c.scale) - std::abs(x - c.center) / c.scale - peak);
      }
      return peak + std::log(acc) - std::log(static_cast<double>(m.components.size()));
    }
    case MixtureRule::Ordered:
      throw std::invalid_argument(
          "ordered mixtures have no pooled intensity; evaluate a component by index");
  }
  throw std::invalid_argument("unknown mixture rule");
}

std::size_t argmax_component(const IntensityMixture& m, double x) {
  check_mixture(m);
  check_x(x);
  if (m.rule != MixtureRule::MaxMixture) {
    throw std::invalid_argument("argmax_component requires a max-mixture");
  }
  std::size_t best = 0;
  double best_log = log_component(m.components[0], x);
  for (std::size_t j = 1; j < m.components.size(); ++j) {
    const double lj = log_component(m.components[j], x);
    if (lj > best_log) {
      best_log = lj;
      best = j;
    }
  }
  return best;
}

std::vector<Peak> peak_set(const IntensityMixture& m) {
  check_mixture(m);
  if (m.rule != MixtureRule::MaxMixture) {
    throw std::invalid_argument("peak_set requires a max-mixture");
  }
  std::vector<Peak> peaks;
  const std::size_t n = m.components.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ci = m.components[i];
    const double own = -std::log(2.0 * ci.scale);
    bool dominated = false;
    for (std::size_t j = 0; j < n && !dominated; ++j) {
      if (j == i) continue;
      dominated = log_component(m.components[j], ci.center) > own;
    }
    if (!dominated) {
      peaks.push_back({ci.center, 1.0 / (2.0 * ci.scale)});
    }
  }
  std::sort(peaks.begin(), peaks.end(), [](const Peak& a, const Peak& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.intensity < b.intensity);
  });
  // Identical components produce coincident peaks; keep one.
  peaks.erase(std::unique(peaks.begin(), peaks.end(),
                          [](const Peak& a, const Peak& b) { return a.depth == b.depth; }),
              peaks.end());
  return peaks;
}

MixtureField make_mixture_field(int height, int width, int num_components, MixtureRule rule) {
  if (height <= 0 || width <= 0 || num_components <= 0) {
    throw std::invalid_argument("mixture field dimensions must be positive");
  }
  MixtureField f;
  f.height = height;
  f.width = width;
  f.num_components = num_components;
  f.rule = rule;
  f.centers.assign(static_cast<std::size_t>(num_components) * height * width, 0.0);
  f.scales.assign(static_cast<std::size_t>(num_components) * height * width, 1.0);
  return f;
}

IntensityMixture mixture_at(const MixtureField& field, int x, int y) {
  if (x < 0 || x >= field.width || y < 0 || y >= field.height) {
    throw std::invalid_argument("pixel out of range");
  }
  IntensityMixture m;
  m.rule = field.rule;
  m.components.reserve(field.num_components);
  for (int c = 0; c < field.num_components; ++c) {
    m.components.push_back({field.center_at(c, x, y), field.scale_at(c, x, y)});
  }
  return m;
}

}  // namespace mldepth
