#pragma once

// Test-side oracles, written independently of the library code paths they
// check: a dense grid scan for peaks, central finite differences for
// gradients, and guarded random instance generators that stay away from the
// non-smooth points of the objectives.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "mldepth/laplace.hpp"

namespace oracle {

// Log-space envelope of Laplace bumps, evaluated from the raw formula.
inline double envelope_log(const mldepth::IntensityMixture& m, double x) {
  double best = -1e300;
  for (const auto& c : m.components) {
    best = std::max(best, -std::log(2.0 * c.scale) - std::abs(x - c.center) / c.scale);
  }
  return best;
}

// Local maxima of the intensity found by brute-force grid scan over
// [min d - 5 max b, max d + 5 max b].
inline std::vector<double> grid_peak_scan(const mldepth::IntensityMixture& m,
                                          double step = 1e-4) {
  double dmin = 1e300, dmax = -1e300, bmax = 0.0;
  for (const auto& c : m.components) {
    dmin = std::min(dmin, c.center);
    dmax = std::max(dmax, c.center);
    bmax = std::max(bmax, c.scale);
  }
  const double lo = dmin - 5.0 * bmax;
  const double hi = dmax + 5.0 * bmax;
  const std::size_t count = static_cast<std::size_t>((hi - lo) / step) + 1;
  std::vector<double> val(count);
  for (std::size_t i = 0; i < count; ++i) val[i] = envelope_log(m, lo + step * i);
  std::vector<double> peaks;
  for (std::size_t i = 1; i + 1 < count; ++i) {
    if (val[i] > val[i - 1] && val[i] > val[i + 1]) peaks.push_back(lo + step * i);
  }
  return peaks;
}

// Central difference d/dx f at the current value of *x.
inline double central_diff(const std::function<double()>& f, double* x, double h = 1e-6) {
  const double x0 = *x;
  *x = x0 + h;
  const double fp = f();
  *x = x0 - h;
  const double fm = f();
  *x = x0;
  return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
  const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
  return std::abs(a - b) / denom;
}

// Relative agreement with an absolute floor: central differences of an exact
// zero gradient still carry ~1e-10 of cancellation noise.
inline bool grad_close(double analytic, double fd, double rel_tol = 1e-4,
                       double abs_tol = 1e-6) {
  if (std::abs(analytic - fd) <= abs_tol) return true;
  return rel_err(analytic, fd) < rel_tol;
}

struct MixtureGen {
  std::mt19937_64 rng;
  int max_components = 6;
  double center_lo = -3.0, center_hi = 3.0;
  double scale_lo = 0.05, scale_hi = 1.5;

  explicit MixtureGen(std::uint64_t seed) : rng(seed) {}

  mldepth::IntensityMixture raw_mixture() {
    std::uniform_int_distribution<int> nc(1, max_components);
    std::uniform_real_distribution<double> dc(center_lo, center_hi);
    std::uniform_real_distribution<double> sc(scale_lo, scale_hi);
    mldepth::IntensityMixture m;
    const int n = nc(rng);
    for (int i = 0; i < n; ++i) m.components.push_back({dc(rng), sc(rng)});
    return m;
  }

  // Mixture whose peak structure is numerically unambiguous: centers are
  // well separated and no component sits near its domination boundary.
  mldepth::IntensityMixture peak_safe_mixture() {
    for (;;) {
      mldepth::IntensityMixture m = raw_mixture();
      bool ok = true;
      const std::size_t n = m.components.size();
      for (std::size_t i = 0; i < n && ok; ++i) {
        for (std::size_t j = i + 1; j < n && ok; ++j) {
          ok = std::abs(m.components[i].center - m.components[j].center) > 1e-2;
        }
      }
      for (std::size_t i = 0; i < n && ok; ++i) {
        const double own = -std::log(2.0 * m.components[i].scale);
        for (std::size_t j = 0; j < n && ok; ++j) {
          if (j == i) continue;
          const auto& c = m.components[j];
          const double other =
              -std::log(2.0 * c.scale) -
              std::abs(m.components[i].center - c.center) / c.scale;
          ok = std::abs(own - other) > 1e-4;
        }
      }
      if (ok) return m;
    }
  }

  std::vector<double> gt_depths(int max_count = 5) {
    std::uniform_int_distribution<int> nc(1, max_count);
    std::uniform_real_distribution<double> dc(center_lo, center_hi);
    std::vector<double> g(nc(rng));
    for (double& v : g) v = dc(rng);
    std::sort(g.begin(), g.end());
    return g;
  }

  // (mixture, gts) pair where both losses are differentiable with margin:
  // no GT sits on a center, argmax selections have a clear winner, and each
  // component has a unique nearest GT.
  std::pair<mldepth::IntensityMixture, std::vector<double>> smooth_instance() {
    for (;;) {
      mldepth::IntensityMixture m = raw_mixture();
      for (auto& c : m.components) c.scale = std::max(c.scale, 0.2);
      std::vector<double> g = gt_depths();
      bool ok = true;
      for (double gv : g) {
        for (const auto& c : m.components) ok &= std::abs(gv - c.center) > 1e-3;
        // argmax margin at gv
        double best = -1e300, second = -1e300;
        for (const auto& c : m.components) {
          const double l = -std::log(2.0 * c.scale) - std::abs(gv - c.center) / c.scale;
          if (l > best) {
            second = best;
            best = l;
          } else {
            second = std::max(second, l);
          }
        }
        ok &= (m.components.size() == 1) || (best - second > 1e-3);
        if (!ok) break;
      }
      if (ok) {
        for (const auto& c : m.components) {
          double best = 1e300, second = 1e300;
          for (double gv : g) {
            const double d = std::abs(gv - c.center);
            if (d < best) {
              second = best;
              best = d;
            } else {
              second = std::min(second, d);
            }
          }
          ok &= (g.size() == 1) || (second - best > 1e-3);
          if (!ok) break;
        }
      }
      if (ok) return {std::move(m), std::move(g)};
    }
  }
};

}  // namespace oracle
