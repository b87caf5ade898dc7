#pragma once

#include <cstdint>
#include <vector>

namespace mldepth {

// One Laplace bump on the depth axis. In normalized depth space the center
// may be negative; the scale is always positive. The peak value is exactly
// 1/(2*scale).
struct LaplaceComponent {
  double center = 0.0;
  double scale = 1.0;
};

enum class MixtureRule : std::uint8_t {
  MaxMixture = 0,       // pointwise max of the component densities
  WeightedUniform = 1,  // (1/n) * sum of the component densities
  Ordered = 2           // component i models layer i; no pooled evaluation
};

struct IntensityMixture {
  std::vector<LaplaceComponent> components;
  MixtureRule rule = MixtureRule::MaxMixture;
};

struct Peak {
  double depth = 0.0;
  double intensity = 0.0;
};

// Laplace density 1/(2b) * exp(-|x - d| / b). Throws std::invalid_argument
// on non-finite x or an invalid component.
double eval_component(const LaplaceComponent& c, double x);

// log of eval_component, evaluated directly as -log(2b) - |x - d|/b.
double log_component(const LaplaceComponent& c, double x);

// Pooled intensity under the mixture rule. Ordered mixtures have no pooled
// value and are rejected; callers evaluate a specific component instead.
double eval_intensity(const IntensityMixture& m, double x);

// log of eval_intensity, never computed by exponentiating first. MaxMixture
// takes the max of the component log densities; WeightedUniform uses
// log-sum-exp.
double log_intensity(const IntensityMixture& m, double x);

// Index of the component attaining the max at x (MaxMixture only).
// Ties go to the lowest index.
std::size_t argmax_component(const IntensityMixture& m, double x);

// All local maxima of the max-mixture intensity, sorted by depth ascending.
// Component i yields a peak at its center iff no other component dominates
// it there (>=, so exact ties still count). Exact duplicates collapse to a
// single peak. No suppression is applied here.
std::vector<Peak> peak_set(const IntensityMixture& m);

// Per-pixel mixtures for a whole image, stored as component-major planes:
// centers[c * H * W + y * W + x].
struct MixtureField {
  int height = 0;
  int width = 0;
  int num_components = 0;
  MixtureRule rule = MixtureRule::MaxMixture;
  std::vector<double> centers;
  std::vector<double> scales;

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t index(int c, int x, int y) const {
    return (static_cast<std::size_t>(c) * height + y) * width + x;
  }
  double center_at(int c, int x, int y) const { return centers[index(c, x, y)]; }
  double scale_at(int c, int x, int y) const { return scales[index(c, x, y)]; }
};

MixtureField make_mixture_field(int height, int width, int num_components,
                                MixtureRule rule = MixtureRule::MaxMixture);

IntensityMixture mixture_at(const MixtureField& field, int x, int y);

}  // namespace mldepth
