#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "mldepth/multilayer.hpp"
#include "mldepth/tuples.hpp"

namespace mldepth {

// Accuracy cell for one (arity, subset) bucket; absent when no tuple fell in.
struct AccuracyCell {
  long long total = 0;
  long long correct = 0;
  bool present() const { return total > 0; }
  double accuracy() const { return total > 0 ? static_cast<double>(correct) / total : 0.0; }
};

struct TupleAccuracyReport {
  // arity 2..4 x {All, Mixed, Layer1, Layer3, Layer5, Other}
  std::array<std::array<AccuracyCell, 6>, 3> cells{};

  static int subset_column(TupleSubset s);
  AccuracyCell& cell(int arity, int column) { return cells[arity - 2][column]; }
  const AccuracyCell& cell(int arity, int column) const { return cells[arity - 2][column]; }
};

// A tuple is correct iff every pairwise predicted order matches the strict GT
// order; predicted depth of layer i is the i-th smallest at that pixel, and a
// tuple referencing a layer beyond the predicted count is scored incorrect.
// Tuples must be annotated (gt_depth filled).
TupleAccuracyReport tuple_accuracy(const MultiLayerDepthMap& pred, const DepthTupleSet& tuples);

// Least-squares (scale, shift) minimizing sum (scale * pred + shift - gt)^2.
struct AffineAlignment {
  double scale = 1.0;
  double shift = 0.0;
  std::size_t points = 0;
};

AffineAlignment align_scale_shift(std::span<const double> pred, std::span<const double> gt);

// Gathers (pred, gt) pairs matched by sorted layer index over all layers of
// the image (or one layer when `layer` is set), then solves.
AffineAlignment align_scale_shift(const MultiLayerDepthMap& pred, const MultiLayerDepthMap& gt,
                                  std::optional<int> layer = std::nullopt);

struct PointMetrics {
  double absrel = 0.0;
  double rms = 0.0;
  double delta1 = 0.0;  // fraction with max(p/g, g/p) < 1.25 (strict)
  double delta2 = 0.0;  // threshold 1.25^2
  std::size_t count = 0;
  std::size_t excluded = 0;  // missing layer or nonpositive gt
};

// Metrics for one layer index; pred values are aligned on the fly.
PointMetrics point_metrics(const MultiLayerDepthMap& pred, const MultiLayerDepthMap& gt,
                           int layer, const AffineAlignment& align);

// Per-layer metrics up to the max GT layer count, with one alignment shared
// across layers or one per layer.
std::vector<PointMetrics> point_metrics_per_layer(const MultiLayerDepthMap& pred,
                                                  const MultiLayerDepthMap& gt,
                                                  bool per_layer_alignment = false);

// CSV (metric,arity,subset,value,count rows) and aligned-text reports.
void write_metric_report_csv(std::ostream& out, const TupleAccuracyReport& tuples,
                             std::span<const PointMetrics> layers);
void print_metric_report(std::ostream& out, const TupleAccuracyReport& tuples,
                         std::span<const PointMetrics> layers);

}  // namespace mldepth
