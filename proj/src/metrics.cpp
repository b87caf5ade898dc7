#include "mldepth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "mldepth/common.hpp"

namespace mldepth {

int TupleAccuracyReport::subset_column(TupleSubset s) {
  switch (s) {
    case TupleSubset::Mixed: return 1;
    case TupleSubset::Layer1: return 2;
    case TupleSubset::Layer3: return 3;
    case TupleSubset::Layer5: return 4;
    case TupleSubset::Other: return 5;
  }
  return 5;
}

namespace {

const char* kSubsetNames[6] = {"all", "mixed", "layer1", "layer3", "layer5", "other"};

}  // namespace

TupleAccuracyReport tuple_accuracy(const MultiLayerDepthMap& pred, const DepthTupleSet& tuples) {
  TupleAccuracyReport report;
  for (const auto& t : tuples.tuples) {
    if (t.arity < 2 || t.arity > 4) throw std::invalid_argument("tuple arity must be 2..4");

    bool correct = true;
    std::array<double, 4> p{};
    for (int i = 0; i < t.arity && correct; ++i) {
      const TupleEntry& e = t.entries[i];
      if (e.layer > pred.layer_count(e.x, e.y)) {
        correct = false;  // prediction lacks the referenced layer
      } else {
        p[i] = pred.layers(e.x, e.y)[e.layer - 1];
      }
    }
    if (correct) {
      for (int i = 0; i < t.arity && correct; ++i) {
        for (int j = i + 1; j < t.arity && correct; ++j) {
          if (t.gt_depth[i] == t.gt_depth[j]) {
            throw std::invalid_argument("tuple not annotated with strict GT ordering");
          }
          const bool gt_less = t.gt_depth[i] < t.gt_depth[j];
          correct = gt_less ? (p[i] < p[j]) : (p[i] > p[j]);
        }
      }
    }

    auto bump = [&](int column) {
      AccuracyCell& c = report.cell(t.arity, column);
      ++c.total;
      if (correct) ++c.correct;
    };
    bump(0);  // all
    bump(TupleAccuracyReport::subset_column(t.subset));
  }
  return report;
}

AffineAlignment align_scale_shift(std::span<const double> pred, std::span<const double> gt) {
  if (pred.size() != gt.size()) throw std::invalid_argument("pred/gt size mismatch");
  const std::size_t n = pred.size();
  if (n < 2) throw AlignmentError("alignment needs at least two points");
  double sp = 0.0, sg = 0.0, spp = 0.0, spg = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sp += pred[i];
    sg += gt[i];
    spp += pred[i] * pred[i];
    spg += pred[i] * gt[i];
  }
  const double dn = static_cast<double>(n);
  const double det = dn * spp - sp * sp;
  const double scale_ref = std::max(spp, 1.0);
  if (std::abs(det) <= 1e-12 * dn * scale_ref) {
    throw AlignmentError("alignment is degenerate: predictions have no spread");
  }
  AffineAlignment out;
  out.scale = (dn * spg - sp * sg) / det;
  out.shift = (sg - out.scale * sp) / dn;
  out.points = n;
  return out;
}

namespace {

void gather_pairs(const MultiLayerDepthMap& pred, const MultiLayerDepthMap& gt,
                  std::optional<int> layer, std::vector<double>& p, std::vector<double>& g) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument("pred/gt map shapes differ");
  }
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const auto& pl = pred.layers(x, y);
      const auto& gl = gt.layers(x, y);
      const std::size_t k = std::min(pl.size(), gl.size());
      for (std::size_t i = 0; i < k; ++i) {
        if (layer && static_cast<int>(i) != *layer) continue;
        p.push_back(pl[i]);
        g.push_back(gl[i]);
      }
    }
  }
}

}  // namespace

AffineAlignment align_scale_shift(const MultiLayerDepthMap& pred, const MultiLayerDepthMap& gt,
                                  std::optional<int> layer) {
  std::vector<double> p, g;
  gather_pairs(pred, gt, layer, p, g);
  return align_scale_shift(p, g);
}

PointMetrics point_metrics(const MultiLayerDepthMap& pred, const MultiLayerDepthMap& gt,
                           int layer, const AffineAlignment& align) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument("pred/gt map shapes differ");
  }
  PointMetrics m;
  double abs_acc = 0.0, sq_acc = 0.0;
  std::size_t in1 = 0, in2 = 0;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const auto& pl = pred.layers(x, y);
      const auto& gl = gt.layers(x, y);
      const bool has_gt = static_cast<int>(gl.size()) > layer;
      const bool has_pred = static_cast<int>(pl.size()) > layer;
      if (!has_gt) continue;  // pixels without this GT layer are out of scope
      if (!has_pred || gl[layer] <= 0.0) {
        ++m.excluded;
        continue;
      }
      const double g = gl[layer];
      const double p = align.scale * pl[layer] + align.shift;
      ++m.count;
      abs_acc += std::abs(p - g) / g;
      sq_acc += (p - g) * (p - g);
      if (p > 0.0) {
        const double ratio = std::max(p / g, g / p);
        if (ratio < 1.25) ++in1;
        if (ratio < 1.25 * 1.25) ++in2;
      }
    }
  }
  if (m.count > 0) {
    const double n = static_cast<double>(m.count);
    m.absrel = abs_acc / n;
    m.rms = std::sqrt(sq_acc / n);
    m.delta1 = static_cast<double>(in1) / n;
    m.delta2 = static_cast<double>(in2) / n;
  }
  return m;
}

std::vector<PointMetrics> point_metrics_per_layer(const MultiLayerDepthMap& pred,
                                                  const MultiLayerDepthMap& gt,
                                                  bool per_layer_alignment) {
  std::vector<PointMetrics> out;
  const int layers = gt.max_layer_count();
  std::optional<AffineAlignment> joint;
  for (int l = 0; l < layers; ++l) {
    AffineAlignment a;
    try {
      if (per_layer_alignment) {
        a = align_scale_shift(pred, gt, l);
      } else {
        if (!joint) joint = align_scale_shift(pred, gt);
        a = *joint;
      }
    } catch (const AlignmentError&) {
      PointMetrics empty;
      out.push_back(empty);
      continue;
    }
    out.push_back(point_metrics(pred, gt, l, a));
  }
  return out;
}

void write_metric_report_csv(std::ostream& out, const TupleAccuracyReport& tuples,
                             std::span<const PointMetrics> layers) {
  out << "metric,arity,subset,value,count\n";
  out << std::setprecision(10);
  for (int arity = 2; arity <= 4; ++arity) {
    for (int col = 0; col < 6; ++col) {
      const AccuracyCell& c = tuples.cell(arity, col);
      if (!c.present()) continue;
      out << "tuple_accuracy," << arity << ',' << kSubsetNames[col] << ',' << c.accuracy()
          << ',' << c.total << "\n";
    }
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const PointMetrics& m = layers[l];
    if (m.count == 0) continue;
    const std::string layer = "layer" + std::to_string(l + 1);
    out << "absrel,," << layer << ',' << m.absrel << ',' << m.count << "\n";
    out << "rms,," << layer << ',' << m.rms << ',' << m.count << "\n";
    out << "delta1,," << layer << ',' << m.delta1 << ',' << m.count << "\n";
    out << "delta2,," << layer << ',' << m.delta2 << ',' << m.count << "\n";
    out << "excluded,," << layer << ',' << m.excluded << ',' << m.count << "\n";
  }
}

void print_metric_report(std::ostream& out, const TupleAccuracyReport& tuples,
                         std::span<const PointMetrics> layers) {
  out << "tuple-wise accuracy (% correct orderings)\n";
  out << std::left << std::setw(10) << "subset";
  for (int arity = 4; arity >= 2; --arity) {
    out << std::right << std::setw(12) << (arity == 4 ? "Q" : arity == 3 ? "T" : "P");
  }
  out << "\n";
  for (int col = 0; col < 6; ++col) {
    bool any = false;
    for (int arity = 2; arity <= 4; ++arity) any |= tuples.cell(arity, col).present();
    if (!any) continue;
    out << std::left << std::setw(10) << kSubsetNames[col];
    for (int arity = 4; arity >= 2; --arity) {
      const AccuracyCell& c = tuples.cell(arity, col);
      if (c.present()) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(2) << 100.0 * c.accuracy();
        out << std::right << std::setw(12) << v.str();
      } else {
        out << std::right << std::setw(12) << "-";
      }
    }
    out << "\n";
  }
  if (!layers.empty()) {
    out << "\npoint metrics (scale/shift aligned)\n";
    out << std::left << std::setw(10) << "layer" << std::right << std::setw(12) << "AbsRel"
        << std::setw(12) << "RMS" << std::setw(12) << "d1" << std::setw(12) << "d2"
        << std::setw(10) << "count" << std::setw(10) << "excl" << "\n";
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const PointMetrics& m = layers[l];
      out << std::left << std::setw(10) << (l + 1);
      if (m.count > 0) {
        out << std::right << std::fixed << std::setprecision(4) << std::setw(12) << m.absrel
            << std::setw(12) << m.rms << std::setw(12) << m.delta1 << std::setw(12) << m.delta2
            << std::setw(10) << m.count << std::setw(10) << m.excluded << "\n";
      } else {
        out << std::right << std::setw(12) << "-" << std::setw(12) << "-" << std::setw(12) << "-"
            << std::setw(12) << "-" << std::setw(10) << 0 << std::setw(10) << m.excluded << "\n";
      }
    }
    out.unsetf(std::ios::fixed);
  }
}

}  // namespace mldepth
