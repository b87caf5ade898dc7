#include "mldepth/tuples.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mldepth {

std::string to_string(TupleSubset s) {
  switch (s) {
    case TupleSubset::Mixed: return "mixed";
    case TupleSubset::Layer1: return "layer1";
    case TupleSubset::Layer3: return "layer3";
    case TupleSubset::Layer5: return "layer5";
    case TupleSubset::Other: return "other";
  }
  return "other";
}

TupleSubset tuple_subset_from_string(const std::string& s) {
  if (s == "mixed") return TupleSubset::Mixed;
  if (s == "layer1") return TupleSubset::Layer1;
  if (s == "layer3") return TupleSubset::Layer3;
  if (s == "layer5") return TupleSubset::Layer5;
  if (s == "other") return TupleSubset::Other;
  throw std::invalid_argument("unknown tuple subset '" + s + "'");
}

TupleSubset classify_subset(const DepthTuple& t) {
  bool same = true;
  for (int i = 1; i < t.arity; ++i) same &= t.entries[i].layer == t.entries[0].layer;
  if (!same) return TupleSubset::Mixed;
  switch (t.entries[0].layer) {
    case 1: return TupleSubset::Layer1;
    case 3: return TupleSubset::Layer3;
    case 5: return TupleSubset::Layer5;
    default: return TupleSubset::Other;
  }
}

void annotate_tuples(DepthTupleSet& set, const MultiLayerDepthMap& gt) {
  for (auto& t : set.tuples) {
    if (t.arity < 2 || t.arity > 4) throw std::invalid_argument("tuple arity must be 2..4");
    for (int i = 0; i < t.arity; ++i) {
      const TupleEntry& e = t.entries[i];
      if (e.layer < 1 || e.layer > gt.layer_count(e.x, e.y)) {
        throw std::invalid_argument("tuple references missing layer " + std::to_string(e.layer) +
                                    " at pixel (" + std::to_string(e.x) + "," +
                                    std::to_string(e.y) + ")");
      }
      t.gt_depth[i] = gt.layers(e.x, e.y)[e.layer - 1];
    }
    for (int i = 0; i < t.arity; ++i) {
      for (int j = i + 1; j < t.arity; ++j) {
        if (t.gt_depth[i] == t.gt_depth[j]) {
          throw std::invalid_argument("tuple has tied GT depths; ordering must be strict");
        }
      }
    }
    t.subset = classify_subset(t);
  }
}

namespace {

struct DepthRange {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
};

DepthRange depth_range(const MultiLayerDepthMap& gt) {
  DepthRange r;
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      for (double d : gt.layers(x, y)) {
        r.lo = std::min(r.lo, d);
        r.hi = std::max(r.hi, d);
      }
    }
  }
  return r;
}

}  // namespace

DepthTupleSet sample_tuples(const MultiLayerDepthMap& gt, std::span<const TupleRequest> requests,
                            double min_separation, std::uint64_t seed) {
  const DepthRange range = depth_range(gt);
  if (!std::isfinite(range.lo)) {
    throw std::invalid_argument("cannot sample tuples from a map with no depths");
  }
  const double sep = min_separation >= 0.0 ? min_separation : 0.01 * (range.hi - range.lo);

  // Pixels indexed by minimum layer count, so same-layer requests draw only
  // from pixels that actually have that layer.
  const int max_layers = gt.max_layer_count();
  std::vector<std::vector<std::pair<int, int>>> pixels_with(max_layers + 1);
  for (int y = 0; y < gt.height(); ++y) {
    for (int x = 0; x < gt.width(); ++x) {
      const int m = gt.layer_count(x, y);
      for (int l = 1; l <= m; ++l) pixels_with[l].push_back({x, y});
    }
  }

  std::mt19937_64 rng(seed);
  DepthTupleSet out;
  for (const TupleRequest& req : requests) {
    if (req.arity < 2 || req.arity > 4) throw std::invalid_argument("tuple arity must be 2..4");
    int target_layer = 0;  // 0 = mixed
    switch (req.subset) {
      case TupleSubset::Mixed: break;
      case TupleSubset::Layer1: target_layer = 1; break;
      case TupleSubset::Layer3: target_layer = 3; break;
      case TupleSubset::Layer5: target_layer = 5; break;
      case TupleSubset::Other:
        throw std::invalid_argument("cannot request the 'other' subset directly");
    }
    if (target_layer > max_layers || pixels_with[std::max(target_layer, 1)].empty()) {
      out.shortfall += req.count;
      continue;
    }
    const auto& pool = pixels_with[std::max(target_layer, 1)];
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);

    long long attempts = 0;
    const long long max_attempts = 2000LL * std::max(req.count, 1);
    int produced = 0;
    while (produced < req.count && attempts < max_attempts) {
      ++attempts;
      DepthTuple t;
      t.arity = req.arity;
      bool ok = true;
      for (int i = 0; i < req.arity && ok; ++i) {
        const auto [x, y] = pool[pick(rng)];
        const int m = gt.layer_count(x, y);
        int layer = target_layer;
        if (layer == 0) layer = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(m));
        t.entries[i] = {x, y, layer};
        t.gt_depth[i] = gt.layers(x, y)[layer - 1];
        for (int j = 0; j < i && ok; ++j) {
          const bool same_point = t.entries[j].x == x && t.entries[j].y == y &&
                                  t.entries[j].layer == layer;
          ok = !same_point && std::abs(t.gt_depth[i] - t.gt_depth[j]) >= sep &&
               t.gt_depth[i] != t.gt_depth[j];
        }
      }
      if (!ok) continue;
      if (req.subset == TupleSubset::Mixed) {
        bool mixed = false;
        for (int i = 1; i < req.arity; ++i) mixed |= t.entries[i].layer != t.entries[0].layer;
        if (!mixed) continue;
      }
      t.subset = classify_subset(t);
      out.tuples.push_back(t);
      ++produced;
    }
    out.shortfall += req.count - produced;
  }
  return out;
}

void write_tuples_csv(const std::string& path, const DepthTupleSet& set) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << "arity,x1,y1,l1,x2,y2,l2,x3,y3,l3,x4,y4,l4,subset\n";
  for (const auto& t : set.tuples) {
    out << t.arity;
    for (int i = 0; i < 4; ++i) {
      if (i < t.arity) {
        out << ',' << t.entries[i].x << ',' << t.entries[i].y << ',' << t.entries[i].layer;
      } else {
        out << ",,,";
      }
    }
    out << ',' << to_string(t.subset) << "\n";
  }
}

DepthTupleSet read_tuples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty tuple file");
  const std::string expected = "arity,x1,y1,l1,x2,y2,l2,x3,y3,l3,x4,y4,l4,subset";
  if (line != expected && line != expected + "\r") {
    throw std::runtime_error(path + ": unexpected tuple CSV header");
  }
  DepthTupleSet set;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    cells.resize(14);
    DepthTuple t;
    try {
      t.arity = std::stoi(cells[0]);
      if (t.arity < 2 || t.arity > 4) throw std::invalid_argument("arity");
      for (int i = 0; i < t.arity; ++i) {
        t.entries[i].x = std::stoi(cells[1 + 3 * i]);
        t.entries[i].y = std::stoi(cells[2 + 3 * i]);
        t.entries[i].layer = std::stoi(cells[3 + 3 * i]);
      }
      t.subset = tuple_subset_from_string(cells[13]);
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed tuple row");
    }
    set.tuples.push_back(t);
  }
  return set;
}

}  // namespace mldepth
