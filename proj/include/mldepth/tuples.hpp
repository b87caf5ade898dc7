#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mldepth/multilayer.hpp"

namespace mldepth {

// Subset tag for reporting: Mixed spans several layer indices; LayerN means
// every entry references layer index N (only odd layers are reported
// separately); Other covers same-layer tuples on other indices.
enum class TupleSubset : std::uint8_t { Mixed = 0, Layer1 = 1, Layer3 = 3, Layer5 = 5, Other = 255 };

std::string to_string(TupleSubset s);
TupleSubset tuple_subset_from_string(const std::string& s);

struct TupleEntry {
  int x = 0;
  int y = 0;
  int layer = 1;  // 1-based layer index
};

struct DepthTuple {
  int arity = 2;  // 2..4
  std::array<TupleEntry, 4> entries{};
  std::array<double, 4> gt_depth{};  // filled by annotate_tuples
  TupleSubset subset = TupleSubset::Mixed;
};

struct DepthTupleSet {
  std::vector<DepthTuple> tuples;
  int shortfall = 0;  // requested tuples that could not be sampled
};

// Subset implied by the entries' layer indices.
TupleSubset classify_subset(const DepthTuple& t);

// Looks up each entry's GT depth and re-derives the subset tag. Throws if an
// entry references a missing layer or two entries share a depth exactly
// (orderings must be strict).
void annotate_tuples(DepthTupleSet& set, const MultiLayerDepthMap& gt);

struct TupleRequest {
  int arity = 4;
  TupleSubset subset = TupleSubset::Mixed;  // Mixed or a same-layer subset
  int count = 0;
};

// Rejection sampling of tuples with pairwise GT depth separation of at least
// min_separation (< 0 selects 1% of the GT depth range). Unsatisfiable
// requests leave a shortfall count instead of failing.
DepthTupleSet sample_tuples(const MultiLayerDepthMap& gt, std::span<const TupleRequest> requests,
                            double min_separation, std::uint64_t seed);

// CSV round trip: header arity,x1,y1,l1,...,x4,y4,l4,subset with unused
// columns empty. Depth annotations are not stored; re-annotate after reading.
void write_tuples_csv(const std::string& path, const DepthTupleSet& set);
DepthTupleSet read_tuples_csv(const std::string& path);

}  // namespace mldepth
