#include "mldepth/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle_utils.hpp"

using namespace mldepth;

TEST_CASE("inference defaults") {
  const PredictOptions opts;
  CHECK(opts.suppression_radius == 0.02);
  CHECK(opts.min_peak_intensity == 0.05);
  CHECK_FALSE(opts.suppress_after_denormalize);
}

TEST_CASE("extract_layers suppresses near-duplicate peaks") {
  // two equal peaks 0.01 apart: keep the smaller depth
  IntensityMixture close{{{1.0, 1.0}, {1.01, 1.0}}, MixtureRule::MaxMixture};
  const auto merged = extract_layers(close, 0.02, 0.05);
  REQUIRE(merged.size() == 1);
  CHECK(merged[0] == 1.0);

  IntensityMixture apart{{{1.0, 1.0}, {3.0, 1.0}}, MixtureRule::MaxMixture};
  const auto kept = extract_layers(apart, 0.02, 0.05);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0] == 1.0);
  CHECK(kept[1] == 3.0);
}

TEST_CASE("extract_layers boundary semantics at the suppression radius") {
  // 0.019 apart -> merge; 0.021 apart -> both; exactly 0.02 -> both survive
  IntensityMixture near{{{1.0, 1.0}, {1.019, 1.0}}, MixtureRule::MaxMixture};
  CHECK(extract_layers(near, 0.02, 0.0).size() == 1);
  IntensityMixture farpair{{{1.0, 1.0}, {1.021, 1.0}}, MixtureRule::MaxMixture};
  CHECK(extract_layers(farpair, 0.02, 0.0).size() == 2);
  IntensityMixture exact{{{1.0, 1.0}, {1.02, 1.0}}, MixtureRule::MaxMixture};
  CHECK(extract_layers(exact, 0.02, 0.0).size() == 2);
}

TEST_CASE("extract_layers drops weak peaks") {
  // peak value 1/(2*50) = 0.01 < 0.05
  IntensityMixture weak{{{2.0, 50.0}}, MixtureRule::MaxMixture};
  CHECK(extract_layers(weak, 0.02, 0.05).empty());
  // at exactly the threshold the peak survives
  IntensityMixture at{{{2.0, 10.0}}, MixtureRule::MaxMixture};
  CHECK(extract_layers(at, 0.02, 0.05).size() == 1);
}

TEST_CASE("suppression keeps the stronger peak and is idempotent") {
  oracle::MixtureGen gen(808);
  for (int t = 0; t < 200; ++t) {
    const IntensityMixture m = gen.raw_mixture();
    const auto once = extract_layers(m, 0.05, 0.0);
    CHECK(once.size() <= m.components.size());
    CHECK(std::is_sorted(once.begin(), once.end()));
    for (std::size_t i = 1; i < once.size(); ++i) {
      CHECK(once[i] - once[i - 1] >= 0.05);
    }
    // feeding the survivors back through suppression changes nothing
    IntensityMixture again;
    for (double d : once) again.components.push_back({d, 1.0});
    if (!again.components.empty()) {
      const auto twice = extract_layers(again, 0.05, 0.0);
      REQUIRE(twice.size() == once.size());
      for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i] == once[i]);
    }
    // component permutation cannot change the extraction
    IntensityMixture perm = m;
    std::shuffle(perm.components.begin(), perm.components.end(), gen.rng);
    const auto p = extract_layers(perm, 0.05, 0.0);
    REQUIRE(p.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(p[i] == once[i]);
  }
}

TEST_CASE("stronger peak survives a merge") {
  // both centers are genuine local maxima (neither dominates the other),
  // 0.01 apart with peak intensities ~0.980 and 1.0; the taller one wins
  IntensityMixture m{{{1.0, 0.51}, {1.01, 0.5}}, MixtureRule::MaxMixture};
  REQUIRE(peak_set(m).size() == 2);
  const auto layers = extract_layers(m, 0.02, 0.0);
  REQUIRE(layers.size() == 1);
  CHECK(layers[0] == 1.01);
}

TEST_CASE("denormalize inverts the normalization example") {
  const std::vector<double> tilde = {-1.5, 0.0, 1.5};
  const auto raw = denormalize(tilde, {2.0, 2.0 / 3.0});
  REQUIRE(raw.size() == 3);
  CHECK(raw[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(raw[1] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(raw[2] == doctest::Approx(3.0).epsilon(1e-15));

  const auto same = denormalize(tilde, {0.0, 1.0});
  for (std::size_t i = 0; i < tilde.size(); ++i) CHECK(same[i] == tilde[i]);

  CHECK_THROWS_AS(denormalize(tilde, {0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(denormalize(tilde, {0.0, -1.0}), std::invalid_argument);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> d = {u(rng), u(rng), u(rng)};
    std::sort(d.begin(), d.end());
    const auto out = denormalize(d, {u(rng), 0.1 + std::abs(u(rng))});
    CHECK(std::is_sorted(out.begin(), out.end()));
  }
}

TEST_CASE("predict_image yields sorted ragged maps") {
  MixtureField field = make_mixture_field(4, 6, 3);
  // uniform mixtures: layers at -1 and 1, third component duplicated
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      field.centers[field.index(0, x, y)] = -1.0;
      field.centers[field.index(1, x, y)] = 1.0;
      field.centers[field.index(2, x, y)] = 1.005;  // merged into the peak at 1
    }
  }
  PredictOptions opts;
  const auto map = predict_image(field, opts);
  CHECK(map.units() == DepthUnits::Normalized);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      REQUIRE(map.layer_count(x, y) == 2);
      CHECK(map.layers(x, y)[0] == -1.0);
      CHECK(map.layers(x, y)[1] == 1.0);
    }
  }

  // denormalized output becomes a raw map; nonpositive layers are dropped
  PredictOptions raw_opts;
  raw_opts.norm = NormParams{0.5, 1.0};  // depths -0.5 and 1.5
  PredictStats stats;
  const auto raw = predict_image(field, raw_opts, &stats);
  CHECK(raw.units() == DepthUnits::Raw);
  CHECK(stats.dropped_nonpositive == 4 * 6);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      REQUIRE(raw.layer_count(x, y) == 1);
      CHECK(raw.layers(x, y)[0] == doctest::Approx(1.5));
    }
  }

  // threads must not change the result
  PredictOptions threaded = opts;
  threaded.threads = 4;
  const auto map4 = predict_image(field, threaded);
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 6; ++x) {
      REQUIRE(map4.layer_count(x, y) == map.layer_count(x, y));
      for (int i = 0; i < map.layer_count(x, y); ++i) {
        CHECK(map4.layers(x, y)[i] == map.layers(x, y)[i]);
      }
    }
  }
}

TEST_CASE("suppression can run after denormalization") {
  // peaks 0.015 apart in normalized space, scale 10: raw distance 0.15
  MixtureField field = make_mixture_field(1, 1, 2);
  field.centers[field.index(0, 0, 0)] = 1.0;
  field.centers[field.index(1, 0, 0)] = 1.015;

  PredictOptions norm_space;
  norm_space.norm = NormParams{0.0, 10.0};
  CHECK(predict_image(field, norm_space).layer_count(0, 0) == 1);

  PredictOptions raw_space = norm_space;
  raw_space.suppress_after_denormalize = true;
  CHECK(predict_image(field, raw_space).layer_count(0, 0) == 2);
}
