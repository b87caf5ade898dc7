#include "mldepth/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracle_utils.hpp"

using namespace mldepth;

TEST_CASE("eval_component matches the closed form") {
  CHECK(eval_component({0.0, 1.0}, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(eval_component({0.0, 2.0}, 0.0) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(eval_component({1.0, 1.0}, 2.0) ==
        doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-15));
  // strictly positive everywhere
  CHECK(eval_component({0.0, 0.3}, 50.0) > 0.0);
}

TEST_CASE("eval_component rejects invalid input") {
  CHECK_THROWS_AS(eval_component({0.0, 0.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(eval_component({0.0, -1.0}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(eval_component({0.0, 1.0}, std::nan("")), std::invalid_argument);
  CHECK_THROWS_AS(eval_component({0.0, 1.0}, INFINITY), std::invalid_argument);
}

TEST_CASE("eval_intensity pools per rule") {
  IntensityMixture m{{{1.0, 1.0}, {3.0, 1.0}}, MixtureRule::MaxMixture};
  CHECK(eval_intensity(m, 2.0) == doctest::Approx(0.5 * std::exp(-1.0)).epsilon(1e-15));

  m.rule = MixtureRule::WeightedUniform;
  CHECK(eval_intensity(m, 1.0) ==
        doctest::Approx((0.5 + 0.5 * std::exp(-2.0)) / 2.0).epsilon(1e-15));

  IntensityMixture single{{{7.0, 0.25}}, MixtureRule::MaxMixture};
  CHECK(eval_intensity(single, 7.0) == doctest::Approx(1.0 / (2.0 * 0.25)).epsilon(1e-15));
  single.rule = MixtureRule::WeightedUniform;
  CHECK(eval_intensity(single, 7.0) == doctest::Approx(2.0).epsilon(1e-15));

  IntensityMixture empty;
  CHECK_THROWS_AS(eval_intensity(empty, 0.0), std::invalid_argument);
  m.rule = MixtureRule::Ordered;
  CHECK_THROWS_AS(eval_intensity(m, 1.0), std::invalid_argument);
}

TEST_CASE("log_intensity stays in log space") {
  IntensityMixture single{{{1.0, 1.0}}, MixtureRule::MaxMixture};
  CHECK(log_intensity(single, 1.0) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));

  IntensityMixture m{{{1.0, 1.0}, {3.0, 1.0}}, MixtureRule::MaxMixture};
  CHECK(log_intensity(m, 2.0) == doctest::Approx(-std::log(2.0) - 1.0).epsilon(1e-15));

  // log of a far-away evaluation stays finite where exp would underflow
  IntensityMixture far{{{0.0, 0.01}}, MixtureRule::MaxMixture};
  CHECK(std::isfinite(log_intensity(far, 50.0)));
  CHECK(eval_intensity(far, 50.0) == 0.0);  // underflows in linear space
}

TEST_CASE("log/linear consistency on random mixtures") {
  oracle::MixtureGen gen(2024);
  std::uniform_real_distribution<double> dx(-5.0, 5.0);
  for (int t = 0; t < 1000; ++t) {
    IntensityMixture m = gen.raw_mixture();
    const double x = dx(gen.rng);
    const double lin = eval_intensity(m, x);
    if (lin <= 1e-300) continue;
    CHECK(std::abs(std::exp(log_intensity(m, x)) - lin) / lin < 1e-12);
    m.rule = MixtureRule::WeightedUniform;
    const double linw = eval_intensity(m, x);
    CHECK(std::abs(std::exp(log_intensity(m, x)) - linw) / linw < 1e-12);
  }
}

TEST_CASE("argmax_component picks the dominating bump, lowest index on ties") {
  IntensityMixture m{{{1.0, 1.0}, {3.0, 1.0}}, MixtureRule::MaxMixture};
  CHECK(argmax_component(m, 0.0) == 0);
  CHECK(argmax_component(m, 2.0) == 0);  // symmetric tie
  CHECK(argmax_component(m, 2.5) == 1);

  IntensityMixture sharp{{{0.0, 0.5}, {0.05, 5.0}}, MixtureRule::MaxMixture};
  CHECK(argmax_component(sharp, 0.05) == 0);  // e^{-0.1} ~ 0.9048 beats 0.1

  CHECK_THROWS_AS(argmax_component({{}, MixtureRule::MaxMixture}, 0.0), std::invalid_argument);
  m.rule = MixtureRule::WeightedUniform;
  CHECK_THROWS_AS(argmax_component(m, 0.0), std::invalid_argument);
}

TEST_CASE("peak_set analytic characterization") {
  IntensityMixture m{{{1.0, 1.0}, {3.0, 1.0}}, MixtureRule::MaxMixture};
  auto peaks = peak_set(m);
  REQUIRE(peaks.size() == 2);
  CHECK(peaks[0].depth == 1.0);
  CHECK(peaks[0].intensity == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(peaks[1].depth == 3.0);

  // the broad second bump is dominated at its own center
  IntensityMixture dom{{{0.0, 0.5}, {0.05, 5.0}}, MixtureRule::MaxMixture};
  peaks = peak_set(dom);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].depth == 0.0);
  CHECK(peaks[0].intensity == doctest::Approx(1.0).epsilon(1e-15));

  IntensityMixture single{{{2.0, 1.0}}, MixtureRule::MaxMixture};
  peaks = peak_set(single);
  REQUIRE(peaks.size() == 1);
  CHECK(peaks[0].depth == 2.0);
  CHECK(peaks[0].intensity == doctest::Approx(0.5).epsilon(1e-15));

  // exact tie at the domination boundary still counts as a peak
  IntensityMixture tie{{{0.0, 1.0}, {0.0, 1.0}}, MixtureRule::MaxMixture};
  peaks = peak_set(tie);
  REQUIRE(peaks.size() == 1);  // coincident duplicates collapse
  CHECK(peaks[0].depth == 0.0);
}

TEST_CASE("peak_set equals a dense grid scan") {
  oracle::MixtureGen gen(77);
  for (int t = 0; t < 200; ++t) {
    const IntensityMixture m = gen.peak_safe_mixture();
    const auto analytic = peak_set(m);
    const auto grid = oracle::grid_peak_scan(m);
    REQUIRE(analytic.size() == grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      CHECK(std::abs(analytic[i].depth - grid[i]) <= 2e-4);
    }
  }
}

TEST_CASE("max-mixture evaluations are bitwise permutation invariant") {
  oracle::MixtureGen gen(4242);
  std::uniform_real_distribution<double> dx(-4.0, 4.0);
  for (int t = 0; t < 300; ++t) {
    IntensityMixture m = gen.raw_mixture();
    IntensityMixture p = m;
    std::shuffle(p.components.begin(), p.components.end(), gen.rng);
    const double x = dx(gen.rng);
    CHECK(eval_intensity(m, x) == eval_intensity(p, x));
    CHECK(log_intensity(m, x) == log_intensity(p, x));
    const auto pm = peak_set(m);
    const auto pp = peak_set(p);
    REQUIRE(pm.size() == pp.size());
    for (std::size_t i = 0; i < pm.size(); ++i) {
      CHECK(pm[i].depth == pp[i].depth);
      CHECK(pm[i].intensity == pp[i].intensity);
    }
  }
}

TEST_CASE("intensity never exceeds the tallest component peak") {
  oracle::MixtureGen gen(555);
  std::uniform_real_distribution<double> dx(-6.0, 6.0);
  for (int t = 0; t < 200; ++t) {
    const IntensityMixture m = gen.raw_mixture();
    double bound = 0.0;
    for (const auto& c : m.components) bound = std::max(bound, 1.0 / (2.0 * c.scale));
    for (int k = 0; k < 20; ++k) {
      CHECK(eval_intensity(m, dx(gen.rng)) <= bound);
    }
  }
}

TEST_CASE("mixture_at reads component planes") {
  MixtureField f = make_mixture_field(2, 3, 2);
  f.centers[f.index(0, 1, 0)] = 1.5;
  f.centers[f.index(1, 1, 0)] = -0.5;
  f.scales[f.index(1, 1, 0)] = 2.0;
  const IntensityMixture m = mixture_at(f, 1, 0);
  REQUIRE(m.components.size() == 2);
  CHECK(m.components[0].center == 1.5);
  CHECK(m.components[1].center == -0.5);
  CHECK(m.components[1].scale == 2.0);
  CHECK_THROWS_AS(mixture_at(f, 3, 0), std::invalid_argument);
}
