#include <doctest.h>

#include <algorithm>

#include "iag/error.hpp"
#include "iag/separation.hpp"
#include "oracles.hpp"

using namespace iag;

namespace {

std::vector<bool> membership(const Separation& s, std::size_t n) {
  std::vector<bool> fg(n, false);
  for (auto i : s.foreground) fg[i] = true;
  return fg;
}

}  // namespace

TEST_CASE("symmetric two-point clusters") {
  const std::vector<double> p{0.1, 0.1, 0.9, 0.9};
  const auto s = separate_regions(p);
  REQUIRE(s);
  CHECK(s->foreground == std::vector<std::size_t>{2, 3});
  CHECK(s->background == std::vector<std::size_t>{0, 1});
  CHECK(s->cost == doctest::Approx(0.0));
  CHECK(s->threshold == doctest::Approx(0.5));
}

TEST_CASE("[0.1, 0.2, 0.8] puts only the 0.8 in the foreground") {
  const std::vector<double> p{0.1, 0.2, 0.8};
  // Both split points evaluated directly.
  const double split_low = oracle::cluster_cost(p, {false, true, true}, false);
  const double split_high = oracle::cluster_cost(p, {false, false, true}, false);
  REQUIRE(split_high < split_low);
  const auto s = separate_regions(p);
  REQUIRE(s);
  CHECK(s->foreground == std::vector<std::size_t>{2});
  CHECK(s->cost == doctest::Approx(split_high).epsilon(1e-12));
}

TEST_CASE("degenerate inputs") {
  CHECK_FALSE(separate_regions(std::vector<double>{0.5, 0.5, 0.5}));
  CHECK_FALSE(separate_regions(std::vector<double>{0.3}));
  CHECK_FALSE(separate_regions(std::vector<double>{}));
  CHECK_FALSE(separate_regions(std::vector<double>{0.4, 0.4 + 1e-8}));
  CHECK(separate_regions(std::vector<double>{0.4, 0.6}));
}

TEST_CASE("clustering cost") {
  const std::vector<double> p{0.3, 0.3, 0.3};
  CHECK(clustering_cost(std::vector<std::size_t>{0, 1}, std::vector<std::size_t>{2}, p) == 0.0);
  const std::vector<double> q{0.1, 0.9};
  CHECK(clustering_cost(std::vector<std::size_t>{1}, std::vector<std::size_t>{0}, q) == 0.0);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const auto v = oracle::random_vector(12, rng, 0, 1);
    std::vector<bool> side(12);
    std::vector<std::size_t> a, b;
    for (std::size_t i = 0; i < 12; ++i) {
      side[i] = (rng() & 1) != 0;
      (side[i] ? a : b).push_back(i);
    }
    if (a.empty() || b.empty()) continue;
    CHECK(clustering_cost(a, b, v) == doctest::Approx(oracle::cluster_cost(v, side, false)).epsilon(1e-12));
    CHECK(clustering_cost(a, b, v, DeviationNorm::Squared) ==
          doctest::Approx(oracle::cluster_cost(v, side, true)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(clustering_cost(std::vector<std::size_t>{}, std::vector<std::size_t>{0}, q), InvalidArgument);
}

TEST_CASE("separation attains the brute-force optimum over threshold splits") {
  std::mt19937_64 rng(2);
  for (auto norm : {DeviationNorm::L1, DeviationNorm::Squared}) {
    for (int t = 0; t < 300; ++t) {
      const std::size_t n = 2 + rng() % 40;
      auto p = oracle::random_vector(n, rng, 0, 1);
      if (t % 3 == 0)  // force ties
        for (auto& v : p) v = std::round(v * 4) / 4;
      const auto s = separate_regions(p, norm);
      if (!s) {
        CHECK(*std::max_element(p.begin(), p.end()) - *std::min_element(p.begin(), p.end()) < kDegenerateSpread);
        continue;
      }
      const bool sq = norm == DeviationNorm::Squared;
      const double best = oracle::brute_force_min_cost(p, sq);
      CHECK(s->cost == doctest::Approx(best).epsilon(1e-12));
      const auto fg = membership(*s, n);
      CHECK(oracle::cluster_cost(p, fg, sq) == doctest::Approx(s->cost).epsilon(1e-12));
      // Partition is complete, disjoint and ordered by value.
      CHECK(s->foreground.size() + s->background.size() == n);
      double min_fg = 2, max_bg = -1;
      for (auto i : s->foreground) min_fg = std::min(min_fg, p[i]);
      for (auto i : s->background) max_bg = std::max(max_bg, p[i]);
      CHECK(min_fg > max_bg);
      CHECK(s->threshold > max_bg);
      CHECK(s->threshold < min_fg);
    }
  }
}

TEST_CASE("squared-norm optimum is also optimal over all partitions") {
  // For the k-means objective the optimal two-clustering of points on a line
  // is contiguous, so the threshold search cannot miss a better partition.
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng() % 9;
    const auto p = oracle::random_vector(n, rng, 0, 1);
    const auto s = separate_regions(p, DeviationNorm::Squared);
    REQUIRE(s);
    double best = INFINITY;
    for (std::size_t mask = 1; mask + 1 < (std::size_t{1} << n); ++mask) {
      std::vector<bool> side(n);
      for (std::size_t i = 0; i < n; ++i) side[i] = (mask >> i) & 1;
      best = std::min(best, oracle::cluster_cost(p, side, true));
    }
    CHECK(s->cost <= best + 1e-12);
  }
}
