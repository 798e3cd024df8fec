#include "markph/io.hpp"
#include "markph/numeric.hpp"

#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>

using namespace markph;

TEST_CASE("normal distribution helpers") {
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_upper_quantile(0.025) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_upper_quantile(0.05) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
  CHECK(normal_cdf(normal_upper_quantile(0.3)) == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("empirical upper quantile is the ceil((1-alpha)R)-th order statistic") {
  std::vector<double> draws;
  for (int i = 1000; i >= 1; --i) draws.push_back(i);
  CHECK(upper_quantile(draws, 0.05) == 950.0);
  std::vector<double> small{3, 1, 2, 5, 4};
  CHECK(upper_quantile(small, 0.5) == 3.0);
}

TEST_CASE("exceedance p-value carries the +1 correction") {
  const std::vector<double> draws{1, 2, 3, 4};
  CHECK(exceedance_p_value(draws, 3.0) == doctest::Approx(3.0 / 5.0));
  CHECK(exceedance_p_value(draws, 10.0) == doctest::Approx(1.0 / 5.0));
}

TEST_CASE("derived seeds differ across indices and streams reproduce") {
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(42, i));
  CHECK(seeds.size() == 1000);
  RngStream a(7, 3), b(7, 3), c(7, 4);
  const double x = a.normal();
  CHECK(x == b.normal());
  CHECK(x != c.normal());
}

TEST_CASE("exponential draws have the requested mean") {
  RngStream rng(1, 0);
  double total = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) total += rng.exponential(2.0);
  CHECK(total / n == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("parallel_for visits each index once and propagates errors") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 5) throw std::runtime_error("boom");
                               }),
                  std::runtime_error);
}

TEST_CASE("number formatting round-trips") {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5}) {
    CHECK(*parse_double(format_double(x)) == x);
  }
  CHECK_FALSE(parse_double("1.5x"));
  CHECK_FALSE(parse_double(""));
  CHECK(*parse_double(" 2 ") == 2.0);
}
