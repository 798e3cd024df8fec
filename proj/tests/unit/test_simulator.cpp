#include "markph/simulator.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <doctest.h>

#include <cmath>

using namespace markph;

namespace {

double tilted_integral(double c) {
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      [c](double v) { return std::exp(c * v); }, 0.0, 1.0);
}

}  // namespace

TEST_CASE("named models") {
  const SimModelSpec m2 = SimModelSpec::named("m2");
  CHECK(m2.alpha == -0.5);
  CHECK(m2.beta == 0.5);
  CHECK(m2.gamma == 0.3);
  CHECK(SimModelSpec::named("M5").alpha == -0.69);
  CHECK(SimModelSpec::named("crossing").kind == SimModelSpec::Kind::crossing);
  CHECK_THROWS_AS(SimModelSpec::named("m9"), ConfigError);
}

TEST_CASE("total hazard and censoring calibration") {
  const SimModelSpec m1 = SimModelSpec::named("m1");
  CHECK(total_hazard(m1, 0) == doctest::Approx(tilted_integral(0.3)).epsilon(1e-12));
  CHECK(total_hazard(m1, 1) == doctest::Approx(1.166196).epsilon(1e-6));
  CHECK(censoring_rate_for_target(m1, 0.25) == doctest::Approx(0.388732).epsilon(1e-6));
  const SimModelSpec flat = SimModelSpec::mark13(0.4, -0.3, 0.3);
  CHECK(total_hazard(flat, 1) == doctest::Approx(std::exp(0.4)).epsilon(1e-14));

  const SimModelSpec m8 = SimModelSpec::named("m8");
  const double c = censoring_rate_for_target(m8, 0.25);
  const double frac = 0.5 * c / (c + total_hazard(m8, 0)) + 0.5 * c / (c + total_hazard(m8, 1));
  CHECK(frac == doctest::Approx(0.25).epsilon(1e-9));
  CHECK_THROWS_AS(censoring_rate_for_target(m1, 0.0), ConfigError);
  CHECK_THROWS_AS(censoring_rate_for_target(m1, 0.95), ConfigError);
}

TEST_CASE("true efficacy curves") {
  const SimModelSpec m2 = SimModelSpec::named("m2");
  CHECK(m2.ve(0.5) == doctest::Approx(1 - std::exp(-0.25)));
  CHECK(m2.cv(0.9, 0.1) == doctest::Approx(0.8 - 2 * (std::exp(-0.05) - std::exp(-0.45))).epsilon(1e-14));
  CHECK(std::abs(m2.cv(0.9, 0.1) - 0.1728) < 1e-5);
  CHECK(SimModelSpec::named("m5").cv(0.5, 0.1) == doctest::Approx(0.4 * (1 - std::exp(-0.69))));
  const SimModelSpec cross = SimModelSpec::crossing();
  CHECK(cross.ve(0.25) == 0.5);
  CHECK(cross.cv(0.9, 0.1) == doctest::Approx(0.8 - 0.8));
}

TEST_CASE("mark13 sampler") {
  const SimModelSpec spec = SimModelSpec::named("m2");
  const std::size_t n = 200000;
  const Dataset d = sample(spec, n, 8);
  CHECK(d.size() == n);
  std::size_t censored = 0;
  double sum[2] = {0, 0}, sum_sq[2] = {0, 0};
  double count[2] = {0, 0};
  std::vector<double> bins0(10, 0.0);
  for (const auto& r : d.records()) {
    if (!r.event) {
      ++censored;
      continue;
    }
    const int z = static_cast<int>(r.covariates.at(0)[0]);
    sum[z] += *r.mark;
    sum_sq[z] += *r.mark * *r.mark;
    count[z] += 1;
    if (z == 0) bins0[std::min<std::size_t>(9, static_cast<std::size_t>(*r.mark * 10))] += 1;
  }
  CHECK(std::abs(static_cast<double>(censored) / n - 0.25) < 0.01);
  for (int z = 0; z < 2; ++z) {
    const double c = spec.gamma + spec.beta * z;
    const double expected = (std::exp(c) * (c - 1) + 1) / (c * std::expm1(c));
    const double mean = sum[z] / count[z];
    const double se = std::sqrt((sum_sq[z] / count[z] - mean * mean) / count[z]);
    CHECK(std::abs(mean - expected) < 3 * se);
  }
  // log density slope in arm 0 is gamma
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int k = 0; k < 10; ++k) {
    const double x = 0.05 + 0.1 * k;
    const double y = std::log(bins0[static_cast<std::size_t>(k)]);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
  }
  const double slope = (10 * sxy - sx * sy) / (10 * sxx - sx * sx);
  CHECK(slope == doctest::Approx(0.3).epsilon(0.2));
}

TEST_CASE("crossing sampler") {
  const Dataset d = sample_crossing(100000, 2);
  double mean_mark = 0, events1 = 0;
  double time_sum[2] = {0, 0}, arm[2] = {0, 0};
  for (const auto& r : d.records()) {
    const int z = static_cast<int>(r.covariates.at(0)[0]);
    arm[z] += 1;
    time_sum[z] += r.follow_up_time;
    if (r.event && z == 1) {
      mean_mark += *r.mark;
      events1 += 1;
    }
  }
  CHECK(mean_mark / events1 == doctest::Approx(2.0 / 3.0).epsilon(0.01));
  CHECK(time_sum[0] / arm[0] == doctest::Approx(time_sum[1] / arm[1]).epsilon(0.03));
}

TEST_CASE("samples are reproducible") {
  const SimModelSpec spec = SimModelSpec::named("m3");
  const Dataset a = sample(spec, 50, 99);
  const Dataset b = sample(spec, 50, 99);
  const Dataset c = sample(spec, 50, 100);
  for (std::size_t i = 0; i < 50; ++i) CHECK(a[i].follow_up_time == b[i].follow_up_time);
  CHECK(a[0].follow_up_time != c[0].follow_up_time);
}

TEST_CASE("study results do not depend on the thread count") {
  MCConfig cfg;
  cfg.model = SimModelSpec::named("m4");
  cfg.n = 200;
  cfg.replications = 4;
  cfg.analysis.bandwidth = 0.2;
  cfg.analysis.resamples = 1000;
  cfg.analysis.seed = 12;
  const MCReport one = run_study(cfg);
  cfg.threads = 3;
  const MCReport three = run_study(cfg);
  CHECK(one.completed + one.failures == 4);
  REQUIRE(one.rejections.size() == 7);
  for (std::size_t k = 0; k < one.rejections.size(); ++k) {
    CHECK(one.rejections[k].hits == three.rejections[k].hits);
    CHECK(one.rejections[k].se ==
          doctest::Approx(std::sqrt(one.rejections[k].rate * (1 - one.rejections[k].rate) /
                                    static_cast<double>(one.completed))));
  }
  CHECK(one.points[0].mean_estimate == three.points[0].mean_estimate);
  CHECK(one.coverage_of("CV_band_grid").hits == three.coverage_of("CV_band_grid").hits);
}

TEST_CASE("studies abort when too many replicates fail") {
  MCConfig cfg;
  cfg.n = 6;
  cfg.replications = 3;
  cfg.analysis.resamples = 1000;
  CHECK_THROWS_AS(run_study(cfg), NumericError);
  cfg.replications = 0;
  CHECK_THROWS_AS(run_study(cfg), ConfigError);
}
