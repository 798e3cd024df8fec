#include "random_data.hpp"

#include "markph/inference.hpp"
#include "markph/numeric.hpp"
#include "markph/simulator.hpp"

#include <doctest.h>

#include <cmath>

using namespace markph;

namespace {

struct Fitted {
  Dataset data;
  RiskSetIndex index;
  ProfileFit profile;
  explicit Fitted(Dataset d, AnalysisConfig cfg = {})
      : data(std::move(d)), index(data), profile(fit_profile(index, cfg)) {}
};

const Fitted& m2_sample() {
  static const Fitted f = [] {
    AnalysisConfig cfg;
    cfg.bandwidth = 0.15;
    return Fitted(sample(SimModelSpec::named("m2"), 800, 3), cfg);
  }();
  return f;
}

// Hand-built profile with constant VE and unit information.
ProfileFit constant_profile(double beta1) {
  ProfileFit p;
  p.a = 0.1;
  p.b = 0.9;
  p.n = 100;
  p.p = 1;
  p.bandwidth = 0.1;
  for (int k = 0; k <= 8; ++k) {
    LocalFit f;
    f.v = 0.1 + 0.1 * k;
    f.beta_hat = Vector::Constant(1, beta1);
    f.sigma_hat = Matrix::Identity(1, 1);
    f.sigma_tilde = Matrix::Identity(1, 1);
    f.converged = true;
    f.status = FitStatus::converged;
    p.grid.push_back(f.v);
    p.fits.push_back(f);
  }
  return p;
}

std::vector<EventTerm> unit_terms(std::initializer_list<double> marks) {
  std::vector<EventTerm> terms;
  for (double m : marks) {
    EventTerm t;
    t.mark = m;
    t.beta = Vector::Zero(1);
    t.mean = Vector::Zero(1);
    t.information = Matrix::Identity(1, 1);
    t.s0 = 1.0;
    terms.push_back(t);
  }
  return terms;
}

}  // namespace

TEST_CASE("variance estimators agree with direct re-summation") {
  const Fitted& f = m2_sample();
  const VarianceBundle bundle = variance_bundle(f.profile, KernelSpec());
  CHECK(bundle.nu0 == 0.6);
  const std::size_t k = 20;
  const LocalFit& fit = f.profile.fits[k];
  const auto& vp = bundle.points[k];
  REQUIRE(vp.ok);
  const double n = static_cast<double>(f.data.size());
  const double h = f.profile.bandwidth;
  Matrix tilde = Matrix::Zero(1, 1);
  Matrix hat = Matrix::Zero(1, 1);
  for (const auto& r : f.data.records()) {
    if (!r.event) continue;
    const double w = KernelSpec().eval_scaled(*r.mark - fit.v, h);
    if (w == 0.0) continue;
    const Matrix j = risk_set_sums(f.data, r.follow_up_time, fit.beta_hat).information();
    tilde += w * w * j;
    hat += w * j;
  }
  tilde *= h / n;
  hat /= n;
  CHECK(std::abs(vp.sigma_tilde(0, 0) - tilde(0, 0)) < 1e-12 * std::max(1.0, tilde(0, 0)));
  CHECK(std::abs(vp.sigma_hat(0, 0) - hat(0, 0)) < 1e-12 * std::max(1.0, hat(0, 0)));
  const double inv = 1.0 / hat(0, 0);
  CHECK(vp.sigma1(0, 0) == doctest::Approx(inv * tilde(0, 0) * inv).epsilon(1e-10));
  CHECK(vp.sigma2(0, 0) == doctest::Approx(0.6 * inv).epsilon(1e-10));
}

TEST_CASE("constant VE integrates exactly") {
  const ProfileFit p = constant_profile(std::log(0.4));
  const auto terms = unit_terms({0.15, 0.5, 0.9});
  const CumulativeCurves c(p, terms);
  for (double v : {0.1, 0.137, 0.5, 0.77, 0.9}) CHECK(c.cv_at(v) == doctest::Approx(0.6 * (v - 0.1)));
  CHECK(c.t_at(0.9) == 1.0);
  // rho^2 jumps by (exp(beta1) / sigma)^2 / n at each event mark.
  CHECK(c.rho2_b() == doctest::Approx(3 * 0.16 / 100));
  CHECK(c.rho2_at(0.5) == doctest::Approx(2 * 0.16 / 100));
  CHECK(c.rho2_at(0.1) == 0.0);
  CHECK_THROWS_AS(c.cv_at(0.95), ConfigError);
}

TEST_CASE("CV uses the trapezoid rule, linear within segments") {
  ProfileFit p = constant_profile(0.0);
  for (auto& f : p.fits) f.beta_hat[0] = std::log(1.0 - f.v);  // VE(v) = v
  const CumulativeCurves c(p, unit_terms({0.5}));
  CHECK(c.cv_at(0.9) == doctest::Approx((0.81 - 0.01) / 2));
  CHECK(c.cv_at(0.35) == doctest::Approx((0.35 * 0.35 - 0.01) / 2));
  CHECK(c.ve_at(0.45) == doctest::Approx(0.45));
}

TEST_CASE("curves need every grid point and positive information") {
  ProfileFit p = constant_profile(0.0);
  CHECK_THROWS_AS(CumulativeCurves(p, unit_terms({})), NumericError);
  p.fits[3].converged = false;
  CHECK_THROWS_AS(CumulativeCurves(p, unit_terms({0.5})), NumericError);
}

TEST_CASE("rho^2 equals the efficacy-weighted cumulative covariance") {
  const Fitted& f = m2_sample();
  const auto terms = event_terms(f.index, f.profile);
  const CumulativeCurves c(f.profile, terms);
  for (double v : {0.3, 0.6, 0.9}) {
    const Matrix s = sigma_A_cumulative(terms, f.profile, WeightMatrix::efficacy, v);
    CHECK(c.rho2_at(v) == doctest::Approx(s(0, 0)).epsilon(1e-12));
  }
  const auto& t = c.time_transform();
  for (std::size_t k = 1; k < t.size(); ++k) CHECK(t[k] >= t[k - 1]);
  CHECK(t.back() == 1.0);
  const Matrix lower = sigma_A_cumulative(terms, f.profile, WeightMatrix::identity, 0.5);
  const Matrix upper = sigma_A_cumulative(terms, f.profile, WeightMatrix::identity, 0.9);
  const Matrix rest = upper - lower;
  CHECK(rest(0, 0) >= 0.0);
}

TEST_CASE("pointwise bands") {
  const Fitted& f = m2_sample();
  const CumulativeCurves c = cumulative_curves(f.index, f.profile);
  const VarianceBundle bundle = variance_bundle(f.profile, KernelSpec());
  const Band ve = ve_pointwise_band(f.profile, bundle, 0.05);
  REQUIRE(ve.v.size() == f.profile.grid.size());
  const std::size_t k = 20;
  const double b1 = f.profile.fits[k].beta_hat[0];
  const double hw = 1.959963984540054 * std::sqrt(bundle.points[k].sigma1(0, 0)) * std::exp(b1) /
                    std::sqrt(800 * 0.15);
  CHECK(ve.upper[k] - ve.center[k] == doctest::Approx(hw).epsilon(1e-10));

  const Band wide = cv_pointwise_band(c, 0.05);
  const Band narrow = cv_pointwise_band(c, 0.32);
  CHECK(wide.upper.front() == wide.lower.front());
  for (std::size_t i = 1; i < wide.v.size(); ++i) {
    CHECK(wide.lower[i] <= wide.center[i]);
    CHECK(wide.upper[i] - wide.lower[i] >= wide.upper[i - 1] - wide.lower[i - 1] - 1e-15);
    CHECK(narrow.upper[i] - narrow.lower[i] < wide.upper[i] - wide.lower[i]);
  }
}

TEST_CASE("bridge quantile at one point is half-normal") {
  const double s = 0.25;
  const std::vector<double> one{s};
  const double u = bridge_sup_quantile(one, 0.05, 100000, 17);
  CHECK(std::abs(u - 1.959964 * std::sqrt(s * (1 - s))) < 0.02);
  const std::vector<double> same{s, s, s};
  CHECK(bridge_sup_quantile(same, 0.05, 100000, 17) == doctest::Approx(u).epsilon(0.02));
}

TEST_CASE("bridge quantile on a dense grid matches the brute-force oracle") {
  // 1e6 paths with 2048 steps give 1.2604 for sup over [0, 1/2].
  std::vector<double> s;
  for (int k = 1; k <= 1024; ++k) s.push_back(k / 2048.0);
  const double u = bridge_sup_quantile(s, 0.05, 100000, 5);
  CHECK(std::abs(u - 1.2604) < 0.02);
}

TEST_CASE("bridge quantile is monotone, seeded and thread independent") {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.4, 0.5};
  const double u01 = bridge_sup_quantile(s, 0.01, 20000, 3);
  const double u05 = bridge_sup_quantile(s, 0.05, 20000, 3);
  const double u10 = bridge_sup_quantile(s, 0.10, 20000, 3);
  CHECK(u01 > u05);
  CHECK(u05 > u10);
  CHECK(bridge_sup_quantile(s, 0.05, 20000, 3, 4) == u05);
  CHECK_THROWS_AS(bridge_sup_quantile(s, 0.05, 999, 3), ConfigError);
  CHECK_THROWS_AS(bridge_sup_quantile(std::vector<double>{1.5}, 0.05, 1000, 3), ConfigError);
}

TEST_CASE("bridge band at b alone reduces to the pointwise band") {
  const Fitted& f = m2_sample();
  const CumulativeCurves c = cumulative_curves(f.index, f.profile);
  const std::vector<double> at_b{c.b()};
  const Band sim = cv_simultaneous_band_bridge(c, 0.05, 100000, 9, at_b);
  const Band pw = cv_pointwise_band(c, 0.05, at_b);
  CHECK(sim.critical_value == doctest::Approx(1.959964 / 2).epsilon(0.02));
  CHECK(sim.upper[0] - sim.center[0] == doctest::Approx(pw.upper[0] - pw.center[0]).epsilon(0.02));
  const Band full = cv_simultaneous_band_bridge(c, 0.05, 5000, 9);
  const Band again = cv_simultaneous_band_bridge(c, 0.05, 5000, 9);
  CHECK(full.upper == again.upper);
  CHECK(full.upper.back() - full.center.back() >= pw.upper[0] - pw.center[0]);
}

TEST_CASE("multiplier process") {
  const Fitted& f = m2_sample();
  const CumulativeCurves c = cumulative_curves(f.index, f.profile);
  const std::vector<double> points{0.3, 0.5, 0.7, 0.9};
  const MultiplierProcess proc(f.index, f.profile, points);
  const std::vector<double> zeros(f.data.size(), 0.0);
  CHECK(proc.realize(zeros).isZero());

  // Empirical variance over R draws reproduces the conditional variance.
  const Vector cond = proc.conditional_variance();
  RngStream rng(4, 0);
  Vector sum_sq = Vector::Zero(4);
  const int reps = 10000;
  std::vector<double> xi(f.data.size());
  for (int r = 0; r < reps; ++r) {
    for (double& x : xi) x = rng.normal();
    sum_sq += proc.realize(xi).array().square().matrix();
  }
  for (int k = 0; k < 4; ++k) {
    CHECK(sum_sq[k] / reps == doctest::Approx(cond[k]).epsilon(0.05));
    // The conditional variance estimates rho^2 at the same point.
    CHECK(cond[k] == doctest::Approx(c.rho2_at(points[static_cast<std::size_t>(k)])).epsilon(0.2));
  }
  const double u = multiplier_sup_quantile(proc, c, 0.05, 2000, 1);
  CHECK(u == multiplier_sup_quantile(proc, c, 0.05, 2000, 1, 3));
  CHECK_THROWS_AS(multiplier_sup_quantile(proc, c, 0.05, 500, 1), ConfigError);
}

TEST_CASE("H20 covariance hand values") {
  const std::vector<double> v{0.5, 0.75};
  const std::vector<double> t{0.5, 0.75};
  const Matrix g = h20_covariance(v, t, 0.0, 1.0);
  CHECK(g(0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(g(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const H20Standardization s = h20_standardization(g);
  REQUIRE(s.pi.size() == 1);
  CHECK(s.pi[0] * s.pi[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(s.variance == doctest::Approx(1.0));
  CHECK_THROWS_AS(h20_standardization(Matrix::Ones(2, 2)), NumericError);
}

TEST_CASE("standardized increment sum by hand") {
  // z_k = c sqrt(t_k) with equal increments of t.
  const std::vector<double> t{0.25, 0.5, 0.75};
  std::vector<double> z;
  for (double x : t) z.push_back(2.0 * std::sqrt(x));
  const double expected = ((z[1] - z[0]) / 0.5 + (z[2] - z[1]) / 0.5) / std::sqrt(2.0);
  CHECK(standardized_increment_sum(z, t) == doctest::Approx(expected).epsilon(1e-14));
  CHECK_THROWS_AS(standardized_increment_sum(std::vector<double>{1.0}, std::vector<double>{0.5}),
                  ConfigError);
}

TEST_CASE("standardized increment sum is invariant to a common scale") {
  // Scaling z by c and t by c^2 scales every increment and its root time step alike.
  const std::vector<double> t{0.1, 0.25, 0.4, 0.7, 1.0};
  const std::vector<double> z{0.3, -0.2, 0.9, 1.4, 0.1};
  const double base = standardized_increment_sum(z, t);
  for (double c : {0.01, 0.7, 3.0, 250.0}) {
    std::vector<double> zc, tc;
    for (double x : z) zc.push_back(c * x);
    for (double x : t) tc.push_back(c * c * x);
    CHECK(standardized_increment_sum(zc, tc) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("test statistics on null curves") {
  const ProfileFit p = constant_profile(0.0);
  const CumulativeCurves c(p, unit_terms({0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85}));
  TestOptions options;
  options.test_grid = AnalysisConfig{}.test_grid();
  options.resamples = 2000;
  const TestReport r = test_H10(c, options);
  CHECK(r.t_a.value == 0.0);
  CHECK(r.t_m1.value == 0.0);
  CHECK(r.t_m2.value == 0.0);
  CHECK_FALSE(r.t_a.reject);
  CHECK_FALSE(r.t_m2.reject);
  CHECK(r.t_m2.critical_value == doctest::Approx(1.6448536269514722));
  CHECK(r.integration_grid.front() == 0.1);
  CHECK(r.integration_grid.back() == 0.9);
  const TestReport again = test_H10(c, options);
  CHECK(again.t_a.p_value == r.t_a.p_value);
  CHECK(again.t_a.critical_value == r.t_a.critical_value);

  const TestReport h20 = test_H20(c, options);
  CHECK(h20.a1 == doctest::Approx(0.196));
  CHECK(h20.t_m1.value == doctest::Approx(0.0).epsilon(1e-12));

  options.test_grid = {0.5};
  CHECK_THROWS_AS(test_H10(c, options), ConfigError);
  options.test_grid = {0.15, 0.5};
  options.a1 = 0.3;
  CHECK_THROWS_AS(test_H20(c, options), ConfigError);
  options.a1 = 0.05;
  CHECK_THROWS_AS(test_H20(c, options), ConfigError);
}

TEST_CASE("H10 critical values match the integrated Wiener functionals") {
  // With a fine, uniform t grid the T_m1 null is N(0, 1/3) and E[T_a] = 1/2.
  ProfileFit p = constant_profile(0.0);
  std::vector<double> m;
  for (int k = 1; k <= 400; ++k) m.push_back(0.1 + 0.8 * k / 400.0);
  std::vector<EventTerm> terms;
  for (double x : m) terms.push_back(unit_terms({x}).front());
  AnalysisConfig cfg;
  cfg.grid_count = 401;
  p.grid = cfg.mark_grid();
  p.fits.clear();
  for (double v : p.grid) {
    LocalFit f = constant_profile(0.0).fits.front();
    f.v = v;
    p.fits.push_back(f);
  }
  const CumulativeCurves c(p, terms);
  TestOptions options;
  options.test_grid = cfg.test_grid();
  options.resamples = 20000;
  const TestReport r = test_H10(c, options);
  CHECK(r.t_m1.critical_value == doctest::Approx(1.6448536 / std::sqrt(3.0)).epsilon(0.03));
}
