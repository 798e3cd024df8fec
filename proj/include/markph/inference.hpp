#pragma once

#include "markph/common.hpp"
#include "markph/estimator.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace markph {

// Variance pieces at one grid point. `ok` is false when the fit failed or
// sigma_hat is singular; the matrices are then empty.
struct VariancePoint {
  double v = 0.0;
  bool ok = false;
  Matrix sigma_hat;    // -l''/n
  Matrix sigma_tilde;  // squared-kernel information
  Matrix sigma1;       // sigma_hat^{-1} sigma_tilde sigma_hat^{-1}
  Matrix sigma2;       // nu_0 sigma_hat^{-1}
  std::string message;
};

struct VarianceBundle {
  double nu0 = 0.0;
  std::vector<VariancePoint> points;  // aligned with the profile grid
};

VarianceBundle variance_bundle(const ProfileFit& profile, const KernelSpec& kernel);

// Choices of the weight matrix A(u) in the cumulative covariance sum.
enum class WeightMatrix {
  identity,       // A(u) = I
  inverse_sigma,  // A(u) = sigma_hat(u)^{-1}
  efficacy,       // A(u) = exp(beta_1(u)) sigma_hat(u)^{-1}
};

Matrix weight_matrix(const ProfileFit& profile, WeightMatrix kind, double u);

// n^{-1} sum over events with a < V_i <= v of A(V_i) J_n(X_i, beta(V_i)) A(V_i)'.
Matrix sigma_A_cumulative(std::span<const EventTerm> terms, const ProfileFit& profile,
                          WeightMatrix kind, double v);
Matrix sigma_A_cumulative(const Dataset& data, const ProfileFit& profile, WeightMatrix kind,
                          double v);

// B(v) = int_a^v beta, CV(v) = int_a^v VE, rho^2(v) and t(v) = rho^2(v)/rho^2(b).
// Integrals use the trapezoid rule on the profile grid (piecewise-linear
// integrands, held constant outside the grid); rho^2 is exact at any v.
class CumulativeCurves {
 public:
  CumulativeCurves(const ProfileFit& profile, std::span<const EventTerm> terms);

  double a() const { return a_; }
  double b() const { return b_; }
  std::size_t n() const { return n_; }
  const std::vector<double>& grid() const { return grid_; }
  const std::vector<double>& ve() const { return ve_; }
  const std::vector<double>& cv() const { return cv_; }
  const std::vector<Vector>& cumulative_beta() const { return big_b_; }
  const std::vector<double>& rho2() const { return rho2_grid_; }
  const std::vector<double>& time_transform() const { return t_grid_; }
  double rho2_b() const { return rho2_b_; }

  double ve_at(double v) const;
  double cv_at(double v) const;
  double rho2_at(double v) const;
  double t_at(double v) const { return rho2_at(v) / rho2_b_; }

 private:
  double a_ = 0.0;
  double b_ = 1.0;
  std::size_t n_ = 0;
  std::vector<double> grid_;
  std::vector<double> beta1_;
  std::vector<double> ve_;
  std::vector<Vector> big_b_;
  std::vector<double> cv_;
  std::vector<double> rho2_grid_;
  std::vector<double> t_grid_;
  std::vector<double> nodes_;          // integration nodes incl. a and b
  std::vector<double> node_ve_;
  std::vector<double> node_cv_;
  std::vector<double> jump_marks_;     // event marks in (a, b], ascending
  std::vector<double> jump_rho2_;      // cumulative rho^2 after each mark
  double rho2_b_ = 0.0;
};

// Builds the curves from raw data; throws NumericError when any grid point
// failed or rho^2(b) = 0.
CumulativeCurves cumulative_curves(const RiskSetIndex& index, const ProfileFit& profile);
CumulativeCurves cumulative_curves(const Dataset& data, const ProfileFit& profile);

enum class BandKind { pointwise_ve, pointwise_cv, simultaneous_bridge, simultaneous_multiplier };
std::string to_string(BandKind kind);

struct Band {
  BandKind kind = BandKind::pointwise_ve;
  double level = 0.95;
  double critical_value = 0.0;
  std::vector<double> v;
  std::vector<double> center;
  std::vector<double> lower;
  std::vector<double> upper;
};

// 1 - exp(beta_1) +- (nh)^{-1/2} z_{alpha/2} sigma_beta1 exp(beta_1); points
// with unavailable variance are omitted.
Band ve_pointwise_band(const ProfileFit& profile, const VarianceBundle& bundle, double alpha);

// CV +- n^{-1/2} z_{alpha/2} rho(v) at `points` (default: the curve grid).
Band cv_pointwise_band(const CumulativeCurves& curves, double alpha,
                       std::span<const double> points = {});

// Upper-alpha quantile of sup_k |B0(s_k)| over R exact bridge draws.
// Requires R >= 1000 and s_k in [0, 1].
double bridge_sup_quantile(std::span<const double> s_values, double alpha, std::size_t resamples,
                           std::uint64_t seed, unsigned threads = 1);

// s_k = rho^2(v_k) / (rho^2(b) + rho^2(v_k))
std::vector<double> bridge_times(const CumulativeCurves& curves, std::span<const double> points);

// CV +- n^{-1/2} u [rho^2(b) + rho^2(v)] / rho(b) with u from the bridge.
Band cv_simultaneous_band_bridge(const CumulativeCurves& curves, double alpha,
                                 std::size_t resamples, std::uint64_t seed,
                                 std::span<const double> points = {}, unsigned threads = 1);

// Per-subject terms of the Gaussian-multiplier process with A(u) =
// exp(beta_1(u)) sigma_hat(u)^{-1}, martingale increments replaced by the
// estimated residual increments. e1'W*(v_k) = n^{-1/2} sum_i xi_i g_i(v_k).
class MultiplierProcess {
 public:
  MultiplierProcess(const RiskSetIndex& index, const ProfileFit& profile,
                    std::span<const double> points);

  const std::vector<double>& points() const { return points_; }
  std::size_t subjects() const { return static_cast<std::size_t>(g_.rows()); }
  // g_i(v_k), subjects by rows.
  const Matrix& contributions() const { return g_; }
  // e1'W*(v_k) for the given multipliers (one per subject).
  Vector realize(std::span<const double> xi) const;
  // n^{-1} sum_i g_i(v_k)^2, the variance of e1'W*(v_k) given the data.
  Vector conditional_variance() const;

 private:
  std::vector<double> points_;
  Matrix g_;
};

// Upper-alpha quantile of U* = sup_k |e1'W*(v_k)| rho(b) / (rho^2(b) + rho^2(v_k)).
double multiplier_sup_quantile(const MultiplierProcess& process, const CumulativeCurves& curves,
                               double alpha, std::size_t resamples, std::uint64_t seed,
                               unsigned threads = 1);

Band multiplier_band(const RiskSetIndex& index, const ProfileFit& profile,
                     const CumulativeCurves& curves, double alpha, std::size_t resamples,
                     std::uint64_t seed, std::span<const double> points = {},
                     unsigned threads = 1);

// ---- Tests of VE(v) = 0 (H10) and VE(v) constant (H20) ----

enum class TestFamily { h10, h20 };

struct TestStatistic {
  std::string name;
  double value = 0.0;
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
};

struct TestReport {
  TestFamily family = TestFamily::h10;
  TestStatistic t_a;
  TestStatistic t_m1;
  TestStatistic t_m2;
  double alpha = 0.05;
  double a1 = 0.0;                        // H20 only
  std::vector<double> test_grid;          // points used by T_m2
  std::vector<double> integration_grid;   // right-endpoint nodes for T_a, T_m1
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
};

struct TestOptions {
  std::vector<double> test_grid;
  double alpha = 0.05;
  std::size_t resamples = 10000;
  std::uint64_t seed = 1;
  std::optional<double> a1;  // H20; defaults to the first test-grid point
  unsigned threads = 1;
};

// (K-1)^{-1/2} sum_k (z_k - z_{k-1}) / sqrt(t_k - t_{k-1}); increments must be positive.
double standardized_increment_sum(std::span<const double> z, std::span<const double> t);

// Covariance of Z2(v) = W(t(v))/(v-a) - W(1)/(b-a) at ascending points v.
Matrix h20_covariance(std::span<const double> v, std::span<const double> t, double a, double b);

struct H20Standardization {
  std::vector<double> pi;  // pi_k for k = 2..K (size K-1)
  Vector xi;               // weights so that sum (Z_{k-1}-Z_k)/pi_k = xi'Z
  double variance = 0.0;   // xi' Gamma xi
};
// Throws NumericError when some pi_k^2 <= 0.
H20Standardization h20_standardization(const Matrix& gamma);

TestReport test_H10(const CumulativeCurves& curves, const TestOptions& options);
TestReport test_H20(const CumulativeCurves& curves, const TestOptions& options);

}  // namespace markph
