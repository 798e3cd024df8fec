#pragma once

#include "markph/common.hpp"
#include "markph/data.hpp"
#include "markph/kernel.hpp"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace markph {

// n-normalized risk-set sums S^(0), S^(1), S^(2) at a fixed (t, beta).
struct RiskSetSums {
  double s0 = 0.0;
  Vector s1;
  Matrix s2;

  Vector mean() const { return s1 / s0; }
  // J_n = S2/S0 - (S1/S0)^{⊗2}
  Matrix information() const;
};

// Exact sums over {i : X_i >= t} with covariates evaluated at t.
// Throws NumericError when nobody is at risk.
RiskSetSums risk_set_sums(const Dataset& data, double t, const Vector& beta);

// Risk-set bookkeeping shared by every likelihood evaluation on a dataset.
// Subjects are ordered by descending follow-up time (input order on ties),
// so the risk set at an event time is a prefix of that order. Holds a
// reference: the dataset must outlive the index.
class RiskSetIndex {
 public:
  struct Event {
    std::size_t subject = 0;
    double time = 0.0;
    double mark = 0.0;
    std::size_t risk_end = 0;  // prefix length of the ordered subjects at risk
  };

  struct Evaluation {
    double loglik = 0.0;
    Vector score;
    Matrix hessian;
  };

  explicit RiskSetIndex(const Dataset& data);

  const Dataset& data() const { return *data_; }
  std::size_t size() const { return order_.size(); }
  std::size_t dimension() const { return data_->dimension(); }
  // Events in input order.
  const std::vector<Event>& events() const { return events_; }

  RiskSetSums sums(double t, const Vector& beta) const;
  RiskSetSums sums_for_event(std::size_t event, const Vector& beta) const;
  // Subjects at risk at event time `event`, as indices into the dataset.
  std::span<const std::size_t> at_risk(std::size_t event) const;
  // Covariate of subject i at time t.
  const Vector& covariate(std::size_t subject, double t) const;

  // Weighted log partial likelihood sum_e w_e [beta'Z_e - log sum_j Y_j e^{beta'Z_j}]
  // with its gradient and Hessian. Events with zero weight are skipped.
  Evaluation evaluate(const Vector& beta, std::span<const double> weights,
                      bool with_hessian = true) const;
  // sum_e w_e J_n(X_e, beta).
  Matrix weighted_information(const Vector& beta, std::span<const double> weights) const;

 private:
  RiskSetSums prefix_sums(std::size_t risk_end, double t, const Vector& beta) const;

  const Dataset* data_;
  std::vector<std::size_t> order_;
  std::vector<double> sorted_time_;
  std::vector<Event> events_;
  std::vector<std::size_t> by_risk_end_;  // event indices, ascending risk_end
  Matrix fixed_z_;                        // rows follow order_; time-fixed data only
};

// Kernel-localized partial likelihood at mark v.
class LocalLikelihood {
 public:
  LocalLikelihood(const RiskSetIndex& index, double v, double h, const KernelSpec& kernel);

  double v() const { return v_; }
  std::span<const double> weights() const { return weights_; }
  double total_weight() const { return total_weight_; }
  bool empty_window() const { return total_weight_ == 0.0; }

  RiskSetIndex::Evaluation evaluate(const Vector& beta, bool with_hessian = true) const {
    return index_->evaluate(beta, weights_, with_hessian);
  }

 private:
  const RiskSetIndex* index_;
  double v_;
  std::vector<double> weights_;
  double total_weight_ = 0.0;
};

double local_loglik(const Dataset& data, double v, double h, const KernelSpec& kernel,
                    const Vector& beta);
Vector local_score(const Dataset& data, double v, double h, const KernelSpec& kernel,
                   const Vector& beta);
Matrix local_hessian(const Dataset& data, double v, double h, const KernelSpec& kernel,
                     const Vector& beta);

enum class FitStatus { converged, empty_window, nonconvergence, singular_hessian, divergence };
std::string to_string(FitStatus status);

class FitError : public NumericError {
 public:
  FitError(FitStatus status, const std::string& what) : NumericError(what), status_(status) {}
  FitStatus status() const { return status_; }

 private:
  FitStatus status_;
};

struct NewtonOptions {
  int max_iter = 50;
  // Convergence when ||score||_inf <= tol * max(1, total event weight).
  double tol = 1e-9;
  double divergence_cap = 50.0;
  std::optional<Vector> init;
};

struct LocalFit {
  double v = 0.0;
  Vector beta_hat;
  Matrix sigma_hat;    // -l''(v, beta_hat) / n
  Matrix sigma_tilde;  // (h/n) sum K_h(V_i - v)^2 J_n(X_i, beta_hat)
  bool converged = false;
  int iterations = 0;
  double score_norm = 0.0;
  FitStatus status = FitStatus::nonconvergence;
  std::string message;
};

// Throws FitError on EmptyWindow, Nonconvergence, SingularHessian, Divergence.
LocalFit fit_at(const RiskSetIndex& index, double v, double h, const KernelSpec& kernel,
                const NewtonOptions& options = {});
LocalFit fit_at(const Dataset& data, double v, double h, const KernelSpec& kernel,
                const NewtonOptions& options = {});

struct ProfileOptions {
  NewtonOptions newton;
  bool warm_start = true;
  unsigned threads = 1;  // used only without warm start; 0 = default count
};

struct ProfileFit {
  std::vector<double> grid;
  std::vector<LocalFit> fits;  // one per grid point; failures carry status
  double bandwidth = 0.0;
  KernelSpec kernel;
  double a = 0.0;
  double b = 1.0;
  std::size_t n = 0;
  std::size_t p = 0;

  bool all_converged() const;
  std::vector<double> failed_points() const;
};

// Fits every grid point; failures are recorded per point. Throws
// NumericError when no grid point converges.
ProfileFit fit_profile(const Dataset& data, const AnalysisConfig& config,
                       const ProfileOptions& options = {});
ProfileFit fit_profile(const RiskSetIndex& index, const AnalysisConfig& config,
                       const ProfileOptions& options = {});

// Linear interpolation of beta_hat over converged grid points, clamped to
// the end values inside [a, b]. Throws ConfigError outside [a, b].
Vector beta_at_mark(const ProfileFit& profile, double u);
// Same interpolation rule applied to sigma_hat.
Matrix sigma_at_mark(const ProfileFit& profile, double u);

// Per-event quantities at beta_hat(V_i) for events with a < V_i <= b,
// sorted by mark. Shared by the baseline, the cumulative variance, the
// residuals and the multiplier resampler.
struct EventTerm {
  std::size_t event = 0;  // index into RiskSetIndex::events()
  std::size_t subject = 0;
  double time = 0.0;
  double mark = 0.0;
  Vector beta;        // beta_hat(mark)
  double s0 = 0.0;    // S^(0)(time, beta)
  Vector mean;        // S^(1)/S^(0)
  Matrix information; // J_n(time, beta)
};

std::vector<EventTerm> event_terms(const RiskSetIndex& index, const ProfileFit& profile);

// Jumps of the doubly cumulative baseline estimator.
struct BaselineSurface {
  struct Jump {
    double time = 0.0;
    double mark = 0.0;
    double increment = 0.0;  // 1 / (n S^(0)(time, beta_hat(mark)))
  };
  std::vector<Jump> jumps;  // sorted by mark
  double a = 0.0;

  // Sum of increments with time <= t and a < mark <= v.
  double cumulative(double t, double v) const;
};

BaselineSurface baseline_surface(std::span<const EventTerm> terms, std::size_t n, double a);
BaselineSurface baseline_surface(const RiskSetIndex& index, const ProfileFit& profile);
double baseline_cumulative(const Dataset& data, const ProfileFit& profile, double t, double v);

struct CoxFit {
  Vector beta;
  Matrix covariance;  // inverse observed information
  Vector wald_z;
  double loglik = 0.0;
  int iterations = 0;
};

// Ordinary (mark-free) Cox partial likelihood with Breslow handling of ties.
CoxFit cox_fit(const Dataset& data, const NewtonOptions& options = {});
CoxFit cox_fit(const RiskSetIndex& index, const NewtonOptions& options = {});

}  // namespace markph
