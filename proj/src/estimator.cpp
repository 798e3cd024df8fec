#include "markph/estimator.hpp"

#include "markph/io.hpp"
#include "markph/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace markph {

Matrix RiskSetSums::information() const {
  const Vector m = mean();
  return s2 / s0 - m * m.transpose();
}

RiskSetSums risk_set_sums(const Dataset& data, double t, const Vector& beta) {
  return RiskSetIndex(data).sums(t, beta);
}

RiskSetIndex::RiskSetIndex(const Dataset& data) : data_(&data) {
  const std::size_t n = data.size();
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t i, std::size_t j) {
    return data[i].follow_up_time > data[j].follow_up_time;
  });
  sorted_time_.resize(n);
  for (std::size_t k = 0; k < n; ++k) sorted_time_[k] = data[order_[k]].follow_up_time;

  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = data[i];
    if (!r.event) continue;
    Event e;
    e.subject = i;
    e.time = r.follow_up_time;
    e.mark = *r.mark;
    // Y_j(t) = 1{X_j >= t}: ties at t stay in the risk set.
    e.risk_end = static_cast<std::size_t>(
        std::partition_point(sorted_time_.begin(), sorted_time_.end(),
                             [t = e.time](double x) { return x >= t; }) -
        sorted_time_.begin());
    events_.push_back(e);
  }
  by_risk_end_.resize(events_.size());
  std::iota(by_risk_end_.begin(), by_risk_end_.end(), std::size_t{0});
  std::stable_sort(by_risk_end_.begin(), by_risk_end_.end(), [&](std::size_t x, std::size_t y) {
    return events_[x].risk_end < events_[y].risk_end;
  });

  if (data.time_fixed() && n > 0) {
    fixed_z_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data.dimension()));
    for (std::size_t k = 0; k < n; ++k) {
      fixed_z_.row(static_cast<Eigen::Index>(k)) = data[order_[k]].covariates.at(0.0).transpose();
    }
  }
}

const Vector& RiskSetIndex::covariate(std::size_t subject, double t) const {
  return (*data_)[subject].covariates.at(t);
}

std::span<const std::size_t> RiskSetIndex::at_risk(std::size_t event) const {
  return {order_.data(), events_[event].risk_end};
}

RiskSetSums RiskSetIndex::prefix_sums(std::size_t risk_end, double t, const Vector& beta) const {
  if (risk_end == 0) throw NumericError("empty risk set at t = " + format_double(t));
  const auto p = static_cast<Eigen::Index>(dimension());
  RiskSetSums out{0.0, Vector::Zero(p), Matrix::Zero(p, p)};
  const double n = static_cast<double>(size());
  if (data_->time_fixed()) {
    const auto rows = fixed_z_.topRows(static_cast<Eigen::Index>(risk_end));
    const Vector r = (rows * beta).array().exp().matrix();
    out.s0 = r.sum() / n;
    out.s1 = rows.transpose() * r / n;
    out.s2 = rows.transpose() * r.asDiagonal() * rows / n;
    return out;
  }
  for (std::size_t k = 0; k < risk_end; ++k) {
    const Vector& z = covariate(order_[k], t);
    const double r = std::exp(beta.dot(z));
    out.s0 += r;
    out.s1.noalias() += r * z;
    out.s2.noalias() += r * z * z.transpose();
  }
  out.s0 /= n;
  out.s1 /= n;
  out.s2 /= n;
  return out;
}

RiskSetSums RiskSetIndex::sums(double t, const Vector& beta) const {
  if (static_cast<Eigen::Index>(dimension()) != beta.size()) {
    throw ConfigError("beta dimension does not match the covariates");
  }
  const auto risk_end = static_cast<std::size_t>(
      std::partition_point(sorted_time_.begin(), sorted_time_.end(),
                           [t](double x) { return x >= t; }) -
      sorted_time_.begin());
  return prefix_sums(risk_end, t, beta);
}

RiskSetSums RiskSetIndex::sums_for_event(std::size_t event, const Vector& beta) const {
  return prefix_sums(events_[event].risk_end, events_[event].time, beta);
}

RiskSetIndex::Evaluation RiskSetIndex::evaluate(const Vector& beta,
                                                std::span<const double> weights,
                                                bool with_hessian) const {
  const auto p = static_cast<Eigen::Index>(dimension());
  if (beta.size() != p) throw ConfigError("beta dimension does not match the covariates");
  if (weights.size() != events_.size()) throw ConfigError("one weight per event required");
  Evaluation out{0.0, Vector::Zero(p), with_hessian ? Matrix::Zero(p, p) : Matrix()};

  Vector s1 = Vector::Zero(p);
  Matrix s2 = Matrix::Zero(p, p);
  Vector mean(p);

  if (data_->time_fixed()) {
    // One sweep in descending time; each event reads the running prefix sums.
    const Vector eta = fixed_z_ * beta;
    const double shift = eta.size() > 0 ? eta.maxCoeff() : 0.0;
    double s0 = 0.0;
    std::size_t pos = 0;
    for (std::size_t idx : by_risk_end_) {
      const double w = weights[idx];
      if (w == 0.0) continue;
      const Event& e = events_[idx];
      for (; pos < e.risk_end; ++pos) {
        const auto row = static_cast<Eigen::Index>(pos);
        const double r = std::exp(eta[row] - shift);
        s0 += r;
        s1.noalias() += r * fixed_z_.row(row).transpose();
        if (with_hessian) {
          s2.noalias() += r * fixed_z_.row(row).transpose() * fixed_z_.row(row);
        }
      }
      const Vector& zi = covariate(e.subject, e.time);
      mean = s1 / s0;
      out.loglik += w * (beta.dot(zi) - shift - std::log(s0));
      out.score.noalias() += w * (zi - mean);
      if (with_hessian) out.hessian.noalias() -= w * (s2 / s0 - mean * mean.transpose());
    }
    return out;
  }

  for (std::size_t idx = 0; idx < events_.size(); ++idx) {
    const double w = weights[idx];
    if (w == 0.0) continue;
    const Event& e = events_[idx];
    double shift = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < e.risk_end; ++k) {
      shift = std::max(shift, beta.dot(covariate(order_[k], e.time)));
    }
    double s0 = 0.0;
    s1.setZero();
    s2.setZero();
    for (std::size_t k = 0; k < e.risk_end; ++k) {
      const Vector& z = covariate(order_[k], e.time);
      const double r = std::exp(beta.dot(z) - shift);
      s0 += r;
      s1.noalias() += r * z;
      if (with_hessian) s2.noalias() += r * z * z.transpose();
    }
    const Vector& zi = covariate(e.subject, e.time);
    mean = s1 / s0;
    out.loglik += w * (beta.dot(zi) - shift - std::log(s0));
    out.score.noalias() += w * (zi - mean);
    if (with_hessian) out.hessian.noalias() -= w * (s2 / s0 - mean * mean.transpose());
  }
  return out;
}

Matrix RiskSetIndex::weighted_information(const Vector& beta,
                                          std::span<const double> weights) const {
  return -evaluate(beta, weights, true).hessian;
}

LocalLikelihood::LocalLikelihood(const RiskSetIndex& index, double v, double h,
                                 const KernelSpec& kernel)
    : index_(&index), v_(v) {
  if (!(h > 0.0)) throw ConfigError("bandwidth must be positive");
  weights_.reserve(index.events().size());
  for (const auto& e : index.events()) {
    const double w = kernel.eval_scaled(e.mark - v, h);
    weights_.push_back(w);
    total_weight_ += w;
  }
}

double local_loglik(const Dataset& data, double v, double h, const KernelSpec& kernel,
                    const Vector& beta) {
  const RiskSetIndex index(data);
  return LocalLikelihood(index, v, h, kernel).evaluate(beta, false).loglik;
}

Vector local_score(const Dataset& data, double v, double h, const KernelSpec& kernel,
                   const Vector& beta) {
  const RiskSetIndex index(data);
  return LocalLikelihood(index, v, h, kernel).evaluate(beta, false).score;
}

Matrix local_hessian(const Dataset& data, double v, double h, const KernelSpec& kernel,
                     const Vector& beta) {
  const RiskSetIndex index(data);
  return LocalLikelihood(index, v, h, kernel).evaluate(beta, true).hessian;
}

std::string to_string(FitStatus status) {
  switch (status) {
    case FitStatus::converged: return "converged";
    case FitStatus::empty_window: return "empty_window";
    case FitStatus::nonconvergence: return "nonconvergence";
    case FitStatus::singular_hessian: return "singular_hessian";
    case FitStatus::divergence: return "divergence";
  }
  return "unknown";
}

namespace {

constexpr double kStepTol = 1e-6;

struct NewtonResult {
  Vector beta;
  RiskSetIndex::Evaluation at_solution;
  int iterations = 0;
  double score_norm = 0.0;
};

// Damped Newton-Raphson on a concave objective: full step, halved until
// the objective does not decrease.
template <class Evaluate>
NewtonResult maximize(const Evaluate& evaluate, Eigen::Index p, double total_weight,
                      const NewtonOptions& options, const std::string& where,
                      bool require_definite = true) {
  Vector beta = options.init ? *options.init : Vector::Zero(p);
  if (beta.size() != p) throw ConfigError("initial value has the wrong dimension");
  const double tol = options.tol * std::max(1.0, total_weight);
  auto current = evaluate(beta);

  for (int iter = 0;; ++iter) {
    const double norm = current.score.template lpNorm<Eigen::Infinity>();
    if (norm <= tol) {
      Eigen::LLT<Matrix> llt(-current.hessian);
      if (llt.info() != Eigen::Success) {
        if (require_definite) {
          if (beta.template lpNorm<Eigen::Infinity>() > options.divergence_cap / 4.0) {
            throw FitError(FitStatus::divergence,
                           where + ": score and information vanishing (monotone likelihood)");
          }
          throw FitError(FitStatus::singular_hessian,
                         where + ": information matrix not positive definite at the solution");
        }
        return {beta, current, iter, norm};
      }
      // A small score with a large Newton step means the likelihood is
      // flattening out toward infinity rather than peaking.
      const Vector step = llt.solve(current.score);
      if (step.template lpNorm<Eigen::Infinity>() <= kStepTol) return {beta, current, iter, norm};
    }
    if (iter == options.max_iter) break;

    Eigen::LLT<Matrix> llt(-current.hessian);
    if (llt.info() != Eigen::Success) {
      // Information lost to rounding far out along a monotone direction.
      if (beta.template lpNorm<Eigen::Infinity>() > options.divergence_cap / 4.0) {
        throw FitError(FitStatus::divergence,
                       where + ": information vanishing as the coefficient grows (monotone likelihood)");
      }
      throw FitError(FitStatus::singular_hessian, where + ": Newton step unsolvable");
    }
    const Vector step = llt.solve(current.score);
    if (!step.allFinite()) {
      throw FitError(FitStatus::singular_hessian, where + ": Newton step not finite");
    }
    double scale = 1.0;
    Vector candidate = beta + step;
    auto next = evaluate(candidate);
    for (int halving = 0; halving < 40; ++halving) {
      if (std::isfinite(next.loglik) &&
          next.loglik >= current.loglik - 1e-12 * (1.0 + std::abs(current.loglik))) {
        break;
      }
      scale *= 0.5;
      candidate = beta + scale * step;
      next = evaluate(candidate);
    }
    beta = std::move(candidate);
    current = std::move(next);
    if (beta.template lpNorm<Eigen::Infinity>() > options.divergence_cap) {
      throw FitError(FitStatus::divergence,
                     where + ": coefficient exceeds " + format_double(options.divergence_cap) +
                         " (monotone likelihood)");
    }
  }
  // Steady drift toward infinity looks like nonconvergence at the iteration
  // limit; a large coefficient at that point is reported as divergence.
  if (beta.template lpNorm<Eigen::Infinity>() > options.divergence_cap / 4.0) {
    throw FitError(FitStatus::divergence, where + ": coefficient drifting (monotone likelihood)");
  }
  throw FitError(FitStatus::nonconvergence,
                 where + ": no convergence after " + std::to_string(options.max_iter) +
                     " iterations");
}

}  // namespace

LocalFit fit_at(const RiskSetIndex& index, double v, double h, const KernelSpec& kernel,
                const NewtonOptions& options) {
  const LocalLikelihood local(index, v, h, kernel);
  const std::string where = "v = " + format_double(v);
  if (local.empty_window()) {
    throw FitError(FitStatus::empty_window, where + ": no event marks within the bandwidth");
  }
  const auto p = static_cast<Eigen::Index>(index.dimension());
  const auto result = maximize([&](const Vector& beta) { return local.evaluate(beta); }, p,
                               local.total_weight(), options, where);

  const double n = static_cast<double>(index.size());
  LocalFit fit;
  fit.v = v;
  fit.beta_hat = result.beta;
  fit.sigma_hat = -result.at_solution.hessian / n;
  std::vector<double> squared(local.weights().begin(), local.weights().end());
  for (double& w : squared) w *= w;
  fit.sigma_tilde = index.weighted_information(result.beta, squared) * (h / n);
  fit.converged = true;
  fit.iterations = result.iterations;
  fit.score_norm = result.score_norm;
  fit.status = FitStatus::converged;
  return fit;
}

LocalFit fit_at(const Dataset& data, double v, double h, const KernelSpec& kernel,
                const NewtonOptions& options) {
  const RiskSetIndex index(data);
  return fit_at(index, v, h, kernel, options);
}

bool ProfileFit::all_converged() const {
  return std::all_of(fits.begin(), fits.end(), [](const LocalFit& f) { return f.converged; });
}

std::vector<double> ProfileFit::failed_points() const {
  std::vector<double> out;
  for (const auto& f : fits) {
    if (!f.converged) out.push_back(f.v);
  }
  return out;
}

ProfileFit fit_profile(const RiskSetIndex& index, const AnalysisConfig& config,
                       const ProfileOptions& options) {
  config.validate();
  if (index.events().empty()) throw NumericError("dataset has no events");
  ProfileFit profile;
  profile.grid = config.mark_grid();
  profile.bandwidth = config.bandwidth;
  profile.kernel = config.kernel;
  profile.a = config.a;
  profile.b = config.b;
  profile.n = index.size();
  profile.p = index.dimension();
  profile.fits.resize(profile.grid.size());

  auto fit_point = [&](std::size_t k, const NewtonOptions& newton) {
    const double v = profile.grid[k];
    try {
      profile.fits[k] = fit_at(index, v, config.bandwidth, config.kernel, newton);
    } catch (const FitError& err) {
      LocalFit failed;
      failed.v = v;
      failed.status = err.status();
      failed.message = err.what();
      profile.fits[k] = std::move(failed);
    }
  };

  if (options.warm_start) {
    NewtonOptions newton = options.newton;
    for (std::size_t k = 0; k < profile.grid.size(); ++k) {
      fit_point(k, newton);
      if (profile.fits[k].converged) newton.init = profile.fits[k].beta_hat;
    }
  } else {
    parallel_for(profile.grid.size(), options.threads,
                 [&](std::size_t k) { fit_point(k, options.newton); });
  }

  if (std::none_of(profile.fits.begin(), profile.fits.end(),
                   [](const LocalFit& f) { return f.converged; })) {
    std::string msg = "local fit failed at every grid point";
    if (!profile.fits.empty()) msg += " (first: " + profile.fits.front().message + ")";
    throw NumericError(msg);
  }
  return profile;
}

ProfileFit fit_profile(const Dataset& data, const AnalysisConfig& config,
                       const ProfileOptions& options) {
  const RiskSetIndex index(data);
  return fit_profile(index, config, options);
}

namespace {

template <class Member>
auto interpolate_profile(const ProfileFit& profile, double u, Member member) {
  constexpr double slack = 1e-12;
  if (u < profile.a - slack || u > profile.b + slack) {
    throw ConfigError("mark " + format_double(u) + " outside the analysis interval");
  }
  const LocalFit* lower = nullptr;
  const LocalFit* upper = nullptr;
  for (const auto& f : profile.fits) {
    if (!f.converged) continue;
    if (f.v <= u) lower = &f;
    if (f.v >= u && upper == nullptr) upper = &f;
  }
  if (lower == nullptr && upper == nullptr) throw NumericError("profile has no converged fit");
  using Value = std::decay_t<decltype(lower->*member)>;
  if (lower == nullptr) return Value(upper->*member);
  if (upper == nullptr || upper == lower) return Value(lower->*member);
  const double weight = (u - lower->v) / (upper->v - lower->v);
  return Value((1.0 - weight) * (lower->*member) + weight * (upper->*member));
}

}  // namespace

Vector beta_at_mark(const ProfileFit& profile, double u) {
  return interpolate_profile(profile, u, &LocalFit::beta_hat);
}

Matrix sigma_at_mark(const ProfileFit& profile, double u) {
  return interpolate_profile(profile, u, &LocalFit::sigma_hat);
}

std::vector<EventTerm> event_terms(const RiskSetIndex& index, const ProfileFit& profile) {
  std::vector<EventTerm> terms;
  const auto& events = index.events();
  for (std::size_t e = 0; e < events.size(); ++e) {
    const auto& ev = events[e];
    if (!(ev.mark > profile.a && ev.mark <= profile.b)) continue;
    EventTerm term;
    term.event = e;
    term.subject = ev.subject;
    term.time = ev.time;
    term.mark = ev.mark;
    term.beta = beta_at_mark(profile, ev.mark);
    const RiskSetSums sums = index.sums_for_event(e, term.beta);
    term.s0 = sums.s0;
    term.mean = sums.mean();
    term.information = sums.information();
    terms.push_back(std::move(term));
  }
  std::stable_sort(terms.begin(), terms.end(),
                   [](const EventTerm& x, const EventTerm& y) { return x.mark < y.mark; });
  return terms;
}

double BaselineSurface::cumulative(double t, double v) const {
  double total = 0.0;
  for (const auto& j : jumps) {
    if (j.mark > v) break;
    if (j.mark > a && j.time <= t) total += j.increment;
  }
  return total;
}

BaselineSurface baseline_surface(std::span<const EventTerm> terms, std::size_t n, double a) {
  BaselineSurface surface;
  surface.a = a;
  surface.jumps.reserve(terms.size());
  for (const auto& term : terms) {
    surface.jumps.push_back({term.time, term.mark, 1.0 / (static_cast<double>(n) * term.s0)});
  }
  return surface;
}

BaselineSurface baseline_surface(const RiskSetIndex& index, const ProfileFit& profile) {
  const auto terms = event_terms(index, profile);
  return baseline_surface(terms, index.size(), profile.a);
}

double baseline_cumulative(const Dataset& data, const ProfileFit& profile, double t, double v) {
  const RiskSetIndex index(data);
  return baseline_surface(index, profile).cumulative(t, v);
}

CoxFit cox_fit(const RiskSetIndex& index, const NewtonOptions& options) {
  if (index.events().empty()) throw NumericError("Cox fit needs at least one event");
  const std::vector<double> weights(index.events().size(), 1.0);
  const auto p = static_cast<Eigen::Index>(index.dimension());
  const auto result =
      maximize([&](const Vector& beta) { return index.evaluate(beta, weights); }, p,
               static_cast<double>(weights.size()), options, "Cox fit", false);
  CoxFit fit;
  fit.beta = result.beta;
  const Matrix information = -result.at_solution.hessian;
  Eigen::LLT<Matrix> llt(information);
  // Degenerate covariates (e.g. constant) leave the covariance undefined.
  fit.covariance = llt.info() == Eigen::Success
                       ? Matrix(llt.solve(Matrix::Identity(p, p)))
                       : Matrix::Constant(p, p, std::numeric_limits<double>::quiet_NaN());
  fit.wald_z = fit.beta.array() / fit.covariance.diagonal().array().sqrt();
  fit.loglik = result.at_solution.loglik;
  fit.iterations = result.iterations;
  return fit;
}

CoxFit cox_fit(const Dataset& data, const NewtonOptions& options) {
  const RiskSetIndex index(data);
  return cox_fit(index, options);
}

}  // namespace markph
