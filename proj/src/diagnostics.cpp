#include "markph/diagnostics.hpp"

#include "markph/io.hpp"
#include "markph/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace markph {

Vector martingale_residuals(const RiskSetIndex& index, const ProfileFit& profile,
                            const BaselineSurface& baseline, double t, double v) {
  const Dataset& data = index.data();
  if (!(t >= 0.0 && t <= data.tau())) {
    throw ConfigError("t = " + format_double(t) + " outside [0, tau]");
  }
  if (v < profile.a || v > profile.b) {
    throw ConfigError("v = " + format_double(v) + " outside [a, b]");
  }
  const std::size_t n = data.size();
  Vector residual = Vector::Zero(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = data[i];
    if (r.event && r.follow_up_time <= t && *r.mark > profile.a && *r.mark <= v) {
      residual[static_cast<Eigen::Index>(i)] = 1.0;
    }
  }
  for (const auto& jump : baseline.jumps) {
    if (jump.mark > v) break;
    if (jump.mark <= profile.a || jump.time > t) continue;
    const Vector beta = beta_at_mark(profile, jump.mark);
    for (std::size_t i = 0; i < n; ++i) {
      if (data[i].follow_up_time < jump.time) continue;
      const double risk = std::exp(beta.dot(data[i].covariates.at(jump.time)));
      residual[static_cast<Eigen::Index>(i)] -= risk * jump.increment;
    }
  }
  return residual;
}

Vector martingale_residuals(const Dataset& data, const ProfileFit& profile, double t, double v) {
  const RiskSetIndex index(data);
  return martingale_residuals(index, profile, baseline_surface(index, profile), t, v);
}

ResidualSumCheck residual_sum_check(const RiskSetIndex& index, const ProfileFit& profile,
                                    const BaselineSurface& baseline, double tolerance) {
  const Dataset& data = index.data();
  ResidualSumCheck check;
  check.tolerance = tolerance;
  check.mark_points = profile.grid.size();

  // Each jump contributes its events at (s_j, u_j) minus the summed compensator.
  struct Piece {
    double time;
    double mark;
    double net;
  };
  std::vector<Piece> pieces;
  for (const auto& jump : baseline.jumps) {
    if (jump.mark <= profile.a) continue;
    const Vector beta = beta_at_mark(profile, jump.mark);
    double compensator = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (data[i].follow_up_time < jump.time) continue;
      compensator += std::exp(beta.dot(data[i].covariates.at(jump.time))) * jump.increment;
    }
    pieces.push_back({jump.time, jump.mark, 1.0 - compensator});
  }
  std::sort(pieces.begin(), pieces.end(),
            [](const Piece& x, const Piece& y) { return x.time < y.time; });
  std::vector<double> times;
  for (const auto& p : pieces) {
    if (times.empty() || p.time != times.back()) times.push_back(p.time);
  }
  check.time_points = times.size();

  const double scale = 1.0 / std::sqrt(static_cast<double>(data.size()));
  for (double v : profile.grid) {
    double running = 0.0;
    std::size_t k = 0;
    for (double t : times) {
      for (; k < pieces.size() && pieces[k].time <= t; ++k) {
        if (pieces[k].mark <= v) running += pieces[k].net;
      }
      const double value = std::abs(running) * scale;
      if (value > check.sup_abs) {
        check.sup_abs = value;
        check.at_t = t;
        check.at_v = v;
      }
    }
  }
  check.within_tolerance = check.sup_abs <= tolerance;
  return check;
}

WaldResult wald_from_z(double z) {
  WaldResult out;
  out.z = z;
  out.p_two_sided = 2.0 * (1.0 - normal_cdf(std::abs(z)));
  out.p_one_sided = normal_cdf(z);
  return out;
}

WaldResult wald_marginal(const RiskSetIndex& index) {
  const CoxFit fit = cox_fit(index);
  const double se = std::sqrt(fit.covariance(0, 0));
  if (!std::isfinite(se) || se <= 0.0) {
    throw NumericError("Wald statistic undefined: singular information");
  }
  WaldResult out = wald_from_z(fit.beta[0] / se);
  out.beta = fit.beta[0];
  out.se = se;
  return out;
}

WaldResult wald_marginal(const Dataset& data) {
  const RiskSetIndex index(data);
  return wald_marginal(index);
}

}  // namespace markph
