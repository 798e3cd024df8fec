#pragma once

#include "markph/estimator.hpp"

namespace markph {

// M_i(t, v) for every subject: the event indicator 1{X_i <= t, delta_i = 1,
// a < V_i <= v} minus the compensator accumulated over baseline jumps
// (s_j, u_j) with s_j <= t, u_j <= v and X_i >= s_j, each weighted by
// exp(beta_hat(u_j)' Z_i(s_j)). Throws ConfigError for t outside [0, tau]
// or v outside [a, b].
Vector martingale_residuals(const RiskSetIndex& index, const ProfileFit& profile,
                            const BaselineSurface& baseline, double t, double v);
Vector martingale_residuals(const Dataset& data, const ProfileFit& profile, double t, double v);

struct ResidualSumCheck {
  double sup_abs = 0.0;  // sup of |n^{-1/2} sum_i M_i(t, v)|
  double at_t = 0.0;
  double at_v = 0.0;
  std::size_t time_points = 0;
  std::size_t mark_points = 0;
  double tolerance = 0.0;
  bool within_tolerance = true;
};

// Evaluates the scaled residual sum on the profile grid times the baseline
// jump times.
ResidualSumCheck residual_sum_check(const RiskSetIndex& index, const ProfileFit& profile,
                                    const BaselineSurface& baseline, double tolerance = 1e-8);

struct WaldResult {
  double beta = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  double p_one_sided = 0.5;  // P(N(0,1) <= z): small when the treatment lowers the hazard
};

// p-values for a given Wald statistic.
WaldResult wald_from_z(double z);
// Marginal Cox fit; reports the first covariate.
WaldResult wald_marginal(const Dataset& data);
WaldResult wald_marginal(const RiskSetIndex& index);

}  // namespace markph
