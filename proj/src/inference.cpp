#include "markph/inference.hpp"

#include "markph/io.hpp"
#include "markph/numeric.hpp"

#include <algorithm>
#include <cmath>

namespace markph {

namespace {

constexpr double kSlack = 1e-12;
constexpr std::size_t kMinResamples = 1000;
constexpr std::size_t kBlock = 1000;  // draws per RNG stream

void require_resamples(std::size_t resamples) {
  if (resamples < kMinResamples) {
    throw ConfigError("at least " + std::to_string(kMinResamples) +
                      " resamples are required (got " + std::to_string(resamples) + ")");
  }
}

void require_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
}

// Runs `draw(rng)` R times split into fixed-size blocks, each with its own
// stream, so results do not depend on the thread count.
template <class Draw>
std::vector<double> simulate(std::size_t resamples, std::uint64_t seed, unsigned threads,
                             const Draw& draw) {
  std::vector<double> out(resamples);
  const std::size_t blocks = (resamples + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t block) {
    RngStream rng(seed, block);
    const std::size_t end = std::min(resamples, (block + 1) * kBlock);
    for (std::size_t r = block * kBlock; r < end; ++r) out[r] = draw(rng);
  });
  return out;
}

std::vector<double> points_or_grid(const CumulativeCurves& curves,
                                   std::span<const double> points) {
  if (points.empty()) return curves.grid();
  std::vector<double> out(points.begin(), points.end());
  if (!std::is_sorted(out.begin(), out.end())) throw ConfigError("band points must ascend");
  return out;
}

Band curve_band(const CumulativeCurves& curves, std::span<const double> points, BandKind kind,
                double alpha, double critical,
                const std::function<double(double rho2)>& half_width) {
  Band band;
  band.kind = kind;
  band.level = 1.0 - alpha;
  band.critical_value = critical;
  for (double v : points_or_grid(curves, points)) {
    const double center = curves.cv_at(v);
    const double hw = half_width(curves.rho2_at(v));
    band.v.push_back(v);
    band.center.push_back(center);
    band.lower.push_back(center - hw);
    band.upper.push_back(center + hw);
  }
  return band;
}

}  // namespace

VarianceBundle variance_bundle(const ProfileFit& profile, const KernelSpec& kernel) {
  VarianceBundle bundle;
  bundle.nu0 = kernel.moment(0, true);
  for (const auto& fit : profile.fits) {
    VariancePoint point;
    point.v = fit.v;
    if (!fit.converged) {
      point.message = "no fit at this point: " + fit.message;
      bundle.points.push_back(std::move(point));
      continue;
    }
    Eigen::LLT<Matrix> llt(fit.sigma_hat);
    if (llt.info() != Eigen::Success) {
      point.message = "sigma_hat is singular";
      bundle.points.push_back(std::move(point));
      continue;
    }
    const auto p = fit.sigma_hat.rows();
    const Matrix inverse = llt.solve(Matrix::Identity(p, p));
    point.ok = true;
    point.sigma_hat = fit.sigma_hat;
    point.sigma_tilde = fit.sigma_tilde;
    point.sigma1 = inverse * fit.sigma_tilde * inverse;
    point.sigma2 = bundle.nu0 * inverse;
    bundle.points.push_back(std::move(point));
  }
  return bundle;
}

Matrix weight_matrix(const ProfileFit& profile, WeightMatrix kind, double u) {
  const auto p = static_cast<Eigen::Index>(profile.p);
  if (kind == WeightMatrix::identity) return Matrix::Identity(p, p);
  const Matrix sigma = sigma_at_mark(profile, u);
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NumericError("sigma_hat singular at mark " + format_double(u));
  }
  Matrix inverse = llt.solve(Matrix::Identity(p, p));
  if (kind == WeightMatrix::efficacy) inverse *= std::exp(beta_at_mark(profile, u)[0]);
  return inverse;
}

Matrix sigma_A_cumulative(std::span<const EventTerm> terms, const ProfileFit& profile,
                          WeightMatrix kind, double v) {
  if (v < profile.a - kSlack) throw ConfigError("v must be at least a");
  const auto p = static_cast<Eigen::Index>(profile.p);
  Matrix total = Matrix::Zero(p, p);
  for (const auto& term : terms) {
    if (term.mark <= profile.a || term.mark > v) continue;
    const Matrix weight = weight_matrix(profile, kind, term.mark);
    total.noalias() += weight * term.information * weight.transpose();
  }
  return total / static_cast<double>(profile.n);
}

Matrix sigma_A_cumulative(const Dataset& data, const ProfileFit& profile, WeightMatrix kind,
                          double v) {
  const RiskSetIndex index(data);
  const auto terms = event_terms(index, profile);
  return sigma_A_cumulative(terms, profile, kind, v);
}

CumulativeCurves::CumulativeCurves(const ProfileFit& profile, std::span<const EventTerm> terms)
    : a_(profile.a), b_(profile.b), n_(profile.n), grid_(profile.grid) {
  if (!profile.all_converged()) {
    std::string msg = "cumulative curves need a fit at every grid point; failed at";
    for (double v : profile.failed_points()) msg += " " + format_double(v);
    throw NumericError(msg);
  }
  for (const auto& fit : profile.fits) {
    beta1_.push_back(fit.beta_hat[0]);
    ve_.push_back(1.0 - std::exp(fit.beta_hat[0]));
  }

  // Integration nodes: the grid, padded with a and b using end values.
  std::vector<Vector> node_beta;
  if (grid_.front() > a_) {
    nodes_.push_back(a_);
    node_ve_.push_back(ve_.front());
    node_beta.push_back(profile.fits.front().beta_hat);
  }
  for (std::size_t k = 0; k < grid_.size(); ++k) {
    nodes_.push_back(grid_[k]);
    node_ve_.push_back(ve_[k]);
    node_beta.push_back(profile.fits[k].beta_hat);
  }
  if (grid_.back() < b_) {
    nodes_.push_back(b_);
    node_ve_.push_back(ve_.back());
    node_beta.push_back(profile.fits.back().beta_hat);
  }
  node_cv_.assign(nodes_.size(), 0.0);
  std::vector<Vector> node_b(nodes_.size(), Vector::Zero(node_beta.front().size()));
  for (std::size_t k = 1; k < nodes_.size(); ++k) {
    const double width = nodes_[k] - nodes_[k - 1];
    node_cv_[k] = node_cv_[k - 1] + 0.5 * width * (node_ve_[k - 1] + node_ve_[k]);
    node_b[k] = node_b[k - 1] + 0.5 * width * (node_beta[k - 1] + node_beta[k]);
  }
  for (double v : grid_) {
    const auto k = static_cast<std::size_t>(
        std::lower_bound(nodes_.begin(), nodes_.end(), v) - nodes_.begin());
    cv_.push_back(node_cv_[k]);
    big_b_.push_back(node_b[k]);
  }

  double running = 0.0;
  for (const auto& term : terms) {
    if (term.mark <= a_ || term.mark > b_) continue;
    const Vector row = weight_matrix(profile, WeightMatrix::efficacy, term.mark).row(0);
    running += row.dot(term.information * row) / static_cast<double>(n_);
    jump_marks_.push_back(term.mark);
    jump_rho2_.push_back(running);
  }
  rho2_b_ = running;
  if (!(rho2_b_ > 0.0)) throw NumericError("rho^2(b) = 0: no event information in (a, b]");
  for (double v : grid_) {
    rho2_grid_.push_back(rho2_at(v));
    t_grid_.push_back(rho2_grid_.back() / rho2_b_);
  }
}

double CumulativeCurves::ve_at(double v) const {
  if (v < a_ - kSlack || v > b_ + kSlack) throw ConfigError("mark outside [a, b]");
  if (v <= nodes_.front()) return node_ve_.front();
  if (v >= nodes_.back()) return node_ve_.back();
  const auto k = static_cast<std::size_t>(
      std::upper_bound(nodes_.begin(), nodes_.end(), v) - nodes_.begin());
  const double frac = (v - nodes_[k - 1]) / (nodes_[k] - nodes_[k - 1]);
  return node_ve_[k - 1] + frac * (node_ve_[k] - node_ve_[k - 1]);
}

double CumulativeCurves::cv_at(double v) const {
  if (v < a_ - kSlack || v > b_ + kSlack) throw ConfigError("mark outside [a, b]");
  if (v <= nodes_.front()) return 0.0;
  if (v >= nodes_.back()) return node_cv_.back();
  const auto k = static_cast<std::size_t>(
      std::upper_bound(nodes_.begin(), nodes_.end(), v) - nodes_.begin());
  const double x0 = nodes_[k - 1];
  const double f0 = node_ve_[k - 1];
  const double slope = (node_ve_[k] - f0) / (nodes_[k] - x0);
  const double d = v - x0;
  return node_cv_[k - 1] + d * (f0 + 0.5 * slope * d);
}

double CumulativeCurves::rho2_at(double v) const {
  if (v < a_ - kSlack || v > b_ + kSlack) throw ConfigError("mark outside [a, b]");
  const auto it = std::upper_bound(jump_marks_.begin(), jump_marks_.end(), v);
  if (it == jump_marks_.begin()) return 0.0;
  return jump_rho2_[static_cast<std::size_t>(it - jump_marks_.begin()) - 1];
}

CumulativeCurves cumulative_curves(const RiskSetIndex& index, const ProfileFit& profile) {
  const auto terms = event_terms(index, profile);
  return CumulativeCurves(profile, terms);
}

CumulativeCurves cumulative_curves(const Dataset& data, const ProfileFit& profile) {
  const RiskSetIndex index(data);
  return cumulative_curves(index, profile);
}

std::string to_string(BandKind kind) {
  switch (kind) {
    case BandKind::pointwise_ve: return "pointwise-VE";
    case BandKind::pointwise_cv: return "pointwise-CV";
    case BandKind::simultaneous_bridge: return "simultaneous-bridge";
    case BandKind::simultaneous_multiplier: return "simultaneous-multiplier";
  }
  return "unknown";
}

Band ve_pointwise_band(const ProfileFit& profile, const VarianceBundle& bundle, double alpha) {
  require_alpha(alpha);
  const double z = normal_upper_quantile(alpha / 2.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(profile.n) * profile.bandwidth);
  Band band;
  band.kind = BandKind::pointwise_ve;
  band.level = 1.0 - alpha;
  band.critical_value = z;
  for (std::size_t k = 0; k < profile.fits.size(); ++k) {
    const auto& fit = profile.fits[k];
    const auto& point = bundle.points.at(k);
    if (!fit.converged || !point.ok) continue;
    const double beta1 = fit.beta_hat[0];
    const double sd = std::sqrt(point.sigma1(0, 0));
    const double hw = scale * z * sd * std::exp(beta1);
    const double center = 1.0 - std::exp(beta1);
    band.v.push_back(fit.v);
    band.center.push_back(center);
    band.lower.push_back(center - hw);
    band.upper.push_back(center + hw);
  }
  return band;
}

Band cv_pointwise_band(const CumulativeCurves& curves, double alpha,
                       std::span<const double> points) {
  require_alpha(alpha);
  const double z = normal_upper_quantile(alpha / 2.0);
  const double root_n = std::sqrt(static_cast<double>(curves.n()));
  return curve_band(curves, points, BandKind::pointwise_cv, alpha, z,
                    [&](double rho2) { return z * std::sqrt(rho2) / root_n; });
}

double bridge_sup_quantile(std::span<const double> s_values, double alpha, std::size_t resamples,
                           std::uint64_t seed, unsigned threads) {
  require_resamples(resamples);
  require_alpha(alpha);
  if (s_values.empty()) throw ConfigError("bridge quantile needs at least one point");
  std::vector<double> s(s_values.begin(), s_values.end());
  for (double x : s) {
    if (!(x >= 0.0 && x <= 1.0)) throw ConfigError("bridge times must lie in [0, 1]");
  }
  std::sort(s.begin(), s.end());
  std::vector<double> sd(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    sd[k] = std::sqrt(s[k] - (k == 0 ? 0.0 : s[k - 1]));
  }
  const double tail_sd = std::sqrt(1.0 - s.back());

  auto draws = simulate(resamples, seed, threads, [&](RngStream& rng) {
    // W at the sorted times, then W(1); B0(s) = W(s) - s W(1).
    thread_local std::vector<double> w;
    w.resize(s.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      acc += sd[k] * rng.normal();
      w[k] = acc;
    }
    const double w1 = acc + tail_sd * rng.normal();
    double sup = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) sup = std::max(sup, std::abs(w[k] - s[k] * w1));
    return sup;
  });
  return upper_quantile(draws, alpha);
}

std::vector<double> bridge_times(const CumulativeCurves& curves, std::span<const double> points) {
  std::vector<double> s;
  const double rho2_b = curves.rho2_b();
  for (double v : points_or_grid(curves, points)) {
    const double r2 = curves.rho2_at(v);
    s.push_back(r2 / (rho2_b + r2));
  }
  return s;
}

Band cv_simultaneous_band_bridge(const CumulativeCurves& curves, double alpha,
                                 std::size_t resamples, std::uint64_t seed,
                                 std::span<const double> points, unsigned threads) {
  const auto v = points_or_grid(curves, points);
  const double u = bridge_sup_quantile(bridge_times(curves, v), alpha, resamples, seed, threads);
  const double root_n = std::sqrt(static_cast<double>(curves.n()));
  const double rho2_b = curves.rho2_b();
  return curve_band(curves, v, BandKind::simultaneous_bridge, alpha, u, [&](double rho2) {
    return u * (rho2_b + rho2) / (std::sqrt(rho2_b) * root_n);
  });
}

MultiplierProcess::MultiplierProcess(const RiskSetIndex& index, const ProfileFit& profile,
                                     std::span<const double> points)
    : points_(points.begin(), points.end()) {
  if (!std::is_sorted(points_.begin(), points_.end())) {
    throw ConfigError("multiplier points must ascend");
  }
  const auto terms = event_terms(index, profile);
  const std::size_t n = index.size();
  const double n_real = static_cast<double>(n);
  g_ = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(points_.size()));
  Vector running = Vector::Zero(static_cast<Eigen::Index>(n));

  std::size_t next = 0;
  for (std::size_t k = 0; k < points_.size(); ++k) {
    for (; next < terms.size() && terms[next].mark <= points_[k]; ++next) {
      const EventTerm& term = terms[next];
      const Vector row = weight_matrix(profile, WeightMatrix::efficacy, term.mark).row(0);
      const double increment = 1.0 / (n_real * term.s0);
      // Residual increment dM_i = dN_i - Y_i exp(beta'Z_i) dLambda at this jump.
      for (std::size_t i : index.at_risk(term.event)) {
        const Vector& z = index.covariate(i, term.time);
        const double compensator = std::exp(term.beta.dot(z)) * increment;
        const double jump = (i == term.subject ? 1.0 : 0.0) - compensator;
        running[static_cast<Eigen::Index>(i)] += row.dot(z - term.mean) * jump;
      }
    }
    g_.col(static_cast<Eigen::Index>(k)) = running;
  }
}

Vector MultiplierProcess::realize(std::span<const double> xi) const {
  if (xi.size() != subjects()) throw ConfigError("one multiplier per subject required");
  const Eigen::Map<const Vector> weights(xi.data(), static_cast<Eigen::Index>(xi.size()));
  return g_.transpose() * weights / std::sqrt(static_cast<double>(subjects()));
}

Vector MultiplierProcess::conditional_variance() const {
  return g_.colwise().squaredNorm().transpose() / static_cast<double>(subjects());
}

double multiplier_sup_quantile(const MultiplierProcess& process, const CumulativeCurves& curves,
                               double alpha, std::size_t resamples, std::uint64_t seed,
                               unsigned threads) {
  require_resamples(resamples);
  require_alpha(alpha);
  const auto& pts = process.points();
  const double rho_b = std::sqrt(curves.rho2_b());
  Vector scale(static_cast<Eigen::Index>(pts.size()));
  for (std::size_t k = 0; k < pts.size(); ++k) {
    scale[static_cast<Eigen::Index>(k)] = rho_b / (curves.rho2_b() + curves.rho2_at(pts[k]));
  }
  const std::size_t n = process.subjects();
  auto draws = simulate(resamples, seed, threads, [&](RngStream& rng) {
    thread_local std::vector<double> xi;
    xi.resize(n);
    for (double& x : xi) x = rng.normal();
    const Vector w = process.realize(xi);
    return (w.array().abs() * scale.array()).maxCoeff();
  });
  return upper_quantile(draws, alpha);
}

Band multiplier_band(const RiskSetIndex& index, const ProfileFit& profile,
                     const CumulativeCurves& curves, double alpha, std::size_t resamples,
                     std::uint64_t seed, std::span<const double> points, unsigned threads) {
  const auto v = points_or_grid(curves, points);
  const MultiplierProcess process(index, profile, v);
  const double u = multiplier_sup_quantile(process, curves, alpha, resamples, seed, threads);
  const double root_n = std::sqrt(static_cast<double>(curves.n()));
  const double rho2_b = curves.rho2_b();
  return curve_band(curves, v, BandKind::simultaneous_multiplier, alpha, u, [&](double rho2) {
    return u * (rho2_b + rho2) / (std::sqrt(rho2_b) * root_n);
  });
}

// ---- tests ----

double standardized_increment_sum(std::span<const double> z, std::span<const double> t) {
  if (z.size() != t.size() || z.size() < 2) {
    throw ConfigError("standardized increment sum needs K >= 2 matched points");
  }
  double sum = 0.0;
  for (std::size_t k = 1; k < z.size(); ++k) {
    const double dt = t[k] - t[k - 1];
    if (!(dt > 0.0)) throw NumericError("time transform must increase strictly");
    sum += (z[k] - z[k - 1]) / std::sqrt(dt);
  }
  return sum / std::sqrt(static_cast<double>(z.size() - 1));
}

Matrix h20_covariance(std::span<const double> v, std::span<const double> t, double a, double b) {
  if (v.size() != t.size()) throw ConfigError("points and time transform differ in length");
  const auto k = static_cast<Eigen::Index>(v.size());
  const double ba = b - a;
  Matrix gamma(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      const double vi = v[ui] - a;
      const double vj = v[uj] - a;
      const double tau = t[ui] / (vi * vj) - t[ui] / (vi * ba) - t[uj] / (vj * ba) + 1.0 / (ba * ba);
      gamma(i, j) = tau;
      gamma(j, i) = tau;
    }
  }
  return gamma;
}

H20Standardization h20_standardization(const Matrix& gamma) {
  const Eigen::Index k = gamma.rows();
  if (k < 2) throw ConfigError("H20 standardization needs K >= 2");
  H20Standardization out;
  for (Eigen::Index j = 1; j < k; ++j) {
    const double pi2 = gamma(j - 1, j - 1) - 2.0 * gamma(j - 1, j) + gamma(j, j);
    if (!(pi2 > 0.0)) {
      throw NumericError("covariance degeneracy: pi_k^2 <= 0 at test point " +
                         std::to_string(j + 1));
    }
    out.pi.push_back(std::sqrt(pi2));
  }
  out.xi = Vector::Zero(k);
  out.xi[0] = 1.0 / out.pi.front();
  for (Eigen::Index j = 1; j + 1 < k; ++j) {
    const auto u = static_cast<std::size_t>(j);
    out.xi[j] = 1.0 / out.pi[u] - 1.0 / out.pi[u - 1];
  }
  out.xi[k - 1] = -1.0 / out.pi.back();
  out.variance = out.xi.dot(gamma * out.xi);
  return out;
}

namespace {

std::vector<double> integration_nodes(const CumulativeCurves& curves, double from) {
  std::vector<double> nodes{from};
  for (double v : curves.grid()) {
    if (v > from + kSlack && v < curves.b() - kSlack) nodes.push_back(v);
  }
  nodes.push_back(curves.b());
  return nodes;
}

void check_test_grid(const std::vector<double>& grid, double lo, double hi) {
  if (grid.size() < 2) throw ConfigError("test grid needs K >= 2 points");
  if (!std::is_sorted(grid.begin(), grid.end()) ||
      std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
    throw ConfigError("test grid must be strictly ascending");
  }
  if (grid.front() < lo - kSlack || grid.back() > hi + kSlack) {
    throw ConfigError("test grid outside [" + format_double(lo) + ", " + format_double(hi) + "]");
  }
}

void finish_statistic(TestStatistic& stat, std::vector<double>& draws, double alpha) {
  stat.p_value = exceedance_p_value(draws, stat.value);
  stat.critical_value = upper_quantile(draws, alpha);
  stat.reject = stat.value > stat.critical_value;
}

void finish_normal_statistic(TestStatistic& stat, double alpha) {
  stat.critical_value = normal_upper_quantile(alpha);
  stat.p_value = 1.0 - normal_cdf(stat.value);
  stat.reject = stat.value > stat.critical_value;
}

}  // namespace

namespace {

// Simulates `m` functionals per draw; draw(rng, out) fills out[0..m).
template <class Draw>
std::vector<std::vector<double>> simulate_many(std::size_t resamples, std::uint64_t seed,
                                               unsigned threads, std::size_t m, const Draw& draw) {
  std::vector<std::vector<double>> out(m, std::vector<double>(resamples));
  const std::size_t blocks = (resamples + kBlock - 1) / kBlock;
  parallel_for(blocks, threads, [&](std::size_t block) {
    RngStream rng(seed, block);
    std::vector<double> values(m);
    const std::size_t end = std::min(resamples, (block + 1) * kBlock);
    for (std::size_t r = block * kBlock; r < end; ++r) {
      draw(rng, values);
      for (std::size_t j = 0; j < m; ++j) out[j][r] = values[j];
    }
  });
  return out;
}

struct Nodes {
  std::vector<double> v;
  std::vector<double> t;
  std::vector<double> dt;  // dt[0] is the mass before the first node
};

Nodes make_nodes(const CumulativeCurves& curves, double from) {
  Nodes nodes;
  nodes.v = integration_nodes(curves, from);
  for (double v : nodes.v) nodes.t.push_back(curves.t_at(v));
  nodes.dt.push_back(nodes.t.front());
  for (std::size_t l = 1; l < nodes.t.size(); ++l) nodes.dt.push_back(nodes.t[l] - nodes.t[l - 1]);
  return nodes;
}

}  // namespace

TestReport test_H10(const CumulativeCurves& curves, const TestOptions& options) {
  require_alpha(options.alpha);
  require_resamples(options.resamples);
  check_test_grid(options.test_grid, curves.a(), curves.b());

  TestReport report;
  report.family = TestFamily::h10;
  report.alpha = options.alpha;
  report.resamples = options.resamples;
  report.seed = options.seed;
  report.t_a.name = "T_a1";
  report.t_m1.name = "T_m1_1";
  report.t_m2.name = "T_m2_1";

  const double scale = std::sqrt(static_cast<double>(curves.n()) / curves.rho2_b());
  const Nodes nodes = make_nodes(curves, curves.a());
  report.integration_grid = nodes.v;
  for (std::size_t l = 1; l < nodes.v.size(); ++l) {
    const double z = scale * curves.cv_at(nodes.v[l]);
    report.t_a.value += z * z * nodes.dt[l];
    report.t_m1.value += z * nodes.dt[l];
  }

  // T_m2 on the test grid; points without a t increment are dropped.
  std::vector<double> z_grid;
  std::vector<double> t_grid;
  for (double v : options.test_grid) {
    const double tv = curves.t_at(v);
    if (!t_grid.empty() && !(tv > t_grid.back())) continue;
    report.test_grid.push_back(v);
    t_grid.push_back(tv);
    z_grid.push_back(scale * curves.cv_at(v));
  }
  if (z_grid.size() < 2) throw NumericError("degenerate time transform on the test grid");
  report.t_m2.value = standardized_increment_sum(z_grid, t_grid);

  std::vector<double> sd(nodes.dt.size());
  for (std::size_t l = 0; l < sd.size(); ++l) sd[l] = std::sqrt(nodes.dt[l]);
  auto draws = simulate_many(options.resamples, options.seed, options.threads, 2,
                             [&](RngStream& rng, std::vector<double>& out) {
                               double w = 0.0;
                               double sa = 0.0;
                               double sm = 0.0;
                               for (std::size_t l = 1; l < sd.size(); ++l) {
                                 if (nodes.dt[l] == 0.0) continue;
                                 w += sd[l] * rng.normal();
                                 sa += w * w * nodes.dt[l];
                                 sm += w * nodes.dt[l];
                               }
                               out[0] = sa;
                               out[1] = sm;
                             });
  finish_statistic(report.t_a, draws[0], options.alpha);
  finish_statistic(report.t_m1, draws[1], options.alpha);
  finish_normal_statistic(report.t_m2, options.alpha);
  return report;
}

TestReport test_H20(const CumulativeCurves& curves, const TestOptions& options) {
  require_alpha(options.alpha);
  require_resamples(options.resamples);
  if (options.test_grid.empty()) throw ConfigError("test grid needs K >= 2 points");
  const double a = curves.a();
  const double b = curves.b();
  const double a1 = options.a1.value_or(options.test_grid.front());
  if (!(a < a1 && a1 < b)) throw ConfigError("a1 must satisfy a < a1 < b");
  check_test_grid(options.test_grid, a1, b);

  TestReport report;
  report.family = TestFamily::h20;
  report.alpha = options.alpha;
  report.a1 = a1;
  report.resamples = options.resamples;
  report.seed = options.seed;
  report.t_a.name = "T_a2";
  report.t_m1.name = "T_m1_2";
  report.t_m2.name = "T_m2_2";

  const double scale = std::sqrt(static_cast<double>(curves.n()) / curves.rho2_b());
  const double cv_b = curves.cv_at(b);
  auto z2 = [&](double v) { return scale * (curves.cv_at(v) / (v - a) - cv_b / (b - a)); };

  const Nodes nodes = make_nodes(curves, a1);
  report.integration_grid = nodes.v;
  for (std::size_t l = 1; l < nodes.v.size(); ++l) {
    const double z = z2(nodes.v[l]);
    report.t_a.value += z * z * nodes.dt[l];
    report.t_m1.value += z * nodes.dt[l];
  }

  report.test_grid = options.test_grid;
  std::vector<double> t_grid;
  Vector z_grid(static_cast<Eigen::Index>(report.test_grid.size()));
  for (std::size_t k = 0; k < report.test_grid.size(); ++k) {
    t_grid.push_back(curves.t_at(report.test_grid[k]));
    z_grid[static_cast<Eigen::Index>(k)] = z2(report.test_grid[k]);
  }
  const Matrix gamma = h20_covariance(report.test_grid, t_grid, a, b);
  const H20Standardization std_h20 = h20_standardization(gamma);
  if (!(std_h20.variance > 0.0)) throw NumericError("covariance degeneracy: zero T_m2 variance");
  report.t_m2.value = std_h20.xi.dot(z_grid) / std::sqrt(std_h20.variance);

  // Limit: Z2(v) = W(t(v))/(v-a) - W(1)/(b-a), with t(b) = 1 at the last node.
  std::vector<double> sd(nodes.dt.size());
  for (std::size_t l = 0; l < sd.size(); ++l) sd[l] = std::sqrt(nodes.dt[l]);
  const double tail_sd = std::sqrt(std::max(0.0, 1.0 - nodes.t.back()));
  auto draws = simulate_many(
      options.resamples, options.seed, options.threads, 2,
      [&](RngStream& rng, std::vector<double>& out) {
        thread_local std::vector<double> w;
        w.resize(sd.size());
        double acc = 0.0;
        for (std::size_t l = 0; l < sd.size(); ++l) {
          if (nodes.dt[l] > 0.0) acc += sd[l] * rng.normal();
          w[l] = acc;
        }
        const double w1 = tail_sd > 0.0 ? acc + tail_sd * rng.normal() : acc;
        double sa = 0.0;
        double sm = 0.0;
        for (std::size_t l = 1; l < sd.size(); ++l) {
          const double z = w[l] / (nodes.v[l] - a) - w1 / (b - a);
          sa += z * z * nodes.dt[l];
          sm += z * nodes.dt[l];
        }
        out[0] = sa;
        out[1] = sm;
      });
  finish_statistic(report.t_a, draws[0], options.alpha);
  finish_statistic(report.t_m1, draws[1], options.alpha);
  finish_normal_statistic(report.t_m2, options.alpha);
  return report;
}

}  // namespace markph
