#include "markph/simulator.hpp"

#include "markph/estimator.hpp"
#include "markph/inference.hpp"
#include "markph/io.hpp"
#include "markph/numeric.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <optional>

namespace markph {

namespace {

constexpr std::array<std::array<double, 3>, 8> kModels{{
    {0.0, 0.0, 0.3},
    {-0.5, 0.5, 0.3},
    {-0.6, 0.6, 0.3},
    {-0.6, 0.0, 0.3},
    {-0.69, 0.0, 0.3},
    {-1.2, 1.2, 0.3},
    {-1.5, 1.5, 0.3},
    {-1.8, 1.8, 0.3},
}};

constexpr double kTiny = 1e-12;

Proportion proportion(std::string name, std::size_t hits, std::size_t trials) {
  Proportion p;
  p.name = std::move(name);
  p.hits = hits;
  p.trials = trials;
  if (trials > 0) {
    p.rate = static_cast<double>(hits) / static_cast<double>(trials);
    p.se = std::sqrt(p.rate * (1.0 - p.rate) / static_cast<double>(trials));
  }
  return p;
}

std::vector<double> merge_points(std::vector<double> points) {
  std::sort(points.begin(), points.end());
  std::vector<double> out;
  for (double v : points) {
    if (out.empty() || v - out.back() > 1e-9) out.push_back(v);
  }
  return out;
}

}  // namespace

SimModelSpec SimModelSpec::mark13(double alpha, double beta, double gamma) {
  SimModelSpec spec;
  spec.alpha = alpha;
  spec.beta = beta;
  spec.gamma = gamma;
  return spec;
}

SimModelSpec SimModelSpec::crossing() {
  SimModelSpec spec;
  spec.kind = Kind::crossing;
  spec.alpha = 0.0;
  spec.beta = 0.0;
  spec.gamma = 0.0;
  spec.name = "crossing";
  return spec;
}

SimModelSpec SimModelSpec::named(std::string_view name) {
  std::string key(name);
  std::transform(key.begin(), key.end(), key.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (key == "crossing") return crossing();
  if (key.size() == 2 && key[0] == 'm' && key[1] >= '1' && key[1] <= '8') {
    const auto& p = kModels[static_cast<std::size_t>(key[1] - '1')];
    SimModelSpec spec = mark13(p[0], p[1], p[2]);
    spec.name = "M" + key.substr(1);
    return spec;
  }
  throw ConfigError("unknown model '" + std::string(name) + "' (expected m1..m8 or crossing)");
}

void SimModelSpec::validate() const {
  if (!(censoring_target > 0.0 && censoring_target <= 0.9)) {
    throw ConfigError("censoring target must lie in (0, 0.9]");
  }
  if (kind == Kind::mark13) {
    for (double x : {alpha, beta, gamma}) {
      if (!std::isfinite(x)) throw ConfigError("model parameters must be finite");
    }
    for (int z : {0, 1}) {
      if (!std::isfinite(total_hazard(*this, z))) throw ConfigError("hazard overflows on [0,1]");
    }
  }
}

double SimModelSpec::log_hazard_ratio(double v) const {
  if (kind == Kind::crossing) return std::log(2.0 * v);
  return alpha + beta * v;
}

double SimModelSpec::ve(double v) const {
  if (kind == Kind::crossing) return 1.0 - 2.0 * v;
  return 1.0 - std::exp(alpha + beta * v);
}

double SimModelSpec::cv(double v, double a) const {
  if (kind == Kind::crossing) return (v - a) - (v * v - a * a);
  if (beta == 0.0) return (v - a) * (1.0 - std::exp(alpha));
  return (v - a) - (std::exp(alpha + beta * v) - std::exp(alpha + beta * a)) / beta;
}

double total_hazard(const SimModelSpec& spec, int z) {
  if (spec.kind == SimModelSpec::Kind::crossing) return 1.0;
  const double c = spec.gamma + spec.beta * z;
  const double level = std::exp(spec.alpha * z);
  if (std::abs(c) < kTiny) return level;
  return level * std::expm1(c) / c;
}

double censoring_rate_for_target(const SimModelSpec& spec, double target) {
  if (!(target > 0.0 && target <= 0.9)) {
    throw ConfigError("censoring target " + format_double(target) + " is unattainable; need (0, 0.9]");
  }
  const double l0 = total_hazard(spec, 0);
  const double l1 = total_hazard(spec, 1);
  // Censored fraction for rate c: 1/2 c/(c + l0) + 1/2 c/(c + l1).
  if (l0 == l1) return target * l0 / (1.0 - target);
  auto fraction = [&](double c) { return 0.5 * c / (c + l0) + 0.5 * c / (c + l1); };
  double lo = 0.0;
  double hi = std::max(l0, l1);
  while (fraction(hi) < target) hi *= 2.0;
  while (hi - lo > 1e-10 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    (fraction(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double study_horizon(const SimModelSpec& spec) {
  const double slowest = std::min(total_hazard(spec, 0), total_hazard(spec, 1));
  return std::log(100.0) / slowest;
}

namespace {

Dataset draw_sample(const SimModelSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  const double censor_rate = censoring_rate_for_target(spec, spec.censoring_target);
  const double horizon = study_horizon(spec);
  const std::array<double, 2> rate{total_hazard(spec, 0), total_hazard(spec, 1)};
  RngStream rng(seed, 0);
  std::vector<SurvivalRecord> records(n);
  for (auto& rec : records) {
    const int z = rng.bernoulli(0.5) ? 1 : 0;
    const double t = rng.exponential(rate[static_cast<std::size_t>(z)]);
    const double u = rng.uniform();
    const double c = rng.exponential(censor_rate);
    double mark = u;
    if (spec.kind == SimModelSpec::Kind::crossing) {
      if (z == 1) mark = std::sqrt(u);
    } else {
      const double tilt = spec.gamma + spec.beta * z;
      if (std::abs(tilt) >= kTiny) mark = std::log1p(u * std::expm1(tilt)) / tilt;
    }
    const double stop = std::min(c, horizon);
    rec.event = t <= stop;
    rec.follow_up_time = std::min(t, stop);
    if (rec.event) rec.mark = std::clamp(mark, 0.0, 1.0);
    rec.covariates = CovariatePath(Vector::Constant(1, static_cast<double>(z)));
  }
  return Dataset(std::move(records), horizon);
}

}  // namespace

Dataset sample_mark13(const SimModelSpec& spec, std::size_t n, std::uint64_t seed) {
  if (spec.kind != SimModelSpec::Kind::mark13) throw ConfigError("expected a mark13 model");
  return draw_sample(spec, n, seed);
}

Dataset sample_crossing(std::size_t n, std::uint64_t seed, double censoring_target) {
  SimModelSpec spec = SimModelSpec::crossing();
  spec.censoring_target = censoring_target;
  return draw_sample(spec, n, seed);
}

Dataset sample(const SimModelSpec& spec, std::size_t n, std::uint64_t seed) {
  return draw_sample(spec, n, seed);
}

void MCConfig::validate() const {
  model.validate();
  analysis.validate();
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (n < 2) throw ConfigError("sample size must be at least 2");
  if (refine_factor < 1) throw ConfigError("refine factor must be positive");
  for (double v : ve_points) {
    if (v < analysis.a || v > analysis.b) throw ConfigError("VE point outside [a,b]");
  }
}

std::vector<double> MCConfig::fit_grid() const {
  std::vector<double> points = analysis.mark_grid();
  const auto test = analysis.test_grid();
  points.insert(points.end(), test.begin(), test.end());
  points.insert(points.end(), ve_points.begin(), ve_points.end());
  return merge_points(std::move(points));
}

std::vector<double> MCConfig::interval_points() const {
  const std::size_t count = refine_factor * analysis.test_grid().size() + 1;
  std::vector<double> points(count);
  for (std::size_t k = 0; k < count; ++k) {
    points[k] = analysis.a + (analysis.b - analysis.a) * static_cast<double>(k) /
                                 static_cast<double>(count - 1);
  }
  points.back() = analysis.b;
  return points;
}

const Proportion& MCReport::rejection(std::string_view name) const {
  for (const auto& p : rejections) {
    if (p.name == name) return p;
  }
  throw ConfigError("no rejection rate named " + std::string(name));
}

const Proportion& MCReport::coverage_of(std::string_view name) const {
  for (const auto& p : coverage) {
    if (p.name == name) return p;
  }
  throw ConfigError("no coverage named " + std::string(name));
}

namespace {

const std::array<const char*, 7> kRejectionNames{"T_a1", "T_m1_1", "T_m2_1", "T_a2",
                                                 "T_m1_2", "T_m2_2", "T_w"};

struct Replicate {
  bool ok = false;
  std::string message;
  std::array<bool, 7> reject{};
  bool grid_covered = false;
  bool interval_covered = false;
  std::vector<double> beta1;
  std::vector<std::optional<bool>> ve_covered;
};

bool band_covers(const Band& band, const SimModelSpec& model, double a) {
  for (std::size_t k = 0; k < band.v.size(); ++k) {
    const double truth = model.cv(band.v[k], a);
    if (truth < band.lower[k] || truth > band.upper[k]) return false;
  }
  return true;
}

Replicate run_replicate(const MCConfig& config, const std::vector<double>& grid,
                        const std::vector<double>& interval, std::size_t rep) {
  Replicate out;
  const std::uint64_t rep_seed = derive_seed(config.analysis.seed, rep);
  try {
    const Dataset data = sample(config.model, config.n, rep_seed);
    const RiskSetIndex index(data);
    AnalysisConfig analysis = config.analysis;
    analysis.grid_points = grid;
    const ProfileFit profile = fit_profile(index, analysis);
    const CumulativeCurves curves = cumulative_curves(index, profile);

    TestOptions options;
    options.test_grid = analysis.test_grid();
    options.alpha = analysis.alpha;
    options.resamples = analysis.resamples;
    options.a1 = analysis.resolved_a1();
    if (config.outputs.h10) {
      options.seed = derive_seed(rep_seed, 1);
      const TestReport r = test_H10(curves, options);
      out.reject[0] = r.t_a.reject;
      out.reject[1] = r.t_m1.reject;
      out.reject[2] = r.t_m2.reject;
    }
    if (config.outputs.h20) {
      options.seed = derive_seed(rep_seed, 2);
      const TestReport r = test_H20(curves, options);
      out.reject[3] = r.t_a.reject;
      out.reject[4] = r.t_m1.reject;
      out.reject[5] = r.t_m2.reject;
    }
    if (config.outputs.wald) {
      const CoxFit cox = cox_fit(index);
      const double z = cox.wald_z[0];
      out.reject[6] = std::abs(z) > normal_upper_quantile(analysis.alpha / 2.0);
    }
    if (config.outputs.coverage) {
      const Band on_grid = cv_simultaneous_band_bridge(curves, analysis.alpha, analysis.resamples,
                                                       derive_seed(rep_seed, 3),
                                                       options.test_grid);
      out.grid_covered = band_covers(on_grid, config.model, analysis.a);
      const Band on_interval = cv_simultaneous_band_bridge(
          curves, analysis.alpha, analysis.resamples, derive_seed(rep_seed, 4), interval);
      out.interval_covered = band_covers(on_interval, config.model, analysis.a);
    }

    const VarianceBundle variance = variance_bundle(profile, analysis.kernel);
    const Band ve_band = ve_pointwise_band(profile, variance, analysis.alpha);
    for (double v : config.ve_points) {
      out.beta1.push_back(beta_at_mark(profile, v)[0]);
      std::optional<bool> covered;
      for (std::size_t k = 0; k < ve_band.v.size(); ++k) {
        if (std::abs(ve_band.v[k] - v) < 1e-9) {
          const double truth = config.model.ve(v);
          covered = truth >= ve_band.lower[k] && truth <= ve_band.upper[k];
        }
      }
      out.ve_covered.push_back(covered);
    }
    out.ok = true;
  } catch (const NumericError& e) {
    out.message = "replicate " + std::to_string(rep) + ": " + e.what();
  }
  return out;
}

}  // namespace

MCReport run_study(const MCConfig& config) {
  config.validate();
  const auto grid = config.fit_grid();
  const auto interval = config.interval_points();
  std::vector<Replicate> results(config.replications);
  const unsigned threads = config.threads == 0 ? default_thread_count() : config.threads;
  parallel_for(config.replications, threads, [&](std::size_t rep) {
    results[rep] = run_replicate(config, grid, interval, rep);
  });

  MCReport report;
  report.model = config.model.name;
  report.n = config.n;
  report.bandwidth = config.analysis.bandwidth;
  report.alpha = config.analysis.alpha;
  report.replications = config.replications;
  for (const auto& r : results) {
    if (r.ok) {
      ++report.completed;
    } else {
      ++report.failures;
      if (report.failure_messages.size() < 5) report.failure_messages.push_back(r.message);
    }
  }
  if (report.failures * 10 > config.replications) {
    std::string msg = std::to_string(report.failures) + " of " +
                      std::to_string(config.replications) + " replicates failed";
    for (const auto& m : report.failure_messages) msg += "; " + m;
    throw NumericError(msg);
  }

  const std::array<bool, 7> enabled{config.outputs.h10, config.outputs.h10, config.outputs.h10,
                                    config.outputs.h20, config.outputs.h20, config.outputs.h20,
                                    config.outputs.wald};
  for (std::size_t s = 0; s < kRejectionNames.size(); ++s) {
    if (!enabled[s]) continue;
    std::size_t hits = 0;
    for (const auto& r : results) hits += (r.ok && r.reject[s]) ? 1 : 0;
    report.rejections.push_back(proportion(kRejectionNames[s], hits, report.completed));
  }
  if (config.outputs.coverage) {
    std::size_t grid_hits = 0;
    std::size_t interval_hits = 0;
    for (const auto& r : results) {
      grid_hits += (r.ok && r.grid_covered) ? 1 : 0;
      interval_hits += (r.ok && r.interval_covered) ? 1 : 0;
    }
    report.coverage.push_back(proportion("CV_band_grid", grid_hits, report.completed));
    report.coverage.push_back(proportion("CV_band_interval", interval_hits, report.completed));
  }
  for (std::size_t k = 0; k < config.ve_points.size(); ++k) {
    PointSummary point;
    point.v = config.ve_points[k];
    point.truth = config.model.log_hazard_ratio(point.v);
    std::size_t covered = 0;
    std::size_t trials = 0;
    for (const auto& r : results) {
      if (!r.ok) continue;
      point.mean_estimate += r.beta1[k];
      point.mean_abs_error += std::abs(r.beta1[k] - point.truth);
      if (r.ve_covered[k]) {
        ++trials;
        covered += *r.ve_covered[k] ? 1 : 0;
      }
    }
    if (report.completed > 0) {
      point.mean_estimate /= static_cast<double>(report.completed);
      point.mean_abs_error /= static_cast<double>(report.completed);
    }
    point.ve_coverage = proportion("VE_pointwise@" + format_double(point.v), covered, trials);
    report.points.push_back(point);
  }
  return report;
}

}  // namespace markph
