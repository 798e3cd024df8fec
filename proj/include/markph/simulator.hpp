#pragma once

#include "markph/data.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace markph {

// Generative model for a two-arm trial with treatment z ~ Bernoulli(1/2).
// mark13: lambda(t, v | z) = exp{gamma v + (alpha + beta v) z} on [0,1].
// crossing: lambda(t, v | 0) = 1 and lambda(t, v | 1) = 2v.
struct SimModelSpec {
  enum class Kind { mark13, crossing };

  Kind kind = Kind::mark13;
  double alpha = 0.0;
  double beta = 0.0;
  double gamma = 0.3;
  double censoring_target = 0.25;
  std::string name = "custom";

  static SimModelSpec mark13(double alpha, double beta, double gamma);
  static SimModelSpec crossing();
  // m1..m8 or crossing (case-insensitive).
  static SimModelSpec named(std::string_view name);

  void validate() const;

  // True log hazard ratio beta_1(v), VE(v) = 1 - exp(beta_1(v)) and
  // CV(v) = int_a^v VE(u) du.
  double log_hazard_ratio(double v) const;
  double ve(double v) const;
  double cv(double v, double a) const;
};

// Mark-integrated hazard of arm z.
double total_hazard(const SimModelSpec& spec, int z);

// Exponential censoring rate whose censored fraction (ignoring the horizon)
// equals `target`. Throws ConfigError unless 0 < target <= 0.9.
double censoring_rate_for_target(const SimModelSpec& spec, double target);

// Administrative horizon: the larger of the two arms' 99th percentiles of T.
double study_horizon(const SimModelSpec& spec);

Dataset sample_mark13(const SimModelSpec& spec, std::size_t n, std::uint64_t seed);
Dataset sample_crossing(std::size_t n, std::uint64_t seed, double censoring_target = 0.25);
// Dispatches on spec.kind.
Dataset sample(const SimModelSpec& spec, std::size_t n, std::uint64_t seed);

struct MCOutputs {
  bool h10 = true;
  bool h20 = true;
  bool coverage = true;
  bool wald = true;
};

struct MCConfig {
  SimModelSpec model;
  std::size_t n = 500;
  std::size_t replications = 500;
  AnalysisConfig analysis;        // analysis.seed is the master seed
  MCOutputs outputs;
  std::vector<double> ve_points{0.5};  // pointwise VE coverage and beta summaries
  std::size_t refine_factor = 10;  // interval coverage uses refine_factor * K + 1 points
  unsigned threads = 1;            // 0 = default count

  void validate() const;
  // Fit grid: the analysis grid merged with the test grid and ve_points.
  std::vector<double> fit_grid() const;
  std::vector<double> interval_points() const;
};

struct Proportion {
  std::string name;
  std::size_t hits = 0;
  std::size_t trials = 0;
  double rate = 0.0;
  double se = 0.0;  // sqrt(rate (1 - rate) / trials)
};

struct PointSummary {
  double v = 0.0;
  double truth = 0.0;          // beta_1(v)
  double mean_estimate = 0.0;  // mean beta_1 hat(v)
  double mean_abs_error = 0.0;
  Proportion ve_coverage;      // pointwise VE interval
};

struct MCReport {
  std::string model;
  std::size_t n = 0;
  double bandwidth = 0.0;
  double alpha = 0.05;
  std::size_t replications = 0;
  std::size_t completed = 0;
  std::size_t failures = 0;
  std::vector<std::string> failure_messages;  // first few, for diagnostics
  std::vector<Proportion> rejections;
  std::vector<Proportion> coverage;
  std::vector<PointSummary> points;

  const Proportion& rejection(std::string_view name) const;
  const Proportion& coverage_of(std::string_view name) const;
};

// Replicates sample -> fit_profile -> curves -> tests/bands. Failed
// replicates are dropped and counted; more than 10% failures throws
// NumericError. Results do not depend on the thread count.
MCReport run_study(const MCConfig& config);

}  // namespace markph
