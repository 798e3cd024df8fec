#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace markph {

// Standard normal distribution function and its upper quantile.
double normal_cdf(double x);
// z such that P(N(0,1) > z) = upper_tail.
double normal_upper_quantile(double upper_tail);

// Empirical upper-alpha quantile: the ceil((1 - alpha) R)-th order statistic.
// Sorts `draws` in place.
double upper_quantile(std::vector<double>& draws, double alpha);

// Fraction (with +1 correction) of simulated draws at or above `observed`.
double exceedance_p_value(std::span<const double> draws, double observed);

// Mixes a master seed with a stream index; distinct indices give
// statistically independent 64-bit seeds.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

// Reproducible random stream keyed by (master seed, stream index).
class RngStream {
 public:
  RngStream(std::uint64_t master, std::uint64_t index);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double exponential(double rate);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
  std::uniform_real_distribution<double> uniform_;
};

// Number of worker threads to use when the caller passes 0:
// MARKPH_THREADS if set, else hardware concurrency.
unsigned default_thread_count();

// Runs body(i) for i in [0, count) on up to `threads` workers. Each index
// runs exactly once; the caller stores results by index so the outcome is
// independent of scheduling. The first exception thrown is rethrown.
void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body);

}  // namespace markph
