#pragma once

#include "markph/common.hpp"
#include "markph/kernel.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace markph {

// Left-continuous step function t -> Z(t) in R^p. Segment k covers
// (breakpoints[k-1], breakpoints[k]]; the last segment extends to infinity.
class CovariatePath {
 public:
  CovariatePath() = default;
  explicit CovariatePath(Vector value);
  CovariatePath(std::vector<double> breakpoints, std::vector<Vector> values);

  std::size_t dimension() const { return static_cast<std::size_t>(values_.front().size()); }
  bool time_fixed() const { return breakpoints_.empty(); }
  const Vector& at(double t) const;

  const std::vector<double>& breakpoints() const { return breakpoints_; }
  const std::vector<Vector>& values() const { return values_; }

 private:
  std::vector<double> breakpoints_;
  std::vector<Vector> values_{Vector()};
};

struct SurvivalRecord {
  double follow_up_time = 0.0;
  bool event = false;
  std::optional<double> mark;  // present iff event
  CovariatePath covariates;
};

// Affine map recorded by rescale_marks so reports can be read on the
// original mark scale.
struct MarkScale {
  double lower = 0.0;
  double upper = 1.0;
  double to_unit(double v) const { return (v - lower) / (upper - lower); }
  double to_original(double u) const { return lower + u * (upper - lower); }
};

// Immutable marked right-censored sample. The constructor enforces the
// record invariants; estimation entry points additionally require at least
// one event.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<SurvivalRecord> records, std::optional<double> tau = {},
                   std::optional<MarkScale> scale = {});

  std::size_t size() const { return records_.size(); }
  std::size_t dimension() const { return p_; }
  double tau() const { return tau_; }
  const std::vector<SurvivalRecord>& records() const { return records_; }
  const SurvivalRecord& operator[](std::size_t i) const { return records_[i]; }
  std::size_t event_count() const { return events_; }
  bool time_fixed() const { return time_fixed_; }
  const std::optional<MarkScale>& mark_scale() const { return scale_; }

 private:
  std::vector<SurvivalRecord> records_;
  std::size_t p_ = 0;
  double tau_ = 0.0;
  std::size_t events_ = 0;
  bool time_fixed_ = true;
  std::optional<MarkScale> scale_;
};

// CSV with header `time,status,mark,z1..zp`; `#` starts a comment line.
Dataset load_dataset(std::istream& in);
Dataset load_dataset_file(const std::string& path);
// Inverse of load_dataset for time-fixed covariates; shortest round-trip
// number formatting.
void write_dataset(std::ostream& out, const Dataset& data);

// Maps marks from [observed_min, observed_max] onto [0, 1].
Dataset rescale_marks(const Dataset& data, double observed_min, double observed_max);

struct AnalysisConfig {
  double bandwidth = 0.1;
  double a = 0.1;
  double b = 0.9;
  std::size_t grid_count = 41;
  std::vector<double> grid_points;  // overrides grid_count when non-empty
  KernelSpec kernel;
  double alpha = 0.05;
  std::size_t resamples = 10000;
  std::uint64_t seed = 1;
  std::optional<double> a1;          // defaults to the first test-grid point
  std::size_t test_grid_count = 8;
  std::vector<double> test_points;   // overrides the default test grid

  // Throws ConfigError on any violated invariant.
  void validate() const;
  std::vector<double> mark_grid() const;
  // Default: test_grid_count points evenly spaced from a + 0.12(b - a) to
  // a + 0.96(b - a), i.e. 0.196 ... 0.868 on [0.1, 0.9] with 8 points.
  std::vector<double> test_grid() const;
  double resolved_a1() const;
};

struct WindowCount {
  double v = 0.0;
  std::size_t events_in_window = 0;
};

struct ValidationReport {
  std::size_t subjects = 0;
  std::size_t events = 0;
  double censoring_fraction = 0.0;
  std::vector<WindowCount> windows;
  std::vector<double> empty_windows;  // grid points with no event mark within h
  std::vector<std::string> flags;
  bool ok() const { return flags.empty(); }
};

ValidationReport validate(const Dataset& data, const AnalysisConfig& config);

}  // namespace markph
