#include "markph/data.hpp"

#include "markph/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace markph {

CovariatePath::CovariatePath(Vector value) : values_{std::move(value)} {
  if (values_.front().size() == 0) throw DataError("covariate dimension must be positive");
}

CovariatePath::CovariatePath(std::vector<double> breakpoints, std::vector<Vector> values)
    : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
  if (values_.size() != breakpoints_.size() + 1) {
    throw DataError("a covariate path with k breakpoints needs k + 1 segment values");
  }
  if (values_.front().size() == 0) throw DataError("covariate dimension must be positive");
  for (const auto& v : values_) {
    if (v.size() != values_.front().size()) {
      throw DataError("covariate path segments differ in dimension");
    }
  }
  if (std::adjacent_find(breakpoints_.begin(), breakpoints_.end(),
                         [](double x, double y) { return !(x < y); }) != breakpoints_.end()) {
    throw DataError("covariate path breakpoints must be strictly ascending");
  }
}

const Vector& CovariatePath::at(double t) const {
  if (breakpoints_.empty()) return values_.front();
  // First breakpoint >= t closes the segment containing t.
  const auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t);
  return values_[static_cast<std::size_t>(it - breakpoints_.begin())];
}

Dataset::Dataset(std::vector<SurvivalRecord> records, std::optional<double> tau,
                 std::optional<MarkScale> scale)
    : records_(std::move(records)), scale_(scale) {
  double max_time = 0.0;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const std::string where = "record " + std::to_string(i + 1) + ": ";
    if (!(r.follow_up_time >= 0.0) || !std::isfinite(r.follow_up_time)) {
      throw DataError(where + "negative or non-finite time");
    }
    if (r.event && !r.mark) throw DataError(where + "event without mark");
    if (!r.event && r.mark) throw DataError(where + "censored record with a mark");
    if (r.mark && !std::isfinite(*r.mark)) throw DataError(where + "non-finite mark");
    const std::size_t dim = r.covariates.dimension();
    if (i == 0) p_ = dim;
    if (dim != p_) throw DataError(where + "covariate dimension differs from record 1");
    time_fixed_ = time_fixed_ && r.covariates.time_fixed();
    events_ += r.event ? 1 : 0;
    max_time = std::max(max_time, r.follow_up_time);
  }
  tau_ = tau.value_or(max_time);
  if (tau_ < max_time) throw DataError("tau must be at least the largest follow-up time");
}

Dataset load_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  std::vector<SurvivalRecord> records;
  auto fail = [&](const std::string& msg) {
    throw DataError("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto fields = split_csv_line(view);
    if (columns == 0) {
      if (fields.size() < 4 || trim(fields[0]) != "time" || trim(fields[1]) != "status" ||
          trim(fields[2]) != "mark") {
        fail("header must be time,status,mark,z1..zp with at least one covariate");
      }
      columns = fields.size();
      continue;
    }
    if (fields.size() != columns) {
      fail("expected " + std::to_string(columns) + " columns, found " +
           std::to_string(fields.size()));
    }
    SurvivalRecord rec;
    const auto time = parse_double(fields[0]);
    if (!time) fail("non-numeric time");
    if (*time < 0.0) fail("negative time");
    rec.follow_up_time = *time;
    const auto status = trim(fields[1]);
    if (status == "1") {
      rec.event = true;
    } else if (status != "0") {
      fail("status must be 0 or 1");
    }
    const auto mark_text = trim(fields[2]);
    if (rec.event) {
      if (mark_text.empty()) fail("event without mark");
      const auto mark = parse_double(mark_text);
      if (!mark) fail("event without mark (non-numeric mark)");
      rec.mark = *mark;
    } else if (!mark_text.empty()) {
      fail("censored row with non-empty mark");
    }
    Vector z(static_cast<Eigen::Index>(columns - 3));
    for (std::size_t k = 3; k < columns; ++k) {
      const auto value = parse_double(fields[k]);
      if (!value) fail("non-numeric covariate in column " + std::to_string(k + 1));
      z[static_cast<Eigen::Index>(k - 3)] = *value;
    }
    rec.covariates = CovariatePath(std::move(z));
    records.push_back(std::move(rec));
  }
  if (columns == 0) throw DataError("missing header line");
  return Dataset(std::move(records));
}

Dataset load_dataset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return load_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << "time,status,mark";
  for (std::size_t k = 0; k < data.dimension(); ++k) out << ",z" << (k + 1);
  out << '\n';
  for (const auto& r : data.records()) {
    if (!r.covariates.time_fixed()) {
      throw DataError("CSV output supports time-fixed covariates only");
    }
    out << format_double(r.follow_up_time) << ',' << (r.event ? 1 : 0) << ',';
    if (r.mark) out << format_double(*r.mark);
    const Vector& z = r.covariates.at(0.0);
    for (Eigen::Index k = 0; k < z.size(); ++k) out << ',' << format_double(z[k]);
    out << '\n';
  }
}

Dataset rescale_marks(const Dataset& data, double observed_min, double observed_max) {
  if (!(observed_min < observed_max)) {
    throw ConfigError("mark range requires observed_min < observed_max");
  }
  const MarkScale scale{observed_min, observed_max};
  std::vector<SurvivalRecord> records = data.records();
  for (auto& r : records) {
    if (!r.mark) continue;
    if (*r.mark < observed_min || *r.mark > observed_max) {
      throw DataError("mark " + format_double(*r.mark) + " outside the declared range [" +
                      format_double(observed_min) + ", " + format_double(observed_max) + "]");
    }
    r.mark = std::clamp(scale.to_unit(*r.mark), 0.0, 1.0);
  }
  return Dataset(std::move(records), data.tau(), scale);
}

void AnalysisConfig::validate() const {
  if (!(bandwidth > 0.0)) throw ConfigError("bandwidth must be positive");
  if (!(0.0 < a && a < b && b < 1.0)) throw ConfigError("interval must satisfy 0 < a < b < 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0,1)");
  if (resamples == 0) throw ConfigError("resample count must be positive");
  if (grid_points.empty() && grid_count == 0) throw ConfigError("grid must have points");
  for (double v : grid_points) {
    if (v < a || v > b) throw ConfigError("grid point outside [a,b]");
  }
  if (std::adjacent_find(grid_points.begin(), grid_points.end(),
                         [](double x, double y) { return !(x < y); }) != grid_points.end()) {
    throw ConfigError("grid points must be strictly ascending");
  }
  for (double v : test_points) {
    if (v < a || v > b) throw ConfigError("test grid point outside [a,b]");
  }
  if (std::adjacent_find(test_points.begin(), test_points.end(),
                         [](double x, double y) { return !(x < y); }) != test_points.end()) {
    throw ConfigError("test grid points must be strictly ascending");
  }
  if (test_points.empty() && test_grid_count == 0) throw ConfigError("test grid must have points");
  if (a1) {
    if (!(a < *a1 && *a1 < b)) throw ConfigError("a1 must satisfy a < a1 < b");
  }
}

std::vector<double> AnalysisConfig::mark_grid() const {
  if (!grid_points.empty()) return grid_points;
  if (grid_count == 1) return {0.5 * (a + b)};
  std::vector<double> grid(grid_count);
  for (std::size_t k = 0; k < grid_count; ++k) {
    grid[k] = a + (b - a) * static_cast<double>(k) / static_cast<double>(grid_count - 1);
  }
  grid.back() = b;
  return grid;
}

std::vector<double> AnalysisConfig::test_grid() const {
  if (!test_points.empty()) return test_points;
  const double first = a + 0.12 * (b - a);
  const double last = a + 0.96 * (b - a);
  if (test_grid_count == 1) return {first};
  std::vector<double> grid(test_grid_count);
  for (std::size_t k = 0; k < test_grid_count; ++k) {
    grid[k] = first + (last - first) * static_cast<double>(k) /
                          static_cast<double>(test_grid_count - 1);
  }
  return grid;
}

double AnalysisConfig::resolved_a1() const {
  if (a1) return *a1;
  return test_grid().front();
}

ValidationReport validate(const Dataset& data, const AnalysisConfig& config) {
  ValidationReport report;
  report.subjects = data.size();
  report.events = data.event_count();
  report.censoring_fraction =
      data.size() == 0 ? 0.0
                       : 1.0 - static_cast<double>(data.event_count()) /
                                   static_cast<double>(data.size());
  if (data.size() == 0) report.flags.push_back("empty dataset");
  if (data.event_count() == 0) report.flags.push_back("no events");

  std::vector<double> marks;
  for (const auto& r : data.records()) {
    if (r.mark) marks.push_back(*r.mark);
  }
  std::sort(marks.begin(), marks.end());
  for (double v : config.mark_grid()) {
    // Kernel support is the open window (v - h, v + h).
    const auto lo = std::upper_bound(marks.begin(), marks.end(), v - config.bandwidth);
    const auto hi = std::lower_bound(marks.begin(), marks.end(), v + config.bandwidth);
    const auto count = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, hi - lo));
    report.windows.push_back({v, count});
    if (count == 0) {
      report.empty_windows.push_back(v);
      report.flags.push_back("empty window at " + format_double(v));
    }
  }
  return report;
}

}  // namespace markph
