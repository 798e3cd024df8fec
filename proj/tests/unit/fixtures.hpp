#pragma once

#include "markph/data.hpp"

#include <vector>

namespace markph::testing {

inline SurvivalRecord record(double time, bool event, double mark, std::vector<double> z) {
  SurvivalRecord r;
  r.follow_up_time = time;
  r.event = event;
  if (event) r.mark = mark;
  r.covariates = CovariatePath(Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size())));
  return r;
}

// Two subjects: one event at time 1 with mark 0.5 (z = 1), one censored at 2 (z = 0).
inline Dataset d0() {
  return Dataset({record(1.0, true, 0.5, {1.0}), record(2.0, false, 0.0, {0.0})});
}

// Three subjects with two events sharing mark 0.5.
inline Dataset d1() {
  return Dataset({record(0.5, true, 0.5, {0.0}), record(1.0, true, 0.5, {1.0}),
                  record(2.0, false, 0.0, {0.0})});
}

}  // namespace markph::testing
