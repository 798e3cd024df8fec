#include "markph/kernel.hpp"

#include "markph/common.hpp"

#include <cmath>

namespace markph {

KernelSpec KernelSpec::from_name(std::string_view name) {
  if (name == "epanechnikov") return {KernelFamily::epanechnikov};
  if (name == "uniform") return {KernelFamily::uniform};
  if (name == "biweight") return {KernelFamily::biweight};
  throw ConfigError("unknown kernel '" + std::string(name) +
                    "' (expected epanechnikov, uniform or biweight)");
}

std::string KernelSpec::name() const {
  switch (family) {
    case KernelFamily::epanechnikov: return "epanechnikov";
    case KernelFamily::uniform: return "uniform";
    case KernelFamily::biweight: return "biweight";
  }
  return "unknown";
}

double KernelSpec::eval(double x) const {
  const double ax = std::abs(x);
  if (ax > 1.0) return 0.0;
  switch (family) {
    case KernelFamily::epanechnikov: return 0.75 * (1.0 - x * x);
    case KernelFamily::uniform: return 0.5;
    case KernelFamily::biweight: {
      const double u = 1.0 - x * x;
      return 15.0 / 16.0 * u * u;
    }
  }
  return 0.0;
}

double KernelSpec::eval_scaled(double x, double h) const {
  if (!(h > 0.0)) throw ConfigError("bandwidth must be positive");
  return eval(x / h) / h;
}

double KernelSpec::moment(int j, bool squared) const {
  if (j < 0 || j > 2) throw ConfigError("kernel moments are defined for j = 0, 1, 2");
  if (j == 1) return 0.0;
  // Closed forms; odd moments vanish by symmetry.
  switch (family) {
    case KernelFamily::epanechnikov:
      if (!squared) return j == 0 ? 1.0 : 0.2;
      return j == 0 ? 0.6 : 3.0 / 35.0;
    case KernelFamily::uniform:
      if (!squared) return j == 0 ? 1.0 : 1.0 / 3.0;
      return j == 0 ? 0.5 : 1.0 / 6.0;
    case KernelFamily::biweight:
      if (!squared) return j == 0 ? 1.0 : 1.0 / 7.0;
      return j == 0 ? 5.0 / 7.0 : 5.0 / 77.0;
  }
  return 0.0;
}

}  // namespace markph
