#pragma once

#include <string>
#include <string_view>

namespace markph {

enum class KernelFamily { epanechnikov, uniform, biweight };

// Symmetric kernel with support [-1, 1] integrating to one.
struct KernelSpec {
  KernelFamily family = KernelFamily::epanechnikov;

  static KernelSpec from_name(std::string_view name);
  std::string name() const;

  // K(x); zero outside [-1, 1].
  double eval(double x) const;
  // K_h(x) = K(x / h) / h. Throws ConfigError for h <= 0.
  double eval_scaled(double x, double h) const;
  // mu_j = int u^j K(u) du, or nu_j = int u^j K(u)^2 du when `squared`.
  double moment(int j, bool squared) const;
};

}  // namespace markph
