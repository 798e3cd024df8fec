#include "markph/common.hpp"
#include "markph/kernel.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <doctest.h>

#include <cmath>

using namespace markph;

namespace {

double integrate(const KernelSpec& k, int j, bool squared) {
  using boost::math::quadrature::gauss_kronrod;
  return gauss_kronrod<double, 31>::integrate(
      [&](double u) {
        const double kv = k.eval(u);
        return std::pow(u, j) * (squared ? kv * kv : kv);
      },
      -1.0, 1.0);
}

}  // namespace

TEST_CASE("closed-form kernel moments agree with quadrature") {
  for (const char* name : {"epanechnikov", "uniform", "biweight"}) {
    const KernelSpec k = KernelSpec::from_name(name);
    CAPTURE(name);
    for (int j = 0; j <= 2; ++j) {
      for (bool squared : {false, true}) {
        CHECK(k.moment(j, squared) == doctest::Approx(integrate(k, j, squared)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("Epanechnikov constants") {
  const KernelSpec k;
  CHECK(k.moment(0, true) == 0.6);
  CHECK(k.moment(2, false) == doctest::Approx(0.2));
  CHECK(k.eval(0.0) == 0.75);
  CHECK(k.eval(1.5) == 0.0);
  CHECK(k.eval_scaled(0.0, 0.2) == doctest::Approx(3.75));
}

TEST_CASE("kernel argument validation") {
  const KernelSpec k;
  CHECK_THROWS_AS(k.eval_scaled(0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(KernelSpec::from_name("gaussian"), ConfigError);
  CHECK_THROWS_AS(k.moment(3, false), ConfigError);
  CHECK(KernelSpec::from_name("biweight").name() == "biweight");
}
