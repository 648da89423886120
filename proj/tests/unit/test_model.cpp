#include <cmath>
#include <numbers>

#include <doctest.h>

#include "bhp/errors.hpp"
#include "bhp/model.hpp"
#include "bhp/motion.hpp"

using namespace bhp;
using doctest::Approx;

TEST_SUITE("model") {

TEST_CASE("mean offspring of simple laws") {
  CHECK(mean_offspring(OffspringLaw::binary(), 0.0) == 2.0);
  CHECK(mean_offspring(OffspringLaw::from_masses({0.0, 1.0}), 0.0) == 1.0);
  CHECK(mean_offspring(OffspringLaw::from_masses({0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3}), 0.0) ==
        Approx(2.0).epsilon(1e-15));
}

TEST_CASE("p1 = 1 is flagged by validation") {
  const auto report = validate_offspring(OffspringLaw::from_masses({0.0, 1.0}));
  CHECK_FALSE(report.passed);
}

TEST_CASE("validation clauses") {
  CHECK(validate_offspring(OffspringLaw::binary()).passed);
  const auto p0 = validate_offspring(OffspringLaw::from_masses({0.1, 0.0, 0.9}));
  CHECK_FALSE(p0.passed);
  CHECK(p0.violations.size() == 1);
  const auto heavy = validate_offspring(OffspringLaw::from_masses({0.0, 0.5, 0.6}));
  CHECK_FALSE(heavy.passed);
  CHECK_THROWS_AS(mean_offspring(OffspringLaw::from_masses({0.0, 0.5, 0.6}), 0.0), ValidationError);
}

TEST_CASE("size-biased law") {
  const auto single = size_biased(OffspringLaw::binary(), 0.0);
  CHECK(single.masses_at(0.0)[2] == 1.0);
  const auto again = size_biased(single, 0.0);
  CHECK(again.masses_at(0.0)[2] == 1.0);

  const auto odd = size_biased(OffspringLaw::from_masses({0.0, 0.5, 0.0, 0.5}), 0.0);
  CHECK(odd.masses_at(0.0)[1] == Approx(0.25));
  CHECK(odd.masses_at(0.0)[3] == Approx(0.75));

  const auto uniform = OffspringLaw::from_masses({0.0, 1.0 / 3, 1.0 / 3, 1.0 / 3});
  const auto hat = size_biased(uniform, 0.0);
  double total = 0.0, inverse = 0.0;
  for (int k = 1; k <= 3; ++k) {
    CHECK(hat.masses_at(0.0)[k] == Approx(k / 6.0).epsilon(1e-14));
    total += hat.masses_at(0.0)[k];
    inverse += hat.masses_at(0.0)[k] / k;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(std::abs(inverse - 1.0 / mean_offspring(uniform, 0.0)) < 1e-12);
}

TEST_CASE("position-dependent law") {
  const auto law = OffspringLaw::piecewise({0.0}, {{0.0, 0.0, 1.0}, {0.0, 0.5, 0.0, 0.5}});
  CHECK(mean_offspring(law, -1.0) == 2.0);
  CHECK(mean_offspring(law, 1.0) == 2.0);
  CHECK(law.masses_at(1.0)[3] == 0.5);
  CHECK(law.max_count() == 3);
}

TEST_CASE("catalog OU closed forms") {
  const auto e = catalog_ou(2.0, 1.5, 0.1);
  CHECK(e.spectral.lambda1 == Approx(-0.6).epsilon(1e-14));
  CHECK(e.spectral.gap == Approx(1.0));
  CHECK(e.spectral.h(0.0) == Approx(std::pow(0.5, 0.25)).epsilon(1e-14));
  CHECK(std::abs(e.spectral.h_norm_check - 1.0) < 1e-8);

  const auto flat = catalog_ou(2.0, 0.0, 0.1);
  CHECK(flat.spectral.lambda1 == Approx(-0.1));
  CHECK(flat.spectral.gap == Approx(2.0));
  CHECK(flat.spectral.h(1.7) == Approx(1.0));

  CHECK_THROWS_AS(catalog_ou(1.0, 0.6, 0.2), PreconditionError);
}

TEST_CASE("OU eigenrelation through Mehler quadrature") {
  // e^{l1 t} P_t h(x) = h(x) int p^h(t, x, y) m~(dy): check the Mehler kernel integrates to 1.
  const auto e = catalog_ou(2.0, 1.5, 0.1);
  for (double t : {0.5, 1.0}) {
    for (double x : {-1.0, 0.0, 1.0}) {
      double acc = 0.0;
      const int n = 20000;
      const double dy = 24.0 / n;
      for (int i = 0; i <= n; ++i) {
        const double y = -12.0 + i * dy;
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        acc += w * dy * mehler_density_h(t, x, y, 1.0) * std::exp(-y * y) / std::sqrt(std::numbers::pi);
      }
      CHECK(std::abs(acc - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("catalog interval") {
  const auto e = catalog_interval(1.0);
  CHECK(e.spectral.lambda1 == Approx(-0.5));
  CHECK(e.spectral.lambda2 == Approx(1.0));
  CHECK(e.spectral.gap == Approx(1.5));
  CHECK(e.spectral.h(std::numbers::pi / 2) == Approx(std::sqrt(2.0 / std::numbers::pi)));
  CHECK(std::abs(e.spectral.h_norm_check - 1.0) < 1e-10);
  CHECK_THROWS_AS(catalog_interval(0.25), SubcriticalityError);
}

TEST_CASE("model validation lists every problem") {
  ModelSpec m;
  m.motion = OuMotion{1.0, 1.0, 1};
  m.rate.quadratic = 0.6;
  m.offspring = OffspringLaw::from_masses({0.2, 0.0, 0.8});
  try {
    validate_model(m);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("p_0") != std::string::npos);
    CHECK(what.find("sqrt(2b)") != std::string::npos);
  }
}

}
