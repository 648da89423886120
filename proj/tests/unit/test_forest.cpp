#include <cmath>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "bhp/errors.hpp"
#include "bhp/forest.hpp"
#include "bhp/spectral.hpp"
#include "bhp/parallel.hpp"
#include "bhp/spine.hpp"

using namespace bhp;
using doctest::Approx;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_SUITE("forest") {

TEST_CASE("Ulam-Harris labels") {
  CHECK(label_string({}) == "root");
  CHECK(label_string({1, 2, 1}) == "1.2.1");
}

TEST_CASE("forest structure is consistent") {
  const auto iv = catalog_interval(1.0);
  RandomStream rng(21);
  SimulationOptions opts;
  opts.observation_times = {0.5, 1.0};
  const Forest f = simulate_forest(iv.model, kPi / 2, 2.0, rng, opts);
  REQUIRE(f.size() >= 1);
  CHECK(f.nodes[0].parent == kNoNode);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Node& n = f.nodes[i];
    CHECK(n.end >= n.birth);
    CHECK(f.find(f.label(i)).value() == i);
    if (n.cause == NodeCause::fission) {
      CHECK(n.offspring == 2);
      for (int k = 0; k < n.offspring; ++k) {
        const Node& child = f.nodes[n.first_child + k];
        CHECK(child.parent == i);
        CHECK(child.child_index == static_cast<std::uint32_t>(k + 1));
        CHECK(child.birth == n.end);
        CHECK(child.birth_position == n.end_position);
      }
    } else if (n.cause == NodeCause::absorbed) {
      CHECK(is_cemetery(n.end_position));
    } else {
      CHECK(n.end == 2.0);
    }
  }
}

TEST_CASE("snapshots need recorded positions") {
  const auto iv = catalog_interval(1.0);
  RandomStream rng(22);
  SimulationOptions opts;
  opts.observation_times = {0.5};
  const Forest f = simulate_forest(iv.model, 1.0, 1.0, rng, opts);
  CHECK(snapshot(f, 0.0).size() == 1);
  CHECK_NOTHROW(snapshot(f, 0.5));
  CHECK_NOTHROW(snapshot(f, 1.0));
  CHECK_THROWS_AS(snapshot(f, 0.7), PreconditionError);
  CHECK_THROWS_AS(snapshot(f, 1.5), PreconditionError);
}

TEST_CASE("same seed gives identical records") {
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  std::ostringstream a, b;
  RandomStream r1(7), r2(7);
  write_forest_records(a, simulate_forest(ou.model, 0.0, 2.0, r1));
  write_forest_records(b, simulate_forest(ou.model, 0.0, 2.0, r2));
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("label\tbirth\tend\toffspring\tcause\tbirth_position\tend_position\n", 0) == 0);
}

TEST_CASE("population cap") {
  const auto iv = catalog_interval(6.0);
  RandomStream rng(8);
  SimulationOptions opts;
  opts.population_cap = 50;
  CHECK_THROWS_AS(simulate_forest(iv.model, kPi / 2, 5.0, rng, opts), CapacityError);
}

TEST_CASE("replica results do not depend on the worker count") {
  const auto iv = catalog_interval(1.0);
  auto run = [&](unsigned workers) {
    return parallel_replicas(64, workers, [&](std::size_t i) {
      RandomStream rng(replica_seed(9, i));
      return static_cast<double>(simulate_forest(iv.model, kPi / 2, 1.0, rng).size());
    });
  };
  CHECK(run(1) == run(4));
}

TEST_CASE("pure branching without motion effects: binary Yule growth") {
  // Huge interval, start in the middle: absorption is negligible up to t = 1,
  // so E[X_1] = e^{beta} for a binary Yule process.
  ModelSpec m;
  m.motion = IntervalMotion{200.0, 1.0};
  m.rate.constant = 1.0;
  const auto counts = parallel_replicas(20000, 1, [&](std::size_t i) {
    RandomStream rng(replica_seed(10, i));
    return static_cast<double>(snapshot(simulate_forest(m, 100.0, 1.0, rng), 1.0).size());
  });
  const Estimate e = summarize(counts);
  CHECK(std::abs(e.mean - std::exp(1.0)) < 4.0 * e.stderr_);
}

TEST_CASE("point-mass branching through local time") {
  // Many-to-one with the grid oracle for a point-mass rate.
  const auto pm = catalog_interval(0.6, kPi, PointMass{kPi / 2, 0.5});
  const auto modes = grid_spectral_triple(pm.model, 1000, 40);
  const double oracle =
      many_to_one_quadrature([](double) { return 1.0; }, 1.0, kPi / 2, pm.model, modes);
  const auto counts = parallel_replicas(20000, 1, [&](std::size_t i) {
    RandomStream rng(replica_seed(11, i));
    return static_cast<double>(snapshot(simulate_forest(pm.model, kPi / 2, 1.0, rng), 1.0).size());
  });
  const Estimate e = summarize(counts);
  CHECK(std::abs(e.mean - oracle) < 4.0 * e.stderr_ + 0.02 * oracle);
}

}
