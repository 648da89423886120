#include <cmath>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "bhp/parallel.hpp"
#include "bhp/spine.hpp"

using namespace bhp;
using doctest::Approx;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST_SUITE("spine") {

TEST_CASE("spine structure") {
  const auto iv = catalog_interval(1.0);
  RandomStream rng(31);
  SimulationOptions opts;
  opts.observation_times = {1.0};
  const SpineTree tree = simulate_spine_tree(iv.model, iv.spectral, kPi / 2, 2.0, rng, opts);
  CHECK(tree.spine_nodes.front() == 0);
  CHECK(tree.spine_nodes.size() == tree.fissions.size() + 1);
  for (std::size_t k = 0; k < tree.fissions.size(); ++k) {
    const auto& f = tree.fissions[k];
    const Node& n = tree.forest.nodes[f.node];
    CHECK(n.cause == NodeCause::fission);
    CHECK(f.chosen_child >= 1);
    CHECK(static_cast<int>(f.chosen_child) <= f.offspring);
    CHECK(tree.spine_nodes[k + 1] == n.first_child + f.chosen_child - 1);
  }
  // The spine never dies.
  CHECK_FALSE(is_cemetery(tree.spine_position(2.0)));
  CHECK(tree.forest.nodes[tree.spine_nodes.back()].cause == NodeCause::horizon);
  const auto ledger = ledger_at(tree, 0.0, iv.spectral);
  CHECK(ledger.eta == Approx(1.0));
  CHECK(ledger.z == Approx(1.0));
}

TEST_CASE("size-biased spine offspring") {
  // Spine fissions of p_1 = p_3 = 1/2 produce 3 children with probability 3/4.
  auto iv = catalog_interval(1.0);
  iv.model.offspring = OffspringLaw::from_masses({0.0, 0.5, 0.0, 0.5});
  int threes = 0, total = 0;
  for (std::size_t i = 0; i < 3000; ++i) {
    RandomStream rng(replica_seed(32, i));
    const SpineTree tree = simulate_spine_tree(iv.model, iv.spectral, kPi / 2, 0.5, rng);
    for (const auto& f : tree.fissions) {
      ++total;
      if (f.offspring == 3) ++threes;
    }
  }
  REQUIRE(total > 500);
  const double p = static_cast<double>(threes) / total;
  CHECK(std::abs(p - 0.75) < 4.0 * std::sqrt(0.75 * 0.25 / total));
}

TEST_CASE("Z(T) weights give an exact identity") {
  // G = Z(T): importance estimate of E_P[Z(T)] is 1 with zero variance.
  const auto iv = catalog_interval(1.0);
  const auto& sp = iv.spectral;
  const auto e = importance_estimate([&](const Forest& f) { return normalized_martingale(f, 1.0, sp); },
                                     iv.model, sp, kPi / 2, 1.0, 200, 33);
  CHECK(e.mean == Approx(1.0).epsilon(1e-12));
  CHECK(e.stderr_ < 1e-12);
}

TEST_CASE("no branching: decomposition equals Z") {
  auto iv = catalog_interval(1.0);
  iv.model.rate.constant = 0.0;
  iv.spectral = interval_closed_form(0.0);
  for (std::size_t i = 0; i < 50; ++i) {
    RandomStream rng(replica_seed(34, i));
    SimulationOptions opts;
    opts.observation_times = {1.0};
    const SpineTree tree = simulate_spine_tree(iv.model, iv.spectral, 1.0, 1.0, rng, opts);
    CHECK(tree.fissions.empty());
    const double expected = std::exp(iv.spectral.lambda1) * iv.spectral.h(tree.spine_position(1.0)) /
                            iv.spectral.h(1.0);
    CHECK(spine_decomposition(tree, 1.0, iv.spectral) == Approx(expected));
    CHECK(ledger_at(tree, 1.0, iv.spectral).z == Approx(expected));
  }
}

TEST_CASE("spine fission count is Poisson given the path") {
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  const auto samples = parallel_replicas(6000, 1, [&](std::size_t i) {
    RandomStream rng(replica_seed(35, i));
    const SpineTree tree = simulate_spine_tree(ou.model, ou.spectral, 0.0, 2.0, rng);
    const double a = fission_count_given_path(tree.spine_path, ou.model, ou.spectral);
    const double n = tree.fission_count(2.0);
    return std::array<double, 2>{n - a, (n - a) * (n - a) - n};
  });
  std::vector<double> d, q;
  for (const auto& s : samples) {
    d.push_back(s[0]);
    q.push_back(s[1]);
  }
  const auto ed = summarize(d), eq = summarize(q);
  CHECK(std::abs(ed.mean) < 4.0 * ed.stderr_);
  CHECK(std::abs(eq.mean) < 4.0 * eq.stderr_);
}

TEST_CASE("spine records") {
  const auto iv = catalog_interval(1.0);
  RandomStream rng(36);
  SimulationOptions opts;
  opts.observation_times = {0.5, 1.0};
  const SpineTree tree = simulate_spine_tree(iv.model, iv.spectral, 1.0, 1.0, rng, opts);
  std::ostringstream out;
  write_spine_records(out, tree, iv.spectral, {0.5, 1.0});
  const std::string text = out.str();
  CHECK(text.find("\tspine\n") != std::string::npos);
  CHECK(text.find("#ledger") != std::string::npos);
}

}
