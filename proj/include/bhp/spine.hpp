#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "bhp/forest.hpp"
#include "bhp/model.hpp"
#include "bhp/motion.hpp"

namespace bhp {

struct SpineFission {
  double time = 0.0;
  double position = 0.0;
  int offspring = 0;
  /// 1-based index of the child continuing the spine.
  std::uint32_t chosen_child = 0;
  /// Spine node that fissioned.
  std::size_t node = kNoNode;
};

/// A forest with a distinguished spine, sampled under the size-biased measure.
struct SpineTree {
  Forest forest;
  /// xi_0 = root, xi_1, ... (indices into forest.nodes).
  std::vector<std::size_t> spine_nodes;
  /// Spine motion recorded at dt resolution, fission and observation times.
  PathSegment spine_path;
  /// A^{(Q-1)mu} along spine_path points.
  std::vector<double> potential_clock;
  /// Accelerated clock A^{Q mu} (the Poisson parameter of n_t) along spine_path.
  std::vector<double> spine_clock;
  std::vector<SpineFission> fissions;

  /// n(t): number of spine fissions in [0, t].
  int fission_count(double t) const;
  double spine_position(double t) const;
  /// Spine node alive at t.
  std::size_t node_at(double t) const;
};

/// Samples a spine tree: the spine moves as the h-process, fissions at rate
/// Q beta (point mass: q Q(x0) times local time), has size-biased offspring
/// and picks its successor uniformly; other children start independent
/// P-subtrees.
SpineTree simulate_spine_tree(const ModelSpec& model, const SpectralTriple& spectral, double x,
                              double horizon, RandomStream& rng,
                              const SimulationOptions& options = {});

/// Trapezoid value of int Q(X_s) beta(X_s) ds (plus the local-time part of a
/// point mass) along a recorded path; the conditional Poisson mean of n_t.
double fission_count_given_path(const PathSegment& path, const ModelSpec& model,
                                const SpectralTriple& spectral);

struct WeightLedger {
  double t = 0.0;
  double potential_clock = 0.0;
  double eta = 0.0;
  double eta_tilde = 0.0;
  double z = 0.0;
};

/// eta, eta~ and Z at time t, all divided by h(x) so that they start at 1.
/// Z needs positions at t (observation time or horizon).
WeightLedger ledger_at(const SpineTree& tree, double t, const SpectralTriple& spectral);

/// [e^{l1 t} h(X~_t) + sum_{u < xi_{n_t}} (A_u - 1) e^{l1 zeta_u} h(X~_{zeta_u})] / h(x).
double spine_decomposition(const SpineTree& tree, double t, const SpectralTriple& spectral);

/// Z(t) = e^{lambda1 t} X_t(h) / h(x).
double normalized_martingale(const Forest& forest, double t, const SpectralTriple& spectral);

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t samples = 0;
};

/// Sample mean with standard error sd / sqrt(n).
Estimate summarize(const std::vector<double>& values);

/// E_P[G] estimated as the mean of G / Z(T) over N spine trees.
/// Replica i uses the stream replica_seed(seed, i).
Estimate importance_estimate(const std::function<double(const Forest&)>& functional,
                             const ModelSpec& model, const SpectralTriple& spectral, double x,
                             double horizon, std::size_t replicas, std::uint64_t seed,
                             unsigned workers = 1);

/// Forest records with an extra spine flag column, followed by "#ledger"
/// lines (t, potential_clock, eta, eta_tilde, Z) at the requested times.
void write_spine_records(std::ostream& out, const SpineTree& tree, const SpectralTriple& spectral,
                         const std::vector<double>& ledger_times);

}  // namespace bhp
