#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bhp/model.hpp"
#include "bhp/motion.hpp"
#include "bhp/rng.hpp"

namespace bhp {

/// Ulam-Harris label: child indices (1-based) from the root, which is empty.
using UlamLabel = std::vector<std::uint32_t>;

/// "root" for the empty label, otherwise dotted child indices ("1.2.1").
std::string label_string(const UlamLabel& label);

enum class NodeCause { fission, absorbed, horizon };

const char* cause_name(NodeCause cause) noexcept;

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

/// One particle. Children are stored contiguously starting at first_child.
struct Node {
  std::size_t parent = kNoNode;
  std::uint32_t child_index = 0;
  double birth = 0.0;
  double end = 0.0;
  double birth_position = 0.0;
  /// Position at end- (the fission site), or the cemetery when absorbed.
  double end_position = 0.0;
  int offspring = 0;
  NodeCause cause = NodeCause::horizon;
  std::size_t first_child = kNoNode;
  std::uint32_t obs_begin = 0;
  std::uint32_t obs_count = 0;

  /// Alive at t: birth <= t < end, or t == end for particles cut at the horizon.
  bool alive_at(double t) const noexcept {
    return birth <= t && (t < end || (cause == NodeCause::horizon && t == end));
  }
};

struct Observation {
  std::uint32_t time_index = 0;
  double position = 0.0;
};

struct SimulationOptions {
  /// Times at which particle positions are recorded (sorted internally).
  std::vector<double> observation_times;
  bool record_paths = false;
  std::size_t population_cap = 1'000'000;
  /// Overrides ModelSpec::dt when set.
  std::optional<double> dt;
};

/// Ulam-Harris labelled tree of particles on [0, horizon]. Immutable after
/// construction; nodes are in breadth-first creation order.
struct Forest {
  std::vector<Node> nodes;
  std::vector<Observation> observations;
  std::vector<double> observation_times;
  /// Per-node paths, only when SimulationOptions::record_paths was set.
  std::vector<PathSegment> paths;
  double horizon = 0.0;
  double origin = 0.0;
  std::uint64_t seed = 0;
  ModelSpec model;

  std::size_t size() const noexcept { return nodes.size(); }
  UlamLabel label(std::size_t node) const;
  std::optional<std::size_t> find(const UlamLabel& label) const;
  /// Recorded position of `node` at observation index k, if alive then.
  std::optional<double> observed(std::size_t node, std::size_t k) const;
};

struct SnapshotEntry {
  std::size_t node = kNoNode;
  double position = 0.0;
};

/// Point measure X_t: particles alive at time t with their positions.
struct Snapshot {
  double t = 0.0;
  std::vector<SnapshotEntry> particles;

  std::size_t size() const noexcept { return particles.size(); }
};

/// Forward simulation under P_x: every particle fissions when its branching
/// clock A^mu reaches an independent Exp(1) threshold.
Forest simulate_forest(const ModelSpec& model, double x, double horizon, RandomStream& rng,
                       const SimulationOptions& options = {});

/// Requires positions at t: t = 0, t = horizon, an observation time, or
/// recorded paths (linear interpolation between path points).
Snapshot snapshot(const Forest& forest, double t);

/// X_t(f) = sum over particles of f(position); f(cemetery) = 0.
double weigh(const Snapshot& snap, const std::function<double(double)>& f);

/// M_t = e^{lambda1 t} X_t(h).
double martingale_value(const Forest& forest, double t, const SpectralTriple& spectral);

/// One tab-separated record per node:
/// label, birth, end, offspring, cause, birth_position, end_position.
void write_forest_records(std::ostream& out, const Forest& forest);

/// Builds forests incrementally; used by simulate_forest and the spine sampler.
class ForestBuilder {
 public:
  ForestBuilder(const ModelSpec& model, double x, double horizon, RandomStream& rng,
                const SimulationOptions& options);

  /// Adds a node without simulating it.
  std::size_t open_node(std::size_t parent, std::uint32_t child_index, double birth,
                        double position);
  void close_node(std::size_t node, double end, double end_position, NodeCause cause,
                  int offspring, std::size_t first_child);
  /// Records the position of `node` at observation index k. Observations of
  /// one node must be recorded consecutively.
  void observe(std::size_t node, std::size_t k, double position);
  /// Adds a node to be simulated under P by run().
  std::size_t enqueue(std::size_t parent, std::uint32_t child_index, double birth,
                      double position);
  /// Simulates queued particles (and their descendants) breadth first.
  void run();
  Forest finish() &&;

  const std::vector<double>& observation_times() const noexcept {
    return forest_.observation_times;
  }
  double dt() const noexcept { return dt_; }
  RandomStream& rng() noexcept { return rng_; }
  PathSegment* path(std::size_t node);

 private:
  void simulate_particle(std::size_t node);
  void check_capacity() const;

  Forest forest_;
  RandomStream& rng_;
  std::size_t cap_;
  double dt_;
  bool record_paths_;
  std::vector<std::size_t> queue_;
  std::size_t head_ = 0;
};

}  // namespace bhp
