#include "bhp/forest.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "bhp/errors.hpp"
#include "bhp/format.hpp"

namespace bhp {

std::string label_string(const UlamLabel& label) {
  if (label.empty()) return "root";
  std::string out;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (i) out += '.';
    out += std::to_string(label[i]);
  }
  return out;
}

const char* cause_name(NodeCause cause) noexcept {
  switch (cause) {
    case NodeCause::fission: return "fission";
    case NodeCause::absorbed: return "absorbed";
    case NodeCause::horizon: return "horizon";
  }
  return "?";
}

UlamLabel Forest::label(std::size_t node) const {
  UlamLabel out;
  for (std::size_t i = node; nodes.at(i).parent != kNoNode; i = nodes[i].parent)
    out.push_back(nodes[i].child_index);
  std::reverse(out.begin(), out.end());
  return out;
}

std::optional<std::size_t> Forest::find(const UlamLabel& label) const {
  if (nodes.empty()) return std::nullopt;
  std::size_t at = 0;
  for (std::uint32_t child : label) {
    const Node& n = nodes[at];
    if (n.cause != NodeCause::fission || child < 1 || child > static_cast<std::uint32_t>(n.offspring))
      return std::nullopt;
    at = n.first_child + child - 1;
  }
  return at;
}

std::optional<double> Forest::observed(std::size_t node, std::size_t k) const {
  const Node& n = nodes.at(node);
  const auto begin = observations.begin() + n.obs_begin;
  const auto end = begin + n.obs_count;
  const auto it = std::lower_bound(begin, end, k, [](const Observation& o, std::size_t key) {
    return o.time_index < key;
  });
  if (it != end && it->time_index == k) return it->position;
  return std::nullopt;
}

ForestBuilder::ForestBuilder(const ModelSpec& model, double x, double horizon, RandomStream& rng,
                             const SimulationOptions& options)
    : rng_(rng),
      cap_(options.population_cap),
      dt_(options.dt.value_or(model.dt)),
      record_paths_(options.record_paths) {
  validate_model(model);
  if (!(horizon > 0.0)) throw PreconditionError("simulation horizon must be positive");
  if (!model.inside(x)) throw PreconditionError("initial position outside the state space");
  if (!(dt_ > 0.0)) throw PreconditionError("dt must be positive");
  if (model.is_ou() && model.ou().dim != 1)
    throw PreconditionError("particle simulation supports one-dimensional OU only");
  forest_.model = model;
  forest_.horizon = horizon;
  forest_.origin = x;
  forest_.seed = rng.seed();
  auto& times = forest_.observation_times;
  times = options.observation_times;
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  for (double t : times) {
    if (!(t >= 0.0 && t <= horizon))
      throw PreconditionError("observation time outside [0, horizon]");
  }
}

void ForestBuilder::check_capacity() const {
  if (forest_.nodes.size() > cap_) {
    std::ostringstream msg;
    msg << "population cap of " << cap_ << " particles exceeded";
    throw CapacityError(msg.str());
  }
}

std::size_t ForestBuilder::open_node(std::size_t parent, std::uint32_t child_index, double birth,
                                     double position) {
  Node n;
  n.parent = parent;
  n.child_index = child_index;
  n.birth = birth;
  n.end = birth;
  n.birth_position = position;
  n.end_position = position;
  forest_.nodes.push_back(n);
  if (record_paths_) {
    forest_.paths.emplace_back();
    forest_.paths.back().push(birth, position);
  }
  check_capacity();
  return forest_.nodes.size() - 1;
}

void ForestBuilder::close_node(std::size_t node, double end, double end_position, NodeCause cause,
                               int offspring, std::size_t first_child) {
  Node& n = forest_.nodes.at(node);
  n.end = end;
  n.end_position = end_position;
  n.cause = cause;
  n.offspring = offspring;
  n.first_child = first_child;
}

void ForestBuilder::observe(std::size_t node, std::size_t k, double position) {
  Node& n = forest_.nodes.at(node);
  if (n.obs_count == 0) n.obs_begin = static_cast<std::uint32_t>(forest_.observations.size());
  forest_.observations.push_back({static_cast<std::uint32_t>(k), position});
  ++n.obs_count;
}

std::size_t ForestBuilder::enqueue(std::size_t parent, std::uint32_t child_index, double birth,
                                   double position) {
  const std::size_t id = open_node(parent, child_index, birth, position);
  queue_.push_back(id);
  return id;
}

PathSegment* ForestBuilder::path(std::size_t node) {
  return record_paths_ ? &forest_.paths.at(node) : nullptr;
}

void ForestBuilder::run() {
  while (head_ < queue_.size()) simulate_particle(queue_[head_++]);
}

Forest ForestBuilder::finish() && {
  run();
  return std::move(forest_);
}

void ForestBuilder::simulate_particle(std::size_t id) {
  const ModelSpec& model = forest_.model;
  const auto& obs = forest_.observation_times;
  const double horizon = forest_.horizon;
  const bool ou = model.is_ou();
  const OuParams ou_params = ou ? OuParams{model.ou().c, model.ou().sigma} : OuParams{};
  const IntervalParams iv_params =
      ou ? IntervalParams{} : IntervalParams{model.interval().length, model.interval().sigma};
  const bool branching = !model.rate.is_zero();
  PathSegment* trail = path(id);

  double t = forest_.nodes[id].birth;
  double x = forest_.nodes[id].birth_position;
  double clock = 0.0;
  const double threshold = branching ? rng_.exponential() : 0.0;

  std::size_t k = static_cast<std::size_t>(std::lower_bound(obs.begin(), obs.end(), t) - obs.begin());
  if (k < obs.size() && obs[k] == t) observe(id, k++, x);
  if (t >= horizon) {
    close_node(id, horizon, x, NodeCause::horizon, 0, kNoNode);
    return;
  }

  for (;;) {
    double target = std::min(t + dt_, horizon);
    if (k < obs.size() && obs[k] < target) target = obs[k];
    const double h = target - t;
    const double y = ou ? ou_step(x, h, ou_params, rng_)
                        : interval_step_with_absorption(x, h, iv_params, rng_);
    if (is_cemetery(y)) {
      if (trail) trail->push(target, kCemetery);
      close_node(id, target, kCemetery, NodeCause::absorbed, 0, kNoNode);
      return;
    }
    if (branching) {
      const double inc = clock_increment(model.rate, x, y, h, model.local_time_window);
      if (clock + inc >= threshold && inc > 0.0) {
        const double f = std::clamp((threshold - clock) / inc, 0.0, 1.0);
        double tau = t + f * h;
        if (!(tau > forest_.nodes[id].birth)) tau = std::nextafter(forest_.nodes[id].birth, horizon);
        double z;
        if (ou) {
          z = ou_bridge(x, y, tau - t, h, ou_params, rng_);
        } else {
          const double mean = x + f * (y - x);
          z = mean + iv_params.sigma * std::sqrt(h * f * (1.0 - f)) * rng_.gaussian();
          if (!model.inside(z)) z = mean;
        }
        const int children = model.offspring.sample(z, rng_);
        if (trail && tau > trail->times.back()) trail->push(tau, z);
        const std::size_t first = forest_.nodes.size();
        close_node(id, tau, z, NodeCause::fission, children, children > 0 ? first : kNoNode);
        for (int c = 1; c <= children; ++c) enqueue(id, static_cast<std::uint32_t>(c), tau, z);
        return;
      }
      clock += inc;
    }
    t = target;
    x = y;
    if (trail) trail->push(t, x);
    if (k < obs.size() && obs[k] == t) observe(id, k++, x);
    if (t >= horizon) {
      close_node(id, horizon, x, NodeCause::horizon, 0, kNoNode);
      return;
    }
  }
}

Forest simulate_forest(const ModelSpec& model, double x, double horizon, RandomStream& rng,
                       const SimulationOptions& options) {
  ForestBuilder builder(model, x, horizon, rng, options);
  builder.enqueue(kNoNode, 0, 0.0, x);
  return std::move(builder).finish();
}

Snapshot snapshot(const Forest& forest, double t) {
  if (!(t >= 0.0 && t <= forest.horizon))
    throw PreconditionError("snapshot time outside [0, horizon]");
  Snapshot snap;
  snap.t = t;
  const auto& obs = forest.observation_times;
  const auto it = std::lower_bound(obs.begin(), obs.end(), t);
  if (it != obs.end() && *it == t) {
    const auto k = static_cast<std::uint32_t>(it - obs.begin());
    for (std::size_t i = 0; i < forest.nodes.size(); ++i) {
      const Node& n = forest.nodes[i];
      if (!n.alive_at(t)) continue;
      for (std::uint32_t j = n.obs_begin; j < n.obs_begin + n.obs_count; ++j) {
        if (forest.observations[j].time_index == k) {
          snap.particles.push_back({i, forest.observations[j].position});
          break;
        }
      }
    }
    return snap;
  }
  if (t == forest.horizon) {
    for (std::size_t i = 0; i < forest.nodes.size(); ++i) {
      const Node& n = forest.nodes[i];
      if (n.cause == NodeCause::horizon) snap.particles.push_back({i, n.end_position});
    }
    return snap;
  }
  if (t == 0.0) {
    if (!forest.nodes.empty() && forest.nodes[0].alive_at(0.0))
      snap.particles.push_back({0, forest.nodes[0].birth_position});
    return snap;
  }
  if (forest.paths.size() == forest.nodes.size()) {
    for (std::size_t i = 0; i < forest.nodes.size(); ++i) {
      const Node& n = forest.nodes[i];
      if (!n.alive_at(t)) continue;
      const double p = forest.paths[i].at(t);
      if (!is_cemetery(p)) snap.particles.push_back({i, p});
    }
    return snap;
  }
  throw PreconditionError("positions at the requested time were not recorded");
}

double weigh(const Snapshot& snap, const std::function<double(double)>& f) {
  double total = 0.0;
  for (const auto& p : snap.particles) {
    if (!is_cemetery(p.position)) total += f(p.position);
  }
  return total;
}

double martingale_value(const Forest& forest, double t, const SpectralTriple& spectral) {
  const Snapshot snap = snapshot(forest, t);
  double total = 0.0;
  for (const auto& p : snap.particles) total += spectral.h(p.position);
  return std::exp(spectral.lambda1 * t) * total;
}

void write_forest_records(std::ostream& out, const Forest& forest) {
  out << "label\tbirth\tend\toffspring\tcause\tbirth_position\tend_position\n";
  for (std::size_t i = 0; i < forest.nodes.size(); ++i) {
    const Node& n = forest.nodes[i];
    out << label_string(forest.label(i)) << '\t' << format_real(n.birth) << '\t'
        << format_real(n.end) << '\t' << n.offspring << '\t' << cause_name(n.cause) << '\t'
        << format_real(n.birth_position) << '\t' << format_real(n.end_position) << '\n';
  }
}

}  // namespace bhp
