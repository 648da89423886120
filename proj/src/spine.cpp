#include "bhp/spine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "bhp/errors.hpp"
#include "bhp/format.hpp"
#include "bhp/parallel.hpp"
#include "bhp/spectral.hpp"

namespace bhp {
namespace {

// Spine motion: exact for the closed-form OU h-process, Euler otherwise.
class SpineMotion {
 public:
  SpineMotion(const ModelSpec& model, const SpectralTriple& spectral)
      : model_(model), spectral_(spectral) {
    if (const auto* ou = std::get_if<OuSpectralForm>(&spectral.source);
        ou && model.is_ou() && model.ou().sigma == 1.0) {
      kind_ = Kind::ou_exact;
      alpha_ = ou->alpha;
    } else if (std::holds_alternative<SineSpectralForm>(spectral.source) && model.is_interval()) {
      kind_ = Kind::sine;
    } else {
      kind_ = Kind::euler;
    }
  }

  double step(double x, double h, RandomStream& rng) const {
    switch (kind_) {
      case Kind::ou_exact: return ou_h_step(x, h, alpha_, rng);
      case Kind::sine:
        return interval_h_step(x, h, {model_.interval().length, model_.interval().sigma}, rng);
      case Kind::euler: return euler(x, h, rng);
    }
    return x;
  }

  double bridge(double x, double y, double s, double h, RandomStream& rng) const {
    if (kind_ == Kind::ou_exact) return ou_bridge(x, y, s, h, OuParams{alpha_, 1.0}, rng);
    const double f = s / h;
    const double mean = x + f * (y - x);
    const double z = mean + model_.sigma() * std::sqrt(h * f * (1.0 - f)) * rng.gaussian();
    return model_.inside(z) ? z : mean;
  }

 private:
  enum class Kind { ou_exact, sine, euler };

  double drift(double x) const {
    const double s2 = model_.sigma() * model_.sigma();
    double slope;
    if (const GridSpectrum* g = spectral_.grid()) {
      slope = g->log_h_slope(x);
    } else {
      const double eps = 1e-6;
      slope = (std::log(spectral_.h(x + eps)) - std::log(spectral_.h(x - eps))) / (2 * eps);
    }
    const double base = model_.is_ou() ? -model_.ou().c * x : 0.0;
    return base + s2 * slope;
  }

  double euler(double x, double dt, RandomStream& rng) const {
    double remaining = dt;
    const double sigma = model_.sigma();
    while (remaining > 0.0) {
      double near = 1.0;
      if (model_.is_interval()) near = std::min(x, model_.interval().length - x);
      const double sub = near < 0.2 ? std::min(remaining, 1e-4) : remaining;
      const double d = drift(x);
      double y = x;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        const double proposal = x + d * sub + sigma * std::sqrt(sub) * rng.gaussian();
        if (model_.inside(proposal)) {
          y = proposal;
          break;
        }
      }
      x = y;
      remaining -= sub;
      if (remaining < 1e-15 * dt) break;
    }
    return x;
  }

  const ModelSpec& model_;
  const SpectralTriple& spectral_;
  Kind kind_;
  double alpha_ = 1.0;
};

std::size_t path_index_at_or_before(const PathSegment& path, double t) {
  const auto it = std::upper_bound(path.times.begin(), path.times.end(), t);
  if (it == path.times.begin()) throw PreconditionError("time before the spine path");
  return static_cast<std::size_t>(it - path.times.begin()) - 1;
}

double interpolate(const PathSegment& path, const std::vector<double>& values, double t) {
  const std::size_t i = path_index_at_or_before(path, t);
  if (path.times[i] == t || i + 1 >= path.size()) return values[i];
  const double f = (t - path.times[i]) / (path.times[i + 1] - path.times[i]);
  return values[i] + f * (values[i + 1] - values[i]);
}

}  // namespace

int SpineTree::fission_count(double t) const {
  return static_cast<int>(std::count_if(fissions.begin(), fissions.end(),
                                        [t](const SpineFission& f) { return f.time <= t; }));
}

double SpineTree::spine_position(double t) const { return spine_path.at(t); }

std::size_t SpineTree::node_at(double t) const {
  return spine_nodes.at(static_cast<std::size_t>(fission_count(t)));
}

SpineTree simulate_spine_tree(const ModelSpec& model, const SpectralTriple& spectral, double x,
                              double horizon, RandomStream& rng,
                              const SimulationOptions& options) {
  ForestBuilder builder(model, x, horizon, rng, options);
  const SpineMotion motion(model, spectral);
  const auto& obs = builder.observation_times();
  const double dt = builder.dt();
  const bool branching = !model.rate.is_zero();

  SpineTree tree;
  std::size_t current = builder.open_node(kNoNode, 0, 0.0, x);
  tree.spine_nodes.push_back(current);
  tree.spine_path.push(0.0, x);
  tree.potential_clock.push_back(0.0);
  tree.spine_clock.push_back(0.0);

  double t = 0.0;
  double clock = 0.0;      // spine clock since the last spine fission
  double total = 0.0;      // spine clock since time 0
  double potential = 0.0;  // A^{(Q-1)mu}
  double threshold = branching ? rng.exponential() : 0.0;

  std::size_t k = 0;
  if (k < obs.size() && obs[k] == 0.0) builder.observe(current, k++, x);

  auto record = [&](double time, double pos) {
    tree.spine_path.push(time, pos);
    tree.potential_clock.push_back(potential);
    tree.spine_clock.push_back(total);
    if (PathSegment* p = builder.path(current)) p->push(time, pos);
  };

  while (t < horizon) {
    double target = std::min(t + dt, horizon);
    if (k < obs.size() && obs[k] < target && obs[k] > t) target = obs[k];
    const double h = target - t;
    const double y = motion.step(x, h, rng);
    const double inc = branching
        ? clock_increment(model.rate, x, y, h, model.local_time_window, &model.offspring, 0.0)
        : 0.0;
    const double pot_inc = branching
        ? clock_increment(model.rate, x, y, h, model.local_time_window, &model.offspring, 1.0)
        : 0.0;
    if (branching && inc > 0.0 && clock + inc >= threshold) {
      const double f = std::clamp((threshold - clock) / inc, 0.0, 1.0);
      double tau = t + f * h;
      if (!(tau > t)) tau = std::nextafter(t, horizon);
      const double z = motion.bridge(x, y, tau - t, h, rng);
      total += f * inc;
      potential += f * pot_inc;
      const OffspringLaw biased = size_biased(model.offspring, z);
      const int children = biased.sample(z, rng);
      const auto chosen = static_cast<std::uint32_t>(1 + rng.below(static_cast<std::uint64_t>(children)));
      record(tau, z);
      tree.fissions.push_back({tau, z, children, chosen, current});
      // Children are contiguous: the spine child is opened in place, the
      // others are queued as independent P-subtrees.
      std::size_t first = kNoNode;
      std::size_t next_spine = kNoNode;
      for (int c = 1; c <= children; ++c) {
        const auto idx = static_cast<std::uint32_t>(c);
        const std::size_t id = (idx == chosen) ? builder.open_node(current, idx, tau, z)
                                               : builder.enqueue(current, idx, tau, z);
        if (c == 1) first = id;
        if (idx == chosen) next_spine = id;
      }
      builder.close_node(current, tau, z, NodeCause::fission, children, first);
      current = next_spine;
      tree.spine_nodes.push_back(current);
      t = tau;
      x = z;
      clock = 0.0;
      threshold = rng.exponential();
      continue;
    }
    clock += inc;
    total += inc;
    potential += pot_inc;
    t = target;
    x = y;
    record(t, x);
    if (k < obs.size() && obs[k] == t) builder.observe(current, k++, x);
  }
  builder.close_node(current, horizon, x, NodeCause::horizon, 0, kNoNode);
  tree.forest = std::move(builder).finish();
  return tree;
}

double fission_count_given_path(const PathSegment& path, const ModelSpec& model,
                                const SpectralTriple& /*spectral*/) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    const double a = path.positions[i];
    const double b = path.positions[i + 1];
    if (is_cemetery(a) || is_cemetery(b)) break;
    total += clock_increment(model.rate, a, b, path.times[i + 1] - path.times[i],
                             model.local_time_window, &model.offspring, 0.0);
  }
  return total;
}

double normalized_martingale(const Forest& forest, double t, const SpectralTriple& spectral) {
  return martingale_value(forest, t, spectral) / spectral.h(forest.origin);
}

WeightLedger ledger_at(const SpineTree& tree, double t, const SpectralTriple& spectral) {
  WeightLedger w;
  w.t = t;
  const double hx = spectral.h(tree.forest.origin);
  const double ratio = spectral.h(tree.spine_position(t)) / hx;
  w.potential_clock = interpolate(tree.spine_path, tree.potential_clock, t);
  w.eta = std::exp(spectral.lambda1 * t + w.potential_clock) * ratio;
  double product = 1.0;
  for (const auto& f : tree.fissions) {
    if (f.time <= t) product *= f.offspring;
  }
  w.eta_tilde = std::exp(spectral.lambda1 * t) * ratio * product;
  w.z = normalized_martingale(tree.forest, t, spectral);
  return w;
}

double spine_decomposition(const SpineTree& tree, double t, const SpectralTriple& spectral) {
  if (!(t >= 0.0 && t <= tree.forest.horizon))
    throw PreconditionError("spine_decomposition: t outside [0, horizon]");
  double value = std::exp(spectral.lambda1 * t) * spectral.h(tree.spine_position(t));
  for (const auto& f : tree.fissions) {
    if (f.time > t) break;
    value += (f.offspring - 1) * std::exp(spectral.lambda1 * f.time) * spectral.h(f.position);
  }
  return value / spectral.h(tree.forest.origin);
}

Estimate summarize(const std::vector<double>& values) {
  Estimate e;
  e.samples = values.size();
  if (values.empty()) return e;
  const double n = static_cast<double>(values.size());
  e.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - e.mean) * (v - e.mean);
    e.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return e;
}

Estimate importance_estimate(const std::function<double(const Forest&)>& functional,
                             const ModelSpec& model, const SpectralTriple& spectral, double x,
                             double horizon, std::size_t replicas, std::uint64_t seed,
                             unsigned workers) {
  const auto values = parallel_replicas(replicas, workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(seed, i));
    const SpineTree tree = simulate_spine_tree(model, spectral, x, horizon, rng);
    const double z = normalized_martingale(tree.forest, horizon, spectral);
    return functional(tree.forest) / z;
  });
  return summarize(values);
}

void write_spine_records(std::ostream& out, const SpineTree& tree, const SpectralTriple& spectral,
                         const std::vector<double>& ledger_times) {
  std::vector<char> on_spine(tree.forest.size(), 0);
  for (std::size_t id : tree.spine_nodes) on_spine[id] = 1;
  out << "label\tbirth\tend\toffspring\tcause\tbirth_position\tend_position\tspine\n";
  for (std::size_t i = 0; i < tree.forest.size(); ++i) {
    const Node& n = tree.forest.nodes[i];
    out << label_string(tree.forest.label(i)) << '\t' << format_real(n.birth) << '\t'
        << format_real(n.end) << '\t' << n.offspring << '\t' << cause_name(n.cause) << '\t'
        << format_real(n.birth_position) << '\t' << format_real(n.end_position) << '\t'
        << int(on_spine[i]) << '\n';
  }
  for (double t : ledger_times) {
    const WeightLedger w = ledger_at(tree, t, spectral);
    out << "#ledger\t" << format_real(w.t) << '\t' << format_real(w.potential_clock) << '\t'
        << format_real(w.eta) << '\t' << format_real(w.eta_tilde) << '\t' << format_real(w.z)
        << '\n';
  }
}

}  // namespace bhp
