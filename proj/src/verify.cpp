#include "bhp/verify.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "bhp/errors.hpp"
#include "bhp/forest.hpp"
#include "bhp/format.hpp"
#include "bhp/json_io.hpp"
#include "bhp/parallel.hpp"
#include "bhp/rng.hpp"
#include "bhp/spine.hpp"

namespace bhp {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Independent base seed for a second family of replicas in one experiment.
std::uint64_t sibling_seed(std::uint64_t seed, std::uint64_t tag) {
  return splitmix64(seed ^ splitmix64(0xb5ad4eceda1ce2a9ULL + tag));
}

double floor_tolerance(double tol, std::optional<double> oracle) {
  return std::max(tol, 1e-12 * std::max(1.0, std::abs(oracle.value_or(0.0))));
}

Comparison against(std::string label, std::optional<double> t, const Estimate& e, double oracle,
                   std::string provenance, double z) {
  Comparison c;
  c.label = std::move(label);
  c.t = t;
  c.estimate = e.mean;
  c.stderr_ = e.stderr_;
  c.oracle = oracle;
  c.provenance = std::move(provenance);
  c.tolerance = floor_tolerance(z * e.stderr_, oracle);
  c.deviation = std::abs(e.mean - oracle);
  c.verdict = c.deviation <= c.tolerance ? Verdict::pass : Verdict::fail;
  return c;
}

Comparison info(std::string label, std::optional<double> t, double estimate,
                double stderr_ = 0.0) {
  Comparison c;
  c.label = std::move(label);
  c.t = t;
  c.estimate = estimate;
  c.stderr_ = stderr_;
  return c;
}

SimulationOptions options_for(const ExperimentSettings& s, std::vector<double> times) {
  SimulationOptions o;
  o.observation_times = std::move(times);
  o.dt = s.dt;
  o.population_cap = s.population_cap;
  return o;
}

double resolved_t_max(const ExperimentSettings& s, const SpectralTriple& spectral) {
  return s.t_max > 0.0 ? s.t_max : 10.0 / std::abs(spectral.lambda1);
}

std::pair<double, double> domain_of(const ModelSpec& model, const SpectralTriple& spectral) {
  if (model.is_interval()) return {0.0, model.interval().length};
  double r = 12.0;
  if (const auto* ou = std::get_if<OuSpectralForm>(&spectral.source))
    r = 12.0 / std::sqrt(ou->alpha);
  else if (const GridSpectrum* g = spectral.grid())
    r = g->grid.hi;
  return {-r, r};
}

std::string model_label(const ModelSpec& model) {
  return model.id.empty() ? (model.is_ou() ? "ou" : "interval") : model.id;
}

}  // namespace

const char* verdict_name(Verdict v) noexcept {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::hypothesis_not_met: return "hypothesis-not-met";
    case Verdict::info: return "info";
  }
  return "info";
}

Comparison& ExperimentReport::add(Comparison c) {
  if (c.verdict == Verdict::fail) verdict = Verdict::fail;
  comparisons.push_back(std::move(c));
  return comparisons.back();
}

void ExperimentReport::out_of_scope(std::string reason) {
  if (verdict != Verdict::fail) verdict = Verdict::hypothesis_not_met;
  notes.push_back(std::move(reason));
}

std::function<double(double)> TestFunction::bind(const SpectralTriple& spectral) const {
  switch (kind) {
    case Kind::one:
      return [](double x) { return is_cemetery(x) ? 0.0 : 1.0; };
    case Kind::h:
      return [&spectral](double x) { return is_cemetery(x) ? 0.0 : spectral.h(x); };
    case Kind::h_indicator: {
      const double a = lo, b = hi;
      return [&spectral, a, b](double x) {
        return (!is_cemetery(x) && x >= a && x <= b) ? spectral.h(x) : 0.0;
      };
    }
  }
  return {};
}

std::string TestFunction::describe() const {
  switch (kind) {
    case Kind::one: return "1";
    case Kind::h: return "h";
    case Kind::h_indicator: return "h*1[" + format_real(lo) + "," + format_real(hi) + "]";
  }
  return "";
}

std::optional<double> domination_constant(const std::function<double(double)>& f,
                                          const ModelSpec& model,
                                          const SpectralTriple& spectral) {
  const auto [lo, hi] = domain_of(model, spectral);
  std::vector<double> sups;
  if (model.is_interval()) {
    for (int k = 4; k <= 14; ++k) {
      const int n = 1 << k;
      double sup = 0.0;
      for (int i = 1; i < n; ++i) {
        const double x = lo + (hi - lo) * i / n;
        sup = std::max(sup, f(x) / spectral.h(x));
      }
      sups.push_back(sup);
    }
  } else {
    for (int k = 1; k <= 6; ++k) {
      const double r = hi * k / 6.0;
      double sup = 0.0;
      for (int i = 0; i <= 2000; ++i) {
        const double x = -r + r * i / 1000.0;
        const double hx = spectral.h(x);
        if (hx > 0.0) sup = std::max(sup, f(x) / hx);
      }
      sups.push_back(sup);
    }
  }
  const double last = sups.back(), previous = sups[sups.size() - 2];
  if (!std::isfinite(last) || last > 1.5 * previous) return std::nullopt;
  return last;
}

ExperimentReport spectral_report(const ModelSpec& model, const SpectralTriple& spectral,
                                 const std::optional<SpectralTriple>& grid,
                                 const ExperimentSettings& settings) {
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "spectral";
  r.model_id = model_label(model);
  r.seed = settings.seed;
  const bool bounded = model.is_interval();

  r.add(info("lambda1", std::nullopt, spectral.lambda1));
  r.add(info("lambda2", std::nullopt, spectral.lambda2));
  r.add(info("gap", std::nullopt, spectral.gap));
  r.add(info("h_norm_check", std::nullopt, spectral.h_norm_check));
  if (!(spectral.lambda1 < 0.0)) r.notes.push_back("lambda1 >= 0: subcritical model");

  if (grid && spectral.closed_form()) {
    const GridSpectrum& g = *grid->grid();
    r.sample_sizes.emplace_back("grid_nodes", g.grid.size());
    auto compare = [&](std::string label, double estimate, double oracle, double tol) {
      Comparison c;
      c.label = std::move(label);
      c.estimate = estimate;
      c.oracle = oracle;
      c.provenance = "DERIVED";
      c.tolerance = tol;
      c.deviation = std::abs(estimate - oracle);
      c.verdict = c.deviation <= tol ? Verdict::pass : Verdict::fail;
      r.add(std::move(c));
    };
    compare("grid lambda1", grid->lambda1, spectral.lambda1, bounded ? 2e-3 : 1e-2);
    compare("grid lambda2", grid->lambda2, spectral.lambda2, bounded ? 5e-3 : 1e-2);
    compare("grid gap", grid->gap, spectral.gap, bounded ? 5e-3 : 1e-2);
    // h: sup-norm on interior nodes (bounded) or relative error on [-3, 3].
    double worst = 0.0;
    for (std::size_t i = 0; i < g.grid.size(); ++i) {
      const double x = g.grid.nodes[i];
      const double exact = spectral.h(x);
      const double approx = g.modes[0].vector[i];
      if (bounded)
        worst = std::max(worst, std::abs(approx - exact));
      else if (std::abs(x) <= 3.0)
        worst = std::max(worst, std::abs(approx - exact) / exact);
    }
    compare(bounded ? "grid h sup error" : "grid h relative error on [-3,3]", worst, 0.0,
            bounded ? 1e-3 : 1e-2);
  }

  const auto w = check_condition_W(spectral, settings.t0);
  {
    Comparison c = info("condition W trace", settings.t0, w.value);
    if (w.reference) {
      c.oracle = *w.reference;
      c.provenance = "DERIVED";
      c.deviation = std::abs(w.value - *w.reference);
      c.tolerance = 1e-6 * std::max(1.0, std::abs(*w.reference));
      c.verdict = c.deviation <= c.tolerance ? Verdict::pass : Verdict::fail;
    }
    r.add(std::move(c));
    r.notes.push_back("condition W: " + w.diagnostic);
  }
  const auto aiu = check_condition_AIU(spectral, settings.t1);
  r.add(info("AIU sup a~_t1", settings.t1, aiu.sups.back()));
  r.notes.push_back("condition AIU: " + aiu.verdict);
  if (aiu.holds.value_or(false)) {
    Comparison c = info("exponential bound worst ratio", settings.t1, aiu.worst_bound_ratio);
    c.tolerance = 1.0;
    c.deviation = aiu.worst_bound_ratio;
    c.verdict = aiu.bound_passed ? Verdict::pass : Verdict::fail;
    r.add(std::move(c));
  }
  const auto poincare = check_poincare(spectral);
  {
    double worst = 0.0;
    for (const auto& pc : poincare.cases)
      if (pc.rhs > 0.0) worst = std::max(worst, pc.lhs / pc.rhs);
    Comparison c = info("Poincare worst ratio", std::nullopt, worst);
    c.tolerance = 1.0;
    c.deviation = worst;
    c.verdict = poincare.passed ? Verdict::pass : Verdict::fail;
    r.add(std::move(c));
  }
  const auto llogl = llogl_value(model, spectral);
  r.add(info("LlogL integral", std::nullopt, llogl.value));
  r.notes.push_back("LlogL: " + llogl.diagnostic);
  r.wall_seconds = seconds_since(start);
  return r;
}

ExperimentReport martingale_and_llogl_experiment(const ModelSpec& model,
                                                 const SpectralTriple& spectral,
                                                 const ExperimentSettings& s) {
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "martingale";
  r.model_id = model_label(model);
  r.seed = s.seed;
  r.sample_sizes.emplace_back("forests", s.replicas);
  if (s.t_grid.empty()) throw PreconditionError("martingale experiment needs a t grid");

  if (model.rate.is_zero()) r.out_of_scope("no branching: the model lies outside the theorem's scope");
  if (!(spectral.lambda1 < 0.0)) r.out_of_scope("lambda1 >= 0: the model is not supercritical");
  const auto llogl = llogl_value(model, spectral);
  r.add(info("LlogL integral", std::nullopt, llogl.value));
  if (!llogl.finite.value_or(false))
    r.out_of_scope("LlogL integral not shown finite (" + llogl.diagnostic + ")");

  std::vector<double> times = s.t_grid;
  std::sort(times.begin(), times.end());
  const double horizon = times.back();
  const auto opts = options_for(s, times);
  auto samples = parallel_replicas(s.replicas, s.workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(s.seed, i));
    const Forest forest = simulate_forest(model, s.x, horizon, rng, opts);
    std::vector<double> m;
    for (double t : times) m.push_back(martingale_value(forest, t, spectral));
    return m;
  });

  const double target = spectral.h(s.x);
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> v(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) v[i] = samples[i][k];
    r.add(against("mean M_t", times[k], summarize(v), target, "DERIVED", s.z));
  }
  std::vector<double> above(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    above[i] = samples[i].back() > s.delta ? 1.0 : 0.0;
  const Estimate p = summarize(above);
  Comparison c = info("P(M_T > delta)", horizon, p.mean, p.stderr_);
  c.tolerance = s.z * p.stderr_;
  c.deviation = p.mean;
  c.verdict = p.mean - s.z * p.stderr_ > 0.0 ? Verdict::pass : Verdict::fail;
  r.add(std::move(c));
  r.wall_seconds = seconds_since(start);
  return r;
}

ExperimentReport wlln_experiment(const ModelSpec& model, const SpectralTriple& spectral,
                                 const ExperimentSettings& s) {
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "wlln";
  r.model_id = model_label(model);
  r.seed = s.seed;
  if (s.t_grid.size() < 2) throw PreconditionError("wlln experiment needs at least two times");

  const auto f = s.f.bind(spectral);
  const auto c = domination_constant(f, model, spectral);
  if (!c) throw PreconditionError("f = " + s.f.describe() + " is not bounded by c h");
  r.add(info("domination constant c", std::nullopt, *c));

  const auto w = check_condition_W(spectral, s.t0);
  r.add(info("condition W trace", s.t0, w.value));
  if (!w.finite.value_or(false)) {
    r.out_of_scope("condition W not established: " + w.diagnostic);
    r.wall_seconds = seconds_since(start);
    return r;
  }

  std::vector<double> grid = s.t_grid;
  std::sort(grid.begin(), grid.end());
  const double t_max = resolved_t_max(s, spectral);
  if (t_max < grid.back()) throw PreconditionError("t_max must not precede the t grid");
  std::vector<double> times = grid;
  if (t_max > grid.back()) times.push_back(t_max);
  r.sample_sizes.emplace_back("forests", s.replicas);
  r.notes.push_back("M_infinity proxied by M at t_max = " + format_real(t_max));

  const auto h = [&spectral](double x) { return is_cemetery(x) ? 0.0 : spectral.h(x); };
  const double fh = inner_product_m(f, h, model, spectral);
  r.add(info("<f,h>", std::nullopt, fh));
  std::vector<double> expected(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k)
    expected[k] = many_to_one_quadrature(f, grid[k], s.x, model, spectral);
  const double hx = spectral.h(s.x);

  const auto opts = options_for(s, times);
  // Per replica: |W_t - M fh| for each t, then the ratio deviation for each t.
  auto samples = parallel_replicas(s.replicas, s.workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(s.seed, i));
    const Forest forest = simulate_forest(model, s.x, t_max, rng, opts);
    const double m = martingale_value(forest, t_max, spectral);
    std::vector<double> out(2 * grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const double xf = weigh(snapshot(forest, grid[k]), f);
      out[k] = std::abs(std::exp(spectral.lambda1 * grid[k]) * xf - m * fh);
      out[grid.size() + k] = std::abs(xf / expected[k] - m / hx);
    }
    return out;
  });

  std::vector<double> d(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    std::vector<double> v(samples.size()), q(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      v[i] = samples[i][k];
      q[i] = samples[i][grid.size() + k];
    }
    const Estimate e = summarize(v);
    d[k] = e.mean;
    r.add(info("D(t)", grid[k], e.mean, e.stderr_));
    const Estimate eq = summarize(q);
    r.add(info("ratio deviation |X_t(f)/E X_t(f) - M/h(x)|", grid[k], eq.mean, eq.stderr_));
  }
  bool decreasing = true;
  for (std::size_t k = grid.size() / 2; k + 1 < grid.size(); ++k)
    if (!(d[k + 1] < d[k])) decreasing = false;
  const double ratio = d.back() / d.front();
  Comparison verdict = info("D(t_max)/D(t_min)", grid.back(), ratio);
  verdict.tolerance = 0.5;
  verdict.deviation = ratio;
  verdict.verdict = (decreasing && ratio < 0.5) ? Verdict::pass : Verdict::fail;
  r.add(std::move(verdict));
  if (!decreasing) r.notes.push_back("D(t) is not decreasing across the upper half of the t grid");
  r.wall_seconds = seconds_since(start);
  return r;
}

ExperimentReport slln_experiment(const ModelSpec& model, const SpectralTriple& spectral,
                                 const ExperimentSettings& s) {
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "slln";
  r.model_id = model_label(model);
  r.seed = s.seed;
  const auto aiu = check_condition_AIU(spectral, s.t1);
  r.add(info("AIU sup a~_t1", s.t1, aiu.sups.back()));
  if (!aiu.holds.value_or(false)) {
    r.out_of_scope("hypothesis not met: check_condition_AIU reports '" + aiu.verdict + "'");
    r.wall_seconds = seconds_since(start);
    return r;
  }
  if (s.n_max < 4) throw PreconditionError("slln experiment needs n_max >= 4");

  const auto f = s.f.bind(spectral);
  const auto h = [&spectral](double x) { return is_cemetery(x) ? 0.0 : spectral.h(x); };
  const double fh = inner_product_m(f, h, model, spectral);
  r.add(info("<f,h>", std::nullopt, fh));

  const double sigma = s.lattice_spacing;
  const int first = (3 * s.n_max + 3) / 4;  // last quarter of the lattice
  std::vector<double> times;
  for (int n = 1; n <= s.n_max; ++n) times.push_back(n * sigma);
  const std::vector<double> off = {sigma * (0.75 * s.n_max + 0.3), sigma * (0.875 * s.n_max + 0.45),
                                   sigma * (s.n_max - 0.4)};
  times.insert(times.end(), off.begin(), off.end());
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  const double horizon = s.n_max * sigma;
  const auto opts = options_for(s, sorted);
  r.sample_sizes.emplace_back("paths", s.replicas);

  // Per path: max deviation on lattice, max deviation off lattice (NaN if extinct).
  auto samples = parallel_replicas(s.replicas, s.workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(s.seed, i));
    const Forest forest = simulate_forest(model, s.x, horizon, rng, opts);
    auto ratio = [&](double t) {
      const Snapshot snap = snapshot(forest, t);
      const double xh = weigh(snap, h);
      return xh > 0.0 ? weigh(snap, f) / (xh * fh) : std::numeric_limits<double>::quiet_NaN();
    };
    if (!(weigh(snapshot(forest, horizon), h) > 0.0))
      return std::array<double, 2>{kCemetery, kCemetery};
    double lattice = 0.0, spot = 0.0;
    for (int n = first; n <= s.n_max; ++n) lattice = std::max(lattice, std::abs(ratio(n * sigma) - 1.0));
    for (double t : off) spot = std::max(spot, std::abs(ratio(t) - 1.0));
    return std::array<double, 2>{lattice, spot};
  });

  std::size_t surviving = 0, good = 0, good_spot = 0;
  std::vector<double> devs;
  for (const auto& v : samples) {
    if (is_cemetery(v[0])) continue;
    ++surviving;
    devs.push_back(v[0]);
    if (v[0] < s.slln_band) ++good;
    if (v[1] < s.slln_band) ++good_spot;
  }
  r.add(info("surviving paths", horizon, static_cast<double>(surviving)));
  if (surviving == 0) {
    Comparison c = info("fraction within band", horizon, 0.0);
    c.tolerance = s.slln_fraction;
    c.verdict = Verdict::fail;
    r.add(std::move(c));
    r.notes.push_back("no surviving paths");
    r.wall_seconds = seconds_since(start);
    return r;
  }
  std::sort(devs.begin(), devs.end());
  r.add(info("median max |r_n - 1| (last quarter)", horizon, devs[devs.size() / 2]));
  r.add(info("90th percentile max |r_n - 1| (last quarter)", horizon,
             devs[std::min(devs.size() - 1, static_cast<std::size_t>(0.9 * devs.size()))]));
  const double fraction = static_cast<double>(good) / static_cast<double>(surviving);
  Comparison c = info("fraction of surviving paths with max |r_n - 1| < band", horizon, fraction);
  c.tolerance = s.slln_fraction;
  c.deviation = fraction;
  c.verdict = fraction >= s.slln_fraction ? Verdict::pass : Verdict::fail;
  r.add(std::move(c));
  r.add(info("off-lattice fraction within band", horizon,
             static_cast<double>(good_spot) / static_cast<double>(surviving)));
  r.wall_seconds = seconds_since(start);
  return r;
}

ExperimentReport spine_consistency_experiment(const ModelSpec& model,
                                              const SpectralTriple& spectral,
                                              const ExperimentSettings& s) {
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "spine-consistency";
  r.model_id = model_label(model);
  r.seed = s.seed;
  const double T = s.horizon;
  const auto f = s.f.bind(spectral);
  const auto opts = options_for(s, {T});
  r.sample_sizes.emplace_back("spine trees", s.replicas);
  r.sample_sizes.emplace_back("forests", s.replicas);

  struct SpineSample {
    double weighted = 0.0;
    double count = 0.0;
    double mean = 0.0;
  };
  auto spine = parallel_replicas(s.replicas, s.workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(s.seed, i));
    const SpineTree tree = simulate_spine_tree(model, spectral, s.x, T, rng, opts);
    SpineSample out;
    out.weighted = weigh(snapshot(tree.forest, T), f) / ledger_at(tree, T, spectral).z;
    out.count = tree.fission_count(T);
    out.mean = fission_count_given_path(tree.spine_path, model, spectral);
    return out;
  });
  const std::uint64_t plain_seed = sibling_seed(s.seed, 1);
  auto plain = parallel_replicas(s.replicas, s.workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(plain_seed, i));
    const Forest forest = simulate_forest(model, s.x, T, rng, opts);
    return weigh(snapshot(forest, T), f);
  });

  std::vector<double> weighted, diff, disp, counts, means;
  for (const auto& v : spine) {
    weighted.push_back(v.weighted);
    counts.push_back(v.count);
    means.push_back(v.mean);
    diff.push_back(v.count - v.mean);
    disp.push_back((v.count - v.mean) * (v.count - v.mean) - v.count);
  }
  const Estimate is = summarize(weighted);
  const Estimate mc = summarize(plain);
  const double oracle = many_to_one_quadrature(f, T, s.x, model, spectral);
  r.add(against("importance sampling vs quadrature", T, is, oracle, "DERIVED", s.z));
  r.add(against("plain MC vs quadrature", T, mc, oracle, "DERIVED", s.z));
  {
    Comparison c = info("importance sampling vs plain MC", T, is.mean - mc.mean,
                        std::hypot(is.stderr_, mc.stderr_));
    c.oracle = 0.0;
    c.provenance = "TRIVIAL";
    c.tolerance = floor_tolerance(s.z * c.stderr_, 0.0);
    c.deviation = std::abs(c.estimate);
    c.verdict = c.deviation <= c.tolerance ? Verdict::pass : Verdict::fail;
    r.add(std::move(c));
  }
  r.add(info("mean spine fission count", T, summarize(counts).mean, summarize(counts).stderr_));
  r.add(info("mean path quadrature of the spine clock", T, summarize(means).mean,
             summarize(means).stderr_));
  r.add(against("fission count minus path quadrature", T, summarize(diff), 0.0, "DERIVED", s.z));
  r.add(against("(n - A)^2 - n (conditional equidispersion)", T, summarize(disp), 0.0, "DERIVED",
                s.z));
  r.wall_seconds = seconds_since(start);
  return r;
}

ExperimentReport spine_decomposition_experiment(const ModelSpec& model,
                                                const SpectralTriple& spectral,
                                                const ExperimentSettings& s) {
  const auto start = Clock::now();
  ExperimentReport r;
  r.name = "spine-decomposition";
  r.model_id = model_label(model);
  r.seed = s.seed;
  const double T = s.horizon;
  const auto opts = options_for(s, {T});
  r.sample_sizes.emplace_back("spine trees", s.replicas);
  auto samples = parallel_replicas(s.replicas, s.workers, [&](std::size_t i) {
    RandomStream rng(replica_seed(s.seed, i));
    const SpineTree tree = simulate_spine_tree(model, spectral, s.x, T, rng, opts);
    return std::array<double, 2>{spine_decomposition(tree, T, spectral),
                                 ledger_at(tree, T, spectral).z};
  });
  std::vector<double> sd, z, diff;
  for (const auto& v : samples) {
    sd.push_back(v[0]);
    z.push_back(v[1]);
    diff.push_back(v[0] - v[1]);
  }
  const Estimate esd = summarize(sd), ez = summarize(z);
  r.add(info("mean spine decomposition", T, esd.mean, esd.stderr_));
  r.add(info("mean Z(T)", T, ez.mean, ez.stderr_));
  r.add(against("paired difference", T, summarize(diff), 0.0, "DERIVED", s.z));
  {
    Comparison c = info("unpaired difference", T, esd.mean - ez.mean,
                        std::hypot(esd.stderr_, ez.stderr_));
    c.oracle = 0.0;
    c.provenance = "DERIVED";
    c.tolerance = floor_tolerance(s.z * c.stderr_, 0.0);
    c.deviation = std::abs(c.estimate);
    c.verdict = c.deviation <= c.tolerance ? Verdict::pass : Verdict::fail;
    r.add(std::move(c));
  }
  r.wall_seconds = seconds_since(start);
  return r;
}

void write_report_csv(std::ostream& out, const std::vector<ExperimentReport>& reports) {
  out << "experiment,model,t,estimate,stderr,oracle,provenance,verdict\n";
  auto quote = [](const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string q = "\"";
    for (char ch : v) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return q + "\"";
  };
  for (const auto& r : reports) {
    for (const auto& c : r.comparisons) {
      out << quote(r.name + ":" + c.label) << ',' << quote(r.model_id) << ','
          << (c.t ? format_real(*c.t) : "") << ',' << format_real(c.estimate) << ','
          << format_real(c.stderr_) << ',' << (c.oracle ? format_real(*c.oracle) : "") << ','
          << c.provenance << ',' << verdict_name(c.verdict) << '\n';
    }
  }
}

namespace {

Verdict parse_verdict(const std::string& s) {
  for (Verdict v : {Verdict::pass, Verdict::fail, Verdict::hypothesis_not_met, Verdict::info})
    if (s == verdict_name(v)) return v;
  throw ValidationError("unknown verdict '" + s + "'");
}

}  // namespace

void write_report_json(std::ostream& out, const ExperimentReport& r) {
  nlohmann::ordered_json doc;
  doc["name"] = r.name;
  doc["model"] = r.model_id;
  doc["seed"] = r.seed;
  doc["verdict"] = verdict_name(r.verdict);
  doc["sample_sizes"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.sample_sizes) doc["sample_sizes"][k] = v;
  doc["comparisons"] = nlohmann::ordered_json::array();
  for (const auto& c : r.comparisons) {
    nlohmann::ordered_json row;
    row["label"] = c.label;
    row["t"] = c.t ? nlohmann::ordered_json(*c.t) : nlohmann::ordered_json(nullptr);
    row["estimate"] = c.estimate;
    row["stderr"] = c.stderr_;
    row["oracle"] = c.oracle ? nlohmann::ordered_json(*c.oracle) : nlohmann::ordered_json(nullptr);
    row["provenance"] = c.provenance;
    row["tolerance"] = c.tolerance;
    row["deviation"] = c.deviation;
    row["verdict"] = verdict_name(c.verdict);
    doc["comparisons"].push_back(std::move(row));
  }
  doc["notes"] = r.notes;
  write_json(out, doc, 2);
}

ExperimentReport read_report_json(std::istream& in) {
  const auto doc = nlohmann::json::parse(in);
  ExperimentReport r;
  r.name = doc.at("name").get<std::string>();
  r.model_id = doc.at("model").get<std::string>();
  r.seed = doc.at("seed").get<std::uint64_t>();
  r.verdict = parse_verdict(doc.at("verdict").get<std::string>());
  for (const auto& [k, v] : doc.at("sample_sizes").items()) r.sample_sizes.emplace_back(k, v.get<std::size_t>());
  for (const auto& row : doc.at("comparisons")) {
    Comparison c;
    c.label = row.at("label").get<std::string>();
    if (!row.at("t").is_null()) c.t = row.at("t").get<double>();
    c.estimate = row.at("estimate").is_null() ? std::nan("") : row.at("estimate").get<double>();
    c.stderr_ = row.at("stderr").is_null() ? std::nan("") : row.at("stderr").get<double>();
    if (!row.at("oracle").is_null()) c.oracle = row.at("oracle").get<double>();
    c.provenance = row.at("provenance").get<std::string>();
    c.tolerance = row.at("tolerance").is_null() ? std::nan("") : row.at("tolerance").get<double>();
    c.deviation = row.at("deviation").is_null() ? std::nan("") : row.at("deviation").get<double>();
    c.verdict = parse_verdict(row.at("verdict").get<std::string>());
    r.comparisons.push_back(std::move(c));
  }
  for (const auto& n : doc.at("notes")) r.notes.push_back(n.get<std::string>());
  return r;
}

}  // namespace bhp
