#include "bhp/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bhp/errors.hpp"

namespace bhp {
namespace {

double fast_mean(const OffspringLaw& law, double x) {
  const auto masses = law.masses_at(x);
  double q = 0.0;
  for (std::size_t k = 1; k < masses.size(); ++k) q += static_cast<double>(k) * masses[k];
  return q;
}

void check_step(double dt) {
  if (!(dt >= 0.0)) throw PreconditionError("time step must be non-negative");
}

}  // namespace

void PathSegment::push(double t, double x) {
  if (!times.empty()) {
    if (!(t > times.back())) throw PreconditionError("path times must increase strictly");
    if (is_cemetery(positions.back())) x = kCemetery;
  }
  times.push_back(t);
  positions.push_back(x);
}

double PathSegment::at(double t) const {
  if (times.empty() || t < times.front() || t > times.back())
    throw PreconditionError("time outside the recorded path");
  const auto it = std::lower_bound(times.begin(), times.end(), t);
  const auto j = static_cast<std::size_t>(it - times.begin());
  if (times[j] == t) return positions[j];
  const std::size_t i = j - 1;
  if (is_cemetery(positions[i]) || is_cemetery(positions[j])) return kCemetery;
  const double f = (t - times[i]) / (times[j] - times[i]);
  return positions[i] + f * (positions[j] - positions[i]);
}

double ou_step(double x, double dt, OuParams params, RandomStream& rng) {
  check_step(dt);
  if (dt == 0.0) return x;
  const double decay = std::exp(-params.c * dt);
  const double var = params.sigma * params.sigma * (-std::expm1(-2.0 * params.c * dt)) /
                     (2.0 * params.c);
  return x * decay + std::sqrt(var) * rng.gaussian();
}

double ou_h_step(double x, double dt, double alpha, RandomStream& rng) {
  return ou_step(x, dt, OuParams{alpha, 1.0}, rng);
}

double ou_bridge(double x, double y, double s, double h, OuParams params, RandomStream& rng) {
  if (!(s >= 0.0 && s <= h && h > 0.0)) throw PreconditionError("bridge time outside [0, h]");
  const double c = params.c;
  const double s2 = params.sigma * params.sigma;
  auto var = [&](double u) { return s2 * (-std::expm1(-2.0 * c * u)) / (2.0 * c); };
  const double vs = var(s);
  const double vh = var(h);
  const double link = std::exp(-c * (h - s));
  const double mean = x * std::exp(-c * s) + link * vs / vh * (y - x * std::exp(-c * h));
  const double v = std::max(0.0, vs - link * link * vs * vs / vh);
  return mean + std::sqrt(v) * rng.gaussian();
}

double mehler_density_h(double t, std::span<const double> x, std::span<const double> y,
                        double alpha) {
  if (!(t > 0.0)) throw PreconditionError("mehler_density_h requires t > 0");
  if (x.size() != y.size()) throw PreconditionError("mehler_density_h: dimension mismatch");
  double xx = 0.0, yy = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx += x[i] * x[i];
    yy += y[i] * y[i];
    xy += x[i] * y[i];
  }
  const double d = static_cast<double>(x.size());
  const double prefactor = std::pow(-std::expm1(-2.0 * alpha * t), -0.5 * d);
  const double exponent =
      -alpha * (xx + yy) / std::expm1(2.0 * alpha * t) + alpha * xy / std::sinh(alpha * t);
  return prefactor * std::exp(exponent);
}

double mehler_density_h(double t, double x, double y, double alpha) {
  return mehler_density_h(t, std::span<const double>(&x, 1), std::span<const double>(&y, 1),
                          alpha);
}

namespace {

double sine_tail(double k, int n) {
  // sum_{m > n} e^{-k m^2} <= e^{-k (n+1)^2} / (1 - e^{-k (n+1)}), using m^2 >= (n+1) m.
  const double next = static_cast<double>(n) + 1.0;
  return std::exp(-k * next * next) / (-std::expm1(-k * next));
}

}  // namespace

SeriesValue interval_density(double t, double x, double y, double beta, int n_terms,
                             double length, double sigma) {
  if (!(t > 0.0)) throw PreconditionError("interval_density requires t > 0");
  if (n_terms < 1) throw PreconditionError("interval_density requires n_terms >= 1");
  if (!(x > 0.0 && x < length && y > 0.0 && y < length))
    throw PreconditionError("interval_density: x and y must lie in (0, L)");
  const double k = sigma * sigma * std::numbers::pi * std::numbers::pi * t / (2.0 * length * length);
  const double w = std::numbers::pi / length;
  double sum = 0.0;
  for (int n = 1; n <= n_terms; ++n)
    sum += std::exp(-k * n * n) * std::sin(n * w * x) * std::sin(n * w * y);
  const double scale = std::exp(beta * t) * 2.0 / length;
  return {scale * sum, scale * sine_tail(k, n_terms)};
}

int interval_terms_for(double t, double tol, double length, double sigma) {
  if (!(t > 0.0)) throw PreconditionError("interval_terms_for requires t > 0");
  const double k = sigma * sigma * std::numbers::pi * std::numbers::pi * t / (2.0 * length * length);
  int n = 1;
  while ((2.0 / length) * sine_tail(k, n) >= tol) {
    if (++n > 1'000'000) throw NumericError("sine series needs more than 1e6 terms");
  }
  return n;
}

double interval_step_with_absorption(double x, double dt, IntervalParams params,
                                     RandomStream& rng) {
  if (!(x > 0.0 && x < params.length))
    throw PreconditionError("interval step must start inside (0, L)");
  if (!(dt > 0.0)) throw PreconditionError("interval step requires dt > 0");
  const double scale = params.sigma * std::sqrt(dt);
  const double y = x + scale * rng.gaussian();
  if (!(y > 0.0 && y < params.length)) return kCemetery;
  const bool left = x <= params.length - x;
  const double d0 = left ? x : params.length - x;
  const double d1 = left ? y : params.length - y;
  if (std::min(d0, d1) < 6.0 * scale) {
    const double cross = std::exp(-2.0 * d0 * d1 / (scale * scale));
    if (rng.uniform() < cross) return kCemetery;
  }
  return y;
}

double interval_h_step(double x, double dt, IntervalParams params, RandomStream& rng) {
  if (!(x > 0.0 && x < params.length))
    throw PreconditionError("h-process step must start inside (0, L)");
  check_step(dt);
  const double w = std::numbers::pi / params.length;
  const double s2 = params.sigma * params.sigma;
  double remaining = dt;
  while (remaining > 0.0) {
    const bool near = std::min(x, params.length - x) < 0.2;
    const double sub = near ? std::min(remaining, 1e-4) : remaining;
    const double drift = s2 * w / std::tan(w * x);
    const double scale = params.sigma * std::sqrt(sub);
    double y = x;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double proposal = x + drift * sub + scale * rng.gaussian();
      if (proposal > 0.0 && proposal < params.length) {
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

double pcaf_increment(const PathSegment& segment, const BranchingRate& rate) {
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < segment.size(); ++i) {
    const double a = segment.positions[i];
    const double b = segment.positions[i + 1];
    if (is_cemetery(a) || is_cemetery(b)) break;
    total += 0.5 * (rate.density(a) + rate.density(b)) * (segment.times[i + 1] - segment.times[i]);
  }
  return total;
}

double local_time_pcaf(const PathSegment& segment, double x0, double eps, double q) {
  if (!(eps > 0.0)) throw PreconditionError("local-time window must be positive");
  auto in = [&](double z) { return !is_cemetery(z) && std::abs(z - x0) < 0.5 * eps ? 1.0 : 0.0; };
  double occupation = 0.0;
  for (std::size_t i = 0; i + 1 < segment.size(); ++i) {
    if (is_cemetery(segment.positions[i + 1])) break;
    occupation += 0.5 * (in(segment.positions[i]) + in(segment.positions[i + 1])) *
                  (segment.times[i + 1] - segment.times[i]);
  }
  return q * occupation / eps;
}

double clock_increment(const BranchingRate& rate, double x, double y, double dt, double window,
                       const OffspringLaw* law, double shift) {
  auto weight = [&](double z) { return law ? fast_mean(*law, z) - shift : 1.0; };
  double inc = 0.0;
  if (rate.constant != 0.0 || rate.quadratic != 0.0)
    inc = 0.5 * (weight(x) * rate.density(x) + weight(y) * rate.density(y)) * dt;
  if (rate.point_mass && rate.point_mass->weight != 0.0) {
    const auto& pm = *rate.point_mass;
    const double half = 0.5 * window;
    const double hits =
        (std::abs(x - pm.location) < half ? 0.5 : 0.0) + (std::abs(y - pm.location) < half ? 0.5 : 0.0);
    if (hits > 0.0) inc += pm.weight * weight(pm.location) / window * hits * dt;
  }
  return inc;
}

}  // namespace bhp
