#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "bhp/model.hpp"
#include "bhp/rng.hpp"

namespace bhp {

/// The cemetery state is represented by a quiet NaN.
inline constexpr double kCemetery = std::numeric_limits<double>::quiet_NaN();
inline bool is_cemetery(double x) noexcept { return std::isnan(x); }

/// Discretized path on [birth, end]. Once the cemetery is reached every later
/// point is the cemetery.
struct PathSegment {
  std::vector<double> times;
  std::vector<double> positions;

  std::size_t size() const noexcept { return times.size(); }
  bool alive(std::size_t i) const { return !is_cemetery(positions.at(i)); }
  /// Appends (t, x); t must exceed the last time.
  void push(double t, double x);
  /// Position at t by linear interpolation between recorded points.
  double at(double t) const;
};

struct OuParams {
  double c = 1.0;
  double sigma = 1.0;
};

/// Exact OU transition: N(x e^{-c dt}, sigma^2 (1 - e^{-2c dt}) / (2c)).
double ou_step(double x, double dt, OuParams params, RandomStream& rng);

/// Transition of the h-transformed OU process (generator 1/2 Delta - alpha x.grad).
double ou_h_step(double x, double dt, double alpha, RandomStream& rng);

/// Gaussian bridge of the OU process: sample of X_{s} given X_0 = x, X_h = y.
double ou_bridge(double x, double y, double s, double h, OuParams params, RandomStream& rng);

/// Mehler kernel p^h(t, x, y) of the h-process with respect to m~.
double mehler_density_h(double t, std::span<const double> x, std::span<const double> y,
                        double alpha);
double mehler_density_h(double t, double x, double y, double alpha);

struct SeriesValue {
  double value = 0.0;
  /// Bound on the neglected tail of the series.
  double tail_bound = 0.0;
};

/// Killed Feynman-Kac density e^{beta t} sum_{n<=N} e^{-lambda_n t} (2/L) sin(n pi x/L) sin(n pi y/L)
/// with lambda_n = sigma^2 n^2 pi^2 / (2 L^2).
SeriesValue interval_density(double t, double x, double y, double beta, int n_terms,
                             double length = std::numbers::pi, double sigma = 1.0);

/// Smallest N whose tail bound for interval_density at time t is below tol.
int interval_terms_for(double t, double tol = 1e-10, double length = std::numbers::pi,
                       double sigma = 1.0);

struct IntervalParams {
  double length = std::numbers::pi;
  double sigma = 1.0;
};

/// Euler step of Brownian motion killed outside (0, L). Returns the cemetery
/// if the endpoint exits, or with the Brownian-bridge crossing probability
/// exp(-2 d0 d1 / (sigma^2 dt)) for the boundary nearer to x when the nearer
/// distance is below 6 sqrt(dt).
double interval_step_with_absorption(double x, double dt, IntervalParams params,
                                     RandomStream& rng);

/// Euler scheme for the h-process of killed BM (drift sigma^2 (pi/L) cot(pi x/L)).
/// Sub-steps of at most 1e-4 within 0.2 of the boundary; proposals landing
/// outside (0, L) are redrawn.
double interval_h_step(double x, double dt, IntervalParams params, RandomStream& rng);

/// Trapezoid value of int beta(X_s) ds along the alive part of a segment.
double pcaf_increment(const PathSegment& segment, const BranchingRate& rate);

/// q / eps times the trapezoid occupation time of (x0 - eps/2, x0 + eps/2).
double local_time_pcaf(const PathSegment& segment, double x0, double eps, double q = 1.0);

/// Trapezoid increment of a branching clock over one step from x to y.
/// Without a law this is the mu-clock; with a law the measure is weighted by
/// Q(x) - shift (shift 0: spine clock Q mu, shift 1: potential (Q-1) mu).
/// The point mass contributes q w(x0) / window per unit time spent in the window.
double clock_increment(const BranchingRate& rate, double x, double y, double dt,
                       double window, const OffspringLaw* law = nullptr, double shift = 0.0);

}  // namespace bhp
