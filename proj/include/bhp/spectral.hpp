#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bhp/model.hpp"

namespace bhp {

enum class BoundaryRule { dirichlet, truncated_whole_line };

/// Uniform interior nodes of [lo, hi] with zero boundary values at lo and hi.
struct Grid {
  std::vector<double> nodes;
  /// m-measure of each cell: density(node) * spacing.
  std::vector<double> weights;
  /// Density of m at the N+1 cell midpoints (lo, x1), (x1, x2), ..., (xN, hi).
  std::vector<double> midpoint_density;
  double spacing = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  BoundaryRule rule = BoundaryRule::dirichlet;

  std::size_t size() const noexcept { return nodes.size(); }
};

/// Radius R with Gaussian m-mass outside [-R, R] below 1e-12.
double default_radius(const ModelSpec& model);

/// Grid with n interior nodes: (0, L) for interval models, [-R, R] for OU
/// (radius <= 0 selects default_radius).
Grid make_grid(const ModelSpec& model, int n, double radius = 0.0);

/// Discrete form E^{(Q-1)mu}(u, u) = u^T K u - sum_i V_i u_i^2 w_i on a grid.
struct FormMatrix {
  std::vector<double> stiffness_diag;
  std::vector<double> stiffness_off;
  /// (Q-1) beta at nodes plus (Q(x0)-1) q / w_i at the node nearest a point mass.
  std::vector<double> potential;
  std::vector<double> weights;

  std::size_t size() const noexcept { return weights.size(); }
  /// Symmetric tridiagonal W^{-1/2} (K - V W) W^{-1/2}.
  std::vector<double> symmetric_diag() const;
  std::vector<double> symmetric_off() const;
  double rayleigh_quotient(std::span<const double> u) const;
};

FormMatrix discretize(const ModelSpec& model, const Grid& grid);

struct EigenPair {
  double value = 0.0;
  /// Nodal values, normalized to sum_i w_i u_i^2 = 1.
  std::vector<double> vector;
  int iterations = 0;
};

/// Number of eigenvalues of the symmetric tridiagonal (diag, off) below x.
std::size_t sturm_count(std::span<const double> diag, std::span<const double> off, double x);

/// (lambda1, h) and (lambda2, psi2) by shifted inverse iteration, the second
/// pair with m-weighted deflation against h. h is positive.
std::pair<EigenPair, EigenPair> lowest_two_eigenpairs(const FormMatrix& form);

/// Lowest `count` eigenpairs, each deflated against all lower ones.
std::vector<EigenPair> lowest_eigenpairs(const FormMatrix& form, int count);

/// Grid eigen-data: nodes plus modes psi_k normalized in L^2(m).
struct GridSpectrum {
  ModelSpec model;
  Grid grid;
  std::vector<EigenPair> modes;

  /// Linear interpolation of mode k with zero boundary values.
  double mode(std::size_t k, double x) const;
  double h(double x) const { return mode(0, x); }
  /// d/dx log h on the cell containing x.
  double log_h_slope(double x) const;
};

std::shared_ptr<const GridSpectrum> solve_spectrum(const ModelSpec& model, int n, int modes = 2,
                                                   double radius = 0.0);

/// SpectralTriple backed by a grid solve. Throws SubcriticalityError if
/// lambda1 >= 0 and `require_subcritical`.
SpectralTriple grid_spectral_triple(const ModelSpec& model, int n, int modes = 2,
                                    double radius = 0.0, bool require_subcritical = true);

/// Transition density p^h(t, x, y) of the h-process with respect to m~.
/// Grid sources throw NumericError when the retained modes do not reach a
/// tail of 1e-12.
double kernel_h(const SpectralTriple& spectral, double t, double x, double y);

/// Non-constant eigenfunctions psi_k / h (k = 1..count), orthonormal in L^2(m~).
std::vector<std::function<double(double)>> h_modes(const SpectralTriple& spectral, int count);

/// Eigenvalue differences lambda_k - lambda_1 matching h_modes.
std::vector<double> h_mode_rates(const SpectralTriple& spectral, int count);

struct TableSpec {
  int nodes = 241;
  /// Half-width for whole-line models; <= 0 uses 12 / sqrt(alpha).
  double radius = 0.0;
  /// Rows used by quadrature checks on whole-line tables (|x| <= core);
  /// <= 0 uses radius / 2. Bounded domains always use every row.
  double core = 0.0;
};

/// p^h(t, x_i, x_j) on table nodes with m~ quadrature weights.
struct KernelTable {
  double t = 0.0;
  std::vector<double> nodes;
  std::vector<double> tilde_weights;
  std::vector<double> values;
  /// a~_t(x_i) = p^h(t, x_i, x_i).
  std::vector<double> diagonal;

  /// Rows whose kernel mass lies inside the table (all rows on bounded domains).
  std::vector<std::size_t> core_rows;

  std::size_t size() const noexcept { return nodes.size(); }
  double operator()(std::size_t i, std::size_t j) const { return values[i * nodes.size() + j]; }
  /// (P^h_t g)(x_i) by quadrature.
  std::vector<double> apply(std::span<const double> g) const;
};

/// Table nodes and m~ weights without kernel values.
KernelTable table_frame(const SpectralTriple& spectral, const TableSpec& spec);
KernelTable kernel_table(const SpectralTriple& spectral, double t, const TableSpec& spec = {});

double table_symmetry_error(const KernelTable& table);
/// max over core rows of |sum_j p(x_i, x_j) w~_j - 1|.
double row_normalization_error(const KernelTable& table);
/// max over core pairs of |sum_k p_s(x_i, z_k) p_t(z_k, x_j) w~_k - p_{s+t}(x_i, x_j)|
/// relative to max(1, p_{s+t}(x_i, x_j)).
double chapman_kolmogorov_error(const KernelTable& s, const KernelTable& t,
                                const KernelTable& sum);

struct PoincareCase {
  double t = 0.0;
  std::string label;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct PoincareReport {
  bool passed = true;
  double slack = 1e-9;
  std::vector<PoincareCase> cases;
};

/// ||P^h_t phi|| <= e^{-gap t} ||phi|| (+ slack ||phi||) in L^2(m~) for mean-zero
/// phi: the first five non-constant modes and five random mean-zero vectors.
PoincareReport check_poincare(const SpectralTriple& spectral, const TableSpec& spec = {},
                              std::vector<double> times = {0.5, 1.0, 2.0},
                              double slack = 1e-9, std::uint64_t seed = 7);

struct ConditionWReport {
  double t0 = 0.0;
  /// Quadrature of int a~_{t0} dm~ on the table.
  double value = 0.0;
  /// Estimate of the mass outside the table domain (or series tail).
  double tail_bound = 0.0;
  /// Closed-form or series value where available.
  std::optional<double> reference;
  /// Empty when no verdict can be reached.
  std::optional<bool> finite;
  std::string diagnostic;
};

ConditionWReport check_condition_W(const SpectralTriple& spectral, double t0,
                                   const TableSpec& spec = {});

struct AiuReport {
  double t1 = 0.0;
  /// Sup of a~_{t1} over nested domains exhausting E.
  std::vector<double> domain_sizes;
  std::vector<double> sups;
  std::optional<bool> holds;
  std::string verdict;
  /// |p^h(t, x, y) - 1| <= e^{-gap (t - t1)} sqrt(a~(x) a~(y)) at all table pairs.
  std::vector<double> bound_times;
  bool bound_passed = true;
  double worst_bound_ratio = 0.0;
};

AiuReport check_condition_AIU(const SpectralTriple& spectral, double t1,
                              const TableSpec& spec = {});

struct LlogLReport {
  double value = 0.0;
  double motion_term = 0.0;
  double branching_term = 0.0;
  double tail_bound = 0.0;
  std::optional<bool> finite;
  std::string diagnostic;
};

/// int h^2 log+ h dm + int sum_k k p_k h^2 log+(k h) dmu.
LlogLReport llogl_value(const ModelSpec& model, const SpectralTriple& spectral);

/// P^{(Q-1)mu}_t f(x) from the eigen-data (Mehler quadrature, sine series or
/// grid eigen-expansion).
double many_to_one_quadrature(const std::function<double(double)>& f, double t, double x,
                              const ModelSpec& model, const SpectralTriple& spectral);

/// <f, g>_m by quadrature over E.
double inner_product_m(const std::function<double(double)>& f,
                       const std::function<double(double)>& g, const ModelSpec& model,
                       const SpectralTriple& spectral);

}  // namespace bhp
