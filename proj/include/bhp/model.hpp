#pragma once

#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "bhp/rng.hpp"

namespace bhp {

/// Offspring distribution {p_k(x)}: finitely many atoms, piecewise constant
/// in position over declared cells.
///
/// Cell i covers [edges[i-1], edges[i]) with edges[-1] = -inf and
/// edges[cells-1] = +inf. A law without edges is position independent.
class OffspringLaw {
 public:
  static constexpr int kMaxCount = 64;

  /// Binary branching, p_2 = 1.
  OffspringLaw();

  /// masses[k] = p_k.
  static OffspringLaw from_masses(std::vector<double> masses);
  static OffspringLaw from_map(const std::map<int, double>& masses);
  static OffspringLaw binary() { return OffspringLaw(); }
  /// cell_masses.size() == edges.size() + 1, edges strictly increasing.
  static OffspringLaw piecewise(std::vector<double> edges,
                                std::vector<std::vector<double>> cell_masses);

  std::span<const double> masses_at(double x) const;
  std::size_t cell_count() const noexcept { return cells_.size(); }
  std::span<const double> cell_masses(std::size_t cell) const { return cells_.at(cell); }
  const std::vector<double>& edges() const noexcept { return edges_; }
  /// Largest k carrying positive mass in some cell.
  int max_count() const noexcept;
  bool position_dependent() const noexcept { return !edges_.empty(); }

  /// Draws k ~ p(x) by inversion.
  int sample(double x, RandomStream& rng) const;

 private:
  std::vector<double> edges_;
  std::vector<std::vector<double>> cells_;
};

struct ValidationReport {
  bool passed = true;
  std::vector<std::string> violations;
  double sup_mean = 0.0;
};

/// Checks p_0 = 0, unit mass, p_1 not identically 1 and sup Q <= declared_bound.
ValidationReport validate_offspring(const OffspringLaw& law,
                                    double declared_bound = OffspringLaw::kMaxCount);

/// Q(x) = sum_k k p_k(x). Throws ValidationError on a malformed mass vector
/// (negative entries or total mass off by more than 1e-12).
double mean_offspring(const OffspringLaw& law, double x);

/// Size-biased law k p_k(x) / Q(x) at position x.
OffspringLaw size_biased(const OffspringLaw& law, double x);

struct OuMotion {
  double c = 1.0;
  double sigma = 1.0;
  int dim = 1;
};

/// Brownian motion killed on leaving (0, length).
struct IntervalMotion {
  double length = std::numbers::pi;
  double sigma = 1.0;
};

using Motion = std::variant<OuMotion, IntervalMotion>;

struct PointMass {
  double location = 0.0;
  double weight = 0.0;
};

/// Branching rate measure mu(dx) = (b|x|^2 + a) m(dx) [+ q delta_{x0}].
struct BranchingRate {
  double constant = 0.0;
  double quadratic = 0.0;
  std::optional<PointMass> point_mass;

  double density(double x) const noexcept { return quadratic * x * x + constant; }
  bool is_zero() const noexcept {
    return constant == 0.0 && quadratic == 0.0 && (!point_mass || point_mass->weight == 0.0);
  }
};

struct ModelSpec {
  std::string id;
  Motion motion = OuMotion{};
  BranchingRate rate;
  OffspringLaw offspring;
  /// Default time step for killed motion and clock accumulation.
  double dt = 1e-3;
  /// Window width for the occupation-time approximation of local time.
  double local_time_window = 0.02;

  bool is_ou() const noexcept { return std::holds_alternative<OuMotion>(motion); }
  bool is_interval() const noexcept { return std::holds_alternative<IntervalMotion>(motion); }
  const OuMotion& ou() const { return std::get<OuMotion>(motion); }
  const IntervalMotion& interval() const { return std::get<IntervalMotion>(motion); }
  double sigma() const noexcept;
  /// Whether x is in the state space E (cemetery excluded).
  bool inside(double x) const noexcept;
  /// Lebesgue density of the symmetrizing measure m (1-D).
  double reference_density(double x) const noexcept;
};

/// Throws ValidationError listing every violated clause.
void validate_model(const ModelSpec& model);

struct GridSpectrum;

struct OuSpectralForm {
  double c = 1.0;
  double alpha = 1.0;
  int dim = 1;
};

struct SineSpectralForm {
  double length = std::numbers::pi;
  double sigma = 1.0;
  double beta = 0.0;
};

using SpectralSource =
    std::variant<OuSpectralForm, SineSpectralForm, std::shared_ptr<const GridSpectrum>>;

/// Principal eigen-data of the Feynman-Kac form. Immutable once built.
struct SpectralTriple {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double gap = 0.0;
  double h_norm_check = 0.0;
  SpectralSource source;

  /// Ground state h at a 1-D position; 0 outside E.
  double h(double x) const;
  /// Ground state at a d-dimensional position (OU only; 1-D sources use x[0]).
  double h(std::span<const double> x) const;
  bool closed_form() const noexcept { return source.index() != 2; }
  const GridSpectrum* grid() const noexcept;
  /// Density of m~ = h^2 m with respect to Lebesgue measure (1-D).
  double tilde_density(double x) const;
};

struct CatalogEntry {
  ModelSpec model;
  SpectralTriple spectral;
};

/// Closed-form OU data without the sign checks (a = 0 allowed).
SpectralTriple ou_closed_form(double c, double b, double a, int dim = 1);

/// Branching OU with rate b|x|^2 + a and binary branching.
/// Requires c > sqrt(2b), a > 0, b >= 0.
CatalogEntry catalog_ou(double c, double b, double a, int dim = 1);

/// Closed-form Dirichlet data on (0, L) for constant rate beta (binary), no
/// sign check on lambda1.
SpectralTriple interval_closed_form(double beta, double length = std::numbers::pi,
                                    double sigma = 1.0);

/// Killed Brownian motion on (0, L) with constant rate beta and an optional
/// point mass. Point-mass models are solved on a grid with `grid_nodes` nodes.
/// Throws SubcriticalityError when lambda1 >= 0.
CatalogEntry catalog_interval(double beta, double length = std::numbers::pi,
                              std::optional<PointMass> point_mass = std::nullopt,
                              int grid_nodes = 4000);

}  // namespace bhp
