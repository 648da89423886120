#include "bhp/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "bhp/errors.hpp"
#include "bhp/spectral.hpp"

namespace bhp {
namespace {

constexpr double kMassTolerance = 1e-12;

void check_well_formed(std::span<const double> masses) {
  double total = 0.0;
  for (double p : masses) {
    if (!(p >= 0.0)) throw ValidationError("offspring law has a negative or NaN mass");
    total += p;
  }
  if (std::abs(total - 1.0) > kMassTolerance) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "offspring masses sum to " << total << ", not 1";
    throw ValidationError(msg.str());
  }
}

double mean_of(std::span<const double> masses) {
  double q = 0.0;
  for (std::size_t k = 0; k < masses.size(); ++k) q += static_cast<double>(k) * masses[k];
  return q;
}

// Gauss-Hermite-free quadrature of int g(x) (c/pi)^{1/2} e^{-c x^2} dx.
template <class F>
double gaussian_quadrature(double c, F&& g) {
  const double sd = 1.0 / std::sqrt(2.0 * c);
  const double radius = 40.0 * sd;
  const int n = 40000;
  const double dx = 2.0 * radius / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = -radius + i * dx;
    const double w = (i == 0 || i == n) ? 0.5 : 1.0;
    sum += w * g(x) * std::sqrt(c / std::numbers::pi) * std::exp(-c * x * x);
  }
  return sum * dx;
}

}  // namespace

OffspringLaw::OffspringLaw() : cells_{{0.0, 0.0, 1.0}} {}

OffspringLaw OffspringLaw::from_masses(std::vector<double> masses) {
  if (masses.empty()) throw ValidationError("offspring law needs at least one atom");
  if (masses.size() > static_cast<std::size_t>(kMaxCount) + 1)
    throw ValidationError("offspring law supports at most 64 children");
  OffspringLaw law;
  law.cells_ = {std::move(masses)};
  return law;
}

OffspringLaw OffspringLaw::from_map(const std::map<int, double>& masses) {
  if (masses.empty()) throw ValidationError("offspring law needs at least one atom");
  if (masses.begin()->first < 0) throw ValidationError("negative offspring count");
  const int top = masses.rbegin()->first;
  if (top > kMaxCount) throw ValidationError("offspring law supports at most 64 children");
  std::vector<double> dense(static_cast<std::size_t>(top) + 1, 0.0);
  for (auto [k, p] : masses) dense[static_cast<std::size_t>(k)] = p;
  return from_masses(std::move(dense));
}

OffspringLaw OffspringLaw::piecewise(std::vector<double> edges,
                                     std::vector<std::vector<double>> cell_masses) {
  if (cell_masses.size() != edges.size() + 1)
    throw ValidationError("piecewise offspring law needs one more cell than edges");
  if (!std::is_sorted(edges.begin(), edges.end()) ||
      std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw ValidationError("offspring cell edges must be strictly increasing");
  for (const auto& cell : cell_masses) {
    if (cell.empty() || cell.size() > static_cast<std::size_t>(kMaxCount) + 1)
      throw ValidationError("offspring cell must have between 1 and 65 masses");
  }
  OffspringLaw law;
  law.edges_ = std::move(edges);
  law.cells_ = std::move(cell_masses);
  return law;
}

std::span<const double> OffspringLaw::masses_at(double x) const {
  if (edges_.empty()) return cells_.front();
  const auto cell = static_cast<std::size_t>(
      std::upper_bound(edges_.begin(), edges_.end(), x) - edges_.begin());
  return cells_[cell];
}

int OffspringLaw::max_count() const noexcept {
  int top = 0;
  for (const auto& cell : cells_) {
    for (std::size_t k = 0; k < cell.size(); ++k)
      if (cell[k] > 0.0) top = std::max(top, static_cast<int>(k));
  }
  return top;
}

int OffspringLaw::sample(double x, RandomStream& rng) const {
  const auto masses = masses_at(x);
  const double u = rng.uniform();
  double acc = 0.0;
  int last = 0;
  for (std::size_t k = 0; k < masses.size(); ++k) {
    if (masses[k] <= 0.0) continue;
    acc += masses[k];
    last = static_cast<int>(k);
    if (u < acc) return last;
  }
  return last;
}

ValidationReport validate_offspring(const OffspringLaw& law, double declared_bound) {
  ValidationReport report;
  for (std::size_t c = 0; c < law.cell_count(); ++c) {
    const auto masses = law.cell_masses(c);
    const std::string where =
        law.position_dependent() ? " in cell " + std::to_string(c) : std::string();
    double total = 0.0;
    bool negative = false;
    for (double p : masses) {
      if (!(p >= 0.0)) negative = true;
      total += p;
    }
    if (negative) report.violations.push_back("negative mass" + where);
    if (masses[0] != 0.0) report.violations.push_back("p_0 != 0" + where);
    if (std::abs(total - 1.0) > kMassTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "mass sum = " << total << where;
      report.violations.push_back(msg.str());
    }
    report.sup_mean = std::max(report.sup_mean, mean_of(masses));
  }
  bool all_single = true;
  for (std::size_t c = 0; c < law.cell_count(); ++c) {
    const auto masses = law.cell_masses(c);
    if (!(masses.size() > 1 && masses[1] == 1.0)) all_single = false;
  }
  if (all_single) report.violations.emplace_back("p_1 == 1 identically");
  if (!(report.sup_mean <= declared_bound)) {
    std::ostringstream msg;
    msg << "sup Q = " << report.sup_mean << " exceeds declared bound " << declared_bound;
    report.violations.push_back(msg.str());
  }
  report.passed = report.violations.empty();
  return report;
}

double mean_offspring(const OffspringLaw& law, double x) {
  const auto masses = law.masses_at(x);
  check_well_formed(masses);
  return mean_of(masses);
}

OffspringLaw size_biased(const OffspringLaw& law, double x) {
  const double q = mean_offspring(law, x);
  if (!(q > 0.0)) throw DegenerateLawError("size-biased law undefined: Q(x) = 0");
  const auto masses = law.masses_at(x);
  std::vector<double> biased(masses.size());
  for (std::size_t k = 0; k < masses.size(); ++k)
    biased[k] = static_cast<double>(k) * masses[k] / q;
  return OffspringLaw::from_masses(std::move(biased));
}

double ModelSpec::sigma() const noexcept {
  return std::visit([](const auto& m) { return m.sigma; }, motion);
}

bool ModelSpec::inside(double x) const noexcept {
  if (std::isnan(x)) return false;
  if (const auto* iv = std::get_if<IntervalMotion>(&motion)) return x > 0.0 && x < iv->length;
  return std::isfinite(x);
}

double ModelSpec::reference_density(double x) const noexcept {
  if (const auto* iv = std::get_if<IntervalMotion>(&motion))
    return (x > 0.0 && x < iv->length) ? 1.0 : 0.0;
  const auto& ou = std::get<OuMotion>(motion);
  const double s2 = ou.sigma * ou.sigma;
  return std::sqrt(ou.c / (std::numbers::pi * s2)) * std::exp(-ou.c * x * x / s2);
}

void validate_model(const ModelSpec& model) {
  std::vector<std::string> problems;
  const auto law = validate_offspring(model.offspring);
  for (const auto& v : law.violations) problems.push_back("offspring: " + v);
  if (const auto* ou = std::get_if<OuMotion>(&model.motion)) {
    if (!(ou->c > 0.0)) problems.emplace_back("OU drift rate c must be positive");
    if (!(ou->sigma > 0.0)) problems.emplace_back("OU sigma must be positive");
    if (ou->dim < 1) problems.emplace_back("OU dimension must be >= 1");
    if (model.rate.quadratic > 0.0 &&
        !(ou->c * ou->c > 2.0 * model.rate.quadratic * ou->sigma * ou->sigma))
      problems.emplace_back("OU with quadratic rate requires c > sqrt(2b)");
    if (model.rate.point_mass)
      problems.emplace_back("point-mass rates are supported on interval models only");
  } else {
    const auto& iv = model.interval();
    if (!(iv.length > 0.0)) problems.emplace_back("interval length must be positive");
    if (!(iv.sigma > 0.0)) problems.emplace_back("interval sigma must be positive");
    if (model.rate.quadratic != 0.0)
      problems.emplace_back("interval models take a constant rate only");
    if (model.rate.point_mass) {
      const auto& pm = *model.rate.point_mass;
      if (!(pm.location > 0.0 && pm.location < iv.length))
        problems.emplace_back("point mass must lie inside (0, L)");
      if (!(pm.weight >= 0.0)) problems.emplace_back("point-mass weight must be >= 0");
    }
  }
  if (!(model.rate.constant >= 0.0) || !(model.rate.quadratic >= 0.0))
    problems.emplace_back("branching rate coefficients must be non-negative");
  if (!(model.dt > 0.0)) problems.emplace_back("dt must be positive");
  if (!(model.local_time_window > 0.0)) problems.emplace_back("local-time window must be positive");
  if (!problems.empty()) {
    std::string msg = "invalid model";
    if (!model.id.empty()) msg += " '" + model.id + "'";
    for (const auto& p : problems) msg += "; " + p;
    throw ValidationError(msg);
  }
}

double SpectralTriple::h(double x) const {
  if (std::isnan(x)) return 0.0;
  return std::visit(
      [x](const auto& src) -> double {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, OuSpectralForm>) {
          return std::pow(src.alpha / src.c, 0.25 * src.dim) *
                 std::exp(0.5 * (src.c - src.alpha) * x * x);
        } else if constexpr (std::is_same_v<T, SineSpectralForm>) {
          if (!(x > 0.0 && x < src.length)) return 0.0;
          return std::sqrt(2.0 / src.length) * std::sin(std::numbers::pi * x / src.length);
        } else {
          return src->h(x);
        }
      },
      source);
}

double SpectralTriple::h(std::span<const double> x) const {
  if (const auto* ou = std::get_if<OuSpectralForm>(&source)) {
    double r2 = 0.0;
    for (double xi : x) r2 += xi * xi;
    return std::pow(ou->alpha / ou->c, 0.25 * ou->dim) * std::exp(0.5 * (ou->c - ou->alpha) * r2);
  }
  return h(x.front());
}

const GridSpectrum* SpectralTriple::grid() const noexcept {
  if (const auto* g = std::get_if<std::shared_ptr<const GridSpectrum>>(&source)) return g->get();
  return nullptr;
}

double SpectralTriple::tilde_density(double x) const {
  return std::visit(
      [&](const auto& src) -> double {
        using T = std::decay_t<decltype(src)>;
        if constexpr (std::is_same_v<T, OuSpectralForm>) {
          return std::sqrt(src.alpha / std::numbers::pi) * std::exp(-src.alpha * x * x);
        } else if constexpr (std::is_same_v<T, SineSpectralForm>) {
          const double v = h(x);
          return v * v;
        } else {
          const double v = src->h(x);
          return v * v * src->model.reference_density(x);
        }
      },
      source);
}

SpectralTriple ou_closed_form(double c, double b, double a, int dim) {
  if (!(c > 0.0) || !(b >= 0.0) || !(c * c > 2.0 * b))
    throw PreconditionError("OU catalog requires c > sqrt(2b) and b >= 0");
  if (dim < 1) throw PreconditionError("OU dimension must be >= 1");
  const double alpha = std::sqrt(c * c - 2.0 * b);
  SpectralTriple s;
  s.lambda1 = -(0.5 * (c - alpha) * dim + a);
  s.gap = alpha;
  s.lambda2 = s.lambda1 + alpha;
  s.source = OuSpectralForm{c, alpha, dim};
  const double one_dim = gaussian_quadrature(c, [&](double x) {
    const double v = std::pow(alpha / c, 0.25) * std::exp(0.5 * (c - alpha) * x * x);
    return v * v;
  });
  s.h_norm_check = std::pow(one_dim, dim);
  return s;
}

CatalogEntry catalog_ou(double c, double b, double a, int dim) {
  if (!(c > std::sqrt(2.0 * b)))
    throw PreconditionError("catalog_ou: need c > sqrt(2b)");
  if (!(a > 0.0)) throw PreconditionError("catalog_ou: need a > 0");
  if (!(b >= 0.0)) throw PreconditionError("catalog_ou: need b >= 0");
  CatalogEntry e;
  e.model.id = "ou";
  e.model.motion = OuMotion{c, 1.0, dim};
  e.model.rate.constant = a;
  e.model.rate.quadratic = b;
  e.model.offspring = OffspringLaw::binary();
  e.spectral = ou_closed_form(c, b, a, dim);
  return e;
}

SpectralTriple interval_closed_form(double beta, double length, double sigma) {
  if (!(length > 0.0) || !(sigma > 0.0) || !(beta >= 0.0))
    throw PreconditionError("interval catalog requires L > 0, sigma > 0, beta >= 0");
  const double base = sigma * sigma * std::numbers::pi * std::numbers::pi / (2.0 * length * length);
  SpectralTriple s;
  s.lambda1 = base - beta;
  s.lambda2 = 4.0 * base - beta;
  s.gap = 3.0 * base;
  s.source = SineSpectralForm{length, sigma, beta};
  // int_0^L (2/L) sin^2(pi x / L) dx by the midpoint rule (exact for this integrand).
  const int n = 4096;
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) * length / n;
    const double v = std::sqrt(2.0 / length) * std::sin(std::numbers::pi * x / length);
    sum += v * v;
  }
  s.h_norm_check = sum * length / n;
  return s;
}

CatalogEntry catalog_interval(double beta, double length, std::optional<PointMass> point_mass,
                              int grid_nodes) {
  if (!(beta >= 0.0)) throw PreconditionError("catalog_interval: need beta >= 0");
  CatalogEntry e;
  e.model.id = point_mass ? "interval-point-mass" : "interval";
  e.model.motion = IntervalMotion{length, 1.0};
  e.model.rate.constant = beta;
  e.model.rate.point_mass = point_mass;
  e.model.offspring = OffspringLaw::binary();
  validate_model(e.model);
  if (point_mass) {
    e.spectral = grid_spectral_triple(e.model, grid_nodes, 2, 0.0, true);
  } else {
    e.spectral = interval_closed_form(beta, length, 1.0);
    if (!(e.spectral.lambda1 < 0.0)) {
      std::ostringstream msg;
      msg << "catalog_interval: lambda1 = " << e.spectral.lambda1 << " >= 0 (subcritical)";
      throw SubcriticalityError(msg.str());
    }
  }
  return e;
}

}  // namespace bhp
