#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bhp/model.hpp"
#include "bhp/spectral.hpp"

namespace bhp {

enum class Verdict { pass, fail, hypothesis_not_met, info };
const char* verdict_name(Verdict v) noexcept;

/// One numeric comparison: |estimate - oracle| against a tolerance.
struct Comparison {
  std::string label;
  std::optional<double> t;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::optional<double> oracle;
  /// PAPER, DERIVED, TRIVIAL or empty for rows without an oracle.
  std::string provenance;
  double tolerance = 0.0;
  double deviation = 0.0;
  Verdict verdict = Verdict::info;
};

struct ExperimentReport {
  std::string name;
  std::string model_id;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::size_t>> sample_sizes;
  std::vector<Comparison> comparisons;
  Verdict verdict = Verdict::pass;
  std::vector<std::string> notes;
  /// Kept out of the deterministic documents; written to a separate file.
  double wall_seconds = 0.0;

  /// Appends a comparison and folds its verdict into the overall verdict.
  Comparison& add(Comparison c);
  /// Overall verdict becomes hypothesis_not_met unless already failed.
  void out_of_scope(std::string reason);
};

/// Test functions used by the experiments.
struct TestFunction {
  enum class Kind { one, h, h_indicator };
  Kind kind = Kind::h;
  /// Indicator window for h_indicator: f = h on [lo, hi].
  double lo = 0.0;
  double hi = 0.0;

  std::function<double(double)> bind(const SpectralTriple& spectral) const;
  std::string describe() const;
};

/// Settings shared by all experiments; every threshold is explicit here.
struct ExperimentSettings {
  double x = 0.0;
  std::vector<double> t_grid;
  double horizon = 1.0;
  /// M_infinity proxy time; <= 0 selects 10 / |lambda1|.
  double t_max = 0.0;
  double lattice_spacing = 0.5;
  int n_max = 16;
  std::size_t replicas = 1000;
  std::uint64_t seed = 1;
  unsigned workers = 1;
  TestFunction f;
  /// Number of standard errors in every statistical comparison.
  double z = 3.0;
  double delta = 0.01;
  double slln_fraction = 0.9;
  double slln_band = 0.2;
  double t0 = 1.0;
  double t1 = 0.5;
  std::optional<double> dt;
  std::size_t population_cap = 1'000'000;
};

/// Closed-form data versus a grid solve, plus the condition checkers.
ExperimentReport spectral_report(const ModelSpec& model, const SpectralTriple& spectral,
                                 const std::optional<SpectralTriple>& grid,
                                 const ExperimentSettings& settings);

/// MC mean of M_t against h(x) at every t in t_grid, and P(M_T > delta) > 0.
ExperimentReport martingale_and_llogl_experiment(const ModelSpec& model,
                                                 const SpectralTriple& spectral,
                                                 const ExperimentSettings& settings);

/// D(t) = mean |e^{l1 t} X_t(f) - M_Tmax <f, h>| over t_grid; passes when D
/// decreases across the upper half of t_grid and D(t_max) < D(t_min) / 2.
/// Throws PreconditionError when f is not dominated by a multiple of h.
ExperimentReport wlln_experiment(const ModelSpec& model, const SpectralTriple& spectral,
                                 const ExperimentSettings& settings);

/// r_n = X_{n sigma}(f) / (X_{n sigma}(h) <f, h>) along single paths.
ExperimentReport slln_experiment(const ModelSpec& model, const SpectralTriple& spectral,
                                 const ExperimentSettings& settings);

/// Importance sampling versus plain MC versus quadrature, spine fission counts
/// and conditional Poisson equidispersion.
ExperimentReport spine_consistency_experiment(const ModelSpec& model,
                                              const SpectralTriple& spectral,
                                              const ExperimentSettings& settings);

/// Paired comparison of spine_decomposition(T) and Z(T) under the spine measure.
ExperimentReport spine_decomposition_experiment(const ModelSpec& model,
                                                const SpectralTriple& spectral,
                                                const ExperimentSettings& settings);

/// sup of f / h over successively refined samples of E, or nullopt when the
/// sup keeps growing (f is not dominated by c h).
std::optional<double> domination_constant(const std::function<double(double)>& f,
                                          const ModelSpec& model,
                                          const SpectralTriple& spectral);

/// CSV header: experiment,model,t,estimate,stderr,oracle,provenance,verdict
void write_report_csv(std::ostream& out, const std::vector<ExperimentReport>& reports);
/// Structured report document (17-significant-digit numbers, no wall clock).
void write_report_json(std::ostream& out, const ExperimentReport& report);
ExperimentReport read_report_json(std::istream& in);

}  // namespace bhp
