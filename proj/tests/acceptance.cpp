// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "bhp/cli.hpp"
#include "bhp/forest.hpp"
#include "bhp/parallel.hpp"
#include "bhp/spectral.hpp"
#include "bhp/spine.hpp"
#include "bhp/verify.hpp"

using namespace bhp;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Independent oracles.
double ou_phi(double c, double b, double x) {
  const double alpha = std::sqrt(c * c - 2.0 * b);
  return std::pow(alpha / c, 0.25) * std::exp(0.5 * (c - alpha) * x * x);
}

// E_x X_t(1) for killed BM on (0, pi) with rate beta: the sine series of 1.
double interval_mass_oracle(double beta, double t, double x) {
  double sum = 0.0;
  for (int n = 1; n < 400; n += 2)
    sum += std::exp(-0.5 * n * n * t) * (2.0 / kPi) * std::sin(n * x) * (2.0 / n);
  return std::exp(beta * t) * sum;
}

bool row_passes(const ExperimentReport& r, const std::string& label) {
  bool found = false;
  for (const auto& c : r.comparisons) {
    if (c.label != label) continue;
    found = true;
    if (c.verdict != Verdict::pass) return false;
  }
  return found;
}

const Comparison* row(const ExperimentReport& r, const std::string& label, double t = -1.0) {
  for (const auto& c : r.comparisons)
    if (c.label == label && (t < 0.0 || (c.t && *c.t == t))) return &c;
  return nullptr;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"bhp_lab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

Outcome criterion1() {
  const auto iv = catalog_interval(1.0);
  const auto grid = grid_spectral_triple(iv.model, 2000, 2);
  const double beta = 1.0;
  const double l1 = 0.5 - beta, gap = 1.5;
  double sup = 0.0;
  const GridSpectrum& g = *grid.grid();
  for (std::size_t i = 0; i < g.grid.size(); ++i) {
    const double x = g.grid.nodes[i];
    sup = std::max(sup, std::abs(g.modes[0].vector[i] - std::sqrt(2.0 / kPi) * std::sin(x)));
  }
  Outcome o;
  o.passed = std::abs(grid.lambda1 - l1) <= 2e-3 && std::abs(grid.gap - gap) <= 5e-3 && sup <= 1e-3;
  o.detail = "lambda1=" + fmt("%.8f", grid.lambda1) + " gap=" + fmt("%.8f", grid.gap) +
             " |h-sqrt(2/pi)sin|_inf=" + fmt("%.2e", sup);
  return o;
}

Outcome criterion2() {
  const double c = 2.0, b = 1.5, a = 0.1;
  const auto ou = catalog_ou(c, b, a);
  const auto grid = grid_spectral_triple(ou.model, 3000, 2, 6.0);
  const double alpha = std::sqrt(c * c - 2.0 * b);
  const double l1 = -(0.5 * (c - alpha) + a);
  double worst = 0.0;
  for (int i = 0; i <= 600; ++i) {
    const double x = -3.0 + i * 0.01;
    worst = std::max(worst, std::abs(grid.h(x) - ou_phi(c, b, x)) / ou_phi(c, b, x));
  }
  Outcome o;
  o.passed = std::abs(grid.lambda1 - l1) <= 1e-2 && worst <= 1e-2;
  o.detail = "lambda1=" + fmt("%.8f", grid.lambda1) + " (oracle " + fmt("%.3f", l1) +
             ") max rel h error on [-3,3]=" + fmt("%.2e", worst);
  return o;
}

Outcome criterion3() {
  const auto iv = catalog_interval(1.0);
  const std::size_t n = 50000;
  const auto samples = parallel_replicas(n, 1, [&](std::size_t i) {
    RandomStream rng(replica_seed(3, i));
    const Forest forest = simulate_forest(iv.model, kPi / 2, 1.0, rng);
    return static_cast<double>(snapshot(forest, 1.0).size());
  });
  const Estimate e = summarize(samples);
  const double oracle = interval_mass_oracle(1.0, 1.0, kPi / 2);
  Outcome o;
  o.passed = std::abs(e.mean - oracle) <= 3.0 * e.stderr_;
  o.detail = "E X_1(1)=" + fmt("%.5f", e.mean) + " +- " + fmt("%.5f", e.stderr_) + " oracle " +
             fmt("%.5f", oracle);
  return o;
}

Outcome criterion4() {
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  ExperimentSettings s;
  s.x = 0.0;
  s.t_grid = {1.0, 2.0};
  s.replicas = 50000;
  s.seed = 4;
  const auto r = martingale_and_llogl_experiment(ou.model, ou.spectral, s);
  const double oracle = std::pow(0.5, 0.25);
  const Comparison* m1 = row(r, "mean M_t", 1.0);
  const Comparison* m2 = row(r, "mean M_t", 2.0);
  Outcome o;
  o.passed = m1 && m2 && std::abs(m1->estimate - oracle) <= 3.0 * m1->stderr_ &&
             std::abs(m2->estimate - oracle) <= 3.0 * m2->stderr_;
  if (m1 && m2)
    o.detail = "M_1=" + fmt("%.5f", m1->estimate) + " +- " + fmt("%.5f", m1->stderr_) + ", M_2=" +
               fmt("%.5f", m2->estimate) + " +- " + fmt("%.5f", m2->stderr_) + " oracle " +
               fmt("%.6f", oracle);
  return o;
}

Outcome criterion5() {
  const auto iv = catalog_interval(1.0);
  ExperimentSettings s;
  s.x = kPi / 2;
  s.horizon = 1.0;
  s.replicas = 20000;
  s.seed = 5;
  s.f.kind = TestFunction::Kind::h;
  const auto r = spine_consistency_experiment(iv.model, iv.spectral, s);
  // E X_1(h) = e^{-lambda1} h(pi/2) = e^{1/2} sqrt(2/pi).
  const double oracle = std::exp(0.5) * std::sqrt(2.0 / kPi);
  const Comparison* is = row(r, "importance sampling vs quadrature");
  const Comparison* mc = row(r, "plain MC vs quadrature");
  Outcome o;
  o.passed = r.verdict == Verdict::pass && is && mc && std::abs(is->estimate - oracle) <= 1e-9 &&
             std::abs(mc->estimate - oracle) <= 3.0 * mc->stderr_;
  if (is && mc) {
    o.detail = "IS=" + fmt("%.6f", is->estimate) + " MC=" + fmt("%.5f", mc->estimate) + " +- " +
               fmt("%.5f", mc->stderr_) + " oracle " + fmt("%.6f", oracle);
    const Comparison* fc = row(r, "fission count minus path quadrature");
    const Comparison* eq = row(r, "(n - A)^2 - n (conditional equidispersion)");
    if (fc && eq)
      o.detail += "; n-A=" + fmt("%.4f", fc->estimate) + " +- " + fmt("%.4f", fc->stderr_) +
                  "; disp=" + fmt("%.4f", eq->estimate) + " +- " + fmt("%.4f", eq->stderr_);
  }
  return o;
}

Outcome criterion6() {
  Outcome o;
  o.passed = true;
  const auto iv = catalog_interval(1.0);
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  for (const auto* entry : {&iv, &ou}) {
    ExperimentSettings s;
    s.x = entry->model.is_interval() ? kPi / 2 : 0.0;
    s.horizon = 1.0;
    s.replicas = 20000;
    s.seed = 6;
    const auto r = spine_decomposition_experiment(entry->model, entry->spectral, s);
    const Comparison* a = row(r, "mean spine decomposition");
    const Comparison* b = row(r, "mean Z(T)");
    const bool ok = row_passes(r, "unpaired difference") && row_passes(r, "paired difference");
    o.passed = o.passed && ok;
    if (a && b)
      o.detail += entry->model.id + ": " + fmt("%.4f", a->estimate) + " +- " + fmt("%.4f", a->stderr_) +
                  " vs " + fmt("%.4f", b->estimate) + " +- " + fmt("%.4f", b->stderr_) + "  ";
  }
  return o;
}

Outcome criterion7() {
  Outcome o;
  o.passed = true;
  const auto iv = catalog_interval(1.0);
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  for (const auto* entry : {&ou, &iv}) {
    const auto& sp = entry->spectral;
    const auto t05 = kernel_table(sp, 0.5), t1 = kernel_table(sp, 1.0), t15 = kernel_table(sp, 1.5);
    const double sym = std::max({table_symmetry_error(t05), table_symmetry_error(t1)});
    const double rows = std::max({row_normalization_error(t05), row_normalization_error(t1),
                                  row_normalization_error(t15)});
    const double ck = chapman_kolmogorov_error(t05, t1, t15);
    const bool poincare = check_poincare(sp, {}, {0.5, 1.0, 2.0}, 1e-9).passed;
    const auto aiu = check_condition_AIU(sp, 0.5);
    const bool ok = sym <= 1e-12 && rows <= 1e-6 && ck <= 1e-6 && poincare && aiu.bound_passed;
    o.passed = o.passed && ok;
    o.detail += entry->model.id + ": sym " + fmt("%.1e", sym) + " row " + fmt("%.1e", rows) + " CK " +
                fmt("%.1e", ck) + " poincare " + (poincare ? "ok" : "FAIL") + " bound ratio " +
                fmt("%.3f", aiu.worst_bound_ratio) + "  ";
  }
  return o;
}

Outcome criterion8() {
  const auto iv = catalog_interval(1.0);
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  const auto w_ou = check_condition_W(ou.spectral, 1.0);
  const auto w_iv = check_condition_W(iv.spectral, 1.0);
  const auto a_iv = check_condition_AIU(iv.spectral, 0.5);
  const auto a_ou = check_condition_AIU(ou.spectral, 0.5);
  // m~-trace of P^h_1: 1 / (1 - e^{-alpha}) for OU, sum_n e^{-(n^2-1)/2} on the interval.
  const double trace_ou = 1.0 / (1.0 - std::exp(-1.0));
  double trace_iv = 0.0;
  for (int n = 1; n < 50; ++n) trace_iv += std::exp(-0.5 * (n * n - 1.0));
  Outcome o;
  o.passed = w_ou.finite.value_or(false) && w_iv.finite.value_or(false) &&
             std::abs(w_ou.value - trace_ou) < 1e-6 && std::abs(w_iv.value - trace_iv) < 1e-6 &&
             a_iv.holds.value_or(false) && a_ou.holds.has_value() && !*a_ou.holds;
  o.detail = "W ou=" + fmt("%.6f", w_ou.value) + " (" + fmt("%.6f", trace_ou) + ") W interval=" +
             fmt("%.6f", w_iv.value) + " (" + fmt("%.6f", trace_iv) + "); AIU interval: " +
             a_iv.verdict + "; AIU ou: " + a_ou.verdict;
  return o;
}

Outcome criterion9() {
  const auto ou = catalog_ou(2.0, 1.5, 0.1);
  ExperimentSettings s;
  s.x = 0.0;
  s.t_grid = {4.0, 5.0, 6.0, 7.0, 8.0};
  s.t_max = 10.0;
  s.dt = 0.01;
  s.replicas = 20000;
  s.seed = 20240601;
  s.f = {TestFunction::Kind::h_indicator, -1.0, 1.0};
  const auto r = wlln_experiment(ou.model, ou.spectral, s);
  const Comparison* d4 = row(r, "D(t)", 4.0);
  const Comparison* d8 = row(r, "D(t)", 8.0);
  Outcome o;
  if (!d4 || !d8) return o;
  o.passed = d8->estimate < 0.5 * d4->estimate;
  o.detail = "D(4)=" + fmt("%.5f", d4->estimate) + " +- " + fmt("%.5f", d4->stderr_) + " D(8)=" +
             fmt("%.5f", d8->estimate) + " +- " + fmt("%.5f", d8->stderr_) + " ratio " +
             fmt("%.3f", d8->estimate / d4->estimate) + " (report verdict " +
             verdict_name(r.verdict) + ")";
  return o;
}

Outcome criterion10() {
  const auto iv = catalog_interval(1.0);
  ExperimentSettings s;
  s.x = kPi / 2;
  s.lattice_spacing = 0.5;
  s.n_max = 16;
  s.replicas = 200;
  s.seed = 20240601;
  s.f = {TestFunction::Kind::h_indicator, 0.0, kPi / 2};
  const auto r = slln_experiment(iv.model, iv.spectral, s);
  const Comparison* frac = row(r, "fraction of surviving paths with max |r_n - 1| < band");
  const Comparison* surv = row(r, "surviving paths");
  const Comparison* med = row(r, "median max |r_n - 1| (last quarter)");
  Outcome o;
  if (!frac || !surv || !med) return o;
  o.passed = frac->estimate >= 0.9;
  o.detail = "surviving " + fmt("%.0f", surv->estimate) + "/200, fraction within 0.2: " +
             fmt("%.3f", frac->estimate) + ", median max|r_n-1| " + fmt("%.3f", med->estimate);
  return o;
}

Outcome criterion11() {
  const fs::path root = fs::temp_directory_path() / ("bhp_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);
  const std::vector<std::pair<std::string, std::string>> configs = {
      {"spine-decomposition",
       R"({"model": {"kind": "interval", "beta": 1}, "experiment": {"name": "spine-decomposition", "horizon": 1, "replicas": 2000}, "seed": 11})"},
      {"martingale",
       R"({"model": {"kind": "ou", "c": 2, "b": 1.5, "a": 0.1}, "experiment": {"name": "martingale", "x": 0, "t_grid": [1, 2], "replicas": 4000}, "seed": 12})"},
      {"wlln",
       R"({"model": {"kind": "ou", "c": 2, "b": 1.5, "a": 0.1}, "experiment": {"name": "wlln", "t_grid": [2, 3, 4], "t_max": 5, "dt": 0.01, "replicas": 500, "f": {"kind": "h_indicator", "lo": -1, "hi": 1}}, "seed": 13})"},
  };
  Outcome o;
  o.passed = true;
  for (const auto& [name, text] : configs) {
    const fs::path cfg = root / (name + ".json");
    std::ofstream(cfg) << text;
    const fs::path a = root / (name + "-w1"), b = root / (name + "-w8"), c = root / (name + "-replay");
    const int ca = cli({"verify", "--config", cfg.string(), "--workers", "1", "--out", a.string()});
    const int cb = cli({"verify", "--config", cfg.string(), "--workers", "8", "--out", b.string()});
    const int cc = cli({"--config", (a / "manifest.json").string(), "--workers", "3", "--out", c.string()});
    bool same = ca == cb && cb == cc && ca != 1;
    for (const char* file : {"report.json", "results.csv", "manifest.json"}) {
      const std::string ref = read_file(a / file);
      same = same && !ref.empty() && ref == read_file(b / file) && ref == read_file(c / file);
    }
    o.passed = o.passed && same;
    o.detail += name + (same ? " identical  " : " DIFFERS  ");
  }
  const fs::path sim = root / "simulate.json";
  std::ofstream(sim) << R"({"model": {"kind": "interval", "beta": 1}, "simulate": {"horizon": 3, "observation_times": [1, 2]}, "seed": 99})";
  cli({"simulate", "--config", sim.string(), "--out", (root / "s1").string()});
  cli({"simulate", "--config", sim.string(), "--out", (root / "s2").string()});
  const std::string f1 = read_file(root / "s1" / "forest.tsv");
  const bool sim_same = !f1.empty() && f1 == read_file(root / "s2" / "forest.tsv");
  o.passed = o.passed && sim_same;
  o.detail += std::string("simulate ") + (sim_same ? "identical" : "DIFFERS");
  fs::remove_all(root);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "spectral oracle, interval (N=2000)", 10, criterion1},
      {2, "spectral oracle, OU (R=6, N=3000)", 20, criterion2},
      {3, "many-to-one, interval, 5e4 forests", 120, criterion3},
      {4, "martingale mean, OU, 5e4 forests", 180, criterion4},
      {5, "spine measure consistency, interval", 180, criterion5},
      {6, "spine decomposition tower identity", 180, criterion6},
      {7, "kernel analytics", 60, criterion7},
      {8, "condition checkers W / AIU", 60, criterion8},
      {9, "WLLN halving, OU", 600, criterion9},
      {10, "SLLN band, interval", 600, criterion10},
      {11, "determinism (manifest replay, 1 vs 8 workers)", 600, criterion11},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.passed = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs <= c.limit_seconds;
    const bool ok = o.passed && in_time;
    if (!ok) ++failures;
    std::printf("%s  %2d  %-48s %7.1fs (limit %gs)  %s%s\n", ok ? "PASS" : "FAIL", c.id, c.name, secs,
                c.limit_seconds, o.detail.c_str(), in_time ? "" : "  [over time limit]");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
