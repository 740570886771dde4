// Acceptance run: one PASS/FAIL line per criterion, details indented below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nascost/decompose.hpp"
#include "nascost/emit.hpp"
#include "nascost/gradcheck.hpp"

using namespace nascost;
namespace fs = std::filesystem;

#ifndef NASCOST_CONFIG_DIR
#define NASCOST_CONFIG_DIR "configs"
#endif

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void require(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok    " : "FAILED") + "  " + what);
  }
  void note(const std::string& what) { notes.push_back("        " + what); }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

ExperimentConfig config(const std::string& name, std::uint64_t seed) {
  ExperimentConfig c = load_config(fs::path(NASCOST_CONFIG_DIR) / name);
  c.seed = seed;
  return c;
}

CertSetup minimal_setup(std::uint64_t seed, std::size_t cells = 1) {
  CertSetup s;
  for (std::size_t c = 0; c < cells; ++c) s.spec.cells.push_back(build_minimal_cell());
  s.seed = seed;
  return s;
}

constexpr OpKind kBlockingOps[] = {OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::sep_conv_3x3,
                                   OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::sep_conv_5x5};

void blocking_sweep(Outcome& o, const CertSetup& s, const std::string& label) {
  for (OpKind op : kBlockingOps) {
    const Certificate c = verify_bn_blocking(s, {{{Edge{2, 3}, op}}});
    o.require(c.status == CertStatus::pass,
              label + " " + to_string(op) + fmt(": |term| %.2e, tol %.2e", c.residual, c.tolerance));
  }
}

Outcome gradient_checks() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& name : gradcheck_primitives())
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const GradcheckResult r = run_primitive_gradcheck(name, seed);
      if (r.coordinates != 10) o.require(false, name + " checked " + std::to_string(r.coordinates) + " coordinates");
      if (!(r.max_rel_error < 1e-4)) o.require(false, name + fmt(" seed %.0f: rel err %.2e", double(seed), r.max_rel_error));
      if (r.max_rel_error > worst) worst = r.max_rel_error, worst_name = name;
    }
  o.require(worst < 1e-4, std::to_string(gradcheck_primitives().size()) + " checks x 5 seeds, worst " + worst_name +
                              fmt(" rel err %.2e", worst));
  const double t = seconds_since(t0);
  o.require(t < 60.0, fmt("runtime %.1f s (< 60 s)", t));
  return o;
}

Outcome blocking_certificate() {
  Outcome o;
  const auto t0 = Clock::now();
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    blocking_sweep(o, minimal_setup(seed), "seed " + std::to_string(seed));
    const Certificate skip = verify_bn_blocking(minimal_setup(seed), {{{Edge{2, 3}, OpKind::skip_connect}}});
    o.require(skip.status == CertStatus::exception,
              "seed " + std::to_string(seed) + " skip_connect reported as " + to_string(skip.status) +
                  fmt(", skip/edge cost ratio %.3f", skip.context["skip_to_mean_edge_cost_ratio"].get<double>()));
  }
  const double t = seconds_since(t0);
  o.require(t < 60.0, fmt("runtime %.1f s (< 60 s)", t));
  return o;
}

Outcome norm_variants() {
  Outcome o;
  CertSetup ln = minimal_setup(0);
  ln.spec.norm.kind = NormKind::layer;
  blocking_sweep(o, ln, "layer norm");
  const Certificate orth = verify_norm_orthogonality(ln);
  o.require(orth.passed, fmt("layer norm orthogonality %.2e (tol %.2e)", orth.residual, orth.tolerance));
  const Certificate in = verify_instance_norm_zero_cost(minimal_setup(0));
  o.require(in.passed && in.residual < 1e-10, fmt("instance norm, affine off: max |edge cost| %.2e", in.residual));
  for (StackingOrder order : {StackingOrder::conv_relu_norm, StackingOrder::conv_norm_relu}) {
    CertSetup s = minimal_setup(0);
    s.spec.order = order;
    blocking_sweep(o, s, to_string(order));
  }
  return o;
}

Outcome cost_identity() {
  Outcome o;
  const auto t0 = Clock::now();
  const Certificate c = verify_cost_identity(minimal_setup(0), 100);
  o.require(c.passed && c.residual < 1e-6, fmt("100 triples: max |C - (L - H)| %.2e", c.residual));
  // published table rows, two-decimal rounding
  o.require(std::abs(-0.11 - (0.06 - 0.17)) < 1e-9, "-0.11 = 0.06 - 0.17");
  o.require(std::abs(2.18 - (2.92 - 0.74)) < 1e-9, "2.18 = 2.92 - 0.74");
  const double t = seconds_since(t0);
  o.require(t < 60.0, fmt("runtime %.1f s (< 60 s)", t));
  return o;
}

Outcome two_cell_stack() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst_ratio = 0.0, worst_last = 0.0;
  bool all = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Certificate c = verify_cost_sum_nonlast(minimal_setup(seed, 2));
    const double first = c.context["nonlast_sums"][0].get<double>();
    const double last = c.context["last_sum"].get<double>();
    const double lh = c.context["L_minus_H"].get<double>();
    all = all && c.passed && std::abs(last - lh) < 1e-6;
    worst_ratio = std::max(worst_ratio, std::abs(first) / std::abs(last));
    worst_last = std::max(worst_last, std::abs(last - lh));
  }
  o.require(all && worst_ratio < 1e-6, fmt("20 samples: max |first-cell sum| / |last-cell sum| %.2e", worst_ratio));
  o.require(worst_last < 1e-6, fmt("max |last-cell sum - (L - H)| %.2e", worst_last));
  const double t = seconds_since(t0);
  o.require(t < 60.0, fmt("runtime %.1f s (< 60 s)", t));
  return o;
}

Outcome init_positivity() {
  Outcome o;
  const auto t0 = Clock::now();
  for (InitScheme init : {InitScheme::he_normal, InitScheme::unit_normal}) {
    CertSetup s = minimal_setup(0);
    s.init = init;
    const Certificate c = verify_init_positivity(s, 200, 0.01);
    o.require(c.passed && c.context["mean_C"].get<double>() > 0.0 && c.p_value && *c.p_value < 0.01,
              to_string(init) + fmt(", 200 inits: mean C %.4f, one-sided p %.2e", c.context["mean_C"].get<double>(),
                                    c.p_value.value_or(1.0)));
  }
  const Certificate g = verify_gaussian_lemma(0, 1'000'000, 1.0);
  o.require(g.passed, fmt("gaussian lemma: |MC - e| %.4f within 3 SE = %.4f", g.residual, g.tolerance));
  const double t = seconds_since(t0);
  o.require(t < 300.0, fmt("runtime %.1f s (< 300 s)", t));
  return o;
}

Outcome converged_negativity() {
  Outcome o;
  const auto t0 = Clock::now();
  const DecomposeReport r = decompose_training(config("decompose_frozen.json", 0));
  const auto& x = r.crossing.context;
  o.require(r.converged.status == CertStatus::pass,
            "converged C " + fmt("%.4f at accuracy %.3f", r.converged.context["C"].get<double>(),
                                 r.converged.context["accuracy"].get<double>()) +
                " (" + to_string(r.converged.status) + ")");
  o.require(r.crossing.passed, fmt("trajectory C %.4f at epoch 1 -> %.4f at the end", x.value("first_C", NAN),
                                   x.value("last_C", NAN)));
  const double t = seconds_since(t0);
  o.require(t < 600.0, fmt("runtime %.1f s (< 600 s)", t));
  return o;
}

Outcome estimator_equivalences() {
  Outcome o;
  const auto t0 = Clock::now();
  const Certificate d = verify_darts_autodiff(minimal_setup(0));
  o.require(d.passed && d.residual < 1e-6, fmt("darts vs autodiff rel err %.2e", d.residual));
  const Certificate s = verify_snas_discrete_limit(0, 10'000, 1e-4);
  o.require(s.passed, fmt("snas (temperature 1e-4) vs dsnas, 1e4 samples: max |z| %.2f (< 3)", s.residual));
  const double t = seconds_since(t0);
  o.require(t < 300.0, fmt("runtime %.1f s (< 300 s)", t));
  return o;
}

double slope(const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x, sy += y[i], sxx += x * x, sxy += x * y[i];
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

Outcome pattern_reproduction() {
  Outcome o;
  int p12 = 0, p3 = 0, simplified = 0, modified = 0;
  double longest = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto t0 = Clock::now();
    const RunResult single = run_evolution(config("p1p2_single_level.json", seed));
    longest = std::max(longest, seconds_since(t0));
    const PatternReport a = detect_patterns(single.log);
    p12 += a.p1_growing && a.p2_width_pref;
    o.note("seed " + std::to_string(seed) + " single-level: P1 " + (a.p1_growing ? "yes" : "no") + " (onset " +
           std::to_string(a.p1_onset.value_or(-1)) + ", recovery " + std::to_string(a.p1_recovery.value_or(-1)) +
           "), P2 " + (a.p2_width_pref ? "yes" : "no") +
           fmt(" (none dwell intermediate %.1f vs input %.1f)", a.intermediate_dwell, a.input_dwell));

    t0 = Clock::now();
    const RunResult bilevel = run_evolution(config("p3_bilevel.json", seed));
    longest = std::max(longest, seconds_since(t0));
    const PatternReport b = detect_patterns(bilevel.log);
    std::vector<double> probe;
    for (const auto& e : bilevel.log.epochs) probe.push_back(e.search_probe->C);
    const double s = slope(probe);
    const bool ok3 = b.p3_catastrophic && s > 0.0 && probe.back() > 0.0;
    p3 += ok3;
    o.note("seed " + std::to_string(seed) + " bilevel: P3 " + (b.p3_catastrophic ? "yes" : "no") +
           fmt(", search-split C %.3f -> %.3f, slope %.2e/epoch", probe.front(), probe.back(), s));

    t0 = Clock::now();
    const ExperimentConfig ac = config("ablation.json", seed);
    const AblationReport sa = intermediate_edge_ablation(AblationVariant::simplified, ac);
    const AblationReport ma = intermediate_edge_ablation(AblationVariant::modified, ac);
    longest = std::max(longest, seconds_since(t0));
    const double s12 = sa.at(Edge{1, 2}).mean, s02 = sa.at(Edge{0, 2}).mean;
    const double m12 = ma.at(Edge{1, 2}).mean, m02 = ma.at(Edge{0, 2}).mean;
    simplified += s12 > s02;
    modified += m12 < m02;
    o.note("seed " + std::to_string(seed) + fmt(" ablation: simplified cost(1,2) %.4f vs cost(0,2) %.4f", s12, s02) +
           fmt("; modified %.4f vs %.4f", m12, m02));
  }
  o.require(p12 >= 4, "P1 and P2 flagged on " + std::to_string(p12) + "/5 seeds");
  o.require(simplified >= 4, "simplified cell cost(1,2) > cost(0,2) on " + std::to_string(simplified) + "/5 seeds");
  o.require(modified >= 4, "modified cell reverses the order on " + std::to_string(modified) + "/5 seeds");
  o.require(p3 >= 4, "P3 with positive search-split C trend on " + std::to_string(p3) + "/5 seeds");
  o.require(longest < 1200.0, fmt("longest single run %.1f s (< 1200 s)", longest));
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome determinism() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "nascost_acceptance_determinism";
  for (const char* name : {"p3_bilevel.json", "p1p2_single_level.json"}) {
    ExperimentConfig c = config(name, 7);
    c.epochs = std::min(c.epochs, 8);
    for (const char* run : {"a", "b"}) {
      fs::remove_all(root / run);
      emit_run(run_evolution(c).log, root / run);
    }
    for (const char* file : {"alpha.csv", "cost.csv", "metrics.csv"}) {
      const std::string a = slurp(root / "a" / file), b = slurp(root / "b" / file);
      o.require(!a.empty() && a == b, std::string(name) + " " + file + ": " + std::to_string(a.size()) + " bytes identical");
    }
  }
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    const char* title;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"gradient checks", gradient_checks},
      {"blocking certificate on the intermediate edge", blocking_certificate},
      {"normalisation variants and stacking orders", norm_variants},
      {"output cost identity C = L - H", cost_identity},
      {"two-cell stack cost sums", two_cell_stack},
      {"positive cost at initialisation", init_positivity},
      {"negative cost after convergence", converged_negativity},
      {"estimator equivalences", estimator_equivalences},
      {"evolution pattern reproduction", pattern_reproduction},
      {"determinism of logged CSVs", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::printf("%s  %2zu  %s  (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].title, seconds_since(t0));
    for (const auto& n : o.notes) std::printf("        %s\n", n.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
