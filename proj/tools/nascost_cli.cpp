#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nascost/decompose.hpp"
#include "nascost/emit.hpp"
#include "nascost/gradcheck.hpp"

using namespace nascost;
using nlohmann::json;

namespace {

int finish(const std::vector<Certificate>& certs, const std::string& out_file) {
  json report = json::array();
  bool ok = true;
  for (const auto& c : certs) {
    report.push_back(c);
    ok = ok && c.passed;
  }
  const std::string text = report.dump(2) + "\n";
  if (out_file.empty()) std::cout << text;
  else write_file(out_file, text);
  for (const auto& c : certs)
    std::fprintf(stderr, "%-50s %-12s residual %.3e  tol %.3e\n", c.name.c_str(), to_string(c.status).c_str(),
                 c.residual, c.tolerance);
  return ok ? 0 : 1;
}

std::filesystem::path out_dir(const ExperimentConfig& cfg, const std::string& override_dir) {
  return override_dir.empty() ? cfg.output_dir : std::filesystem::path(override_dir);
}

int cmd_gradcheck(const std::vector<std::string>& ops, int seeds, const std::string& out_file) {
  std::vector<Certificate> certs;
  const auto& names = ops.empty() ? gradcheck_primitives() : ops;
  for (const auto& name : names)
    for (int s = 0; s < seeds; ++s) {
      const GradcheckResult g = run_primitive_gradcheck(name, static_cast<std::uint64_t>(s));
      Certificate c;
      c.name = "gradcheck/" + g.name;
      c.seed = g.seed;
      c.residual = g.max_rel_error;
      c.tolerance = GradcheckOptions{}.tolerance;
      c.context = {{"coordinates", g.coordinates}};
      c.judge();
      certs.push_back(c);
    }
  return finish(certs, out_file);
}

int cmd_evolve(const std::string& config, const std::string& framework, const std::string& mode,
               const std::string& out) {
  ExperimentConfig cfg = load_config(config);
  if (!framework.empty()) cfg.framework = framework_from_string(framework);
  if (!mode.empty()) cfg.mode = run_mode_from_string(mode);
  cfg.validate();
  const RunResult r = run_evolution(cfg);
  const auto dir = out_dir(cfg, out);
  emit_run(r.log, dir);
  json summary{{"output_dir", dir.string()}, {"epochs", r.log.epochs.size()}, {"aborted", r.log.aborted}};
  if (r.log.aborted) summary["abort_reason"] = r.log.abort_reason;
  if (r.log.epochs.size() >= 3) summary["patterns"] = detect_patterns(r.log);
  std::cout << summary.dump(2) << "\n";
  if (r.log.theta_examples_search != 0) return 1;
  return r.log.aborted ? 2 : 0;
}

int cmd_decompose(const std::string& config, const std::string& out, double min_accuracy) {
  ExperimentConfig cfg = load_config(config);
  cfg.validate();
  const DecomposeReport r = decompose_training(cfg, min_accuracy);
  const auto dir = out_dir(cfg, out);
  emit_run(r.run.log, dir);
  const std::vector<Certificate> certs{r.converged, r.crossing};
  write_file(dir / "decompose.json", json(certs).dump(2) + "\n");
  return finish(certs, "");
}

int cmd_mc_cost(const std::string& config, const std::string& out) {
  ExperimentConfig cfg = load_config(config);
  cfg.validate();
  const RunResult r = run_evolution(cfg);
  if (r.log.aborted) {
    std::cerr << "training aborted: " << r.log.abort_reason << "\n";
    return 2;
  }
  MonteCarloConfig mc;
  mc.epochs = cfg.mc_epochs;
  mc.batch_size = cfg.batch_size;
  mc.seed = cfg.seed;
  mc.replicas = cfg.mc_replicas;
  const MonteCarloResult res = monte_carlo_cost(cfg.network, r.params, make_dataset(cfg), mc);
  const auto dir = out_dir(cfg, out);
  emit_run(r.log, dir / "training");
  emit_costs(res, cfg.network, dir);
  json edges = json::array();
  for (std::size_t c = 0; c < cfg.network.cells.size(); ++c)
    for (Edge e : cfg.network.cells[c].edges()) {
      const RunningStat s = res.total.edge_pooled(static_cast<int>(c), e);
      edges.push_back({{"cell", c}, {"edge", e.str()}, {"mean", s.mean}, {"var", s.variance()}, {"n", s.n}});
    }
  std::cout << json{{"output_dir", dir.string()}, {"edges", edges}}.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& variant, const std::string& out) {
  ExperimentConfig cfg = load_config(config);
  if (variant != "simplified" && variant != "modified")
    throw std::invalid_argument("variant must be simplified or modified");
  const AblationReport r = intermediate_edge_ablation(
      variant == "simplified" ? AblationVariant::simplified : AblationVariant::modified, cfg);
  const auto dir = out_dir(cfg, out);
  emit_run(r.log, dir);
  json edges = json::array();
  for (const auto& [e, s] : r.edges)
    edges.push_back({{"edge", e.str()}, {"mean", s.mean}, {"var", s.variance()}, {"n", s.n}});
  std::cout << json{{"variant", variant}, {"output_dir", dir.string()}, {"edges", edges}}.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cost assignment analysis for differentiable architecture search"};
  app.require_subcommand(1);

  std::vector<std::string> ops;
  int gc_seeds = 5;
  std::string report_file;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of every primitive and the cell loss");
  gc->add_option("--ops", ops, "primitives to check (default: all)");
  gc->add_option("--seeds", gc_seeds, "seeds per primitive")->check(CLI::PositiveNumber);
  gc->add_option("--report", report_file, "write the JSON report here instead of stdout");

  std::string suite = "all";
  std::uint64_t seed = 0;
  auto* verify = app.add_subcommand("verify", "run the numerical certificate suite");
  verify->add_option("--suite", suite)->check(CLI::IsMember({"all", "thm1", "thm2", "cor12", "norms", "estimators"}));
  verify->add_option("--seed", seed);
  verify->add_option("--report", report_file, "write the JSON report here instead of stdout");

  std::string config, framework, mode, out, variant = "simplified";
  double min_accuracy = 0.95;
  auto* mc = app.add_subcommand("mc-cost", "train, then estimate per-edge costs by uniform sampling");
  auto* evolve = app.add_subcommand("evolve", "run an architecture search and log its evolution");
  auto* decompose = app.add_subcommand("decompose", "frozen-architecture training with output-cost sign checks");
  auto* ablate = app.add_subcommand("ablate", "intermediate-edge cost ablation on a variant cell");
  for (auto* sc : {mc, evolve, decompose, ablate}) {
    sc->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    sc->add_option("--out", out, "output directory (default: output_dir from the config)");
  }
  evolve->add_option("--framework", framework)->check(CLI::IsMember({"snas", "dsnas", "darts", "proxyless"}));
  evolve->add_option("--mode", mode)->check(CLI::IsMember({"single", "single_level", "bilevel", "frozen", "frozen_alpha"}));
  decompose->add_option("--min-accuracy", min_accuracy)->check(CLI::Range(0.0, 1.0));
  ablate->add_option("--variant", variant)->check(CLI::IsMember({"simplified", "modified"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gc) return cmd_gradcheck(ops, gc_seeds, report_file);
    if (*verify) return finish(run_suite(suite, seed), report_file);
    if (*evolve) return cmd_evolve(config, framework, mode, out);
    if (*decompose) return cmd_decompose(config, out, min_accuracy);
    if (*mc) return cmd_mc_cost(config, out);
    if (*ablate) return cmd_ablate(config, variant, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
