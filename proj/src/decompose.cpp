#include "nascost/decompose.hpp"

#include <numeric>

#include "nascost/rng.hpp"

namespace nascost {

DecomposeReport decompose_training(ExperimentConfig cfg, double min_accuracy, int draws) {
  cfg.mode = RunMode::frozen_alpha;
  DecomposeReport r;
  r.run = run_evolution(cfg);
  const RunLog& log = r.run.log;

  const Dataset data = make_dataset(cfg);
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const ArchState uniform = ArchState::uniform(cfg.network, hash_counter({cfg.seed, 0xdcULL}));
  double best_acc = -1.0;
  for (int d = 0; d < draws; ++d) {
    Certificate c = verify_converged_negativity(cfg.network, r.run.params, data, idx,
                                                sample_discrete(uniform, true, static_cast<std::uint64_t>(d)),
                                                min_accuracy);
    c.seed = cfg.seed;
    c.context["draw"] = d;
    const double acc = c.context["accuracy"].get<double>();
    if (acc > best_acc) best_acc = acc, r.converged = c;
    if (c.status != CertStatus::inapplicable) {
      r.converged = c;
      break;
    }
  }

  Certificate& x = r.crossing;
  x.name = "cost_sign_crossing";
  x.seed = cfg.seed;
  x.tolerance = 0.0;
  if (log.epochs.size() < 2) {
    x.status = CertStatus::inapplicable;
    x.context["reason"] = "needs at least two logged epochs";
    return r;
  }
  const double first = log.epochs.front().train.C, last = log.epochs.back().train.C;
  auto traj = nlohmann::json::array();
  for (const auto& e : log.epochs) traj.push_back(e.train.C);
  x.context = {{"first_C", first}, {"last_C", last}, {"trajectory", traj},
               {"final_accuracy", log.epochs.back().train.accuracy}};
  // margin by which the weaker of the two sign conditions holds, negated
  x.residual = std::max(-first, last);
  x.passed = first > 0.0 && last < 0.0;
  x.status = x.passed ? CertStatus::pass : CertStatus::fail;
  return r;
}

}  // namespace nascost
