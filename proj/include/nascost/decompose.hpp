#pragma once

// Frozen-architecture training followed by the output-cost sign checks:
// C < 0 once the network fits its data, and the per-epoch C trajectory
// crossing from positive to negative.

#include "nascost/experiment.hpp"
#include "nascost/theorem.hpp"

namespace nascost {

struct DecomposeReport {
  RunResult run;
  Certificate converged;  // converged_negativity on the training data
  Certificate crossing;   // first logged C > 0 and last < 0
};

/// Forces frozen_alpha mode. The converged check tries up to `draws`
/// uniform sub-networks and keeps the first that meets `min_accuracy`
/// (otherwise the most accurate one, reported inapplicable).
DecomposeReport decompose_training(ExperimentConfig cfg, double min_accuracy = 0.95, int draws = 16);

}  // namespace nascost
