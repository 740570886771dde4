#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nascost/graph.hpp"

namespace nascost {

/// Builds a scalar loss on g from leaves holding the given inputs.
using LossBuilder = std::function<Var(Graph& g, const std::vector<Var>& leaves)>;

struct GradcheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::uint64_t seed = 0;
  bool passed = false;
};

struct GradcheckOptions {
  std::size_t coordinates = 10;
  double step = 1e-5;
  double tolerance = 1e-4;
  double floor = 1e-6;  // denominator floor for the relative error
};

/// Central differences on randomly chosen input coordinates against the
/// analytic gradient of one backward pass.
GradcheckResult gradcheck(const std::string& name, const std::vector<Tensor>& inputs, const LossBuilder& loss,
                          std::uint64_t seed, const GradcheckOptions& opt = {});

/// Names accepted by run_primitive_gradcheck.
const std::vector<std::string>& gradcheck_primitives();
/// Checks one named primitive (or "minimal_cell" for the full network loss)
/// on random inputs in [-1, 1] drawn from `seed`.
GradcheckResult run_primitive_gradcheck(const std::string& name, std::uint64_t seed, const GradcheckOptions& opt = {});

}  // namespace nascost
