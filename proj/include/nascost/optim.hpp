#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace nascost {

struct OptimizerConfig {
  std::string kind = "sgd";  // sgd | adam
  double lr = 0.025;
  double momentum = 0.0;
  double weight_decay = 0.0;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

void to_json(nlohmann::json& j, const OptimizerConfig& c);
void from_json(const nlohmann::json& j, OptimizerConfig& c);

/// Stateful first-order optimizer over an indexed set of parameter slots.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg);

  /// Updates one slot in place. Throws std::runtime_error naming `name` if
  /// the gradient is not finite.
  void step(std::size_t slot, std::span<double> param, std::span<const double> grad, const std::string& name);
  /// Marks the end of an iteration (advances the Adam step count).
  void next() { ++t_; }

  const OptimizerConfig& config() const { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  long t_ = 1;
};

}  // namespace nascost
