#pragma once

// Search and training runs: configuration, the per-epoch log, evolution
// pattern detectors and the intermediate-edge cost ablation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nascost/cost.hpp"
#include "nascost/optim.hpp"

namespace nascost {

enum class RunMode { single_level, bilevel, frozen_alpha };
std::string to_string(RunMode m);
RunMode run_mode_from_string(const std::string& s);

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | cifar10
  std::size_t size = 512;
  double noise = 0.0;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
  std::vector<std::filesystem::path> files;
  std::size_t limit = 0;
};

struct TemperatureSchedule {
  double initial = 1.0;
  double final = 1.0;  // linear in epochs
  double at(int epoch, int epochs) const;
};

struct ExperimentConfig {
  NetworkSpec network;
  DatasetConfig dataset;
  OptimizerConfig theta_optimizer{"sgd", 0.025, 0.9, 3e-4};
  OptimizerConfig alpha_optimizer{"adam", 3e-4, 0.0, 1e-3, 0.5, 0.999, 1e-8};
  RunMode mode = RunMode::single_level;
  Framework framework = Framework::dsnas;
  int epochs = 10;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  TemperatureSchedule temperature;
  double split_ratio = 0.5;  // share of the data in the training split (bilevel)
  InitScheme init = InitScheme::he_normal;
  int mc_epochs = 1;         // mc-cost: estimation epochs after training
  int mc_replicas = 1;
  std::filesystem::path output_dir = "out";

  /// Throws std::invalid_argument on a bad split ratio, missing dataset
  /// files or an invalid network.
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Relative paths (network file, dataset files) resolve against `base`.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
ExperimentConfig load_config(const std::filesystem::path& file);

Dataset make_dataset(const ExperimentConfig& cfg);

struct SplitMetrics {
  double L = 0.0;
  double H = 0.0;
  double C = 0.0;  // mean logit-form cost
  double accuracy = 0.0;
  std::size_t examples = 0;
};

struct EpochLog {
  int epoch = 0;  // 1-based; the state after this many epochs
  PerEdge<std::vector<double>> logits;
  PerEdge<std::vector<double>> probabilities;
  CostStats costs;  // costs measured during the epoch (search split in bilevel)
  SplitMetrics train;
  std::optional<SplitMetrics> search;
  // bilevel: fixed uniformly sampled sub-networks on the search split,
  // tracking how the shared weights generalise independently of alpha
  std::optional<SplitMetrics> search_probe;
};

struct RunLog {
  nlohmann::json config;
  NetworkSpec network;
  std::vector<EpochLog> epochs;
  std::vector<double> channel_mean;
  std::vector<double> channel_std;
  bool aborted = false;
  std::string abort_reason;
  // bilevel provenance audit: examples that fed a theta gradient, by split
  std::size_t theta_examples_train = 0;
  std::size_t theta_examples_search = 0;

  void append(EpochLog e);
};

struct RunResult {
  RunLog log;
  NetworkParams params;
  ArchState arch;
};

/// Runs the configured optimisation. A non-finite loss or gradient stops the
/// run with `aborted` set; the epochs completed so far are kept.
RunResult run_evolution(const ExperimentConfig& cfg);

struct PatternThresholds {
  double p1_none_share = 0.8;
};

struct PatternReport {
  bool p1_growing = false;
  std::optional<int> p1_onset;     // first epoch where none dominates
  std::optional<int> p1_recovery;  // first later epoch with an input edge recovered
  bool p2_width_pref = false;
  std::vector<std::pair<std::string, int>> none_dwell;  // "cell:(i,j)" -> epochs
  double input_dwell = 0.0;         // mean over input edges
  double intermediate_dwell = 0.0;  // mean over intermediate edges
  bool p3_catastrophic = false;
};

void to_json(nlohmann::json& j, const PatternReport& r);

/// Requires at least three logged epochs. None "dominates" an edge when its
/// probability is strictly the largest.
PatternReport detect_patterns(const RunLog& log, const PatternThresholds& th = {});

enum class AblationVariant { simplified, modified };

struct AblationReport {
  AblationVariant variant = AblationVariant::simplified;
  std::vector<std::pair<Edge, RunningStat>> edges;  // pooled non-none costs
  RunLog log;
  const RunningStat& at(Edge e) const;
};

/// Trains the variant cell with uniformly sampled sub-networks and frozen
/// architecture weights; cfg.network's cell list is replaced by the variant.
AblationReport intermediate_edge_ablation(AblationVariant variant, const ExperimentConfig& cfg);

}  // namespace nascost
