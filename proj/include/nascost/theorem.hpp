#pragma once

// Numerical certificates for the cost-assignment identities. Every
// certificate reports its measured residual, even when it passes.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nascost/cost.hpp"

namespace nascost {

enum class CertStatus { pass, fail, inapplicable, exception };
std::string to_string(CertStatus s);

struct Certificate {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  CertStatus status = CertStatus::fail;
  std::uint64_t seed = 0;
  nlohmann::json context = nlohmann::json::object();
  std::optional<double> effect_size;
  std::optional<double> p_value;

  /// Sets passed and status from residual <= tolerance.
  void judge();
};

void to_json(nlohmann::json& j, const Certificate& c);

/// Shared inputs: the network, the seed driving init, sample and batch.
struct CertSetup {
  NetworkSpec spec;
  std::uint64_t seed = 0;
  std::size_t batch = 16;
  double data_noise = 0.5;
  InitScheme init = InitScheme::he_normal;
};

/// Uniform one-hot sample in which every intermediate edge carries a
/// normalisation-terminated candidate; `forced` overrides chosen edges.
ArchSample certificate_sample(const NetworkSpec& spec, std::uint64_t seed,
                              const std::vector<std::map<Edge, OpKind>>& forced = {});

/// A recorded forward/backward pass kept alive for inspection.
struct Probe {
  Graph graph;
  ForwardTrace trace;
  LossAndEntropy loss{};
  std::vector<int> labels;
  ArchSample sample;
};
Probe run_probe(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                std::span<const std::size_t> indices, const ArchSample& sample);
Probe run_probe(const CertSetup& setup, const ArchSample& sample);

/// Conv-stage linearity on one edge: the path gradient contracted with
/// the conv input equals the contraction with the conv output.
Certificate verify_conv_linearity(const CertSetup& setup, OpKind conv_op, std::size_t cell, Edge edge);
/// Every normalisation input is orthogonal to its loss gradient.
Certificate verify_norm_orthogonality(const CertSetup& setup);
/// With affine-free instance norm every edge cost vanishes.
Certificate verify_instance_norm_zero_cost(const CertSetup& setup);
/// Every route that crosses an intermediate edge or a cell boundary
/// carries zero cost past the crossing. A skip intermediate edge is
/// reported as an exception.
Certificate verify_bn_blocking(const CertSetup& setup, const std::vector<std::map<Edge, OpKind>>& forced = {});
/// Edge costs of every non-last cell sum to 0 relative to the last cell.
Certificate verify_cost_sum_nonlast(const CertSetup& setup);
/// Sum of all cells' edge costs minus (L - H).
Certificate verify_cost_telescoping(const CertSetup& setup);
/// |C - (L - H)| over `trials` random (theta, Z, batch) triples.
Certificate verify_cost_identity(const CertSetup& setup, int trials);
/// Mean C over fresh initialisations is positive (one-sided t-test).
Certificate verify_init_positivity(const CertSetup& setup, int seeds, double alpha = 0.01);
/// Monte Carlo E[y1 exp(y1 + y2)] against sigma^2 exp(sigma^2).
Certificate verify_gaussian_lemma(std::uint64_t seed, std::size_t draws, double sigma = 1.0);
/// C < 0 once the network classifies the batch with accuracy >= min_accuracy.
Certificate verify_converged_negativity(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                                        std::span<const std::size_t> indices, const ArchSample& sample,
                                        double min_accuracy = 0.95);
/// DARTS gradient from costs against autodiff of the relaxed loss.
Certificate verify_darts_autodiff(const CertSetup& setup);
/// SNAS pathwise gradient at small temperature against the DSNAS score
/// function gradient, in expectation, on a two-edge multi-affine toy.
Certificate verify_snas_discrete_limit(std::uint64_t seed, std::size_t samples, double temperature = 1e-4);

/// Named groups used by the command-line `verify` suite: thm1, thm2,
/// cor12, norms, estimators, all.
std::vector<Certificate> run_suite(const std::string& suite, std::uint64_t seed);

}  // namespace nascost
