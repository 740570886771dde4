#pragma once

// Architecture distribution: per-edge logits, the relaxations and samplers
// built on them, and the per-logit gradient of each search framework.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nascost/network.hpp"

namespace nascost {

template <class T>
using PerEdge = std::vector<std::map<Edge, T>>;  // indexed by cell

struct ArchState {
  PerEdge<std::vector<double>> logits;  // log alpha, one entry per candidate position
  double temperature = 1.0;
  std::uint64_t seed = 0;

  /// Zero logits on every searchable edge.
  static ArchState uniform(const NetworkSpec& spec, std::uint64_t seed, double temperature = 1.0);
  void validate() const;
};

struct ArchSample {
  PerEdge<std::size_t> choice;
  PerEdge<std::vector<double>> gumbel;
};

struct RelaxedSample {
  PerEdge<std::vector<double>> weights;
  PerEdge<std::vector<double>> gumbel;  // empty for deterministic weights
};

std::vector<double> softmax(const std::vector<double>& logits, double temperature = 1.0);

RelaxedSample darts_weights(const ArchState& arch);
/// Gumbel-softmax at the arch temperature; `draw` selects the sample index
/// within the arch seed's stream.
RelaxedSample sample_gumbel_softmax(const ArchState& arch, std::uint64_t draw);
/// One-hot sample by gumbel-max; uniform ignores the logits.
ArchSample sample_discrete(const ArchState& arch, bool uniform, std::uint64_t draw);

/// Standard gumbel variate for one (cell, edge, candidate) coordinate.
double gumbel_draw(std::uint64_t seed, std::size_t cell, Edge e, std::uint64_t draw, std::size_t k);

/// Selected candidates only, each scaled by a unit leaf (gated = false), or
/// every candidate scaled by its one-hot entry (gated = true).
std::vector<CellWeights> make_weights(Graph& g, const ArchSample& s, bool gated = false);
/// Every candidate scaled by a leaf holding its relaxed weight.
std::vector<CellWeights> make_weights(Graph& g, const RelaxedSample& s);

/// dL/dZ^k per candidate position, read from the weight leaves after
/// backward; candidates that were not evaluated read 0.
PerEdge<std::vector<double>> candidate_costs(const Graph& g, const ForwardTrace& t, const ArchState& arch);

enum class Framework { snas, dsnas, darts, proxyless };
std::string to_string(Framework f);
Framework framework_from_string(const std::string& s);

/// Per-logit gradient. dsnas and proxyless take the discrete sample,
/// darts and snas the relaxed one; the costs are constants.
PerEdge<std::vector<double>> arch_grad(Framework f, const PerEdge<std::vector<double>>& costs, const ArchSample& s,
                                       const ArchState& arch);
PerEdge<std::vector<double>> arch_grad(Framework f, const PerEdge<std::vector<double>>& costs,
                                       const RelaxedSample& s, const ArchState& arch);

}  // namespace nascost
