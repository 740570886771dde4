#pragma once

// Per-edge architecture cost: the contraction of the loss gradient at an
// edge's output feature map with that feature map.

#include <cstdint>
#include <map>
#include <span>
#include <tuple>
#include <vector>

#include "nascost/arch.hpp"
#include "nascost/dataset.hpp"

namespace nascost {

struct CostRecord {
  int cell = 0;
  Edge edge;
  OpKind candidate = OpKind::none;
  double cost = 0.0;
  int epoch = 0;
  int batch = 0;
};

/// Requires a backward pass with the edge output captured. Returns exactly
/// 0 when the edge evaluated no candidate other than none.
double edge_cost(const Graph& g, const ForwardTrace& t, std::size_t cell, Edge e);
/// Contraction at a node value (input, intermediate or output node).
double node_cost(const Graph& g, const ForwardTrace& t, std::size_t cell, int node);
/// Sum of edge costs over every non-output edge of the cell.
double cell_cost_sum(const Graph& g, const ForwardTrace& t, const CellSpec& cell, std::size_t cell_index);

/// Costs of the evaluated candidate on every edge (searchable and fixed) of
/// a discrete forward pass.
std::vector<CostRecord> sampled_costs(const Graph& g, const ForwardTrace& t, const NetworkSpec& spec,
                                      const ArchSample& s, int epoch, int batch);

struct Decomposition {
  double C = 0.0;             // logit form
  double L = 0.0;
  double H = 0.0;
  double C_activation = 0.0;  // contraction at the last cell's output node
};

/// Logit-form cost (1/B) sum_b [-Y_{b,y_b} + sum_n softmax(Y_b)_n Y_{bn}].
double logit_form_cost(const Tensor& logits, std::span<const int> labels);
Decomposition decompose_output_cost(const Graph& g, const ForwardTrace& t, const LossAndEntropy& le,
                                    std::span<const int> labels);

struct RunningStat {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x);
  void merge(const RunningStat& o);
  /// Unbiased sample variance; 0 for fewer than two samples.
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

using CostKey = std::tuple<int, Edge, OpKind>;

class CostStats {
 public:
  void add(const CostRecord& r) { entries_[{r.cell, r.edge, r.candidate}].add(r.cost); }
  void merge(const CostStats& o);
  const std::map<CostKey, RunningStat>& entries() const { return entries_; }
  const RunningStat* find(int cell, Edge e, OpKind op) const;
  /// Pooled statistics of all non-none candidates on one edge.
  RunningStat edge_pooled(int cell, Edge e, bool include_none = false) const;
  bool empty() const { return entries_.empty(); }

 private:
  std::map<CostKey, RunningStat> entries_;
};

struct MonteCarloConfig {
  int epochs = 1;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  int replicas = 1;  // parallel workers; results are independent of this
};

struct MonteCarloResult {
  std::vector<CostStats> per_epoch;
  CostStats total;
};

/// Uniformly sampled one-hot sub-networks with frozen parameters.
MonteCarloResult monte_carlo_cost(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                                  const MonteCarloConfig& cfg);

struct PathNode {
  int cell = 0;
  int node = 0;
  friend bool operator==(const PathNode&, const PathNode&) = default;
};
using Path = std::vector<PathNode>;  // head first

enum class PathCarrier {
  edge_output,  // X_v^u of the final intra-cell hop; node value otherwise
  tail_node,    // the value of the last path node
};

struct PathTerm {
  double value = 0.0;
  double scale = 0.0;  // sum |grad * carrier| over the carrier's entries
};

/// Single-route contribution of the head's loss gradient to the tail
/// carrier, computed by a masked propagation that keeps only the path's
/// slot at every sum or concatenation junction. Throws
/// std::invalid_argument for a route that does not exist.
PathTerm path_cost_term(const Graph& g, const ForwardTrace& t, const NetworkSpec& spec, const Path& path,
                        PathCarrier carrier = PathCarrier::edge_output);

/// Every descending route inside a cell from `from` to `to` (node lists).
std::vector<std::vector<int>> cell_routes(const CellSpec& cell, int from, int to);

}  // namespace nascost
