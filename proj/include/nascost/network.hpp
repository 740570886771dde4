#pragma once

// Stacked-cell supernetwork: stem -> cells -> global pool -> linear head.
// Every cell input node is fed through a ReLU -> 1x1 conv -> norm
// preprocessing block from the stem or from an earlier cell output.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nascost/cell.hpp"
#include "nascost/ops.hpp"

namespace nascost {

/// Order of the three stages inside each convolutional candidate.
enum class StackingOrder { relu_conv_norm, conv_relu_norm, conv_norm_relu };

std::string to_string(StackingOrder s);
StackingOrder stacking_order_from_string(const std::string& s);

struct NetworkSpec {
  std::size_t in_channels = 3;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t channels = 8;  // per node
  std::size_t num_classes = 10;
  std::vector<CellSpec> cells;
  NormConfig norm;
  StackingOrder order = StackingOrder::relu_conv_norm;

  void validate() const;
  std::size_t cell_output_channels(std::size_t cell) const;
  std::size_t head_channels() const { return cell_output_channels(cells.size() - 1); }
  /// Source of input node k of cell c: an earlier cell index, or -1 for the stem.
  int input_source(std::size_t cell, int input_node) const;
};

void to_json(nlohmann::json& j, const NetworkSpec& n);
void from_json(const nlohmann::json& j, NetworkSpec& n);

/// Parameter ids of one block. `weights` in application order, then
/// optional norm affine parameters.
struct BlockParams {
  std::vector<std::size_t> weights;
  std::optional<std::size_t> gamma;
  std::optional<std::size_t> beta;
};

struct CellParams {
  std::vector<BlockParams> preprocess;               // per input node
  std::map<Edge, std::vector<BlockParams>> ops;      // per candidate position
};

enum class InitScheme { he_normal, unit_normal, zero };
std::string to_string(InitScheme s);
InitScheme init_scheme_from_string(const std::string& s);

struct NetworkParams {
  std::vector<Tensor> values;
  std::vector<std::string> names;
  BlockParams stem;
  std::vector<CellParams> cells;
  std::size_t head = 0;

  std::size_t size() const { return values.size(); }
  std::size_t add(std::string name, Tensor t);
};

/// Conv weights ~ N(0, 2/fan_in), head ~ N(0, 1/C); unit_normal uses
/// variance 1 everywhere, zero sets every weight to 0.
NetworkParams init_parameters(const NetworkSpec& spec, std::uint64_t seed,
                              InitScheme scheme = InitScheme::he_normal);

/// One evaluated candidate on an edge and the scalar that multiplies it.
struct EdgeChoice {
  std::size_t candidate = 0;  // position in the edge's candidate list
  Var weight;
};
using CellWeights = std::map<Edge, std::vector<EdgeChoice>>;

struct CellTrace {
  std::vector<Var> inputs_raw;            // tensor fed into each preprocess block
  std::vector<Var> nodes;                 // every node value, output last
  std::map<Edge, Var> edge_outputs;       // X_j^i; absent when only none was evaluated
  std::map<Edge, std::vector<std::pair<std::size_t, Var>>> candidate_outputs;
  std::map<int, std::size_t> node_sum_op; // intermediate node -> add op
  std::map<int, std::vector<Edge>> node_sum_slots;
  std::size_t concat_op = 0;
  std::vector<int> concat_slots;          // intermediate node per concat input
  std::vector<std::size_t> preprocess_first_op;
};

struct ForwardTrace {
  Var input;
  Var stem;
  Var pooled;
  Var logits;
  std::vector<CellTrace> cells;
  std::vector<CellWeights> weights;
  std::vector<Var> params;  // leaf per parameter id
};

struct ForwardOptions {
  bool capture = true;
  bool params_require_grad = true;
  /// Existing leaves to use as parameters instead of fresh copies.
  const std::vector<Var>* param_leaves = nullptr;
};

/// Records the network on g. `weights` must name every searchable edge of
/// every cell; fixed edges are evaluated with a constant weight of 1.
ForwardTrace forward(Graph& g, const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                     const std::vector<CellWeights>& weights, const ForwardOptions& opt = {});

}  // namespace nascost
