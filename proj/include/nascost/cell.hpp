#pragma once

// Cell search space: DAG of feature-map nodes joined by candidate-operation
// edges. Node numbering is [inputs..., intermediates..., output]; every
// intermediate node j draws one edge from every node i < j that is not an
// output node, and the output node concatenates the intermediates.

#include <array>
#include <compare>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace nascost {

/// Candidate operations, numbered as in the usual DARTS/SNAS candidate list.
enum class OpKind : int {
  none = 0,
  skip_connect = 1,
  max_pool_3x3 = 2,
  avg_pool_3x3 = 3,
  sep_conv_3x3 = 4,
  dil_conv_3x3 = 5,
  dil_conv_5x5 = 6,
  sep_conv_5x5 = 7,
};

inline constexpr std::array<OpKind, 8> kAllOps = {
    OpKind::none,         OpKind::skip_connect, OpKind::max_pool_3x3, OpKind::avg_pool_3x3,
    OpKind::sep_conv_3x3, OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::sep_conv_5x5};

std::string to_string(OpKind op);
OpKind op_from_string(const std::string& name);
/// Pools and convolutions end in a normalisation layer; none and skip do not.
bool is_norm_terminated(OpKind op);
bool is_conv(OpKind op);

struct Edge {
  int from = 0;
  int to = 0;
  auto operator<=>(const Edge&) const = default;
  std::string str() const;
};

enum class EdgeRole { input, intermediate, output };

class CellSpec {
 public:
  int num_input_nodes = 2;
  int num_intermediate = 2;
  /// Candidate list per non-output edge, in sampling order.
  std::map<Edge, std::vector<OpKind>> candidates;
  /// Removed edges; output edges are written (j, output_node()).
  std::set<Edge> deleted_edges;
  /// Edges whose operation is fixed and never sampled.
  std::map<Edge, OpKind> fixed_ops;

  int output_node() const { return num_input_nodes + num_intermediate; }
  bool is_input_node(int n) const { return n >= 0 && n < num_input_nodes; }
  bool is_intermediate_node(int n) const { return n >= num_input_nodes && n < output_node(); }

  /// Non-output edges that exist, ordered by destination then source.
  std::vector<Edge> edges() const;
  /// Edges carrying architecture parameters (existing and not fixed).
  std::vector<Edge> searchable_edges() const;
  /// Intermediate nodes wired to the output node, ascending.
  std::vector<int> output_sources() const;

  bool has_edge(Edge e) const;
  bool is_fixed(Edge e) const { return fixed_ops.contains(e); }
  EdgeRole role(Edge e) const;
  /// Candidate list used by forward: the fixed op alone for fixed edges.
  std::vector<OpKind> ops_on(Edge e) const;

  /// Throws std::invalid_argument describing the first structural problem.
  void validate() const;
  /// Membership in the standard cell search space: every intermediate node
  /// reaches all predecessors and the output node.
  bool in_search_space() const;
};

CellSpec build_cell(int num_input_nodes, int num_intermediate,
                    const std::vector<OpKind>& ops = {kAllOps.begin(), kAllOps.end()});
/// Two inputs, two intermediates: edges (0,2) (1,2) (0,3) (1,3) (2,3).
CellSpec build_minimal_cell(const std::vector<OpKind>& ops = {kAllOps.begin(), kAllOps.end()});
/// One input, intermediates 1 and 2, output 3: edges (0,1) (0,2) (1,2).
CellSpec build_simplified_cell(const std::vector<OpKind>& ops = {kAllOps.begin(), kAllOps.end()});
/// Simplified cell without output edge (1,3) and with (0,1) fixed.
CellSpec build_modified_cell(OpKind fixed = OpKind::sep_conv_3x3,
                             const std::vector<OpKind>& ops = {kAllOps.begin(), kAllOps.end()});

void to_json(nlohmann::json& j, const CellSpec& c);
void from_json(const nlohmann::json& j, CellSpec& c);

}  // namespace nascost
