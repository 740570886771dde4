#include "nascost/cell.hpp"

#include <algorithm>
#include <stdexcept>

namespace nascost {

std::string to_string(OpKind op) {
  switch (op) {
    case OpKind::none: return "none";
    case OpKind::skip_connect: return "skip_connect";
    case OpKind::max_pool_3x3: return "max_pool_3x3";
    case OpKind::avg_pool_3x3: return "avg_pool_3x3";
    case OpKind::sep_conv_3x3: return "sep_conv_3x3";
    case OpKind::dil_conv_3x3: return "dil_conv_3x3";
    case OpKind::dil_conv_5x5: return "dil_conv_5x5";
    case OpKind::sep_conv_5x5: return "sep_conv_5x5";
  }
  return "?";
}

OpKind op_from_string(const std::string& name) {
  for (OpKind op : kAllOps) {
    if (to_string(op) == name) return op;
  }
  throw std::invalid_argument("unknown operation '" + name + "'");
}

bool is_norm_terminated(OpKind op) { return op != OpKind::none && op != OpKind::skip_connect; }

bool is_conv(OpKind op) {
  return op == OpKind::sep_conv_3x3 || op == OpKind::sep_conv_5x5 || op == OpKind::dil_conv_3x3 ||
         op == OpKind::dil_conv_5x5;
}

std::string Edge::str() const { return "(" + std::to_string(from) + "," + std::to_string(to) + ")"; }

std::vector<Edge> CellSpec::edges() const {
  std::vector<Edge> out;
  for (int j = num_input_nodes; j < output_node(); ++j)
    for (int i = 0; i < j; ++i) {
      const Edge e{i, j};
      if (!deleted_edges.contains(e)) out.push_back(e);
    }
  return out;
}

std::vector<Edge> CellSpec::searchable_edges() const {
  std::vector<Edge> out;
  for (Edge e : edges())
    if (!is_fixed(e)) out.push_back(e);
  return out;
}

std::vector<int> CellSpec::output_sources() const {
  std::vector<int> out;
  for (int j = num_input_nodes; j < output_node(); ++j)
    if (!deleted_edges.contains(Edge{j, output_node()})) out.push_back(j);
  return out;
}

bool CellSpec::has_edge(Edge e) const {
  if (e.to == output_node()) return is_intermediate_node(e.from) && !deleted_edges.contains(e);
  if (!is_intermediate_node(e.to) || e.from < 0 || e.from >= e.to) return false;
  return !deleted_edges.contains(e);
}

EdgeRole CellSpec::role(Edge e) const {
  if (e.to == output_node()) return EdgeRole::output;
  return is_input_node(e.from) ? EdgeRole::input : EdgeRole::intermediate;
}

std::vector<OpKind> CellSpec::ops_on(Edge e) const {
  if (auto it = fixed_ops.find(e); it != fixed_ops.end()) return {it->second};
  auto it = candidates.find(e);
  if (it == candidates.end()) throw std::invalid_argument("no candidates for edge " + e.str());
  return it->second;
}

void CellSpec::validate() const {
  if (num_input_nodes < 1) throw std::invalid_argument("cell needs at least one input node");
  if (num_intermediate < 1) throw std::invalid_argument("cell needs at least one intermediate node");
  for (Edge e : deleted_edges) {
    const bool structural = (e.to == output_node() && is_intermediate_node(e.from)) ||
                            (is_intermediate_node(e.to) && e.from >= 0 && e.from < e.to);
    if (!structural) throw std::invalid_argument("deleted edge " + e.str() + " is not an edge of this cell");
  }
  for (Edge e : edges()) {
    if (is_fixed(e)) continue;
    auto it = candidates.find(e);
    if (it == candidates.end() || it->second.empty()) {
      throw std::invalid_argument("edge " + e.str() + " has no candidate operations");
    }
  }
  for (const auto& [e, op] : fixed_ops) {
    if (!has_edge(e) || e.to == output_node()) throw std::invalid_argument("fixed edge " + e.str() + " does not exist");
  }
  if (output_sources().empty()) throw std::invalid_argument("output node has no incoming edges");
}

bool CellSpec::in_search_space() const {
  for (int j = num_input_nodes; j < output_node(); ++j) {
    for (int i = 0; i < j; ++i)
      if (deleted_edges.contains(Edge{i, j})) return false;
    if (deleted_edges.contains(Edge{j, output_node()})) return false;
  }
  return true;
}

CellSpec build_cell(int num_input_nodes, int num_intermediate, const std::vector<OpKind>& ops) {
  CellSpec c;
  c.num_input_nodes = num_input_nodes;
  c.num_intermediate = num_intermediate;
  for (Edge e : c.edges()) c.candidates[e] = ops;
  c.validate();
  return c;
}

CellSpec build_minimal_cell(const std::vector<OpKind>& ops) { return build_cell(2, 2, ops); }

CellSpec build_simplified_cell(const std::vector<OpKind>& ops) { return build_cell(1, 2, ops); }

CellSpec build_modified_cell(OpKind fixed, const std::vector<OpKind>& ops) {
  CellSpec c = build_simplified_cell(ops);
  c.deleted_edges.insert(Edge{1, c.output_node()});
  c.fixed_ops[Edge{0, 1}] = fixed;
  c.candidates.erase(Edge{0, 1});
  c.validate();
  return c;
}

namespace {

nlohmann::json edge_json(Edge e) { return nlohmann::json::array({e.from, e.to}); }

Edge edge_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("edge must be [from, to]");
  return Edge{j[0].get<int>(), j[1].get<int>()};
}

}  // namespace

void to_json(nlohmann::json& j, const CellSpec& c) {
  j = nlohmann::json::object();
  j["num_input_nodes"] = c.num_input_nodes;
  j["num_intermediate"] = c.num_intermediate;
  auto edges = nlohmann::json::array();
  for (Edge e : c.edges()) {
    nlohmann::json ej;
    ej["edge"] = edge_json(e);
    if (c.is_fixed(e)) {
      ej["fixed"] = to_string(c.fixed_ops.at(e));
    } else {
      auto ops = nlohmann::json::array();
      for (OpKind op : c.candidates.at(e)) ops.push_back(to_string(op));
      ej["candidates"] = ops;
    }
    edges.push_back(ej);
  }
  j["edges"] = edges;
  auto deleted = nlohmann::json::array();
  for (Edge e : c.deleted_edges) deleted.push_back(edge_json(e));
  j["deleted_edges"] = deleted;
}

void from_json(const nlohmann::json& j, CellSpec& c) {
  c = CellSpec{};
  c.num_input_nodes = j.at("num_input_nodes").get<int>();
  c.num_intermediate = j.at("num_intermediate").get<int>();
  if (j.contains("deleted_edges"))
    for (const auto& e : j.at("deleted_edges")) c.deleted_edges.insert(edge_from_json(e));
  if (j.contains("edges")) {
    for (const auto& ej : j.at("edges")) {
      const Edge e = edge_from_json(ej.at("edge"));
      if (ej.contains("fixed")) {
        c.fixed_ops[e] = op_from_string(ej.at("fixed").get<std::string>());
      } else {
        std::vector<OpKind> ops;
        for (const auto& o : ej.at("candidates")) ops.push_back(op_from_string(o.get<std::string>()));
        c.candidates[e] = ops;
      }
    }
  } else {
    // shorthand: one candidate list for every edge
    std::vector<OpKind> ops(kAllOps.begin(), kAllOps.end());
    if (j.contains("candidates")) {
      ops.clear();
      for (const auto& o : j.at("candidates")) ops.push_back(op_from_string(o.get<std::string>()));
    }
    for (Edge e : c.edges()) c.candidates[e] = ops;
  }
  c.validate();
}

}  // namespace nascost
