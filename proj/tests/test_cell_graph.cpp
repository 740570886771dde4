#include <doctest.h>

#include <cmath>
#include <numeric>

#include "nascost/arch.hpp"
#include "nascost/dataset.hpp"
#include "nascost/ops.hpp"

using namespace nascost;

namespace {

std::vector<std::size_t> first_n(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

// One-hot sample choosing `op` on every searchable edge.
ArchSample all_op(const NetworkSpec& spec, OpKind op) {
  ArchSample s;
  for (const auto& cell : spec.cells) {
    std::map<Edge, std::size_t> m;
    for (Edge e : cell.searchable_edges()) {
      const auto ops = cell.ops_on(e);
      m[e] = static_cast<std::size_t>(std::find(ops.begin(), ops.end(), op) - ops.begin());
    }
    s.choice.push_back(m);
  }
  return s;
}

}  // namespace

TEST_CASE("minimal cell structure") {
  const CellSpec c = build_minimal_cell();
  const auto edges = c.edges();
  REQUIRE(edges.size() == 5);
  CHECK(edges.front() == Edge{0, 2});
  CHECK(edges.back() == Edge{2, 3});
  CHECK(c.role(Edge{2, 3}) == EdgeRole::intermediate);
  for (Edge e : {Edge{0, 2}, Edge{1, 2}, Edge{0, 3}, Edge{1, 3}}) CHECK(c.role(e) == EdgeRole::input);
  CHECK(c.role(Edge{2, 4}) == EdgeRole::output);
  for (Edge e : edges) CHECK(c.ops_on(e).size() == 8);
  CHECK(c.output_sources() == std::vector<int>{2, 3});
  CHECK(c.in_search_space());
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("simplified and modified cells") {
  const CellSpec s = build_simplified_cell();
  CHECK(s.edges() == std::vector<Edge>{{0, 1}, {0, 2}, {1, 2}});
  CHECK(s.output_sources() == std::vector<int>{1, 2});
  CHECK(s.role(Edge{1, 2}) == EdgeRole::intermediate);

  const CellSpec m = build_modified_cell();
  CHECK(m.output_sources() == std::vector<int>{2});
  CHECK(m.is_fixed(Edge{0, 1}));
  CHECK(m.ops_on(Edge{0, 1}) == std::vector<OpKind>{OpKind::sep_conv_3x3});
  const auto se = m.searchable_edges();
  CHECK(std::find(se.begin(), se.end(), Edge{0, 1}) == se.end());
  CHECK_FALSE(m.in_search_space());

  // sampling never touches the fixed edge
  NetworkSpec spec;
  spec.cells = {m};
  const ArchState arch = ArchState::uniform(spec, 3);
  CHECK_FALSE(arch.logits[0].contains(Edge{0, 1}));
  for (std::uint64_t d = 0; d < 20; ++d) CHECK_FALSE(sample_discrete(arch, false, d).choice[0].contains(Edge{0, 1}));
}

TEST_CASE("cell validation and json round trip") {
  CellSpec c = build_minimal_cell();
  c.candidates[Edge{0, 2}].clear();
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);

  const CellSpec m = build_modified_cell(OpKind::dil_conv_3x3, {OpKind::none, OpKind::skip_connect});
  const nlohmann::json j = m;
  const CellSpec back = j.get<CellSpec>();
  CHECK(back.edges() == m.edges());
  CHECK(back.fixed_ops == m.fixed_ops);
  CHECK(back.deleted_edges == m.deleted_edges);
  CHECK(back.ops_on(Edge{1, 2}) == m.ops_on(Edge{1, 2}));

  nlohmann::json bad = {{"num_input_nodes", 2}, {"num_intermediate", 2}, {"candidates", {"conv_9x9"}}};
  CHECK_THROWS(bad.get<CellSpec>());
}

TEST_CASE("forward shapes and edge outputs") {
  NetworkSpec spec;
  spec.cells = {build_minimal_cell()};
  const NetworkParams params = init_parameters(spec, 1);
  const Dataset data = synth_dataset(10, 3, 8, 8, 4, 0.5, 2);
  const auto idx = first_n(4);
  const ArchSample s = sample_discrete(ArchState::uniform(spec, 5), true, 0);

  Graph g;
  const ForwardTrace t = forward(g, spec, params, data.batch(idx), make_weights(g, s));
  const CellTrace& ct = t.cells[0];
  CHECK(g.value(ct.nodes.back()).shape() == Shape{4, 2 * spec.channels, 8, 8});
  CHECK(spec.cell_output_channels(0) == 2 * spec.channels);
  CHECK(g.value(t.logits).shape() == Shape{4, 10, 1, 1});
  for (Edge e : spec.cells[0].edges()) {
    const OpKind op = spec.cells[0].ops_on(e)[s.choice[0].at(e)];
    CHECK(ct.edge_outputs.contains(e) == (op != OpKind::none));
  }
}

TEST_CASE("all-none sample zeroes the intermediates and gives uniform logits") {
  NetworkSpec spec;
  spec.cells = {build_minimal_cell()};
  const NetworkParams params = init_parameters(spec, 4);
  const Dataset data = synth_dataset(10, 3, 8, 8, 3, 1.0, 4);
  const auto idx = first_n(3);
  Graph g;
  const ForwardTrace t = forward(g, spec, params, data.batch(idx), make_weights(g, all_op(spec, OpKind::none)));
  for (int node : {2, 3})
    for (double v : g.value(t.cells[0].nodes[static_cast<std::size_t>(node)]).data()) CHECK(v == 0.0);
  const Tensor& y = g.value(t.logits);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.data()[i] == y.data()[0]);
  const auto labels = data.batch_labels(idx);
  const LossAndEntropy le = ce_loss_and_entropy(g, t.logits, labels);
  CHECK(le.value == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  CHECK(le.entropy == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("forward rejects missing edge weights") {
  NetworkSpec spec;
  spec.cells = {build_minimal_cell()};
  const NetworkParams params = init_parameters(spec, 1);
  const Dataset data = synth_dataset(10, 3, 8, 8, 2, 0.0, 1);
  const auto idx = first_n(2);
  ArchSample s = sample_discrete(ArchState::uniform(spec, 1), true, 0);
  s.choice[0].erase(Edge{2, 3});
  Graph g;
  CHECK_THROWS(forward(g, spec, params, data.batch(idx), make_weights(g, s)));
}

TEST_CASE("network spec json round trip with cell shorthands") {
  const nlohmann::json j = {{"cells", {"minimal", "simplified"}}, {"channels", 4}, {"stacking_order", "conv_norm_relu"},
                            {"norm", {{"kind", "layer"}, {"affine", true}}}};
  const NetworkSpec n = j.get<NetworkSpec>();
  CHECK(n.cells.size() == 2);
  CHECK(n.channels == 4);
  CHECK(n.order == StackingOrder::conv_norm_relu);
  CHECK(n.norm.kind == NormKind::layer);
  const NetworkSpec back = nlohmann::json(n).get<NetworkSpec>();
  CHECK(back.cells[1].edges() == n.cells[1].edges());
  CHECK(back.norm.affine);
}
