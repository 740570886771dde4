#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "nascost/cost.hpp"
#include "nascost/ops.hpp"
#include "nascost/theorem.hpp"

using namespace nascost;

namespace {

struct Fixture {
  NetworkSpec spec;
  NetworkParams params;
  Dataset data;
  std::vector<std::size_t> idx;

  explicit Fixture(std::uint64_t seed, std::size_t cells = 1, std::size_t batch = 8) {
    for (std::size_t c = 0; c < cells; ++c) spec.cells.push_back(build_minimal_cell());
    params = init_parameters(spec, seed);
    data = synth_dataset(10, 3, 8, 8, batch, 0.5, seed + 100);
    idx.resize(batch);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }

  ArchSample sample(std::map<Edge, OpKind> forced = {}) const {
    std::vector<std::map<Edge, OpKind>> f(spec.cells.size());
    f[0] = std::move(forced);
    return certificate_sample(spec, 9, f);
  }
};

// Loss with the weight on one edge set to `z` and every other weight 1.
double loss_with_edge_weight(const Fixture& fx, const ArchSample& s, Edge target, double z) {
  Graph g;
  std::vector<CellWeights> w(fx.spec.cells.size());
  for (std::size_t c = 0; c < fx.spec.cells.size(); ++c)
    for (const auto& [e, k] : s.choice[c])
      w[c][e] = {EdgeChoice{k, g.leaf(Tensor::scalar(c == 0 && e == target ? z : 1.0))}};
  const ForwardTrace t = forward(g, fx.spec, fx.params, fx.data.batch(fx.idx), w);
  return ce_loss_and_entropy(g, t.logits, fx.data.batch_labels(fx.idx)).value;
}

}  // namespace

TEST_CASE("none edges cost exactly zero") {
  const Fixture fx(1);
  const Probe p = run_probe(fx.spec, fx.params, fx.data, fx.idx, fx.sample({{Edge{0, 2}, OpKind::none}}));
  CHECK(edge_cost(p.graph, p.trace, 0, Edge{0, 2}) == 0.0);
  for (const CostRecord& r : sampled_costs(p.graph, p.trace, fx.spec, p.sample, 1, 0))
    if (r.candidate == OpKind::none) CHECK(r.cost == 0.0);
}

TEST_CASE("edge cost matches a directional finite difference") {
  for (std::uint64_t seed : {2u, 3u}) {
    const Fixture fx(seed);
    const ArchSample s = fx.sample({{Edge{0, 2}, OpKind::sep_conv_3x3}, {Edge{1, 3}, OpKind::skip_connect}});
    const Probe p = run_probe(fx.spec, fx.params, fx.data, fx.idx, s);
    for (Edge e : fx.spec.cells[0].edges()) {
      const double c = edge_cost(p.graph, p.trace, 0, e);
      if (c == 0.0) continue;
      const double eps = 1e-6;
      const double fd =
          (loss_with_edge_weight(fx, s, e, 1 + eps) - loss_with_edge_weight(fx, s, e, 1 - eps)) / (2 * eps);
      CHECK(std::abs(fd - c) <= 1e-3 * std::abs(c) + 1e-9);
    }
  }
}

TEST_CASE("last-cell cost sum equals L - H") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Fixture fx(seed);
    const Probe p = run_probe(fx.spec, fx.params, fx.data, fx.idx, fx.sample());
    const Decomposition d = decompose_output_cost(p.graph, p.trace, p.loss, p.labels);
    CHECK(d.L == doctest::Approx(p.loss.value).epsilon(1e-14));
    CHECK(std::abs(d.C - (d.L - d.H)) < 1e-10);
    CHECK(std::abs(d.C_activation - d.C) < 1e-6);
    CHECK(std::abs(cell_cost_sum(p.graph, p.trace, fx.spec.cells[0], 0) - (d.L - d.H)) < 1e-6);
  }
}

TEST_CASE("logit-form cost closed forms") {
  const std::vector<int> labels = {0, 2};
  CHECK(logit_form_cost(Tensor(Shape{2, 3, 1, 1}, 0.7), labels) == doctest::Approx(0.0));
  // B=1, N=2, logits (a, b), label 0: -a + p_a a + p_b b
  const Tensor y(Shape{1, 2, 1, 1}, std::vector<double>{1.0, -1.0});
  const double pa = 1.0 / (1.0 + std::exp(-2.0));
  const std::vector<int> l0 = {0};
  CHECK(logit_form_cost(y, l0) == doctest::Approx(-1.0 + pa - (1 - pa)).epsilon(1e-14));
  // confident correct logits approach 0 from below
  double prev = -1.0;
  for (double m : {1.0, 4.0, 16.0}) {
    const double c = logit_form_cost(Tensor(Shape{1, 2, 1, 1}, std::vector<double>{m, -m}), l0);
    CHECK(c < 0.0);
    CHECK(c > prev);
    prev = c;
  }
}

TEST_CASE("path terms through the intermediate edge") {
  const Fixture fx(4);
  const CellSpec& cell = fx.spec.cells[0];
  CHECK(cell_routes(cell, 4, 0) == std::vector<std::vector<int>>{{4, 2, 0}, {4, 3, 0}, {4, 3, 2, 0}});

  const Probe conv = run_probe(fx.spec, fx.params, fx.data, fx.idx, fx.sample({{Edge{2, 3}, OpKind::dil_conv_3x3}}));
  CHECK_THROWS_AS(path_cost_term(conv.graph, conv.trace, fx.spec, Path{{0, 4}, {0, 1}}), std::invalid_argument);
  // crossing the intermediate edge: contraction at its input node vanishes
  const PathTerm blocked =
      path_cost_term(conv.graph, conv.trace, fx.spec, Path{{0, 4}, {0, 3}, {0, 2}}, PathCarrier::tail_node);
  CHECK(blocked.scale > 0.0);
  CHECK(std::abs(blocked.value) < 1e-8 * blocked.scale);
  // the routes into edge (0,2) add up to its cost
  const double direct = path_cost_term(conv.graph, conv.trace, fx.spec, Path{{0, 4}, {0, 2}, {0, 0}}).value;
  const double via3 = path_cost_term(conv.graph, conv.trace, fx.spec, Path{{0, 4}, {0, 3}, {0, 2}, {0, 0}}).value;
  CHECK(direct + via3 == doctest::Approx(edge_cost(conv.graph, conv.trace, 0, Edge{0, 2})).epsilon(1e-10));

  const Probe skip = run_probe(fx.spec, fx.params, fx.data, fx.idx, fx.sample({{Edge{2, 3}, OpKind::skip_connect}}));
  const PathTerm leak =
      path_cost_term(skip.graph, skip.trace, fx.spec, Path{{0, 4}, {0, 3}, {0, 2}}, PathCarrier::tail_node);
  CHECK(std::abs(leak.value) > 1e-6 * leak.scale);
}

TEST_CASE("running statistics merge like a single pass") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(2.0, 3.0);
  RunningStat all, a, b;
  for (int i = 0; i < 1000; ++i) {
    const double x = nd(rng);
    all.add(x);
    (i % 3 ? a : b).add(x);
  }
  a.merge(b);
  CHECK(a.n == all.n);
  CHECK(a.mean == doctest::Approx(all.mean).epsilon(1e-12));
  CHECK(a.variance() == doctest::Approx(all.variance()).epsilon(1e-10));
  RunningStat one;
  one.add(4.0);
  CHECK(one.variance() == 0.0);
}

TEST_CASE("monte carlo cost at initialisation") {
  Fixture fx(6, 1, 256);
  MonteCarloConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 64;
  cfg.seed = 6;
  const MonteCarloResult r = monte_carlo_cost(fx.spec, fx.params, fx.data, cfg);
  CHECK(r.per_epoch.size() == 4);
  std::size_t positive = 0, total = 0;
  for (const auto& [key, s] : r.total.entries()) {
    const OpKind op = std::get<2>(key);
    if (op == OpKind::none) {
      CHECK(s.mean == 0.0);
      CHECK(s.variance() == 0.0);
      continue;
    }
    ++total;
    positive += s.mean > 0.0;
  }
  CHECK(total > 0);
  CHECK(positive * 2 > total);
  for (Edge e : fx.spec.cells[0].edges()) CHECK(r.total.edge_pooled(0, e).mean > 0.0);

  cfg.replicas = 3;
  const MonteCarloResult again = monte_carlo_cost(fx.spec, fx.params, fx.data, cfg);
  for (const auto& [key, s] : r.total.entries()) {
    const RunningStat* o = again.total.find(std::get<0>(key), std::get<1>(key), std::get<2>(key));
    REQUIRE(o != nullptr);
    CHECK(o->n == s.n);
    CHECK(o->mean == s.mean);
  }
}
