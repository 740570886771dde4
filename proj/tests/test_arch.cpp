#include <doctest.h>

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "nascost/arch.hpp"
#include "nascost/optim.hpp"

using namespace nascost;

namespace {

ArchState one_edge(std::vector<double> logits, std::uint64_t seed, double temperature = 1.0) {
  ArchState a;
  a.logits = {{{Edge{0, 1}, std::move(logits)}}};
  a.seed = seed;
  a.temperature = temperature;
  return a;
}

}  // namespace

TEST_CASE("softmax closed forms") {
  const auto u = softmax(std::vector<double>(8, 0.3));
  for (double p : u) CHECK(p == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(softmax({4.2}) == std::vector<double>{1.0});
  const auto p = softmax({0.0, std::log(3.0)});
  CHECK(p[0] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.75).epsilon(1e-14));
  const auto big = softmax({1000.0, 0.0});
  CHECK(std::isfinite(big[0]));
  CHECK(big[0] == doctest::Approx(1.0));
}

TEST_CASE("gumbel-softmax limits, mean and determinism") {
  const ArchState cold = one_edge({0.1, -0.4, 0.7, 0.0}, 11, 1e-4);
  for (std::uint64_t d = 0; d < 200; ++d) {
    const auto w = sample_gumbel_softmax(cold, d).weights[0].at(Edge{0, 1});
    CHECK(*std::max_element(w.begin(), w.end()) > 0.999);
  }

  const ArchState warm = one_edge(std::vector<double>(4, 0.0), 12);
  const std::size_t n = 100000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (std::uint64_t d = 0; d < n; ++d) {
    const auto w = sample_gumbel_softmax(warm, d).weights[0].at(Edge{0, 1});
    for (std::size_t k = 0; k < 4; ++k) sum[k] += w[k], sq[k] += w[k] * w[k];
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double m = sum[k] / n, var = sq[k] / n - m * m;
    CHECK(std::abs(m - 0.25) < 3.0 * std::sqrt(var / n));
  }

  const auto a = sample_gumbel_softmax(warm, 77), b = sample_gumbel_softmax(warm, 77);
  CHECK(a.weights == b.weights);
  CHECK(a.gumbel == b.gumbel);
  CHECK(sample_gumbel_softmax(warm, 78).weights != a.weights);
}

TEST_CASE("uniform discrete sampling passes a chi-squared test") {
  const ArchState arch = one_edge({5.0, -3.0, 0.0, 1.0, 2.0, -1.0, 0.5, 0.0}, 21);
  const std::size_t n = 100000;
  std::vector<double> counts(8, 0.0);
  for (std::uint64_t d = 0; d < n; ++d) counts[sample_discrete(arch, true, d).choice[0].at(Edge{0, 1})] += 1.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - n / 8.0) * (c - n / 8.0) / (n / 8.0);
  const double p = boost::math::cdf(boost::math::complement(boost::math::chi_squared(7.0), chi2));
  CHECK(p > 0.01);
}

TEST_CASE("degenerate logits and one-hot exactness") {
  std::vector<double> l(8, 0.0);
  l[5] = 20.0;
  const ArchState arch = one_edge(l, 3);
  std::size_t hits = 0;
  const std::size_t n = 20000;
  for (std::uint64_t d = 0; d < n; ++d) {
    const ArchSample s = sample_discrete(arch, false, d);
    const std::size_t k = s.choice[0].at(Edge{0, 1});
    CHECK(k < 8);
    hits += k == 5;
    Graph g;
    const auto w = make_weights(g, s);
    REQUIRE(w[0].at(Edge{0, 1}).size() == 1);
    CHECK(g.value(w[0].at(Edge{0, 1})[0].weight).item() == 1.0);
  }
  CHECK(static_cast<double>(hits) / n > 0.999);
}

TEST_CASE("single-candidate edges get zero architecture gradient") {
  const ArchState arch = one_edge({0.4}, 1);
  const PerEdge<std::vector<double>> costs = {{{Edge{0, 1}, {2.5}}}};
  const ArchSample s = sample_discrete(arch, false, 0);
  for (Framework f : {Framework::dsnas, Framework::proxyless})
    CHECK(arch_grad(f, costs, s, arch)[0].at(Edge{0, 1})[0] == 0.0);
  for (Framework f : {Framework::darts, Framework::snas}) {
    const RelaxedSample r = f == Framework::darts ? darts_weights(arch) : sample_gumbel_softmax(arch, 0);
    CHECK(arch_grad(f, costs, r, arch)[0].at(Edge{0, 1})[0] == doctest::Approx(0.0));
  }
  CHECK_THROWS_AS(arch_grad(Framework::darts, costs, s, arch), std::invalid_argument);
}

TEST_CASE("dsnas gradient is unbiased for the expected loss") {
  // L(Z) = sum_k Z_k v_k, so the selected candidate's cost is v_sel and
  // d E[L] / d alpha_k = p_k (v_k - sum_j p_j v_j)
  const std::vector<double> v = {0.0, 1.0, -0.5, 2.0};
  const ArchState arch = one_edge({0.3, -0.2, 0.5, 0.1}, 31);
  const auto p = softmax(arch.logits[0].at(Edge{0, 1}));
  double ev = 0.0;
  for (std::size_t k = 0; k < 4; ++k) ev += p[k] * v[k];
  const std::size_t n = 50000;
  std::vector<double> sum(4, 0.0), sq(4, 0.0);
  for (std::uint64_t d = 0; d < n; ++d) {
    const ArchSample s = sample_discrete(arch, false, d);
    std::vector<double> cost(4, 0.0);
    const std::size_t sel = s.choice[0].at(Edge{0, 1});
    cost[sel] = v[sel];
    const auto g = arch_grad(Framework::dsnas, {{{Edge{0, 1}, cost}}}, s, arch)[0].at(Edge{0, 1});
    for (std::size_t k = 0; k < 4; ++k) sum[k] += g[k], sq[k] += g[k] * g[k];
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double m = sum[k] / n, se = std::sqrt((sq[k] / n - m * m) / n);
    CHECK(std::abs(m - p[k] * (v[k] - ev)) < 4.0 * se);
  }
}

TEST_CASE("optimizer hand oracles") {
  std::vector<double> x = {1.0, -2.0};
  {
    Optimizer o({"sgd", 0.5, 0.9, 0.0});
    const std::vector<double> zero = {0.0, 0.0};
    o.step(0, x, zero, "x");
    CHECK(x == std::vector<double>{1.0, -2.0});
  }
  {
    Optimizer o({"sgd", 1.0, 0.0, 0.0});
    const std::vector<double> g = {0.25, -0.5};
    o.step(0, x, g, "x");
    CHECK(x == std::vector<double>{0.75, -1.5});
  }
  {
    // v1 = g1, p1 = p0 - lr g1; v2 = 0.9 g1 + g2, p2 = p1 - lr v2
    std::vector<double> p = {1.0};
    Optimizer o({"sgd", 0.1, 0.9, 0.0});
    const std::vector<double> g1 = {2.0}, g2 = {-1.0};
    o.step(0, p, g1, "p");
    o.next();
    o.step(0, p, g2, "p");
    CHECK(p[0] == doctest::Approx(1.0 - 0.1 * 2.0 - 0.1 * (0.9 * 2.0 - 1.0)).epsilon(1e-15));
  }
  {
    // first Adam step moves every coordinate by lr * g / (|g| + eps)
    std::vector<double> p = {0.0, 0.0};
    Optimizer o({"adam", 0.01, 0.0, 0.0, 0.5, 0.999, 1e-8});
    const std::vector<double> g = {3.0, -0.002};
    o.step(0, p, g, "p");
    CHECK(p[0] == doctest::Approx(-0.01 * 3.0 / (3.0 + 1e-8)).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(0.01 * 0.002 / (0.002 + 1e-8)).epsilon(1e-12));
  }
  {
    std::vector<double> p = {1.0};
    Optimizer o({"sgd", 0.1, 0.0, 0.0});
    const std::vector<double> bad = {NAN};
    CHECK_THROWS_AS(o.step(0, p, bad, "alpha"), std::runtime_error);
    CHECK_THROWS_AS(OptimizerConfig({"rmsprop"}).validate(), std::invalid_argument);
  }
}
