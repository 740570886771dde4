#include <doctest.h>

#include <cmath>

#include "nascost/theorem.hpp"

using namespace nascost;

namespace {

CertSetup setup(std::uint64_t seed, std::size_t cells = 1) {
  CertSetup s;
  for (std::size_t c = 0; c < cells; ++c) s.spec.cells.push_back(build_minimal_cell());
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("conv linearity on every convolution candidate") {
  for (OpKind op : {OpKind::sep_conv_3x3, OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::sep_conv_5x5}) {
    const Certificate c = verify_conv_linearity(setup(3), op, 0, Edge{0, 2});
    CHECK(c.passed);
    CHECK(c.context["pairs"].get<int>() >= 4);
    CHECK(std::abs(c.context["stage_lhs"].get<double>()) > 1e-6);  // the check is not vacuous
  }
  CHECK_THROWS_AS(verify_conv_linearity(setup(3), OpKind::max_pool_3x3, 0, Edge{0, 2}), std::invalid_argument);
}

TEST_CASE("norm orthogonality and affine-free instance norm") {
  for (NormKind k : {NormKind::batch, NormKind::layer, NormKind::instance}) {
    CertSetup s = setup(5);
    s.spec.norm.kind = k;
    const Certificate c = verify_norm_orthogonality(s);
    CHECK(c.passed);
    CHECK(c.context["norm_layers"].get<int>() > 0);
  }
  const Certificate z = verify_instance_norm_zero_cost(setup(5));
  CHECK(z.passed);
  CHECK(z.residual < 1e-10);
}

TEST_CASE("blocking certificate and the skip exception") {
  const CertSetup s = setup(7);
  for (OpKind op : {OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::sep_conv_5x5}) {
    const Certificate c = verify_bn_blocking(s, {{{Edge{2, 3}, op}}});
    CHECK(c.status == CertStatus::pass);
  }
  const Certificate skip = verify_bn_blocking(s, {{{Edge{2, 3}, OpKind::skip_connect}}});
  CHECK(skip.status == CertStatus::exception);
  CHECK(skip.passed);
  CHECK(skip.context.contains("skip_to_mean_edge_cost_ratio"));
  CHECK_THROWS_AS(verify_bn_blocking(s, {{{Edge{5, 6}, OpKind::skip_connect}}}), std::invalid_argument);

  const Certificate stacked = verify_bn_blocking(setup(8, 2));
  CHECK(stacked.passed);
}

TEST_CASE("cell cost sums") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Certificate c = verify_cost_sum_nonlast(setup(seed, 2));
    CHECK(c.passed);
    const double last = c.context["last_sum"].get<double>();
    CHECK(std::abs(last - c.context["L_minus_H"].get<double>()) < 1e-6);
    CHECK(std::abs(last) > 1e-6);
    CHECK(verify_cost_telescoping(setup(seed, 2)).passed);
  }
  CHECK_THROWS_AS(verify_cost_sum_nonlast(setup(1, 1)), std::invalid_argument);

  CertSetup zero = setup(4, 2);
  zero.init = InitScheme::zero;
  const Certificate z = verify_cost_sum_nonlast(zero);
  CHECK(z.passed);
  CHECK(z.residual == 0.0);
  CHECK(z.context["last_sum"].get<double>() == 0.0);
}

TEST_CASE("cost identity is deterministic and tight") {
  const Certificate a = verify_cost_identity(setup(11), 10);
  const Certificate b = verify_cost_identity(setup(11), 10);
  CHECK(a.passed);
  CHECK(a.residual < 1e-10);
  CHECK(a.residual == b.residual);
  CHECK(nlohmann::json(a) == nlohmann::json(b));
}

TEST_CASE("initial cost positivity and the gaussian lemma") {
  const Certificate c = verify_init_positivity(setup(0), 40, 0.01);
  CHECK(c.passed);
  REQUIRE(c.p_value);
  CHECK(*c.p_value < 0.01);
  CHECK(*c.effect_size > 0.0);

  CertSetup unit = setup(0);
  unit.init = InitScheme::unit_normal;
  CHECK(verify_init_positivity(unit, 40, 0.01).passed);

  CertSetup zero = setup(0);
  zero.init = InitScheme::zero;
  CHECK(verify_init_positivity(zero, 10).status == CertStatus::inapplicable);

  for (double sigma : {0.5, 1.0}) {
    const Certificate g = verify_gaussian_lemma(3, 200000, sigma);
    CHECK(g.passed);
    CHECK(g.context["closed_form"].get<double>() == doctest::Approx(sigma * sigma * std::exp(sigma * sigma)));
  }
}

TEST_CASE("converged negativity needs its accuracy precondition") {
  const CertSetup s = setup(2);
  const NetworkParams params = init_parameters(s.spec, 2);
  const Dataset data = synth_dataset(10, 3, 8, 8, 32, 0.0, 2);
  std::vector<std::size_t> idx(32);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const ArchSample sample = certificate_sample(s.spec, 2);
  const Certificate c = verify_converged_negativity(s.spec, params, data, idx, sample);
  CHECK(c.status == CertStatus::inapplicable);
  CHECK_FALSE(c.passed);
  CHECK(c.context["accuracy"].get<double>() < 0.95);
  const Certificate loose = verify_converged_negativity(s.spec, params, data, idx, sample, 0.0);
  CHECK(loose.status != CertStatus::inapplicable);
}

TEST_CASE("estimator equivalences") {
  const Certificate d = verify_darts_autodiff(setup(6));
  CHECK(d.passed);
  CHECK(d.residual < 1e-6);
  const Certificate s = verify_snas_discrete_limit(6, 4000);
  CHECK(s.passed);
  CHECK(s.context["coordinates"].size() == 6);
}

TEST_CASE("suite selection") {
  const auto c = run_suite("cor12", 0);
  CHECK(c.size() == 21);
  for (const auto& x : c) CHECK(x.passed);
  CHECK_THROWS_AS(run_suite("thm9", 0), std::invalid_argument);
}
