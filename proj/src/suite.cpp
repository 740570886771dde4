#include <stdexcept>

#include "nascost/theorem.hpp"

namespace nascost {

namespace {

constexpr OpKind kBlockingOps[] = {OpKind::max_pool_3x3, OpKind::avg_pool_3x3, OpKind::sep_conv_3x3,
                                   OpKind::dil_conv_3x3, OpKind::dil_conv_5x5, OpKind::sep_conv_5x5};
constexpr OpKind kConvOps[] = {OpKind::sep_conv_3x3, OpKind::dil_conv_3x3, OpKind::dil_conv_5x5,
                               OpKind::sep_conv_5x5};
constexpr Edge kIntermediate{2, 3};

CertSetup minimal(std::uint64_t seed) {
  CertSetup s;
  s.spec.cells = {build_minimal_cell()};
  s.seed = seed;
  return s;
}

CertSetup two_cells(std::uint64_t seed) {
  CertSetup s = minimal(seed);
  s.spec.cells = {build_minimal_cell(), build_minimal_cell()};
  return s;
}

Certificate tagged(Certificate c, const std::string& tag) {
  c.name += "[" + tag + "]";
  return c;
}

void blocking_sweep(std::vector<Certificate>& out, const CertSetup& s, const std::string& tag) {
  for (OpKind op : kBlockingOps)
    out.push_back(tagged(verify_bn_blocking(s, {{{kIntermediate, op}}}), tag + to_string(op)));
}

void thm1(std::vector<Certificate>& out, std::uint64_t seed) {
  const CertSetup s = minimal(seed);
  for (OpKind op : kConvOps) out.push_back(verify_conv_linearity(s, op, 0, kIntermediate));
  blocking_sweep(out, s, "");
  out.push_back(tagged(verify_bn_blocking(s, {{{kIntermediate, OpKind::skip_connect}}}), "skip_connect"));
  out.push_back(tagged(verify_bn_blocking(two_cells(seed + 1)), "two_cells"));
  for (StackingOrder order : {StackingOrder::conv_relu_norm, StackingOrder::conv_norm_relu}) {
    CertSetup v = s;
    v.spec.order = order;
    blocking_sweep(out, v, to_string(order) + ":");
  }
}

void norms(std::vector<Certificate>& out, std::uint64_t seed) {
  for (NormKind k : {NormKind::batch, NormKind::instance, NormKind::layer}) {
    CertSetup s = minimal(seed);
    s.spec.norm.kind = k;
    out.push_back(verify_norm_orthogonality(s));
  }
  out.push_back(verify_instance_norm_zero_cost(minimal(seed)));
  CertSetup ln = minimal(seed);
  ln.spec.norm.kind = NormKind::layer;
  blocking_sweep(out, ln, "layer_norm:");
}

void thm2(std::vector<Certificate>& out, std::uint64_t seed) {
  out.push_back(verify_cost_identity(minimal(seed), 100));
  out.push_back(verify_init_positivity(minimal(seed), 200, 0.01));
  out.push_back(verify_gaussian_lemma(seed, 1'000'000, 1.0));
}

void cor12(std::vector<Certificate>& out, std::uint64_t seed) {
  for (std::uint64_t i = 0; i < 20; ++i) out.push_back(verify_cost_sum_nonlast(two_cells(seed + i)));
  out.push_back(verify_cost_telescoping(two_cells(seed)));
}

void estimators(std::vector<Certificate>& out, std::uint64_t seed) {
  out.push_back(verify_darts_autodiff(minimal(seed)));
  out.push_back(verify_snas_discrete_limit(seed, 10'000, 1e-4));
}

}  // namespace

std::vector<Certificate> run_suite(const std::string& suite, std::uint64_t seed) {
  std::vector<Certificate> out;
  const bool all = suite == "all";
  if (!all && suite != "thm1" && suite != "thm2" && suite != "cor12" && suite != "norms" && suite != "estimators")
    throw std::invalid_argument("unknown suite '" + suite + "' (thm1, thm2, cor12, norms, estimators, all)");
  if (all || suite == "thm1") thm1(out, seed);
  if (all || suite == "norms") norms(out, seed);
  if (all || suite == "thm2") thm2(out, seed);
  if (all || suite == "cor12") cor12(out, seed);
  if (all || suite == "estimators") estimators(out, seed);
  return out;
}

}  // namespace nascost
