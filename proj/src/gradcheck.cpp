#include "nascost/gradcheck.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "nascost/arch.hpp"
#include "nascost/ops.hpp"

namespace nascost {

GradcheckResult gradcheck(const std::string& name, const std::vector<Tensor>& inputs, const LossBuilder& loss,
                          std::uint64_t seed, const GradcheckOptions& opt) {
  GradcheckResult res;
  res.name = name;
  res.seed = seed;

  Graph g;
  std::vector<Var> leaves;
  for (const Tensor& t : inputs) leaves.push_back(g.leaf(t, true));
  g.backward(loss(g, leaves));

  auto eval = [&](std::size_t which, std::size_t idx, double delta) {
    Graph h;
    std::vector<Var> ls;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      Tensor t = inputs[i];
      if (i == which) t[idx] += delta;
      ls.push_back(h.leaf(std::move(t), true));
    }
    return h.value(loss(h, ls)).item();
  };

  std::size_t total = 0;
  for (const Tensor& t : inputs) total += t.size();
  if (total == 0) throw std::invalid_argument("gradcheck: no input coordinates");
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (std::size_t n = 0; n < opt.coordinates; ++n) {
    std::size_t flat = pick(rng), which = 0;
    while (flat >= inputs[which].size()) flat -= inputs[which++].size();
    const double analytic = g.grad(leaves[which])[flat];
    const double numeric = (eval(which, flat, opt.step) - eval(which, flat, -opt.step)) / (2.0 * opt.step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), opt.floor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic - numeric) / denom);
    ++res.coordinates;
  }
  res.passed = res.max_rel_error < opt.tolerance;
  return res;
}

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(s);
  for (double& v : t.storage()) v = u(rng);
  return t;
}

// sum(y * r) for a fixed random r, so every output entry matters
Var project(Graph& g, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed + 77);
  return sum_all(g, mul(g, y, g.leaf(random_tensor(g.shape(y), rng))));
}

}  // namespace

const std::vector<std::string>& gradcheck_primitives() {
  static const std::vector<std::string> names = {
      "conv2d",         "conv2d_grouped", "conv2d_dilated", "batch_norm", "instance_norm", "layer_norm",
      "affine_norm",    "relu",           "max_pool3x3",    "avg_pool3x3", "adaptive_avg_pool", "linear_head",
      "ce_loss",        "add",            "concat",          "scale",      "mul",          "softmax",
      "element",        "minimal_cell"};
  return names;
}

GradcheckResult run_primitive_gradcheck(const std::string& name, std::uint64_t seed, const GradcheckOptions& opt) {
  std::mt19937_64 rng(seed);
  auto rnd = [&](Shape s) { return random_tensor(s, rng); };
  const Shape x4{2, 3, 5, 5};

  if (name == "conv2d" || name == "conv2d_grouped" || name == "conv2d_dilated") {
    ConvOptions co;
    Shape ws{4, 3, 3, 3};
    Shape xs = x4;
    if (name == "conv2d") co.padding = 1;
    if (name == "conv2d_grouped") {
      xs = Shape{2, 4, 5, 5};
      ws = Shape{4, 1, 3, 3};
      co.groups = 4;
      co.padding = 1;
    }
    if (name == "conv2d_dilated") {
      co.dilation = 2;
      co.padding = 2;
    }
    return gradcheck(name, {rnd(xs), rnd(ws)},
                     [co, seed](Graph& g, const std::vector<Var>& l) { return project(g, conv2d(g, l[0], l[1], co), seed); },
                     seed, opt);
  }
  if (name == "batch_norm" || name == "instance_norm" || name == "layer_norm") {
    NormConfig cfg;
    cfg.kind = name == "batch_norm" ? NormKind::batch : name == "instance_norm" ? NormKind::instance : NormKind::layer;
    return gradcheck(name, {rnd(x4)},
                     [cfg, seed](Graph& g, const std::vector<Var>& l) { return project(g, normalize(g, l[0], cfg), seed); },
                     seed, opt);
  }
  if (name == "affine_norm") {
    NormConfig cfg;
    cfg.affine = true;
    return gradcheck(name, {rnd(x4), rnd(Shape{1, 3, 1, 1}), rnd(Shape{1, 3, 1, 1})},
                     [cfg, seed](Graph& g, const std::vector<Var>& l) {
                       return project(g, normalize(g, l[0], cfg, l[1], l[2]), seed);
                     },
                     seed, opt);
  }
  if (name == "relu" || name == "max_pool3x3" || name == "avg_pool3x3" || name == "adaptive_avg_pool") {
    return gradcheck(name, {rnd(x4)},
                     [name, seed](Graph& g, const std::vector<Var>& l) {
                       Var y = name == "relu"          ? relu(g, l[0])
                               : name == "max_pool3x3" ? max_pool3x3(g, l[0])
                               : name == "avg_pool3x3" ? avg_pool3x3(g, l[0])
                                                       : adaptive_avg_pool(g, l[0]);
                       return project(g, y, seed);
                     },
                     seed, opt);
  }
  if (name == "linear_head") {
    return gradcheck(name, {rnd(Shape{3, 4, 1, 1}), rnd(Shape{4, 5, 1, 1})},
                     [seed](Graph& g, const std::vector<Var>& l) { return project(g, linear_head(g, l[0], l[1]), seed); },
                     seed, opt);
  }
  if (name == "ce_loss") {
    std::vector<int> labels = {0, 2, 1, 4};
    return gradcheck(name, {rnd(Shape{4, 5, 1, 1})},
                     [labels](Graph& g, const std::vector<Var>& l) { return ce_loss_and_entropy(g, l[0], labels).loss; },
                     seed, opt);
  }
  if (name == "add" || name == "mul") {
    return gradcheck(name, {rnd(x4), rnd(x4)},
                     [name, seed](Graph& g, const std::vector<Var>& l) {
                       return project(g, name == "add" ? add(g, l[0], l[1]) : mul(g, l[0], l[1]), seed);
                     },
                     seed, opt);
  }
  if (name == "concat") {
    return gradcheck(name, {rnd(x4), rnd(Shape{2, 2, 5, 5})},
                     [seed](Graph& g, const std::vector<Var>& l) { return project(g, concat_channels(g, l), seed); },
                     seed, opt);
  }
  if (name == "scale") {
    return gradcheck(name, {rnd(x4), rnd(Shape{1, 1, 1, 1})},
                     [seed](Graph& g, const std::vector<Var>& l) { return project(g, scale(g, l[0], l[1]), seed); },
                     seed, opt);
  }
  if (name == "softmax" || name == "element") {
    return gradcheck(name, {rnd(Shape{1, 6, 1, 1})},
                     [name, seed](Graph& g, const std::vector<Var>& l) {
                       if (name == "element") return mul(g, element(g, l[0], 2), element(g, l[0], 4));
                       return project(g, softmax(g, l[0], 0.7), seed);
                     },
                     seed, opt);
  }
  if (name == "minimal_cell") {
    NetworkSpec spec;
    spec.channels = 4;
    spec.height = 5;
    spec.width = 5;
    spec.num_classes = 5;
    spec.cells = {build_minimal_cell()};
    const NetworkParams params = init_parameters(spec, seed);
    const ArchState arch = ArchState::uniform(spec, seed);
    // relaxed weights evaluate every candidate, so every parameter is live
    const RelaxedSample rs = sample_gumbel_softmax(arch, 0);
    const Tensor x = rnd(Shape{4, spec.in_channels, spec.height, spec.width});
    std::vector<int> labels = {0, 1, 2, 3};
    return gradcheck(name, params.values,
                     [&](Graph& g, const std::vector<Var>& l) {
                       ForwardOptions fo;
                       fo.capture = false;
                       fo.param_leaves = &l;
                       const ForwardTrace t = forward(g, spec, params, x, make_weights(g, rs), fo);
                       return ce_loss_and_entropy(g, t.logits, labels).loss;
                     },
                     seed, opt);
  }
  throw std::invalid_argument("unknown gradcheck primitive '" + name + "'");
}

}  // namespace nascost
