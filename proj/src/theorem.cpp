#include "nascost/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "nascost/rng.hpp"

namespace nascost {

std::string to_string(CertStatus s) {
  switch (s) {
    case CertStatus::pass: return "pass";
    case CertStatus::fail: return "fail";
    case CertStatus::inapplicable: return "inapplicable";
    case CertStatus::exception: return "exception";
  }
  return "?";
}

void Certificate::judge() {
  passed = std::isfinite(residual) && residual <= tolerance;
  status = passed ? CertStatus::pass : CertStatus::fail;
}

void to_json(nlohmann::json& j, const Certificate& c) {
  j = nlohmann::json{{"name", c.name},     {"residual", c.residual},          {"tolerance", c.tolerance},
                     {"passed", c.passed}, {"status", to_string(c.status)}, {"seed", c.seed},
                     {"context", c.context}};
  if (c.effect_size) j["effect_size"] = *c.effect_size;
  if (c.p_value) j["p_value"] = *c.p_value;
}

ArchSample certificate_sample(const NetworkSpec& spec, std::uint64_t seed,
                              const std::vector<std::map<Edge, OpKind>>& forced) {
  const ArchState arch = ArchState::uniform(spec, seed);
  ArchSample s = sample_discrete(arch, true, 0);
  for (std::size_t c = 0; c < spec.cells.size(); ++c) {
    const CellSpec& cell = spec.cells[c];
    for (auto& [e, k] : s.choice[c]) {
      if (cell.role(e) != EdgeRole::intermediate) continue;
      const auto ops = cell.ops_on(e);
      if (is_norm_terminated(ops[k])) continue;
      std::vector<std::size_t> ok;
      for (std::size_t m = 0; m < ops.size(); ++m)
        if (is_norm_terminated(ops[m])) ok.push_back(m);
      if (!ok.empty())
        k = ok[hash_counter({seed, c, static_cast<std::uint64_t>(e.from), static_cast<std::uint64_t>(e.to)}) % ok.size()];
    }
    if (c < forced.size()) {
      for (const auto& [e, op] : forced[c]) {
        const auto ops = cell.ops_on(e);
        auto it = std::find(ops.begin(), ops.end(), op);
        if (it == ops.end() || !s.choice[c].contains(e))
          throw std::invalid_argument("cannot force " + to_string(op) + " on edge " + e.str());
        s.choice[c][e] = static_cast<std::size_t>(it - ops.begin());
      }
    }
  }
  return s;
}

Probe run_probe(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                std::span<const std::size_t> indices, const ArchSample& sample) {
  Probe p;
  p.sample = sample;
  p.labels = data.batch_labels(indices);
  const auto w = make_weights(p.graph, sample);
  p.trace = forward(p.graph, spec, params, data.batch(indices), w);
  p.loss = ce_loss_and_entropy(p.graph, p.trace.logits, p.labels);
  p.graph.backward(p.loss.loss);
  return p;
}

namespace {

Dataset setup_data(const CertSetup& s, std::uint64_t seed) {
  return synth_dataset(s.spec.num_classes, s.spec.in_channels, s.spec.height, s.spec.width, s.batch, s.data_noise,
                       seed ^ 0xd1b54a32d192ed03ULL);
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

nlohmann::json setup_context(const CertSetup& s) {
  return {{"cells", s.spec.cells.size()},
          {"norm", to_string(s.spec.norm.kind)},
          {"stacking_order", to_string(s.spec.order)},
          {"batch", s.batch},
          {"channels", s.spec.channels}};
}

// Tracks the worst |value| against a scale-relative tolerance.
struct Worst {
  double rel = 0.0;
  double residual = 0.0;
  double tolerance = 0.0;
  std::size_t count = 0;
  void add(double value, double tol) {
    ++count;
    const double r = tol > 0.0 ? std::abs(value) / tol : (value == 0.0 ? 0.0 : INFINITY);
    if (count == 1 || r > rel) {
      rel = r;
      residual = std::abs(value);
      tolerance = tol;
    }
  }
};

Probe probe_for(const CertSetup& setup, const ArchSample& s) {
  const NetworkParams params = init_parameters(setup.spec, setup.seed, setup.init);
  const Dataset data = setup_data(setup, setup.seed);
  const auto idx = iota_indices(data.size());
  return run_probe(setup.spec, params, data, idx, s);
}

}  // namespace

Probe run_probe(const CertSetup& setup, const ArchSample& sample) { return probe_for(setup, sample); }

Certificate verify_conv_linearity(const CertSetup& setup, OpKind conv_op, std::size_t cell, Edge edge) {
  if (!is_conv(conv_op)) throw std::invalid_argument("conv linearity needs a convolution candidate, got " + to_string(conv_op));
  std::vector<std::map<Edge, OpKind>> forced(setup.spec.cells.size());
  forced.at(cell)[edge] = conv_op;
  Probe p = probe_for(setup, certificate_sample(setup.spec, setup.seed, forced));
  const Graph& g = p.graph;
  const CellTrace& ct = p.trace.cells.at(cell);
  const Var source = ct.nodes.at(static_cast<std::size_t>(edge.from));
  const Var cand = ct.candidate_outputs.at(edge).front().second;

  std::vector<const OpRecord*> chain;  // output side first
  for (Var v = cand; !(v == source);) {
    const auto prod = g.producer(v);
    if (!prod) throw std::logic_error("candidate chain does not reach its source node");
    chain.push_back(&g.op(*prod));
    v = chain.back()->inputs.at(0);
  }
  // the edge-output seed is orthogonal to a norm-terminated chain, so also
  // drive the last convolution with a random cotangent
  std::optional<Var> stage_in, stage_out;
  for (const OpRecord* op : chain)
    if (op->name == "conv2d") {
      if (!stage_out) stage_out = op->output;
      stage_in = op->inputs[0];
    }
  if (!stage_out) throw std::logic_error("no convolution found on edge " + edge.str());
  Tensor r(g.value(*stage_out).shape());
  std::mt19937_64 rng(setup.seed ^ 0x5eedULL);
  std::normal_distribution<double> nd;
  for (double& v : r.storage()) v = nd(rng);
  const std::vector<Seed> seeds{{ct.edge_outputs.at(edge), g.grad(ct.edge_outputs.at(edge))}, {*stage_out, r}};

  Certificate c;
  c.name = "conv_linearity/" + to_string(conv_op);
  c.seed = setup.seed;
  c.context = setup_context(setup);
  c.context["edge"] = edge.str();
  Worst w;
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t which = 0; which < seeds.size(); ++which) {
    const Gradients G = g.propagate(std::span<const Seed>(&seeds[which], 1));
    auto contract = [&](Var v) { return dot(G.at(v), g.value(v)); };
    for (const OpRecord* op : chain) {
      if (op->name != "conv2d" && op->name != "relu") continue;
      if (!G.has(op->output)) continue;
      const double a = contract(op->inputs[0]), b = contract(op->output);
      w.add(a - b, 1e-8 * std::abs(b) + 1e-10);
    }
    lhs = contract(*stage_in);
    rhs = contract(*stage_out);
    w.add(lhs - rhs, 1e-8 * std::abs(rhs) + 1e-10);
  }
  c.context["stage_lhs"] = lhs;
  c.context["stage_rhs"] = rhs;
  c.context["pairs"] = w.count;
  c.residual = w.residual;
  c.tolerance = w.tolerance;
  c.judge();
  return c;
}

Certificate verify_norm_orthogonality(const CertSetup& setup) {
  Probe p = probe_for(setup, certificate_sample(setup.spec, setup.seed));
  const Graph& g = p.graph;
  const Seed seed{p.loss.loss, Tensor::scalar(1.0)};
  const Gradients G = g.propagate(std::span<const Seed>(&seed, 1));
  Certificate c;
  c.name = "norm_orthogonality/" + to_string(setup.spec.norm.kind);
  c.seed = setup.seed;
  c.context = setup_context(setup);
  Worst w;
  for (std::size_t i = 0; i < g.num_ops(); ++i) {
    const OpRecord& op = g.op(i);
    if (op.name != "normalize") continue;
    const Tensor* gx = G.find(op.inputs[0]);
    if (gx == nullptr) continue;
    const Tensor& x = g.value(op.inputs[0]);
    // absolute floor: with instance norm and no affine the head sees a
    // constant and every gradient here is rounding noise
    w.add(dot(*gx, x), 1e-8 * abs_dot(*gx, x) + 1e-14);
  }
  c.context["norm_layers"] = w.count;
  c.residual = w.residual;
  c.tolerance = w.tolerance;
  c.judge();
  if (w.count == 0) c.status = CertStatus::inapplicable, c.passed = false;
  return c;
}

Certificate verify_instance_norm_zero_cost(const CertSetup& setup) {
  CertSetup s = setup;
  s.spec.norm.kind = NormKind::instance;
  s.spec.norm.affine = false;
  Probe p = probe_for(s, certificate_sample(s.spec, s.seed));
  Certificate c;
  c.name = "instance_norm_zero_cost";
  c.seed = s.seed;
  c.context = setup_context(s);
  double worst = 0.0;
  std::size_t n = 0;
  for (std::size_t ci = 0; ci < s.spec.cells.size(); ++ci)
    for (Edge e : s.spec.cells[ci].edges()) {
      worst = std::max(worst, std::abs(edge_cost(p.graph, p.trace, ci, e)));
      ++n;
    }
  c.context["edges"] = n;
  c.context["loss"] = p.loss.value;
  c.residual = worst;
  c.tolerance = 1e-10;
  c.judge();
  return c;
}

Certificate verify_bn_blocking(const CertSetup& setup, const std::vector<std::map<Edge, OpKind>>& forced) {
  const ArchSample s = certificate_sample(setup.spec, setup.seed, forced);
  Probe p = probe_for(setup, s);
  const NetworkSpec& spec = setup.spec;
  Certificate c;
  c.name = "bn_blocking";
  c.seed = setup.seed;
  c.context = setup_context(setup);
  Worst w;
  auto skip_terms = nlohmann::json::array();
  double skip_max = 0.0;

  auto as_path = [](int cell, const std::vector<int>& nodes) {
    Path path;
    for (int n : nodes) path.push_back({cell, n});
    return path;
  };
  for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
    const CellSpec& cell = spec.cells[ci];
    const int cidx = static_cast<int>(ci);
    for (Edge e : cell.edges()) {
      if (cell.role(e) != EdgeRole::intermediate) continue;
      const OpKind op = cell.is_fixed(e) ? cell.fixed_ops.at(e) : cell.ops_on(e).at(s.choice[ci].at(e));
      if (op == OpKind::none) continue;
      for (auto route : cell_routes(cell, cell.output_node(), e.to)) {
        route.push_back(e.from);
        const PathTerm t = path_cost_term(p.graph, p.trace, spec, as_path(cidx, route), PathCarrier::tail_node);
        if (op == OpKind::skip_connect) {
          skip_terms.push_back({{"cell", ci}, {"edge", e.str()}, {"value", t.value}, {"scale", t.scale}});
          skip_max = std::max(skip_max, std::abs(t.value));
        } else {
          w.add(t.value, 1e-8 * t.scale);
        }
      }
    }
    if (ci == 0) continue;
    for (int k = 0; k < cell.num_input_nodes; ++k) {
      const int src = spec.input_source(ci, k);
      for (auto route : cell_routes(cell, cell.output_node(), k)) {
        Path path = as_path(cidx, route);
        path.push_back({src, spec.cells[static_cast<std::size_t>(src)].output_node()});
        const PathTerm t = path_cost_term(p.graph, p.trace, spec, path, PathCarrier::tail_node);
        w.add(t.value, 1e-8 * t.scale);
      }
    }
  }
  c.context["blocked_paths"] = w.count;
  c.residual = w.residual;
  c.tolerance = w.tolerance;
  c.judge();
  if (!skip_terms.empty()) {
    double mean_abs = 0.0;
    std::size_t n = 0;
    for (std::size_t ci = 0; ci < spec.cells.size(); ++ci)
      for (Edge e : spec.cells[ci].edges()) {
        const double v = edge_cost(p.graph, p.trace, ci, e);
        if (v != 0.0) mean_abs += std::abs(v), ++n;
      }
    mean_abs = n ? mean_abs / static_cast<double>(n) : 0.0;
    c.context["skip_terms"] = skip_terms;
    c.context["skip_to_mean_edge_cost_ratio"] = mean_abs > 0.0 ? skip_max / mean_abs : 0.0;
    if (c.passed) c.status = CertStatus::exception;
  }
  if (w.count == 0 && skip_terms.empty()) {
    c.status = CertStatus::inapplicable;
    c.passed = false;
  }
  return c;
}

Certificate verify_cost_sum_nonlast(const CertSetup& setup) {
  if (setup.spec.cells.size() < 2) throw std::invalid_argument("cost sum of non-last cells needs at least two cells");
  Probe p = probe_for(setup, certificate_sample(setup.spec, setup.seed));
  const std::size_t last = setup.spec.cells.size() - 1;
  Certificate c;
  c.name = "cost_sum_nonlast";
  c.seed = setup.seed;
  c.context = setup_context(setup);
  const double last_sum = cell_cost_sum(p.graph, p.trace, setup.spec.cells[last], last);
  double worst = 0.0;
  auto sums = nlohmann::json::array();
  for (std::size_t ci = 0; ci < last; ++ci) {
    const double s = cell_cost_sum(p.graph, p.trace, setup.spec.cells[ci], ci);
    sums.push_back(s);
    worst = std::max(worst, std::abs(s));
  }
  c.context["nonlast_sums"] = sums;
  c.context["last_sum"] = last_sum;
  c.context["L_minus_H"] = p.loss.value - p.loss.entropy;
  c.residual = worst;
  c.tolerance = 1e-6 * std::abs(last_sum);
  c.judge();
  return c;
}

Certificate verify_cost_telescoping(const CertSetup& setup) {
  Probe p = probe_for(setup, certificate_sample(setup.spec, setup.seed));
  double total = 0.0;
  for (std::size_t ci = 0; ci < setup.spec.cells.size(); ++ci)
    total += cell_cost_sum(p.graph, p.trace, setup.spec.cells[ci], ci);
  Certificate c;
  c.name = "cost_telescoping";
  c.seed = setup.seed;
  c.context = setup_context(setup);
  c.context["total"] = total;
  c.context["L_minus_H"] = p.loss.value - p.loss.entropy;
  c.residual = std::abs(total - (p.loss.value - p.loss.entropy));
  c.tolerance = 1e-6;
  c.judge();
  return c;
}

Certificate verify_cost_identity(const CertSetup& setup, int trials) {
  Certificate c;
  c.name = "cost_identity";
  c.seed = setup.seed;
  c.context = setup_context(setup);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    CertSetup s = setup;
    s.seed = hash_counter({setup.seed, static_cast<std::uint64_t>(t), 0x1d});
    const ArchState arch = ArchState::uniform(s.spec, s.seed);
    Probe p = probe_for(s, sample_discrete(arch, true, 0));
    const Decomposition d = decompose_output_cost(p.graph, p.trace, p.loss, p.labels);
    const double lh = d.L - d.H;
    worst = std::max({worst, std::abs(d.C - lh), std::abs(d.C_activation - lh)});
  }
  c.context["trials"] = trials;
  c.residual = worst;
  c.tolerance = 1e-6;
  c.judge();
  return c;
}

Certificate verify_init_positivity(const CertSetup& setup, int seeds, double alpha) {
  Certificate c;
  c.name = "init_positivity/" + to_string(setup.init);
  c.seed = setup.seed;
  c.context = setup_context(setup);
  std::vector<double> cz;
  for (int i = 0; i < seeds; ++i) {
    CertSetup s = setup;
    s.seed = hash_counter({setup.seed, static_cast<std::uint64_t>(i), 0x1f});
    const NetworkParams params = init_parameters(s.spec, s.seed, s.init);
    const Dataset data = setup_data(s, s.seed);
    const auto idx = iota_indices(data.size());
    const ArchState arch = ArchState::uniform(s.spec, s.seed);
    Graph g;
    ForwardOptions fo;
    fo.capture = false;
    fo.params_require_grad = false;
    const auto w = make_weights(g, sample_discrete(arch, true, 0));
    const ForwardTrace t = forward(g, s.spec, params, data.batch(idx), w, fo);
    cz.push_back(logit_form_cost(g.value(t.logits), data.batch_labels(idx)));
  }
  const double n = static_cast<double>(cz.size());
  const double mean = std::accumulate(cz.begin(), cz.end(), 0.0) / n;
  double var = 0.0;
  for (double v : cz) var += (v - mean) * (v - mean);
  var /= (n - 1.0);
  const double sd = std::sqrt(var);
  c.context["seeds"] = seeds;
  c.context["mean_C"] = mean;
  c.context["sd_C"] = sd;
  if (!(sd > 0.0)) {
    c.status = CertStatus::inapplicable;
    c.passed = false;
    c.residual = std::abs(mean);
    c.tolerance = 0.0;
    c.context["reason"] = "zero-variance costs across initialisations";
    return c;
  }
  const double tstat = mean / (sd / std::sqrt(n));
  const boost::math::students_t dist(n - 1.0);
  const double p = boost::math::cdf(boost::math::complement(dist, tstat));
  c.p_value = p;
  c.effect_size = mean / sd;
  c.context["t"] = tstat;
  c.residual = p;
  c.tolerance = alpha;
  c.judge();
  if (!(mean > 0.0)) c.passed = false, c.status = CertStatus::fail;
  return c;
}

Certificate verify_gaussian_lemma(std::uint64_t seed, std::size_t draws, double sigma) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    const double y1 = normal(rng), y2 = normal(rng);
    const double v = y1 * std::exp(y1 + y2);
    const double d = v - mean;
    mean += d / static_cast<double>(i + 1);
    m2 += d * (v - mean);
  }
  const double se = std::sqrt(m2 / static_cast<double>(draws - 1) / static_cast<double>(draws));
  const double exact = sigma * sigma * std::exp(sigma * sigma);
  Certificate c;
  c.name = "gaussian_lemma";
  c.seed = seed;
  c.context = {{"draws", draws}, {"sigma", sigma}, {"monte_carlo", mean}, {"closed_form", exact}, {"standard_error", se}};
  c.residual = std::abs(mean - exact);
  c.tolerance = 3.0 * se;
  c.effect_size = (mean - exact) / se;
  c.judge();
  return c;
}

Certificate verify_converged_negativity(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                                        std::span<const std::size_t> indices, const ArchSample& sample,
                                        double min_accuracy) {
  Graph g;
  ForwardOptions fo;
  fo.capture = false;
  fo.params_require_grad = false;
  const auto w = make_weights(g, sample);
  const ForwardTrace t = forward(g, spec, params, data.batch(indices), w, fo);
  const auto labels = data.batch_labels(indices);
  const Tensor& y = g.value(t.logits);
  const std::size_t N = y.shape().c;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const double* row = y.data().data() + b * N;
    correct += static_cast<std::size_t>(std::max_element(row, row + N) - row) == static_cast<std::size_t>(labels[b]);
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(labels.size());
  Certificate c;
  c.name = "converged_negativity";
  c.context = {{"accuracy", acc}, {"min_accuracy", min_accuracy}, {"batch", labels.size()}};
  const double C = logit_form_cost(y, labels);
  c.context["C"] = C;
  c.residual = C;
  c.tolerance = 0.0;
  if (acc < min_accuracy) {
    c.status = CertStatus::inapplicable;
    c.passed = false;
    c.context["reason"] = "accuracy precondition not met";
    return c;
  }
  c.passed = C < 0.0;
  c.status = c.passed ? CertStatus::pass : CertStatus::fail;
  return c;
}

Certificate verify_darts_autodiff(const CertSetup& setup) {
  ArchState arch = ArchState::uniform(setup.spec, setup.seed);
  std::mt19937_64 rng(setup.seed + 17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& cell : arch.logits)
    for (auto& [e, l] : cell)
      for (double& v : l) v = u(rng);
  const NetworkParams params = init_parameters(setup.spec, setup.seed, setup.init);
  const Dataset data = setup_data(setup, setup.seed);
  const auto idx = iota_indices(data.size());
  const auto labels = data.batch_labels(idx);
  const Tensor x = data.batch(idx);

  // cost route: relaxed forward, per-candidate dL/dZ, softmax Jacobian
  Graph g1;
  const RelaxedSample rs = darts_weights(arch);
  const ForwardTrace t1 = forward(g1, setup.spec, params, x, make_weights(g1, rs));
  g1.backward(ce_loss_and_entropy(g1, t1.logits, labels).loss);
  const auto grad_cost = arch_grad(Framework::darts, candidate_costs(g1, t1, arch), rs, arch);

  // autodiff route: logits are leaves and the softmax is on the tape
  Graph g2;
  std::vector<CellWeights> w(arch.logits.size());
  std::vector<std::map<Edge, Var>> leaves(arch.logits.size());
  for (std::size_t c = 0; c < arch.logits.size(); ++c)
    for (const auto& [e, l] : arch.logits[c]) {
      const Var a = g2.leaf(Tensor(Shape{1, l.size(), 1, 1}, l), true, "alpha");
      leaves[c][e] = a;
      const Var p = softmax(g2, a);
      for (std::size_t k = 0; k < l.size(); ++k) w[c][e].push_back({k, element(g2, p, k)});
    }
  ForwardOptions fo;
  fo.capture = false;
  const ForwardTrace t2 = forward(g2, setup.spec, params, x, w, fo);
  g2.backward(ce_loss_and_entropy(g2, t2.logits, labels).loss);

  double diff = 0.0, scale = 0.0;
  for (std::size_t c = 0; c < arch.logits.size(); ++c)
    for (const auto& [e, l] : arch.logits[c]) {
      const Tensor& ga = g2.grad(leaves[c][e]);
      for (std::size_t k = 0; k < l.size(); ++k) {
        diff = std::max(diff, std::abs(ga[k] - grad_cost[c].at(e)[k]));
        scale = std::max(scale, std::abs(ga[k]));
      }
    }
  Certificate c;
  c.name = "darts_autodiff";
  c.seed = setup.seed;
  c.context = setup_context(setup);
  c.context["max_abs_grad"] = scale;
  c.residual = scale > 0.0 ? diff / scale : diff;
  c.tolerance = 1e-6;
  c.judge();
  return c;
}

namespace {

// Two edges of scalar-multiplier candidates; L is affine in each edge's
// weights, so its expectation over independent one-hot samples equals L at
// the mean weights.
struct Toy {
  Tensor x, r, q;
  std::vector<double> a, b;
  std::vector<double> alpha1, alpha2;

  Var loss(Graph& g, const std::vector<Var>& z1, const std::vector<Var>& z2) const {
    const Var xv = g.leaf(x);
    std::vector<Var> p1, p2;
    for (std::size_t k = 0; k < a.size(); ++k) p1.push_back(scale(g, scale(g, xv, a[k]), z1[k]));
    const Var n1 = add(g, p1);
    for (std::size_t k = 0; k < b.size(); ++k) p2.push_back(scale(g, scale(g, n1, b[k]), z2[k]));
    const Var n2 = add(g, p2);
    return add(g, sum_all(g, mul(g, n2, g.leaf(r))), sum_all(g, mul(g, n1, g.leaf(q))));
  }
};

Toy make_toy(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Toy t;
  t.x = Tensor(Shape{1, 4, 1, 1});
  t.r = Tensor(Shape{1, 4, 1, 1});
  t.q = Tensor(Shape{1, 4, 1, 1});
  for (Tensor* v : {&t.x, &t.r, &t.q})
    for (double& e : v->storage()) e = u(rng);
  t.a = {0.0, 1.0 + u(rng), -1.0 + u(rng)};
  t.b = {0.0, 1.5 + u(rng), -1.5 + u(rng)};
  t.alpha1 = {u(rng), u(rng), u(rng)};
  t.alpha2 = {u(rng), u(rng), u(rng)};
  return t;
}

std::vector<Var> leaves_of(Graph& g, const std::vector<double>& z) {
  std::vector<Var> v;
  for (double e : z) v.push_back(g.leaf(Tensor::scalar(e), true));
  return v;
}

}  // namespace

Certificate verify_snas_discrete_limit(std::uint64_t seed, std::size_t samples, double temperature) {
  const Toy toy = make_toy(seed);
  const Edge e1{0, 1}, e2{1, 2};
  const std::size_t K = 3;
  const auto p1 = softmax(toy.alpha1), p2 = softmax(toy.alpha2);

  // exact gradient of the expected loss by autodiff through the softmax
  std::vector<double> exact(2 * K);
  {
    Graph g;
    const Var a1 = g.leaf(Tensor(Shape{1, K, 1, 1}, toy.alpha1), true);
    const Var a2 = g.leaf(Tensor(Shape{1, K, 1, 1}, toy.alpha2), true);
    const Var s1 = softmax(g, a1), s2 = softmax(g, a2);
    std::vector<Var> z1, z2;
    for (std::size_t k = 0; k < K; ++k) z1.push_back(element(g, s1, k)), z2.push_back(element(g, s2, k));
    g.backward(toy.loss(g, z1, z2));
    for (std::size_t k = 0; k < K; ++k) exact[k] = g.grad(a1)[k], exact[K + k] = g.grad(a2)[k];
  }

  std::vector<RunningStat> dsnas(2 * K), snas(2 * K), diff(2 * K), raw(2 * K);
  for (std::size_t i = 0; i < samples; ++i) {
    std::vector<double> g1(K), g2(K);
    for (std::size_t k = 0; k < K; ++k) {
      g1[k] = gumbel_draw(seed, 0, e1, i, k);
      g2[k] = gumbel_draw(seed, 0, e2, i, k);
    }
    std::vector<double> d(2 * K), s(2 * K);
    {
      // discrete: gumbel-max sample, score function times edge cost
      auto argmax = [&](const std::vector<double>& al, const std::vector<double>& gg) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < K; ++k)
          if (al[k] + gg[k] > al[best] + gg[best]) best = k;
        return best;
      };
      const std::size_t s1 = argmax(toy.alpha1, g1), s2 = argmax(toy.alpha2, g2);
      std::vector<double> z1(K, 0.0), z2(K, 0.0);
      z1[s1] = 1.0;
      z2[s2] = 1.0;
      Graph g;
      const auto l1 = leaves_of(g, z1), l2 = leaves_of(g, z2);
      g.backward(toy.loss(g, l1, l2));
      const double c1 = g.grad(l1[s1]).item(), c2 = g.grad(l2[s2]).item();
      for (std::size_t k = 0; k < K; ++k) {
        d[k] = ((k == s1 ? 1.0 : 0.0) - p1[k]) * c1;
        d[K + k] = ((k == s2 ? 1.0 : 0.0) - p2[k]) * c2;
      }
    }
    {
      // relaxed: pathwise gradient through the tempered softmax. Its raw
      // value is a spike of height ~1/temperature hit with probability
      // ~temperature, so each coordinate is also averaged exactly over its
      // own gumbel variable given the others (same expectation, bounded
      // variance). L is affine in each edge's weights, so dL/dZ on one edge
      // does not move while that edge's weights vary.
      std::vector<double> y1(K), y2(K);
      for (std::size_t k = 0; k < K; ++k) y1[k] = toy.alpha1[k] + g1[k], y2[k] = toy.alpha2[k] + g2[k];
      const auto z1 = softmax(y1, temperature), z2 = softmax(y2, temperature);
      Graph g;
      const auto l1 = leaves_of(g, z1), l2 = leaves_of(g, z2);
      g.backward(toy.loss(g, l1, l2));
      std::vector<double> c1(K), c2(K);
      for (std::size_t k = 0; k < K; ++k) c1[k] = g.grad(l1[k]).item(), c2[k] = g.grad(l2[k]).item();
      std::vector<double> zbuf(K);
      auto pathwise = [&](const std::vector<double>& y, const std::vector<double>& cost, std::size_t k) {
        const double top = *std::max_element(y.begin(), y.end());
        double norm = 0.0, m = 0.0;
        for (std::size_t j = 0; j < K; ++j) norm += zbuf[j] = std::exp((y[j] - top) / temperature);
        for (std::size_t j = 0; j < K; ++j) m += (zbuf[j] /= norm) * cost[j];
        return zbuf[k] * (cost[k] - m) / temperature;
      };
      auto conditional = [&](std::vector<double> y, const std::vector<double>& al, const std::vector<double>& cost,
                             std::size_t k) {
        double tie = -INFINITY;
        for (std::size_t j = 0; j < K; ++j)
          if (j != k) tie = std::max(tie, y[j]);
        // in units of the temperature around the tie; the integrand decays
        // like exp(-|v|)
        auto integrand = [&](double v) {
          y[k] = tie + v * temperature;
          const double u = y[k] - al[k];
          return pathwise(y, cost, k) * std::exp(-u - std::exp(-u)) * temperature;
        };
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(integrand, -60.0, 60.0, 5, 1e-10);
      };
      for (std::size_t k = 0; k < K; ++k) {
        raw[k].add(pathwise(y1, c1, k));
        raw[K + k].add(pathwise(y2, c2, k));
        s[k] = conditional(y1, toy.alpha1, c1, k);
        s[K + k] = conditional(y2, toy.alpha2, c2, k);
      }
    }
    for (std::size_t j = 0; j < 2 * K; ++j) {
      dsnas[j].add(d[j]);
      snas[j].add(s[j]);
      diff[j].add(s[j] - d[j]);
    }
  }

  Certificate c;
  c.name = "snas_discrete_limit";
  c.seed = seed;
  double worst_z = 0.0;
  auto coords = nlohmann::json::array();
  // paired: both estimators read the same gumbel draws
  for (std::size_t j = 0; j < 2 * K; ++j) {
    const double se = std::sqrt(diff[j].variance() / static_cast<double>(samples));
    const double z = se > 0.0 ? std::abs(diff[j].mean) / se : 0.0;
    worst_z = std::max(worst_z, z);
    coords.push_back({{"snas", snas[j].mean},
                      {"dsnas", dsnas[j].mean},
                      {"exact", exact[j]},
                      {"se", se},
                      {"z", z},
                      {"snas_raw_pathwise", raw[j].mean}});
  }
  c.context = {{"samples", samples}, {"temperature", temperature}, {"coordinates", coords}};
  c.residual = worst_z;
  c.tolerance = 3.0;
  c.effect_size = worst_z;
  c.judge();
  return c;
}

}  // namespace nascost
