#include "nascost/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace nascost {

std::string to_string(StackingOrder s) {
  switch (s) {
    case StackingOrder::relu_conv_norm: return "relu_conv_norm";
    case StackingOrder::conv_relu_norm: return "conv_relu_norm";
    case StackingOrder::conv_norm_relu: return "conv_norm_relu";
  }
  return "?";
}

StackingOrder stacking_order_from_string(const std::string& s) {
  for (auto o : {StackingOrder::relu_conv_norm, StackingOrder::conv_relu_norm, StackingOrder::conv_norm_relu})
    if (to_string(o) == s) return o;
  throw std::invalid_argument("unknown stacking order '" + s + "'");
}

void NetworkSpec::validate() const {
  if (cells.empty()) throw std::invalid_argument("network needs at least one cell");
  if (in_channels == 0 || height == 0 || width == 0 || channels == 0)
    throw std::invalid_argument("network input and channel sizes must be positive");
  if (num_classes < 2) throw std::invalid_argument("network needs at least two classes");
  norm.validate();
  for (const auto& c : cells) c.validate();
}

std::size_t NetworkSpec::cell_output_channels(std::size_t cell) const {
  return channels * cells.at(cell).output_sources().size();
}

int NetworkSpec::input_source(std::size_t cell, int input_node) const {
  const int k = static_cast<int>(cell);
  if (k == 0) return -1;
  const int n_in = cells.at(cell).num_input_nodes;
  // the last input node reads the previous cell, earlier ones reach further
  // back while cells exist, otherwise they repeat the oldest available source
  const int back = n_in - input_node;
  return std::max(k - back, 0);
}

void to_json(nlohmann::json& j, const NetworkSpec& n) {
  j = nlohmann::json{{"in_channels", n.in_channels}, {"height", n.height},
                     {"width", n.width},             {"channels", n.channels},
                     {"num_classes", n.num_classes}, {"stacking_order", to_string(n.order)}};
  j["norm"] = {{"kind", to_string(n.norm.kind)},
               {"eps", n.norm.eps},
               {"affine", n.norm.affine},
               {"eps_mode", n.norm.eps_mode == EpsMode::floor ? "floor" : "additive"}};
  j["cells"] = n.cells;
}

void from_json(const nlohmann::json& j, NetworkSpec& n) {
  n = NetworkSpec{};
  n.in_channels = j.value("in_channels", n.in_channels);
  n.height = j.value("height", n.height);
  n.width = j.value("width", n.width);
  n.channels = j.value("channels", n.channels);
  n.num_classes = j.value("num_classes", n.num_classes);
  if (j.contains("stacking_order")) n.order = stacking_order_from_string(j.at("stacking_order").get<std::string>());
  if (j.contains("norm")) {
    const auto& nj = j.at("norm");
    if (nj.contains("kind")) n.norm.kind = norm_kind_from_string(nj.at("kind").get<std::string>());
    n.norm.eps = nj.value("eps", n.norm.eps);
    n.norm.affine = nj.value("affine", n.norm.affine);
    if (nj.contains("eps_mode")) {
      const auto m = nj.at("eps_mode").get<std::string>();
      if (m == "floor") n.norm.eps_mode = EpsMode::floor;
      else if (m == "additive") n.norm.eps_mode = EpsMode::additive;
      else throw std::invalid_argument("unknown eps_mode '" + m + "'");
    }
  }
  if (j.contains("cells")) {
    for (const auto& cj : j.at("cells")) {
      if (cj.is_string()) {
        const auto name = cj.get<std::string>();
        if (name == "minimal") n.cells.push_back(build_minimal_cell());
        else if (name == "simplified") n.cells.push_back(build_simplified_cell());
        else if (name == "modified") n.cells.push_back(build_modified_cell());
        else throw std::invalid_argument("unknown cell preset '" + name + "'");
      } else {
        n.cells.push_back(cj.get<CellSpec>());
      }
    }
  }
  n.validate();
}

std::size_t NetworkParams::add(std::string name, Tensor t) {
  values.push_back(std::move(t));
  names.push_back(std::move(name));
  return values.size() - 1;
}

namespace {

struct Initializer {
  std::mt19937_64 rng;
  InitScheme scheme;

  Tensor conv(Shape s) {
    const double fan_in = static_cast<double>(s.c * s.h * s.w);
    return normal(s, 2.0 / fan_in);
  }
  Tensor normal(Shape s, double var) {
    Tensor t(s);
    if (scheme == InitScheme::zero) return t;
    const double sd = scheme == InitScheme::unit_normal ? 1.0 : std::sqrt(var);
    std::normal_distribution<double> dist(0.0, sd);
    for (double& v : t.storage()) v = dist(rng);
    return t;
  }
};

void add_norm(NetworkParams& p, BlockParams& b, const NormConfig& norm, std::size_t c, const std::string& prefix) {
  if (!norm.affine) return;
  b.gamma = p.add(prefix + ".gamma", Tensor(Shape{1, c, 1, 1}, 1.0));
  b.beta = p.add(prefix + ".beta", Tensor(Shape{1, c, 1, 1}, 0.0));
}

BlockParams make_candidate(NetworkParams& p, Initializer& init, OpKind op, std::size_t C, const NormConfig& norm,
                           const std::string& prefix) {
  BlockParams b;
  switch (op) {
    case OpKind::none:
    case OpKind::skip_connect:
      return b;
    case OpKind::max_pool_3x3:
    case OpKind::avg_pool_3x3:
      break;
    case OpKind::sep_conv_3x3:
    case OpKind::sep_conv_5x5:
    case OpKind::dil_conv_3x3:
    case OpKind::dil_conv_5x5: {
      const std::size_t k = (op == OpKind::sep_conv_5x5 || op == OpKind::dil_conv_5x5) ? 5 : 3;
      b.weights.push_back(p.add(prefix + ".dw", init.conv(Shape{C, 1, k, k})));
      b.weights.push_back(p.add(prefix + ".pw", init.conv(Shape{C, C, 1, 1})));
      break;
    }
  }
  add_norm(p, b, norm, C, prefix + ".norm");
  return b;
}

}  // namespace

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::he_normal: return "he_normal";
    case InitScheme::unit_normal: return "unit_normal";
    case InitScheme::zero: return "zero";
  }
  return "?";
}

InitScheme init_scheme_from_string(const std::string& s) {
  for (InitScheme v : {InitScheme::he_normal, InitScheme::unit_normal, InitScheme::zero})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown init scheme '" + s + "'");
}

NetworkParams init_parameters(const NetworkSpec& spec, std::uint64_t seed, InitScheme scheme) {
  spec.validate();
  NetworkParams p;
  Initializer init{std::mt19937_64(seed), scheme};
  const std::size_t C = spec.channels;

  p.stem.weights.push_back(p.add("stem.conv", init.conv(Shape{C, spec.in_channels, 1, 1})));
  add_norm(p, p.stem, spec.norm, C, "stem.norm");

  for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
    const CellSpec& cell = spec.cells[ci];
    CellParams cp;
    const std::string cname = "cell" + std::to_string(ci);
    for (int k = 0; k < cell.num_input_nodes; ++k) {
      const int src = spec.input_source(ci, k);
      const std::size_t cin = src < 0 ? C : spec.cell_output_channels(static_cast<std::size_t>(src));
      BlockParams b;
      const std::string pre = cname + ".pre" + std::to_string(k);
      b.weights.push_back(p.add(pre + ".conv", init.conv(Shape{C, cin, 1, 1})));
      add_norm(p, b, spec.norm, C, pre + ".norm");
      cp.preprocess.push_back(std::move(b));
    }
    for (Edge e : cell.edges()) {
      std::vector<BlockParams> blocks;
      for (OpKind op : cell.ops_on(e)) {
        blocks.push_back(make_candidate(p, init, op, C, spec.norm, cname + "." + e.str() + "." + to_string(op)));
      }
      cp.ops[e] = std::move(blocks);
    }
    p.cells.push_back(std::move(cp));
  }
  const std::size_t hc = spec.head_channels();
  p.head = p.add("head", init.normal(Shape{hc, spec.num_classes, 1, 1}, 1.0 / static_cast<double>(hc)));
  return p;
}

namespace {

struct Builder {
  Graph& g;
  const NetworkSpec& spec;
  const ForwardTrace& trace;

  Var param(std::size_t id) const { return trace.params.at(id); }

  Var norm(Var x, const BlockParams& b) const {
    std::optional<Var> gamma, beta;
    if (b.gamma) gamma = param(*b.gamma);
    if (b.beta) beta = param(*b.beta);
    return normalize(g, x, spec.norm, gamma, beta);
  }

  Var conv_stage(Var x, OpKind op, const BlockParams& b) const {
    const bool dil = op == OpKind::dil_conv_3x3 || op == OpKind::dil_conv_5x5;
    const std::size_t k = (op == OpKind::sep_conv_5x5 || op == OpKind::dil_conv_5x5) ? 5 : 3;
    ConvOptions dw;
    dw.groups = spec.channels;
    dw.dilation = dil ? 2 : 1;
    dw.padding = dil ? k - 1 : k / 2;
    Var y = conv2d(g, x, param(b.weights.at(0)), dw);
    return conv2d(g, y, param(b.weights.at(1)));
  }

  Var candidate(Var x, OpKind op, const BlockParams& b) const {
    switch (op) {
      case OpKind::none:
        throw std::logic_error("none candidate is never evaluated");
      case OpKind::skip_connect:
        return x;
      case OpKind::max_pool_3x3:
        return norm(max_pool3x3(g, x), b);
      case OpKind::avg_pool_3x3:
        return norm(avg_pool3x3(g, x), b);
      default:
        break;
    }
    switch (spec.order) {
      case StackingOrder::relu_conv_norm:
        return norm(conv_stage(relu(g, x), op, b), b);
      case StackingOrder::conv_relu_norm:
        return norm(relu(g, conv_stage(x, op, b)), b);
      case StackingOrder::conv_norm_relu:
        return relu(g, norm(conv_stage(x, op, b), b));
    }
    return x;
  }
};

}  // namespace

ForwardTrace forward(Graph& g, const NetworkSpec& spec, const NetworkParams& params, const Tensor& x,
                     const std::vector<CellWeights>& weights, const ForwardOptions& opt) {
  if (weights.size() != spec.cells.size()) {
    throw std::invalid_argument("forward: weights for " + std::to_string(weights.size()) + " cells, network has " +
                                std::to_string(spec.cells.size()));
  }
  if (params.cells.size() != spec.cells.size()) throw std::invalid_argument("forward: parameters do not match spec");
  const Shape in_shape{x.shape().n, spec.in_channels, spec.height, spec.width};
  if (!(x.shape() == in_shape)) throw ShapeError("forward", "input shape " + x.shape().str() + ", expected " + in_shape.str());

  ForwardTrace t;
  t.weights = weights;
  if (opt.param_leaves != nullptr) {
    if (opt.param_leaves->size() != params.size())
      throw std::invalid_argument("forward: " + std::to_string(opt.param_leaves->size()) + " parameter leaves for " +
                                  std::to_string(params.size()) + " parameters");
    t.params = *opt.param_leaves;
  } else {
    t.params.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
      t.params.push_back(g.leaf(params.values[i], opt.params_require_grad, params.names[i]));
  }
  Builder bld{g, spec, t};

  t.input = g.leaf(x, false, "input");
  t.stem = bld.norm(conv2d(g, t.input, bld.param(params.stem.weights.at(0))), params.stem);
  const std::size_t B = x.shape().n;
  const Shape node_shape{B, spec.channels, spec.height, spec.width};

  std::vector<Var> outputs;
  for (std::size_t ci = 0; ci < spec.cells.size(); ++ci) {
    const CellSpec& cell = spec.cells[ci];
    const CellParams& cp = params.cells[ci];
    const CellWeights& cw = weights[ci];
    for (const auto& [e, _] : cw) {
      if (!cell.has_edge(e) || cell.is_fixed(e) || e.to == cell.output_node())
        throw std::invalid_argument("forward: cell " + std::to_string(ci) + " has no searchable edge " + e.str());
    }
    CellTrace ct;
    ct.nodes.resize(static_cast<std::size_t>(cell.output_node()) + 1);

    for (int k = 0; k < cell.num_input_nodes; ++k) {
      const int src = spec.input_source(ci, k);
      const Var raw = src < 0 ? t.stem : outputs.at(static_cast<std::size_t>(src));
      const BlockParams& b = cp.preprocess.at(static_cast<std::size_t>(k));
      ct.inputs_raw.push_back(raw);
      ct.preprocess_first_op.push_back(g.num_ops());
      ct.nodes[static_cast<std::size_t>(k)] = bld.norm(conv2d(g, relu(g, raw), bld.param(b.weights.at(0))), b);
    }

    for (int j = cell.num_input_nodes; j < cell.output_node(); ++j) {
      std::vector<Var> terms;
      std::vector<Edge> slots;
      for (int i = 0; i < j; ++i) {
        const Edge e{i, j};
        if (!cell.has_edge(e)) continue;
        const auto ops = cell.ops_on(e);
        const auto& blocks = cp.ops.at(e);
        std::vector<EdgeChoice> choices;
        if (cell.is_fixed(e)) {
          choices.push_back({0, g.leaf(Tensor::scalar(1.0), false, "fixed")});
        } else {
          auto it = cw.find(e);
          if (it == cw.end()) {
            throw std::invalid_argument("forward: no weights for edge " + e.str() + " of cell " + std::to_string(ci));
          }
          choices = it->second;
        }
        std::vector<Var> parts;
        for (const EdgeChoice& ch : choices) {
          if (ch.candidate >= ops.size()) {
            throw std::invalid_argument("forward: candidate " + std::to_string(ch.candidate) + " out of range on edge " +
                                        e.str());
          }
          const OpKind op = ops[ch.candidate];
          if (op == OpKind::none) continue;
          const Var o = bld.candidate(ct.nodes[static_cast<std::size_t>(i)], op, blocks[ch.candidate]);
          ct.candidate_outputs[e].emplace_back(ch.candidate, o);
          parts.push_back(scale(g, o, ch.weight));
        }
        if (parts.empty()) continue;
        const Var xe = parts.size() == 1 ? parts[0] : add(g, parts);
        ct.edge_outputs[e] = xe;
        terms.push_back(xe);
        slots.push_back(e);
      }
      if (terms.empty()) {
        ct.nodes[static_cast<std::size_t>(j)] = g.leaf(Tensor(node_shape), false, "zero_node");
      } else {
        ct.node_sum_op[j] = g.num_ops();
        ct.node_sum_slots[j] = slots;
        ct.nodes[static_cast<std::size_t>(j)] = add(g, terms);
      }
    }

    std::vector<Var> cat;
    for (int j : cell.output_sources()) {
      cat.push_back(ct.nodes[static_cast<std::size_t>(j)]);
      ct.concat_slots.push_back(j);
    }
    ct.concat_op = g.num_ops();
    const Var out = concat_channels(g, cat);
    ct.nodes[static_cast<std::size_t>(cell.output_node())] = out;
    outputs.push_back(out);

    if (opt.capture) {
      for (const auto& [e, v] : ct.edge_outputs) g.capture(v);
      for (const Var v : ct.nodes) g.capture(v);
      for (const Var v : ct.inputs_raw) g.capture(v);
    }
    t.cells.push_back(std::move(ct));
  }

  t.pooled = adaptive_avg_pool(g, outputs.back());
  t.logits = linear_head(g, t.pooled, bld.param(params.head));
  if (opt.capture) {
    g.capture(t.pooled);
    g.capture(t.logits);
  }
  return t;
}

}  // namespace nascost
