#include "nascost/cost.hpp"

#include <cmath>
#include <stdexcept>

#include <omp.h>

namespace nascost {

namespace {

const CellTrace& cell_trace(const ForwardTrace& t, std::size_t cell) {
  if (cell >= t.cells.size()) throw std::invalid_argument("cell index " + std::to_string(cell) + " out of range");
  return t.cells[cell];
}

double contraction(const Graph& g, Var v, const char* what) {
  if (!g.has_grad(v)) {
    throw GraphError(std::string(what) + ": gradient not captured; run backward on a forward pass with capture enabled");
  }
  return dot(g.grad(v), g.value(v));
}

}  // namespace

double edge_cost(const Graph& g, const ForwardTrace& t, std::size_t cell, Edge e) {
  const CellTrace& ct = cell_trace(t, cell);
  auto it = ct.edge_outputs.find(e);
  if (it == ct.edge_outputs.end()) {
    if (cell < t.weights.size() && t.weights[cell].contains(e)) return 0.0;  // only none was evaluated
    throw std::invalid_argument("edge " + e.str() + " has no output in cell " + std::to_string(cell));
  }
  return contraction(g, it->second, "edge_cost");
}

double node_cost(const Graph& g, const ForwardTrace& t, std::size_t cell, int node) {
  const CellTrace& ct = cell_trace(t, cell);
  if (node < 0 || static_cast<std::size_t>(node) >= ct.nodes.size())
    throw std::invalid_argument("node " + std::to_string(node) + " out of range");
  return contraction(g, ct.nodes[static_cast<std::size_t>(node)], "node_cost");
}

double cell_cost_sum(const Graph& g, const ForwardTrace& t, const CellSpec& cell, std::size_t cell_index) {
  double s = 0.0;
  for (Edge e : cell.edges()) s += edge_cost(g, t, cell_index, e);
  return s;
}

std::vector<CostRecord> sampled_costs(const Graph& g, const ForwardTrace& t, const NetworkSpec& spec,
                                      const ArchSample& s, int epoch, int batch) {
  std::vector<CostRecord> out;
  for (std::size_t c = 0; c < spec.cells.size(); ++c) {
    const CellSpec& cell = spec.cells[c];
    for (Edge e : cell.edges()) {
      CostRecord r;
      r.cell = static_cast<int>(c);
      r.edge = e;
      r.epoch = epoch;
      r.batch = batch;
      if (cell.is_fixed(e)) {
        r.candidate = cell.fixed_ops.at(e);
      } else {
        r.candidate = cell.ops_on(e).at(s.choice.at(c).at(e));
      }
      r.cost = r.candidate == OpKind::none ? 0.0 : edge_cost(g, t, c, e);
      out.push_back(r);
    }
  }
  return out;
}

double logit_form_cost(const Tensor& logits, std::span<const int> labels) {
  const std::size_t B = logits.shape().n, N = logits.shape().c;
  if (labels.size() != B) throw ShapeError("logit_form_cost", "batch", B, labels.size());
  double total = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    const double* y = logits.data().data() + b * N;
    double mx = y[0];
    for (std::size_t n = 1; n < N; ++n) mx = std::max(mx, y[n]);
    double z = 0.0;
    for (std::size_t n = 0; n < N; ++n) z += std::exp(y[n] - mx);
    double expect = 0.0;
    for (std::size_t n = 0; n < N; ++n) expect += std::exp(y[n] - mx) / z * y[n];
    total += -y[static_cast<std::size_t>(labels[b])] + expect;
  }
  return total / static_cast<double>(B);
}

Decomposition decompose_output_cost(const Graph& g, const ForwardTrace& t, const LossAndEntropy& le,
                                    std::span<const int> labels) {
  Decomposition d;
  d.C = logit_form_cost(g.value(t.logits), labels);
  d.L = le.value;
  d.H = le.entropy;
  const CellTrace& last = t.cells.back();
  d.C_activation = contraction(g, last.nodes.back(), "decompose_output_cost");
  return d;
}

void RunningStat::add(double x) {
  ++n;
  const double delta = x - mean;
  mean += delta / static_cast<double>(n);
  m2 += delta * (x - mean);
}

void RunningStat::merge(const RunningStat& o) {
  if (o.n == 0) return;
  if (n == 0) {
    *this = o;
    return;
  }
  const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
  const double delta = o.mean - mean;
  const double total = na + nb;
  mean += delta * nb / total;
  m2 += o.m2 + delta * delta * na * nb / total;
  n += o.n;
}

void CostStats::merge(const CostStats& o) {
  for (const auto& [k, s] : o.entries_) entries_[k].merge(s);
}

const RunningStat* CostStats::find(int cell, Edge e, OpKind op) const {
  auto it = entries_.find({cell, e, op});
  return it == entries_.end() ? nullptr : &it->second;
}

RunningStat CostStats::edge_pooled(int cell, Edge e, bool include_none) const {
  RunningStat r;
  for (const auto& [k, s] : entries_) {
    if (std::get<0>(k) != cell || std::get<1>(k) != e) continue;
    if (!include_none && std::get<2>(k) == OpKind::none) continue;
    r.merge(s);
  }
  return r;
}

MonteCarloResult monte_carlo_cost(const NetworkSpec& spec, const NetworkParams& params, const Dataset& data,
                                  const MonteCarloConfig& cfg) {
  if (data.size() == 0) throw std::invalid_argument("monte_carlo_cost: empty dataset");
  if (cfg.batch_size == 0) throw std::invalid_argument("monte_carlo_cost: batch size must be positive");
  if (cfg.epochs < 0) throw std::invalid_argument("monte_carlo_cost: negative epoch count");
  const std::size_t nb = (data.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t items = nb * static_cast<std::size_t>(cfg.epochs);
  const int R = std::max(1, cfg.replicas);
  const ArchState arch = ArchState::uniform(spec, cfg.seed);

  std::vector<std::vector<CostStats>> partial(static_cast<std::size_t>(R),
                                              std::vector<CostStats>(static_cast<std::size_t>(cfg.epochs)));
  std::string failure;
#pragma omp parallel for schedule(static, 1) if (R > 1)
  for (int r = 0; r < R; ++r) {
    try {
      const std::size_t lo = items * static_cast<std::size_t>(r) / static_cast<std::size_t>(R);
      const std::size_t hi = items * static_cast<std::size_t>(r + 1) / static_cast<std::size_t>(R);
      for (std::size_t item = lo; item < hi; ++item) {
        const std::size_t epoch = item / nb, b = item % nb;
        std::vector<std::size_t> idx;
        for (std::size_t i = b * cfg.batch_size; i < std::min(data.size(), (b + 1) * cfg.batch_size); ++i) idx.push_back(i);
        const ArchSample s = sample_discrete(arch, true, item);
        Graph g;
        const auto w = make_weights(g, s);
        const ForwardTrace tr = forward(g, spec, params, data.batch(idx), w);
        const auto labels = data.batch_labels(idx);
        const auto le = ce_loss_and_entropy(g, tr.logits, labels);
        g.backward(le.loss);
        for (const CostRecord& rec : sampled_costs(g, tr, spec, s, static_cast<int>(epoch), static_cast<int>(b)))
          partial[static_cast<std::size_t>(r)][epoch].add(rec);
      }
    } catch (const std::exception& e) {
#pragma omp critical
      failure = e.what();
    }
  }
  if (!failure.empty()) throw std::runtime_error("monte_carlo_cost: " + failure);

  MonteCarloResult res;
  res.per_epoch.resize(static_cast<std::size_t>(cfg.epochs));
  for (int r = 0; r < R; ++r)
    for (std::size_t e = 0; e < res.per_epoch.size(); ++e) res.per_epoch[e].merge(partial[static_cast<std::size_t>(r)][e]);
  for (const auto& s : res.per_epoch) res.total.merge(s);
  return res;
}

std::vector<std::vector<int>> cell_routes(const CellSpec& cell, int from, int to) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur{from};
  auto rec = [&](auto&& self, int a) -> void {
    if (a == to) {
      out.push_back(cur);
      return;
    }
    std::vector<int> next;
    if (a == cell.output_node()) {
      next = cell.output_sources();
    } else if (cell.is_intermediate_node(a)) {
      for (int i = 0; i < a; ++i)
        if (cell.has_edge(Edge{i, a})) next.push_back(i);
    }
    for (int b : next) {
      cur.push_back(b);
      self(self, b);
      cur.pop_back();
    }
  };
  rec(rec, from);
  return out;
}

PathTerm path_cost_term(const Graph& g, const ForwardTrace& t, const NetworkSpec& spec, const Path& path,
                        PathCarrier carrier) {
  if (path.size() < 2) throw std::invalid_argument("path needs at least two nodes");
  auto node_var = [&](PathNode p) {
    if (p.cell < 0 || static_cast<std::size_t>(p.cell) >= t.cells.size())
      throw std::invalid_argument("path cell " + std::to_string(p.cell) + " out of range");
    const auto& nodes = t.cells[static_cast<std::size_t>(p.cell)].nodes;
    if (p.node < 0 || static_cast<std::size_t>(p.node) >= nodes.size())
      throw std::invalid_argument("path node " + std::to_string(p.node) + " out of range");
    return nodes[static_cast<std::size_t>(p.node)];
  };
  auto hop_str = [](PathNode a, PathNode b) {
    return "(" + std::to_string(a.cell) + ":" + std::to_string(a.node) + " -> " + std::to_string(b.cell) + ":" +
           std::to_string(b.node) + ")";
  };

  CutSet cut;
  bool through_none = false;
  std::optional<Var> last_edge;
  for (std::size_t h = 0; h + 1 < path.size(); ++h) {
    const PathNode a = path[h], b = path[h + 1];
    node_var(a);
    node_var(b);
    last_edge.reset();
    if (a.cell == b.cell) {
      const CellSpec& cell = spec.cells.at(static_cast<std::size_t>(a.cell));
      const CellTrace& ct = t.cells[static_cast<std::size_t>(a.cell)];
      if (a.node == cell.output_node()) {
        bool found = false;
        for (std::size_t s = 0; s < ct.concat_slots.size(); ++s) {
          if (ct.concat_slots[s] == b.node) found = true;
          else cut.insert({ct.concat_op, s});
        }
        if (!found) throw std::invalid_argument("path hop " + hop_str(a, b) + ": node is not wired to the output");
      } else if (cell.is_intermediate_node(a.node) && b.node < a.node && cell.has_edge(Edge{b.node, a.node})) {
        const Edge e{b.node, a.node};
        auto eo = ct.edge_outputs.find(e);
        if (eo == ct.edge_outputs.end()) {
          through_none = true;
          continue;
        }
        last_edge = eo->second;
        const auto& slots = ct.node_sum_slots.at(a.node);
        for (std::size_t s = 0; s < slots.size(); ++s)
          if (slots[s] != e) cut.insert({ct.node_sum_op.at(a.node), s});
      } else {
        throw std::invalid_argument("path hop " + hop_str(a, b) + " is not an edge of cell " + std::to_string(a.cell));
      }
    } else {
      const CellSpec& cell = spec.cells.at(static_cast<std::size_t>(a.cell));
      const bool ok = cell.is_input_node(a.node) &&
                      b.node == spec.cells.at(static_cast<std::size_t>(b.cell)).output_node() &&
                      spec.input_source(static_cast<std::size_t>(a.cell), a.node) == b.cell;
      if (!ok) throw std::invalid_argument("path hop " + hop_str(a, b) + " does not follow a cell input connection");
    }
  }
  if (through_none) return {};

  const Var head = node_var(path.front());
  const Var target = (carrier == PathCarrier::edge_output && last_edge) ? *last_edge : node_var(path.back());
  const Seed seed{head, g.grad(head)};
  const Gradients grads = g.propagate(std::span<const Seed>(&seed, 1), cut);
  const Tensor* gt = grads.find(target);
  if (gt == nullptr) return {};
  return {dot(*gt, g.value(target)), abs_dot(*gt, g.value(target))};
}

}  // namespace nascost
