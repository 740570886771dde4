#include "nascost/graph.hpp"

#include <atomic>

namespace nascost {

namespace {
std::atomic<std::uint32_t> next_graph_id{1};
}

const Tensor& Gradients::at(Var v) const {
  if (!has(v)) throw GraphError("no gradient recorded for value #" + std::to_string(v.index));
  return *grads_[v.index];
}

const Tensor& BackwardContext::input(std::size_t slot) const {
  return graph_.value(graph_.ops_[op_].inputs.at(slot));
}

const Tensor& BackwardContext::output() const { return graph_.value(graph_.ops_[op_].output); }

bool BackwardContext::needs(std::size_t slot) const {
  const Var v = graph_.ops_[op_].inputs.at(slot);
  return graph_.requires_grad(v) && !cut_.contains({op_, slot});
}

Tensor& BackwardContext::grad(std::size_t slot) {
  const Var v = graph_.ops_[op_].inputs.at(slot);
  auto& g = grads_.grads_[v.index];
  if (!g) g.emplace(graph_.value(v).shape(), 0.0);
  return *g;
}

Graph::Graph() : id_(next_graph_id.fetch_add(1)) {}

Var Graph::leaf(Tensor value, bool requires_grad, std::string label) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.label = std::move(label);
  nodes_.push_back(std::move(n));
  return Var{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::record(std::string name, std::vector<Var> inputs, Tensor output, BackwardFn backward) {
  bool rg = false;
  for (Var in : inputs) {
    check(in);
    rg = rg || nodes_[in.index].requires_grad;
  }
  if (!output.all_finite()) {
    throw std::runtime_error(name + ": non-finite value in forward output");
  }
  Node n;
  n.value = std::move(output);
  n.requires_grad = rg;
  n.is_leaf = false;
  n.producer = ops_.size();
  n.label = name;
  nodes_.push_back(std::move(n));
  const Var out{id_, static_cast<std::uint32_t>(nodes_.size() - 1)};
  ops_.push_back(OpRecord{std::move(name), std::move(inputs), out, std::move(backward)});
  return out;
}

void Graph::check(Var v) const {
  if (v.graph != id_) throw GraphError("value does not belong to this graph");
  if (v.index >= nodes_.size()) throw GraphError("value index out of range");
}

const Tensor& Graph::value(Var v) const {
  check(v);
  return nodes_[v.index].value;
}

bool Graph::requires_grad(Var v) const {
  check(v);
  return nodes_[v.index].requires_grad;
}

const std::string& Graph::label(Var v) const {
  check(v);
  return nodes_[v.index].label;
}

std::optional<std::size_t> Graph::producer(Var v) const {
  check(v);
  return nodes_[v.index].producer;
}

void Graph::capture(Var v) {
  check(v);
  nodes_[v.index].captured = true;
}

bool Graph::captured(Var v) const {
  check(v);
  return nodes_[v.index].captured;
}

Gradients Graph::run(std::span<const Seed> seeds, const CutSet& cut, bool release_interior) const {
  Gradients grads(nodes_.size());
  for (const Seed& s : seeds) {
    check(s.var);
    if (!(s.grad.shape() == value(s.var).shape())) {
      throw ShapeError("backward seed", "shape mismatch " + s.grad.shape().str() + " vs " +
                                            value(s.var).shape().str());
    }
    auto& g = grads.grads_[s.var.index];
    if (!g) g.emplace(s.grad);
    else *g += s.grad;
  }
  for (std::size_t i = ops_.size(); i-- > 0;) {
    const OpRecord& op = ops_[i];
    auto& gout = grads.grads_[op.output.index];
    if (!gout) continue;
    BackwardContext ctx(*this, i, grads, cut);
    bool any = false;
    for (std::size_t s = 0; s < op.inputs.size(); ++s) any = any || ctx.needs(s);
    if (any) op.backward(*gout, ctx);
    if (release_interior && !nodes_[op.output.index].captured) gout.reset();
  }
  return grads;
}

Gradients Graph::propagate(std::span<const Seed> seeds, const CutSet& cut) const {
  return run(seeds, cut, false);
}

void Graph::backward(Var loss) {
  check(loss);
  if (value(loss).size() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " + value(loss).shape().str());
  }
  const Seed seed{loss, Tensor::scalar(1.0)};
  grads_ = run(std::span<const Seed>(&seed, 1), {}, true);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    auto& g = grads_.grads_[i];
    if (n.is_leaf && n.requires_grad) {
      if (!g) g.emplace(n.value.shape(), 0.0);
    } else if (n.captured) {
      if (!g) g.emplace(n.value.shape(), 0.0);
    } else if (n.is_leaf) {
      g.reset();
    }
  }
  // the loss itself keeps its unit seed only if captured
  if (!nodes_[loss.index].captured && !nodes_[loss.index].is_leaf) grads_.grads_[loss.index].reset();
  has_backward_ = true;
}

bool Graph::has_grad(Var v) const {
  check(v);
  return has_backward_ && grads_.has(v);
}

const Tensor& Graph::grad(Var v) const {
  check(v);
  if (!has_backward_) throw GraphError("grad requested before backward");
  if (!grads_.has(v)) {
    throw GraphError("gradient of '" + nodes_[v.index].label +
                     "' was not retained; capture() it before backward");
  }
  return grads_.at(v);
}

}  // namespace nascost
