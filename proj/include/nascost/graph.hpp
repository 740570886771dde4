#pragma once

// Tape-based reverse-mode differentiation over 4-D tensors.
//
// A Graph owns every value produced during one forward pass. Primitives are
// recorded in call order and differentiated in exact reverse order, so two
// backward passes over the same recording are bitwise identical. Gradients
// of leaves that require them are always kept; gradients of interior values
// are kept only for values registered with capture().

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nascost/tensor.hpp"

namespace nascost {

class Graph;

/// Handle to a value recorded on a specific Graph.
struct Var {
  std::uint32_t graph = 0;
  std::uint32_t index = 0;
  friend constexpr bool operator==(const Var&, const Var&) = default;
};

class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input slots excluded from gradient flow: {op index, input slot}.
using CutSet = std::set<std::pair<std::size_t, std::size_t>>;

/// Sparse gradient table produced by one propagation.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(std::size_t n) : grads_(n) {}

  bool has(Var v) const { return v.index < grads_.size() && grads_[v.index].has_value(); }
  const Tensor& at(Var v) const;
  const Tensor* find(Var v) const { return has(v) ? &*grads_[v.index] : nullptr; }

 private:
  friend class Graph;
  friend class BackwardContext;
  std::vector<std::optional<Tensor>> grads_;
};

/// View handed to a primitive's backward function.
class BackwardContext {
 public:
  const Tensor& input(std::size_t slot) const;
  const Tensor& output() const;
  /// True when the gradient for this input slot will be consumed.
  bool needs(std::size_t slot) const;
  /// Gradient buffer for an input slot, zero-initialised on first use.
  Tensor& grad(std::size_t slot);

 private:
  friend class Graph;
  BackwardContext(const Graph& g, std::size_t op, Gradients& grads, const CutSet& cut)
      : graph_(g), op_(op), grads_(grads), cut_(cut) {}
  const Graph& graph_;
  std::size_t op_;
  Gradients& grads_;
  const CutSet& cut_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, BackwardContext& ctx)>;

struct OpRecord {
  std::string name;
  std::vector<Var> inputs;
  Var output;
  BackwardFn backward;
};

struct Seed {
  Var var;
  Tensor grad;
};

class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  Var leaf(Tensor value, bool requires_grad = false, std::string label = {});
  /// Used by primitives: registers `output` as produced from `inputs`.
  Var record(std::string name, std::vector<Var> inputs, Tensor output, BackwardFn backward);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const { return value(v).shape(); }
  bool requires_grad(Var v) const;
  const std::string& label(Var v) const;
  bool owns(Var v) const { return v.graph == id_ && v.index < nodes_.size(); }

  /// Index of the op that produced v, or nullopt for leaves.
  std::optional<std::size_t> producer(Var v) const;
  std::size_t num_ops() const { return ops_.size(); }
  const OpRecord& op(std::size_t i) const { return ops_.at(i); }
  std::size_t num_vars() const { return nodes_.size(); }

  void capture(Var v);
  bool captured(Var v) const;

  /// d(loss)/d(.) for every leaf requiring grad and every captured value.
  /// Replaces the result of any earlier backward call.
  void backward(Var loss);
  bool has_grad(Var v) const;
  const Tensor& grad(Var v) const;

  /// Propagates arbitrary seed gradients backwards, skipping the input
  /// slots in `cut`. Does not touch the gradients stored by backward().
  Gradients propagate(std::span<const Seed> seeds, const CutSet& cut = {}) const;

 private:
  friend class BackwardContext;
  struct Node {
    Tensor value;
    bool requires_grad = false;
    bool captured = false;
    bool is_leaf = true;
    std::optional<std::size_t> producer;
    std::string label;
  };

  void check(Var v) const;
  Gradients run(std::span<const Seed> seeds, const CutSet& cut, bool release_interior) const;

  std::uint32_t id_;
  std::vector<Node> nodes_;
  std::vector<OpRecord> ops_;
  Gradients grads_;
  bool has_backward_ = false;
};

}  // namespace nascost
