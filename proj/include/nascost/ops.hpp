#pragma once

// Differentiable primitives recorded on a Graph.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nascost/graph.hpp"

namespace nascost {

struct ConvOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

enum class NormKind { batch, instance, layer };

/// How eps enters the standard deviation.
///  - floor:    sqrt(max(var, eps)); exact unit variance whenever var >= eps
///  - additive: sqrt(var + eps); the usual deep-learning convention
enum class EpsMode { floor, additive };

struct NormConfig {
  NormKind kind = NormKind::batch;
  double eps = 1e-5;
  bool affine = false;
  EpsMode eps_mode = EpsMode::floor;

  void validate() const;
};

std::string to_string(NormKind k);
NormKind norm_kind_from_string(const std::string& s);

Var conv2d(Graph& g, Var x, Var weight, const ConvOptions& opt = {});

/// Training-mode normalisation. gamma/beta are per-channel (1, C, 1, 1)
/// values and are only consulted when cfg.affine is set.
Var normalize(Graph& g, Var x, const NormConfig& cfg, std::optional<Var> gamma = std::nullopt,
              std::optional<Var> beta = std::nullopt);

Var relu(Graph& g, Var x);
/// 3x3 window, stride 1, padding 1. Padding never wins the max.
Var max_pool3x3(Graph& g, Var x);
/// 3x3 window, stride 1, padding 1, averaging over in-bounds cells only.
Var avg_pool3x3(Graph& g, Var x);
/// (B, C, H, W) -> (B, C, 1, 1) spatial mean.
Var adaptive_avg_pool(Graph& g, Var x);
/// (B, C, 1, 1) x (C, N, 1, 1) -> (B, N, 1, 1); no bias.
Var linear_head(Graph& g, Var x_pooled, Var weight);

struct LossAndEntropy {
  Var loss;        // differentiable mean cross entropy
  double value;    // L
  double entropy;  // H, mean output entropy (not differentiated)
};
LossAndEntropy ce_loss_and_entropy(Graph& g, Var logits, std::span<const int> labels);

Var add(Graph& g, std::span<const Var> xs);
Var add(Graph& g, Var a, Var b);
Var concat_channels(Graph& g, std::span<const Var> xs);
/// s * x for a one-element s.
Var scale(Graph& g, Var x, Var s);
Var scale(Graph& g, Var x, double s);
Var mul(Graph& g, Var a, Var b);
/// Sum of all entries as a (1, 1, 1, 1) value.
Var sum_all(Graph& g, Var x);
/// Softmax over the channel axis of a (1, K, 1, 1) vector.
Var softmax(Graph& g, Var logits, double temperature = 1.0);
/// Entry k of a (1, K, 1, 1) vector as a scalar.
Var element(Graph& g, Var v, std::size_t k);

}  // namespace nascost
