#include "nascost/arch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "nascost/rng.hpp"

namespace nascost {

ArchState ArchState::uniform(const NetworkSpec& spec, std::uint64_t seed, double temperature) {
  ArchState a;
  a.seed = seed;
  a.temperature = temperature;
  for (const CellSpec& cell : spec.cells) {
    std::map<Edge, std::vector<double>> m;
    for (Edge e : cell.searchable_edges()) m[e] = std::vector<double>(cell.ops_on(e).size(), 0.0);
    a.logits.push_back(std::move(m));
  }
  return a;
}

void ArchState::validate() const {
  if (!(temperature > 0.0)) throw std::invalid_argument("arch temperature must be positive");
  for (std::size_t c = 0; c < logits.size(); ++c)
    for (const auto& [e, l] : logits[c]) {
      if (l.empty()) throw std::invalid_argument("edge " + e.str() + " has no logits");
      for (double v : l)
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite logit on cell " + std::to_string(c) + " edge " + e.str());
    }
}

std::vector<double> softmax(const std::vector<double>& logits, double temperature) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    p[k] = std::exp((logits[k] - mx) / temperature);
    z += p[k];
  }
  for (double& v : p) v /= z;
  return p;
}

double gumbel_draw(std::uint64_t seed, std::size_t cell, Edge e, std::uint64_t draw, std::size_t k) {
  const double u = uniform_open({seed, cell, static_cast<std::uint64_t>(e.from), static_cast<std::uint64_t>(e.to), draw, k});
  return -std::log(-std::log(u));
}

RelaxedSample darts_weights(const ArchState& arch) {
  RelaxedSample s;
  for (const auto& cell : arch.logits) {
    std::map<Edge, std::vector<double>> w;
    for (const auto& [e, l] : cell) w[e] = softmax(l);
    s.weights.push_back(std::move(w));
    s.gumbel.emplace_back();
  }
  return s;
}

RelaxedSample sample_gumbel_softmax(const ArchState& arch, std::uint64_t draw) {
  if (!(arch.temperature > 0.0)) throw std::invalid_argument("gumbel-softmax needs a positive temperature");
  RelaxedSample s;
  for (std::size_t c = 0; c < arch.logits.size(); ++c) {
    std::map<Edge, std::vector<double>> w, gs;
    for (const auto& [e, l] : arch.logits[c]) {
      std::vector<double> g(l.size()), z(l.size());
      for (std::size_t k = 0; k < l.size(); ++k) {
        g[k] = gumbel_draw(arch.seed, c, e, draw, k);
        z[k] = l[k] + g[k];
      }
      w[e] = softmax(z, arch.temperature);
      gs[e] = std::move(g);
    }
    s.weights.push_back(std::move(w));
    s.gumbel.push_back(std::move(gs));
  }
  return s;
}

ArchSample sample_discrete(const ArchState& arch, bool uniform, std::uint64_t draw) {
  ArchSample s;
  for (std::size_t c = 0; c < arch.logits.size(); ++c) {
    std::map<Edge, std::size_t> ch;
    std::map<Edge, std::vector<double>> gs;
    for (const auto& [e, l] : arch.logits[c]) {
      std::vector<double> g(l.size());
      std::size_t best = 0;
      double best_v = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < l.size(); ++k) {
        g[k] = gumbel_draw(arch.seed, c, e, draw, k);
        const double v = (uniform ? 0.0 : l[k]) + g[k];
        if (v > best_v) {
          best_v = v;
          best = k;
        }
      }
      ch[e] = best;
      gs[e] = std::move(g);
    }
    s.choice.push_back(std::move(ch));
    s.gumbel.push_back(std::move(gs));
  }
  return s;
}

std::vector<CellWeights> make_weights(Graph& g, const ArchSample& s, bool gated) {
  std::vector<CellWeights> out;
  for (std::size_t c = 0; c < s.choice.size(); ++c) {
    CellWeights cw;
    for (const auto& [e, k] : s.choice[c]) {
      std::vector<EdgeChoice> ch;
      if (gated) {
        const std::size_t n = s.gumbel.at(c).at(e).size();
        for (std::size_t m = 0; m < n; ++m) ch.push_back({m, g.leaf(Tensor::scalar(m == k ? 1.0 : 0.0), true, "Z")});
      } else {
        ch.push_back({k, g.leaf(Tensor::scalar(1.0), true, "Z")});
      }
      cw[e] = std::move(ch);
    }
    out.push_back(std::move(cw));
  }
  return out;
}

std::vector<CellWeights> make_weights(Graph& g, const RelaxedSample& s) {
  std::vector<CellWeights> out;
  for (const auto& cell : s.weights) {
    CellWeights cw;
    for (const auto& [e, w] : cell) {
      std::vector<EdgeChoice> ch;
      for (std::size_t k = 0; k < w.size(); ++k) ch.push_back({k, g.leaf(Tensor::scalar(w[k]), true, "Z")});
      cw[e] = std::move(ch);
    }
    out.push_back(std::move(cw));
  }
  return out;
}

PerEdge<std::vector<double>> candidate_costs(const Graph& g, const ForwardTrace& t, const ArchState& arch) {
  PerEdge<std::vector<double>> out;
  for (std::size_t c = 0; c < arch.logits.size(); ++c) {
    std::map<Edge, std::vector<double>> m;
    for (const auto& [e, l] : arch.logits[c]) {
      std::vector<double> cost(l.size(), 0.0);
      if (c < t.weights.size()) {
        if (auto it = t.weights[c].find(e); it != t.weights[c].end())
          for (const EdgeChoice& ch : it->second) cost.at(ch.candidate) = g.grad(ch.weight).item();
      }
      m[e] = std::move(cost);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::string to_string(Framework f) {
  switch (f) {
    case Framework::snas: return "snas";
    case Framework::dsnas: return "dsnas";
    case Framework::darts: return "darts";
    case Framework::proxyless: return "proxyless";
  }
  return "?";
}

Framework framework_from_string(const std::string& s) {
  for (auto f : {Framework::snas, Framework::dsnas, Framework::darts, Framework::proxyless})
    if (to_string(f) == s) return f;
  throw std::invalid_argument("unknown framework '" + s + "' (expected snas, dsnas, darts or proxyless)");
}

namespace {

// w_k (c_k - sum_m w_m c_m) / T: the softmax Jacobian applied to costs
std::vector<double> softmax_vjp(const std::vector<double>& w, const std::vector<double>& c, double temperature) {
  double mean = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) mean += w[k] * c[k];
  std::vector<double> g(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) g[k] = w[k] * (c[k] - mean) / temperature;
  return g;
}

const std::vector<double>& cost_of(const PerEdge<std::vector<double>>& costs, std::size_t c, Edge e, std::size_t n) {
  const auto& v = costs.at(c).at(e);
  if (v.size() != n) throw std::invalid_argument("cost table size mismatch on edge " + e.str());
  return v;
}

}  // namespace

PerEdge<std::vector<double>> arch_grad(Framework f, const PerEdge<std::vector<double>>& costs, const ArchSample& s,
                                       const ArchState& arch) {
  if (f != Framework::dsnas && f != Framework::proxyless)
    throw std::invalid_argument(to_string(f) + " gradient needs a relaxed sample");
  PerEdge<std::vector<double>> out;
  for (std::size_t c = 0; c < arch.logits.size(); ++c) {
    std::map<Edge, std::vector<double>> m;
    for (const auto& [e, l] : arch.logits[c]) {
      const auto p = softmax(l);
      const auto& cost = cost_of(costs, c, e, l.size());
      const std::size_t sel = s.choice.at(c).at(e);
      if (f == Framework::dsnas) {
        std::vector<double> g(l.size());
        for (std::size_t k = 0; k < l.size(); ++k) g[k] = ((k == sel ? 1.0 : 0.0) - p[k]) * cost[sel];
        m[e] = std::move(g);
      } else {
        m[e] = softmax_vjp(p, cost, 1.0);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

PerEdge<std::vector<double>> arch_grad(Framework f, const PerEdge<std::vector<double>>& costs,
                                       const RelaxedSample& s, const ArchState& arch) {
  if (f != Framework::darts && f != Framework::snas)
    throw std::invalid_argument(to_string(f) + " gradient needs a discrete sample");
  PerEdge<std::vector<double>> out;
  for (std::size_t c = 0; c < arch.logits.size(); ++c) {
    std::map<Edge, std::vector<double>> m;
    for (const auto& [e, l] : arch.logits[c]) {
      const auto& cost = cost_of(costs, c, e, l.size());
      const auto& w = s.weights.at(c).at(e);
      m[e] = softmax_vjp(w, cost, f == Framework::snas ? arch.temperature : 1.0);
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace nascost
