#include "nascost/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace nascost {

void OptimizerConfig::validate() const {
  if (kind != "sgd" && kind != "adam") throw std::invalid_argument("optimizer kind must be sgd or adam, got " + kind);
  if (!(lr >= 0.0)) throw std::invalid_argument("optimizer lr must be non-negative");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("optimizer momentum must be in [0, 1)");
}

void to_json(nlohmann::json& j, const OptimizerConfig& c) {
  j = nlohmann::json{{"kind", c.kind},   {"lr", c.lr},       {"momentum", c.momentum}, {"weight_decay", c.weight_decay},
                     {"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}};
}

void from_json(const nlohmann::json& j, OptimizerConfig& c) {
  c.kind = j.value("kind", c.kind);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps = j.value("eps", c.eps);
  c.validate();
}

Optimizer::Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

void Optimizer::step(std::size_t slot, std::span<double> param, std::span<const double> grad, const std::string& name) {
  if (param.size() != grad.size()) throw std::invalid_argument("optimizer: gradient size mismatch for " + name);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw std::runtime_error("non-finite gradient for " + name + " at index " + std::to_string(i));
    }
  }
  if (m_.size() <= slot) {
    m_.resize(slot + 1);
    v_.resize(slot + 1);
  }
  auto& m = m_[slot];
  auto& v = v_[slot];
  if (m.empty()) {
    m.assign(param.size(), 0.0);
    v.assign(param.size(), 0.0);
  }
  if (cfg_.kind == "sgd") {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double g = grad[i] + cfg_.weight_decay * param[i];
      if (cfg_.momentum > 0.0) {
        m[i] = cfg_.momentum * m[i] + g;
        param[i] -= cfg_.lr * m[i];
      } else {
        param[i] -= cfg_.lr * g;
      }
    }
    return;
  }
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + cfg_.weight_decay * param[i];
    m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
    v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
    param[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
  }
}

}  // namespace nascost
