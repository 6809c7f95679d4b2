#include "graspvq/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace graspvq {

nlohmann::json OptimizerConfig::to_json() const {
  return {{"kind", kind},   {"learning_rate", learning_rate}, {"momentum", momentum},
          {"beta1", beta1}, {"beta2", beta2},                 {"epsilon", epsilon}};
}

OptimizerConfig OptimizerConfig::from_json(const nlohmann::json& j) {
  OptimizerConfig c;
  for (const auto& [key, value] : j.items()) {
    if (!c.to_json().contains(key)) throw std::invalid_argument("optimizer config: unknown key '" + key + "'");
  }
  if (j.contains("kind")) j.at("kind").get_to(c.kind);
  if (j.contains("learning_rate")) j.at("learning_rate").get_to(c.learning_rate);
  if (j.contains("momentum")) j.at("momentum").get_to(c.momentum);
  if (j.contains("beta1")) j.at("beta1").get_to(c.beta1);
  if (j.contains("beta2")) j.at("beta2").get_to(c.beta2);
  if (j.contains("epsilon")) j.at("epsilon").get_to(c.epsilon);
  if (c.kind != "adam" && c.kind != "sgd") throw std::invalid_argument("optimizer kind must be adam or sgd");
  if (!(c.learning_rate > 0)) throw std::invalid_argument("learning_rate must be positive");
  return c;
}

Optimizer::Optimizer(std::vector<Param> params, OptimizerConfig config)
    : params_(std::move(params)), config_(std::move(config)) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<std::size_t>(p.value().numel()), 0.0f);
    v_.emplace_back(config_.kind == "adam" ? static_cast<std::size_t>(p.value().numel()) : 0, 0.0f);
  }
}

void Optimizer::step() {
  ++t_;
  const bool adam = config_.kind == "adam";
  const double lr = config_.learning_rate;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param& p = params_[i];
    if (!p.requires_grad() || !p.has_grad()) continue;
    const Tensor<float> g = p.grad();
    auto w = p.mutable_value().values();
    auto& m = m_[i];
    if (adam) {
      auto& v = v_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = static_cast<float>(config_.beta1 * m[k] + (1 - config_.beta1) * g[k]);
        v[k] = static_cast<float>(config_.beta2 * v[k] + (1 - config_.beta2) * g[k] * g[k]);
        const double mh = m[k] / c1, vh = v[k] / c2;
        w[k] -= static_cast<float>(lr * mh / (std::sqrt(vh) + config_.epsilon));
      }
    } else {
      for (std::size_t k = 0; k < w.size(); ++k) {
        m[k] = static_cast<float>(config_.momentum * m[k] + g[k]);
        w[k] -= static_cast<float>(lr * m[k]);
      }
    }
  }
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace graspvq
