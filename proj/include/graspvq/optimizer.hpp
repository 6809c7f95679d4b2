#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "graspvq/layers.hpp"

namespace graspvq {

struct OptimizerConfig {
  std::string kind = "adam";  // "adam" or "sgd"
  double learning_rate = 1e-3;
  double momentum = 0.9;  // sgd
  double beta1 = 0.9;     // adam
  double beta2 = 0.999;
  double epsilon = 1e-8;

  nlohmann::json to_json() const;
  static OptimizerConfig from_json(const nlohmann::json& j);
};

/// Updates only parameters that currently require a gradient; frozen ones
/// are never written.
class Optimizer {
 public:
  Optimizer(std::vector<Param> params, OptimizerConfig config);
  void step();
  void zero_grad();
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Param> params_;
  OptimizerConfig config_;
  std::vector<std::vector<float>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace graspvq
