#pragma once

#include "mcdrop/autodiff.hpp"
#include "mcdrop/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace mcdrop {

enum class OptimizerKind { sgd_momentum, adam };
std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer_kind(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double lr = 1e-3;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerState {
  OptimizerConfig config;
  std::map<std::string, Eigen::VectorXd> first;   // momentum / Adam m
  std::map<std::string, Eigen::VectorXd> second;  // Adam v
  std::uint64_t steps = 0;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config);

  /// Updates every parameter that has a gradient entry.
  void step(ModelParams& params, const Gradients& grads);
  const OptimizerState& state() const { return state_; }

 private:
  OptimizerState state_;
};

}  // namespace mcdrop
