#include "mcdrop/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mcdrop {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd-momentum"; }

OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd-momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  throw std::invalid_argument("unknown optimizer '" + std::string(s) + "'");
}

Optimizer::Optimizer(OptimizerConfig config) {
  if (!(config.lr >= 0.0)) throw std::invalid_argument("learning rate must be nonnegative");
  if (!(config.beta1 >= 0.0 && config.beta1 < 1.0) || !(config.beta2 >= 0.0 && config.beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  state_.config = config;
}

void Optimizer::step(ModelParams& params, const Gradients& grads) {
  const auto& c = state_.config;
  ++state_.steps;
  const double t = static_cast<double>(state_.steps);
  for (auto& [name, tensor] : params.tensors) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Eigen::VectorXd& g = it->second.data();
    if (g.size() != tensor.size()) throw std::invalid_argument("gradient shape mismatch for " + name);

    auto& m = state_.first[name];
    if (m.size() == 0) m = Eigen::VectorXd::Zero(g.size());
    if (c.kind == OptimizerKind::sgd_momentum) {
      m = c.momentum * m + g;
      tensor.data() -= c.lr * m;
      continue;
    }
    auto& v = state_.second[name];
    if (v.size() == 0) v = Eigen::VectorXd::Zero(g.size());
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseAbs2();
    const double m_scale = 1.0 / (1.0 - std::pow(c.beta1, t));
    const double v_scale = 1.0 / (1.0 - std::pow(c.beta2, t));
    tensor.data().array() -= c.lr * (m.array() * m_scale) / ((v.array() * v_scale).sqrt() + c.eps);
  }
}

}  // namespace mcdrop
