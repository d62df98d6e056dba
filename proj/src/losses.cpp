#include "mcdrop/losses.hpp"

#include "mcdrop/ops.hpp"

namespace mcdrop {

double cross_entropy(const Tensor& logits, std::span<const int> targets) {
  Graph g(GraphOptions{.record_backward = false});
  return cross_entropy(g.input("logits", logits, false), targets).value().item();
}

LossBreakdown variational_loss(const VariationalOutput& out, int target, double kld_weight,
                               const Eigen::VectorXd& epsilon) {
  const Eigen::VectorXd sample = reparameterize(out.mu, out.sigma2, epsilon);
  const Index c = sample.size();
  const int targets[] = {target};
  LossBreakdown loss{.cross_entropy = cross_entropy(Tensor({1, c}, sample), targets),
                     .kld = kld(out.mu, out.sigma2),
                     .kld_weight = kld_weight};
  loss.total = loss.cross_entropy + kld_weight * loss.kld;
  return loss;
}

LossBreakdown LossVars::values() const {
  return {.total = total.value().item(),
          .cross_entropy = cross_entropy.value().item(),
          .kld = kld ? kld->value().item() : 0.0,
          .kld_weight = kld_weight};
}

LossVars classification_loss(Var logits, std::span<const int> targets) {
  Var ce = cross_entropy(logits, targets);
  return {.total = ce, .cross_entropy = ce};
}

LossVars variational_loss(Var mu, Var log_variance, std::span<const Tensor> epsilons, std::span<const int> targets,
                          double kld_weight) {
  if (epsilons.empty()) throw std::invalid_argument("variational_loss needs at least one noise sample");
  Graph& g = *mu.graph;
  Var sigma = exp(scale(log_variance, 0.5));
  Var ce;
  for (std::size_t k = 0; k < epsilons.size(); ++k) {
    Var sample = mu + sigma * g.constant(epsilons[k]);
    Var term = cross_entropy(sample, targets);
    ce = k == 0 ? term : add(ce, term);
  }
  if (epsilons.size() > 1) ce = scale(ce, 1.0 / static_cast<double>(epsilons.size()));
  Var divergence = mean(kld(mu, exp(log_variance)));
  return {.total = add(ce, scale(divergence, kld_weight)), .cross_entropy = ce, .kld = divergence, .kld_weight = kld_weight};
}

}  // namespace mcdrop
