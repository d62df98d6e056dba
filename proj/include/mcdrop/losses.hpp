#pragma once

#include "mcdrop/autodiff.hpp"
#include "mcdrop/uncertainty.hpp"

#include <optional>
#include <span>

namespace mcdrop {

/// total = cross_entropy + kld_weight * kld
struct LossBreakdown {
  double total = 0.0;
  double cross_entropy = 0.0;
  double kld = 0.0;
  double kld_weight = 0.0;
};

/// Mean over the batch of -log softmax(logits)[target].
double cross_entropy(const Tensor& logits, std::span<const int> targets);

/// Loss of one example given a fixed noise vector: CE of the single
/// reparameterized sample mu + sigma * eps, plus beta * KLD(mu, sigma^2).
LossBreakdown variational_loss(const VariationalOutput& out, int target, double kld_weight,
                               const Eigen::VectorXd& epsilon);

struct LossVars {
  Var total;
  Var cross_entropy;
  std::optional<Var> kld;  // batch mean
  double kld_weight = 0.0;

  LossBreakdown values() const;
};

LossVars classification_loss(Var logits, std::span<const int> targets);

/// Batched variational objective. `epsilons` holds one [B, C] noise tensor per
/// reparameterized sample; the CE term averages over them.
LossVars variational_loss(Var mu, Var log_variance, std::span<const Tensor> epsilons, std::span<const int> targets,
                          double kld_weight);

}  // namespace mcdrop
