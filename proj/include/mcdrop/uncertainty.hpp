#pragma once

#include "mcdrop/autodiff.hpp"
#include "mcdrop/model.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace mcdrop {

/// T softmax outputs for one input, with their column mean and unbiased
/// per-class variance.
struct PosteriorSamples {
  RowMatrixXd samples;  // T x C
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;

  Index passes() const { return samples.rows(); }
  int predicted() const;
};

/// Builds mean and unbiased variance from raw rows. Requires at least 2 rows.
PosteriorSamples summarize_samples(RowMatrixXd samples);

struct McOptions {
  Index passes = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;  // 0 = hardware concurrency
};

/// T stochastic passes with dropout in eval-sampling mode, softmax per pass.
/// Returns one PosteriorSamples per batch row. The deterministic prefix up to
/// the first dropout layer is evaluated once; pass t draws its masks from
/// DropoutStream{seed, t}, so the result does not depend on `threads`.
std::vector<PosteriorSamples> mc_predict(const ModelParams& params, const ModelSpec& spec, const Tensor& x,
                                         const McOptions& options);

struct NoiseDraw {
  Eigen::VectorXd epsilon;
  std::uint64_t seed = 0;
  std::uint64_t draw = 0;
  std::uint64_t example = 0;
};

/// epsilon ~ N(0, I) for one example, reproducible from (seed, draw, example).
NoiseDraw draw_noise(std::uint64_t seed, std::uint64_t draw, std::uint64_t example, Index classes);

struct VariationalOutput {
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma2;
  RowMatrixXd samples;  // S x C, empty when S = 0

  int predicted() const;
};

/// y = mu + sigma * eps
template <typename DerivedMu, typename DerivedVar, typename DerivedEps>
Eigen::VectorXd reparameterize(const Eigen::MatrixBase<DerivedMu>& mu, const Eigen::MatrixBase<DerivedVar>& sigma2,
                               const Eigen::MatrixBase<DerivedEps>& epsilon) {
  return mu + (sigma2.array().sqrt() * epsilon.array()).matrix();
}

/// Head outputs (mu, sigma^2 = exp(clamped log sigma^2)) per batch row plus S
/// reparameterized draws, draw s using draw_noise(seed, s, row).
std::vector<VariationalOutput> variational_forward(const ModelParams& params, const ModelSpec& spec, const Tensor& x,
                                                   Index draws, std::uint64_t seed);

/// KL(N(mu, diag sigma2) || N(0, I)) = -1/2 sum(1 + log sigma2 - mu^2 - sigma2).
template <typename DerivedMu, typename DerivedVar>
double kld(const Eigen::MatrixBase<DerivedMu>& mu, const Eigen::MatrixBase<DerivedVar>& sigma2) {
  if (mu.size() != sigma2.size()) throw std::invalid_argument("kld: mu and sigma2 differ in length");
  if (!(sigma2.array() > 0.0).all()) throw std::invalid_argument("kld: sigma2 must be strictly positive");
  return -0.5 * (1.0 + sigma2.array().log() - mu.array().square() - sigma2.array()).sum();
}

/// Differentiable KLD summed over the last axis: [C] -> scalar, [B, C] -> [B].
Var kld(Var mu, Var sigma2);

enum class ScoreMethod { mc_dropout, variational_analytic, variational_sampled, entropy };
std::string_view to_string(ScoreMethod method);

struct UncertaintyScore {
  double value = 0.0;
  ScoreMethod method = ScoreMethod::mc_dropout;
};

/// Mean over classes of the per-class sample variance.
UncertaintyScore uncertainty_score(const PosteriorSamples& posterior);
/// Analytic: mean(sigma2) in logit space. Sampled: softmax every draw and take
/// the mean per-class variance, as for MC dropout (needs S >= 2).
UncertaintyScore uncertainty_score(const VariationalOutput& output,
                                   ScoreMethod method = ScoreMethod::variational_analytic);

/// -sum p log p with 0 log 0 = 0.
template <typename Derived>
double predictive_entropy(const Eigen::MatrixBase<Derived>& probs) {
  if ((probs.array() < 0.0).any()) throw std::invalid_argument("predictive_entropy: negative probability");
  if (std::abs(probs.sum() - 1.0) > 1e-6) throw std::invalid_argument("predictive_entropy: probabilities do not sum to 1");
  double h = 0.0;
  for (Index i = 0; i < probs.size(); ++i) {
    const double p = probs(i);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

/// Row-wise softmax of a matrix of logits.
RowMatrixXd softmax_rows(const Eigen::Ref<const RowMatrixXd>& logits);

}  // namespace mcdrop
