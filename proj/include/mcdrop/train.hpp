#pragma once

#include "mcdrop/dataset.hpp"
#include "mcdrop/losses.hpp"
#include "mcdrop/metrics.hpp"
#include "mcdrop/model.hpp"
#include "mcdrop/optim.hpp"
#include "mcdrop/uncertainty.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcdrop {

struct TrainConfig {
  OptimizerConfig optimizer;
  Index epochs = 20;
  Index batch_size = 64;
  double kld_weight = 1.0;
  Index samples_per_step = 1;  // reparameterized draws per example per step
  std::uint64_t seed = 0;
  bool check_finite = true;
};

struct EpochRecord {
  Index epoch = 0;
  std::string split;  // "train" or "val"
  LossBreakdown loss;
  double accuracy = 0.0;
};

struct TrainResult {
  ModelParams params;  // best validation epoch
  std::vector<EpochRecord> log;
  Index best_epoch = 0;
  Index steps = 0;
  double final_loss = 0.0;  // last epoch's mean training loss
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(Index step, const std::string& detail);
  Index step;
};

/// Minibatch training with a per-epoch seeded shuffle and dropout in train
/// mode. Returns the parameters of the epoch with the best validation
/// accuracy (lower validation loss breaks ties); without a validation set the
/// final parameters are returned.
TrainResult train(const ModelSpec& spec, ModelParams initial, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& config);

/// Loss and accuracy with dropout off (mu for variational models).
EpochRecord evaluate_loss(const ModelParams& params, const ModelSpec& spec, const Dataset& data, double kld_weight);

struct EvalConfig {
  Index passes = 100;  // T, MC dropout
  Index draws = 0;     // S, variational sampled mode
  std::uint64_t seed = 0;
  unsigned threads = 1;
  Index chunk = 512;  // examples per forward batch
};

struct Evaluation {
  ClassificationMetrics metrics;
  UncertaintyReport report;
};

/// Predicts with argmax of the MC mean (bayesian1/2), argmax mu (variational)
/// or argmax logits (baseline), and scores every example: MC variance,
/// analytic sigma^2, or predictive entropy for the baseline.
Evaluation evaluate(const ModelParams& params, const ModelSpec& spec, const Dataset& test, const EvalConfig& config);

struct ComparisonRow {
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  ScoreMethod method = ScoreMethod::entropy;
  double accuracy = 0.0;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  std::optional<double> mean_correct;
  std::optional<double> mean_incorrect;
  std::optional<double> ratio;
};

ComparisonRow comparison_row(Variant variant, std::uint64_t seed, const Evaluation& eval);

struct SummaryStat {
  double mean = 0.0, min = 0.0, max = 0.0;
  Index count = 0;
};

/// Mean and range of each comparison column across seeds.
struct ComparisonSummary {
  Variant variant = Variant::baseline;
  SummaryStat accuracy, macro_precision, macro_recall, macro_f1, mean_correct, mean_incorrect, ratio;
};

std::vector<ComparisonSummary> summarize_rows(const std::vector<ComparisonRow>& rows);

struct ComparisonConfig {
  Backbone backbone = Backbone::mlp;
  ArchitectureOptions architecture;
  TrainConfig training;
  EvalConfig evaluation;
  std::vector<std::uint64_t> seeds{0};
  std::vector<Variant> variants{Variant::baseline, Variant::bayesian1, Variant::bayesian2, Variant::variational};
};

struct VariantRun {
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  ModelSpec spec;
  TrainResult training;
  Evaluation evaluation;
};

struct Comparison {
  std::vector<VariantRun> runs;
  std::vector<ComparisonRow> rows;
  std::vector<ComparisonSummary> summary;
};

/// Trains and evaluates every variant for every seed on the same splits.
/// A seed drives parameter init, training shuffles/masks and evaluation noise.
Comparison compare_variants(const Splits& data, const ComparisonConfig& config);

}  // namespace mcdrop
