#pragma once

#include "mcdrop/tensor.hpp"
#include "mcdrop/uncertainty.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <vector>

namespace mcdrop {

using ConfusionMatrix = Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic>;

/// rows = true class, cols = predicted class
ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, Index classes);

struct ClassificationMetrics {
  ConfusionMatrix confusion;
  Eigen::VectorXd precision;
  Eigen::VectorXd recall;
  Eigen::VectorXd f1;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// Classes never predicted get precision 0; classes absent from the truth get
/// recall 0; F1 is 0 when precision + recall is 0.
ClassificationMetrics classification_metrics(const ConfusionMatrix& confusion);
ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted, Index classes);

struct ExampleRecord {
  Index id = 0;
  int truth = 0;
  int predicted = 0;
  bool correct = false;
  double score = 0.0;
  double entropy = 0.0;
  std::optional<double> sampled_score;  // variational sampled mode, when S >= 2
  Eigen::VectorXd class_variance;       // per-class MC variance or sigma^2; empty for baseline
};

struct GroupSummary {
  Index count = 0;
  double mean = 0.0;
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
};

/// Linear-interpolation quantiles of a nonempty sample.
GroupSummary summarize_group(std::vector<double> values);

/// Shared bin edges; frequencies are relative to each group's size.
struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<double> correct;
  std::vector<double> incorrect;
};

constexpr Index kHistogramBins = 30;

/// Equal-width bins over [0, max score across both groups].
Histogram uncertainty_histogram(std::span<const ExampleRecord> records, Index bins = kHistogramBins);

struct UncertaintyReport {
  ScoreMethod method = ScoreMethod::mc_dropout;
  std::vector<ExampleRecord> records;
  std::optional<GroupSummary> correct;
  std::optional<GroupSummary> incorrect;
  /// Mean incorrect score over mean correct score. Unset when either group is
  /// empty or the correct mean is zero.
  std::optional<double> ratio;
  Histogram histogram;
};

UncertaintyReport build_report(std::vector<ExampleRecord> records, ScoreMethod method, Index bins = kHistogramBins);

}  // namespace mcdrop
