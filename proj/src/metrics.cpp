#include "mcdrop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mcdrop {
namespace {

double ratio_or_zero(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

ConfusionMatrix confusion_matrix(std::span<const int> truth, std::span<const int> predicted, Index classes) {
  if (truth.size() != predicted.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
  ConfusionMatrix m = ConfusionMatrix::Zero(classes, classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw std::out_of_range("confusion_matrix: label outside [0, " + std::to_string(classes) + ")");
    }
    ++m(truth[i], predicted[i]);
  }
  return m;
}

ClassificationMetrics classification_metrics(const ConfusionMatrix& confusion) {
  const Index c = confusion.rows();
  if (confusion.cols() != c) throw std::invalid_argument("confusion matrix must be square");
  ClassificationMetrics m;
  m.confusion = confusion;
  m.precision.resize(c);
  m.recall.resize(c);
  m.f1.resize(c);
  for (Index k = 0; k < c; ++k) {
    const auto tp = static_cast<double>(confusion(k, k));
    const auto predicted = static_cast<double>(confusion.col(k).sum());
    const auto actual = static_cast<double>(confusion.row(k).sum());
    m.precision[k] = ratio_or_zero(tp, predicted);
    m.recall[k] = ratio_or_zero(tp, actual);
    m.f1[k] = ratio_or_zero(2.0 * m.precision[k] * m.recall[k], m.precision[k] + m.recall[k]);
  }
  m.macro_precision = m.precision.mean();
  m.macro_recall = m.recall.mean();
  m.macro_f1 = m.f1.mean();
  m.accuracy = ratio_or_zero(static_cast<double>(confusion.trace()), static_cast<double>(confusion.sum()));
  return m;
}

ClassificationMetrics classification_metrics(std::span<const int> truth, std::span<const int> predicted, Index classes) {
  return classification_metrics(confusion_matrix(truth, predicted, classes));
}

GroupSummary summarize_group(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("summarize_group: empty group");
  std::sort(values.begin(), values.end());
  GroupSummary s;
  s.count = static_cast<Index>(values.size());
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.min = values.front();
  s.max = values.back();
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  return s;
}

Histogram uncertainty_histogram(std::span<const ExampleRecord> records, Index bins) {
  if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
  double top = 0.0;
  Index n_correct = 0;
  for (const auto& r : records) {
    top = std::max(top, r.score);
    n_correct += r.correct ? 1 : 0;
  }
  const Index n_incorrect = static_cast<Index>(records.size()) - n_correct;
  if (top <= 0.0) top = 1.0;  // all-zero scores still get a valid axis

  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins + 1));
  for (Index i = 0; i <= bins; ++i) h.edges[static_cast<std::size_t>(i)] = top * static_cast<double>(i) / static_cast<double>(bins);
  h.correct.assign(static_cast<std::size_t>(bins), 0.0);
  h.incorrect.assign(static_cast<std::size_t>(bins), 0.0);
  for (const auto& r : records) {
    auto bin = static_cast<Index>(r.score / top * static_cast<double>(bins));
    bin = std::clamp<Index>(bin, 0, bins - 1);
    (r.correct ? h.correct : h.incorrect)[static_cast<std::size_t>(bin)] += 1.0;
  }
  for (auto& f : h.correct) f /= n_correct > 0 ? static_cast<double>(n_correct) : 1.0;
  for (auto& f : h.incorrect) f /= n_incorrect > 0 ? static_cast<double>(n_incorrect) : 1.0;
  return h;
}

UncertaintyReport build_report(std::vector<ExampleRecord> records, ScoreMethod method, Index bins) {
  UncertaintyReport report;
  report.method = method;
  std::vector<double> correct, incorrect;
  for (const auto& r : records) {
    if (r.score < 0.0 || !std::isfinite(r.score)) throw std::invalid_argument("uncertainty scores must be finite and nonnegative");
    (r.correct ? correct : incorrect).push_back(r.score);
  }
  if (!correct.empty()) report.correct = summarize_group(std::move(correct));
  if (!incorrect.empty()) report.incorrect = summarize_group(std::move(incorrect));
  if (report.correct && report.incorrect && report.correct->mean > 0.0) {
    report.ratio = report.incorrect->mean / report.correct->mean;
  }
  report.histogram = uncertainty_histogram(records, bins);
  report.records = std::move(records);
  return report;
}

}  // namespace mcdrop
