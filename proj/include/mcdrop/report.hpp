#pragma once

#include "mcdrop/metrics.hpp"
#include "mcdrop/train.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mcdrop {

/// Full-scale reference ratio for each uncertainty variant; none for baseline.
std::optional<double> reference_ratio(Variant variant);

/// id,true,predicted,correct,score,entropy[,score_sampled][,var_0..var_{C-1}]
std::string per_example_csv(const UncertaintyReport& report);

/// Long format name,value. An undefined ratio is written as "undefined".
std::string metrics_csv(Variant variant, const Evaluation& eval);

/// variant,bin,lower,upper,freq_correct,freq_incorrect
std::string histogram_csv(const std::vector<std::pair<Variant, const UncertaintyReport*>>& reports);

/// variant,seed,method,accuracy,macro_precision,macro_recall,macro_f1,mean_correct,mean_incorrect,ratio,reference_ratio
/// followed by mean/min/max rows per variant (seed column holds the statistic).
std::string comparison_csv(const std::vector<ComparisonRow>& rows, const std::vector<ComparisonSummary>& summary);

/// epoch,split,total,cross_entropy,kld,kld_weight,accuracy
std::string train_log_csv(const std::vector<EpochRecord>& log);

/// Quartile boxes (min, q1, median, q3, max) for the correct and incorrect
/// groups of each report, side by side.
std::string uncertainty_box_svg(const std::vector<std::pair<Variant, const UncertaintyReport*>>& reports);

/// Overlaid relative-frequency histograms of correct vs incorrect, one panel
/// per report.
std::string uncertainty_hist_svg(const std::vector<std::pair<Variant, const UncertaintyReport*>>& reports);

}  // namespace mcdrop
