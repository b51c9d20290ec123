#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace maldef {

/// ROC AUC via the rank-sum statistic; tied scores share their average rank.
/// Returns 0.5 when either class is absent.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Mean per-class F1 over the labels that occur in truth or prediction.
double macro_f1(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t classes);

struct ClassificationMetrics {
    double accuracy = 0.0;
    double auc = 0.0;       // binary: class-1 score; otherwise macro one-vs-rest
    double macro_f1 = 0.0;
};

/// probabilities holds one row of `classes` scores per example.
ClassificationMetrics classification_metrics(std::span<const std::size_t> truth,
                                             std::span<const double> probabilities, std::size_t classes);

struct EvalReport {
    std::string variant;    // OM, P+OM or P+ATM
    std::string condition;  // "clean" or "<attack>@<budget>"
    double accuracy = 0.0;
    double auc = 0.0;
    double macro_f1 = 0.0;
    std::size_t sample_count = 0;
    double wall_time = 0.0;  // seconds
};

} // namespace maldef
