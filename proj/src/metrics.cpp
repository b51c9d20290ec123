#include "maldef/metrics.hpp"

#include "maldef/error.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace maldef {

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
    if (scores.size() != positive.size()) throw ShapeError("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t k = i; k < j; ++k)
            if (positive[order[k]]) {
                rank_sum += avg_rank;
                ++pos;
            }
        i = j;
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return 0.5;
    const double p = static_cast<double>(pos);
    return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double macro_f1(std::span<const std::size_t> truth, std::span<const std::size_t> predicted, std::size_t classes) {
    if (truth.size() != predicted.size()) throw ShapeError("macro_f1: length mismatch");
    std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
    std::set<std::size_t> present;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        present.insert(truth[i]);
        present.insert(predicted[i]);
        if (truth[i] == predicted[i]) {
            ++tp[truth[i]];
        } else {
            ++fp[predicted[i]];
            ++fn[truth[i]];
        }
    }
    if (present.empty()) return 0.0;
    double sum = 0.0;
    for (std::size_t k : present) {
        const double denom = 2.0 * tp[k] + fp[k] + fn[k];
        sum += denom > 0.0 ? 2.0 * tp[k] / denom : 0.0;
    }
    return sum / static_cast<double>(present.size());
}

ClassificationMetrics classification_metrics(std::span<const std::size_t> truth,
                                             std::span<const double> probabilities, std::size_t classes) {
    const std::size_t n = truth.size();
    if (probabilities.size() != n * classes) throw ShapeError("probability matrix has the wrong size");
    ClassificationMetrics m;
    if (n == 0) return m;
    std::vector<std::size_t> pred(n);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = probabilities.subspan(i * classes, classes);
        pred[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        correct += pred[i] == truth[i];
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    m.macro_f1 = macro_f1(truth, pred, classes);

    std::vector<double> score(n);
    std::vector<std::uint8_t> pos(n);
    auto one_vs_rest = [&](std::size_t k) {
        for (std::size_t i = 0; i < n; ++i) {
            score[i] = probabilities[i * classes + k];
            pos[i] = truth[i] == k;
        }
        return roc_auc(score, pos);
    };
    if (classes == 2) {
        m.auc = one_vs_rest(1);
    } else {
        double sum = 0.0;
        std::size_t used = 0;
        for (std::size_t k = 0; k < classes; ++k) {
            const auto hits = static_cast<std::size_t>(std::count(truth.begin(), truth.end(), k));
            if (hits == 0 || hits == n) continue;
            sum += one_vs_rest(k);
            ++used;
        }
        m.auc = used ? sum / static_cast<double>(used) : 0.5;
    }
    return m;
}

} // namespace maldef
