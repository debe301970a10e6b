#pragma once

// Evaluation scores: ON-class precision/recall/F1 over status series,
// MAE/RMSE and the matching ratio over power series, and balanced
// accuracy over confusion counts. All arithmetic in double.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "camloc/errors.hpp"

namespace camloc {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct ClassScores {
    double precision = 0, recall = 0, f1 = 0;
    ConfusionCounts counts;
};

// Precision/recall/F1 for the positive class from confusion counts.
// Zero denominators yield 0.
inline ClassScores scores_from_counts(const ConfusionCounts& counts) {
    ClassScores s;
    s.counts = counts;
    const double tp = static_cast<double>(counts.tp);
    s.precision = (counts.tp + counts.fp) > 0
                      ? tp / static_cast<double>(counts.tp + counts.fp)
                      : 0.0;
    s.recall = (counts.tp + counts.fn) > 0
                   ? tp / static_cast<double>(counts.tp + counts.fn)
                   : 0.0;
    s.f1 = (s.precision + s.recall) > 0
               ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
               : 0.0;
    return s;
}

// Scores for the ON (positive) class over two status series.
inline ClassScores status_scores(const std::vector<std::uint8_t>& pred,
                                 const std::vector<std::uint8_t>& truth) {
    if (pred.size() != truth.size()) {
        throw DataError("status_scores: length mismatch (" +
                        std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()) + ")");
    }
    ConfusionCounts counts;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, t = truth[i] != 0;
        if (p && t) counts.tp++;
        else if (p && !t) counts.fp++;
        else if (!p && t) counts.fn++;
        else counts.tn++;
    }
    return scores_from_counts(counts);
}

struct EnergyScores {
    double mae = 0, rmse = 0, matching_ratio = 0;
};

// MAE, RMSE, and MR = sum(min(pred, truth)) / sum(max(pred, truth));
// two identically-zero series agree perfectly, so MR = 1 there.
inline EnergyScores energy_scores(const std::vector<double>& pred,
                                  const std::vector<double>& truth) {
    if (pred.size() != truth.size()) {
        throw DataError("energy_scores: length mismatch (" +
                        std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()) + ")");
    }
    double abs_sum = 0, sq_sum = 0, min_sum = 0, max_sum = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || truth[i] < 0) {
            throw DataError("energy_scores: negative power at index " +
                            std::to_string(i));
        }
        const double d = pred[i] - truth[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
        min_sum += std::min(pred[i], truth[i]);
        max_sum += std::max(pred[i], truth[i]);
    }
    EnergyScores e;
    const double n = static_cast<double>(pred.size());
    if (n > 0) {
        e.mae = abs_sum / n;
        e.rmse = std::sqrt(sq_sum / n);
    }
    e.matching_ratio = max_sum > 0 ? min_sum / max_sum : 1.0;
    return e;
}

// 0.5 * (TP/(TP+FN) + TN/(TN+FP)); an empty class contributes 0.
inline double balanced_accuracy(const ConfusionCounts& c) {
    const double pos = (c.tp + c.fn) > 0
                           ? static_cast<double>(c.tp) /
                                 static_cast<double>(c.tp + c.fn)
                           : 0.0;
    const double neg = (c.tn + c.fp) > 0
                           ? static_cast<double>(c.tn) /
                                 static_cast<double>(c.tn + c.fp)
                           : 0.0;
    return 0.5 * (pos + neg);
}

struct MetricsReport {
    ClassScores status;
    EnergyScores energy;
    double balanced_acc = 0;
};

inline MetricsReport full_report(const std::vector<std::uint8_t>& pred_status,
                                 const std::vector<std::uint8_t>& truth_status,
                                 const std::vector<double>& pred_power,
                                 const std::vector<double>& truth_power) {
    MetricsReport r;
    r.status = status_scores(pred_status, truth_status);
    r.energy = energy_scores(pred_power, truth_power);
    r.balanced_acc = balanced_accuracy(r.status.counts);
    return r;
}

} // namespace camloc
