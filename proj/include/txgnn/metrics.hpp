#pragma once

// Binary-classification evaluation: minority-class F1, macro F1, and
// precision-recall AUC in the average-precision formulation (no trapezoidal
// interpolation — PR-space trapezoids are biased, and the uninterpolated sum
// keeps numbers comparable across implementations).  Hard labels come from
// argmax over logits; no threshold tuning.

#include <cstdint>
#include <span>
#include <string>

namespace txgnn::metrics {

struct EvalReport {
    // Confusion counts for the minority class.
    std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    int minority = 1;
    double f1_min = 0.0;
    double macro_f1 = 0.0;
    double pr_auc = 0.0;
    double threshold = 0.5; // probability threshold implied by argmax

    std::string to_json() const;
    static std::string csv_header();
    std::string csv_row() const;
};

// The rarer of the two true classes; a tie goes to class 1 (the designated
// positive).  Throws UndefinedMetricError when that class has no samples.
int minority_class(std::span<const std::int32_t> labels);

// Harmonic mean of minority precision and recall; 0 when both are 0.
double f1_min(std::span<const std::int32_t> labels, std::span<const std::int32_t> preds);

// Unweighted mean of the per-class F1 scores.
double macro_f1(std::span<const std::int32_t> labels, std::span<const std::int32_t> preds);

// Average precision over a descending-score sweep, equal scores processed as
// one block.  Positives are the minority class.  Invariant under strictly
// monotone transforms of the scores.
double pr_auc(std::span<const std::int32_t> labels, std::span<const double> scores);

// Row-major [n x 2] logits -> full report.  Hard labels by argmax; PR-AUC uses
// the softmax probability of the minority class.
EvalReport evaluate(std::span<const double> logits, std::span<const std::int32_t> labels);

} // namespace txgnn::metrics
