#include "txgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "txgnn/errors.hpp"
#include "txgnn/format.hpp"

namespace txgnn::metrics {

namespace {

void check_binary(std::span<const std::int32_t> v, const char* what) {
    for (auto x : v)
        if (x != 0 && x != 1)
            throw ContractError(std::string(what) + ": expected binary values, got " +
                                std::to_string(x));
}

void check_paired(std::size_t a, std::size_t b, const char* what) {
    if (a != b)
        throw DimensionError(std::string(what) + ": " + std::to_string(a) + " labels vs " +
                             std::to_string(b) + " predictions/scores");
}

double f1_of_class(std::span<const std::int32_t> labels, std::span<const std::int32_t> preds,
                   int cls) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool t = labels[i] == cls, p = preds[i] == cls;
        tp += t && p;
        fp += !t && p;
        fn += t && !p;
    }
    const std::int64_t denom = 2 * tp + fp + fn;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

} // namespace

int minority_class(std::span<const std::int32_t> labels) {
    check_binary(labels, "minority_class");
    std::int64_t ones = 0;
    for (auto y : labels) ones += y;
    const std::int64_t zeros = static_cast<std::int64_t>(labels.size()) - ones;
    const int minority = ones <= zeros ? 1 : 0;
    const std::int64_t support = minority == 1 ? ones : zeros;
    if (support == 0)
        throw UndefinedMetricError("minority class " + std::to_string(minority) +
                                   " has no samples");
    return minority;
}

double f1_min(std::span<const std::int32_t> labels, std::span<const std::int32_t> preds) {
    check_paired(labels.size(), preds.size(), "f1_min");
    check_binary(preds, "f1_min");
    return f1_of_class(labels, preds, minority_class(labels));
}

double macro_f1(std::span<const std::int32_t> labels, std::span<const std::int32_t> preds) {
    check_paired(labels.size(), preds.size(), "macro_f1");
    check_binary(preds, "macro_f1");
    (void)minority_class(labels); // both classes must be present
    return 0.5 * (f1_of_class(labels, preds, 0) + f1_of_class(labels, preds, 1));
}

double pr_auc(std::span<const std::int32_t> labels, std::span<const double> scores) {
    check_paired(labels.size(), scores.size(), "pr_auc");
    const int positive = minority_class(labels);
    std::int64_t total_pos = 0;
    for (auto y : labels) total_pos += y == positive;

    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0, prev_recall = 0.0;
    std::int64_t cum_tp = 0, cum_fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == positive)
                ++cum_tp;
            else
                ++cum_fp;
        }
        const double recall = static_cast<double>(cum_tp) / static_cast<double>(total_pos);
        const double precision =
            static_cast<double>(cum_tp) / static_cast<double>(cum_tp + cum_fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

EvalReport evaluate(std::span<const double> logits, std::span<const std::int32_t> labels) {
    if (labels.empty()) throw ContractError("evaluate: empty prediction set");
    if (logits.size() != labels.size() * 2)
        throw DimensionError("evaluate: expected " + std::to_string(labels.size() * 2) +
                             " logits (two per sample), got " + std::to_string(logits.size()));
    const std::size_t n = labels.size();

    std::vector<std::int32_t> preds(n);
    std::vector<double> minority_prob(n);
    const int minority = minority_class(labels);
    for (std::size_t i = 0; i < n; ++i) {
        const double l0 = logits[2 * i], l1 = logits[2 * i + 1];
        preds[i] = l1 > l0 ? 1 : 0;
        const double m = std::max(l0, l1);
        const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
        const double p1 = e1 / (e0 + e1);
        minority_prob[i] = minority == 1 ? p1 : 1.0 - p1;
    }

    EvalReport rep;
    rep.minority = minority;
    for (std::size_t i = 0; i < n; ++i) {
        const bool t = labels[i] == minority, p = preds[i] == minority;
        rep.tp += t && p;
        rep.fp += !t && p;
        rep.fn += t && !p;
        rep.tn += !t && !p;
    }
    rep.f1_min = f1_min(labels, preds);
    rep.macro_f1 = macro_f1(labels, preds);
    rep.pr_auc = pr_auc(labels, minority_prob);
    rep.threshold = 0.5;
    return rep;
}

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os << "{\"tp\":" << tp << ",\"fp\":" << fp << ",\"tn\":" << tn << ",\"fn\":" << fn
       << ",\"minority\":" << minority << ",\"f1_min\":" << format_double(f1_min)
       << ",\"macro_f1\":" << format_double(macro_f1) << ",\"pr_auc\":" << format_double(pr_auc)
       << ",\"threshold\":" << format_double(threshold) << "}";
    return os.str();
}

std::string EvalReport::csv_header() {
    return "tp,fp,tn,fn,minority,f1_min,macro_f1,pr_auc,threshold";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os << tp << ',' << fp << ',' << tn << ',' << fn << ',' << minority << ','
       << format_double(f1_min) << ',' << format_double(macro_f1) << ',' << format_double(pr_auc)
       << ',' << format_double(threshold);
    return os.str();
}

} // namespace txgnn::metrics
