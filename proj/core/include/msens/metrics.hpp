#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace msens {

struct ScoredSample {
    double score = 0.0;
    int label = 0;
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t tn = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + tn + fp + fn; }
    bool operator==(const Confusion&) const = default;
};

/// A sample is predicted positive iff score >= threshold.
Confusion confusion_at(const std::vector<ScoredSample>& samples, double threshold);

/// Percentages: Sp = 100 TN/(TN+FP), Se = 100 TP/(TP+FN), Acc = (Sp+Se)/2.
struct SpSeAcc {
    double sp = 0.0;
    double se = 0.0;
    double acc = 0.0;
};

SpSeAcc sp_se_acc(const Confusion& c);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
    // Raw counts behind the rates, kept for exact arithmetic.
    std::size_t tp = 0;
    std::size_t fp = 0;
};

/// Points at a sentinel threshold above every score, then at each distinct
/// score in descending order. The last point has fpr = tpr = 1.
struct RocCurve {
    std::vector<RocPoint> points;
    std::size_t positives = 0;
    std::size_t negatives = 0;
};

RocCurve roc_curve(const std::vector<ScoredSample>& samples);

/// Trapezoidal area under the curve. Evaluated on integer counts, so it
/// equals the pairwise win rate of positives over negatives (ties 1/2).
double auc(const RocCurve& curve);

struct Cutoff {
    double threshold = 0.0;
    double sp = 0.0;
    double se = 0.0;
};

/// Curve point maximising Sp + Se; ties prefer higher Se, then the lower
/// threshold.
Cutoff choose_cutoff(const RocCurve& curve);

/// Table-style interpretation band of an AUC value.
std::string interpret(double auc_value);

/// Half-up rounding to `decimals` places, tolerant of binary representation
/// error (84.765 -> 84.77).
double round_half_up(double value, int decimals);

struct ReportRow {
    std::string model;
    double auc = 0.0;
    double sp = 0.0;
    double se = 0.0;
    std::optional<double> acc;  // recomputed from Sp and Se when absent
};

struct RenderedReport {
    std::string text;  // aligned table
    std::string json;  // machine-readable rows
};

/// Four-column report: AUC to 3 decimals, Sp/Se/Acc to 2. Throws
/// ConsistencyError when a supplied Acc differs from (Sp + Se) / 2 by more
/// than 0.01.
RenderedReport render_report(const std::vector<ReportRow>& rows);

std::vector<ReportRow> report_rows_from_json(const std::string& text);

/// "threshold fpr tpr" per line, preceded by a header comment.
std::string roc_to_text(const RocCurve& curve);

}  // namespace msens
