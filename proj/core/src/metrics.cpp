#include "msens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json_io.hpp"
#include "msens/error.hpp"

namespace msens {

Confusion confusion_at(const std::vector<ScoredSample>& samples, double threshold) {
    if (samples.empty()) throw InvalidArgument("confusion_at: empty sample list");
    Confusion c;
    for (const auto& s : samples) {
        const bool predicted = s.score >= threshold;
        if (s.label == 1) {
            if (predicted) ++c.tp;
            else ++c.fn;
        } else {
            if (predicted) ++c.fp;
            else ++c.tn;
        }
    }
    return c;
}

SpSeAcc sp_se_acc(const Confusion& c) {
    if (c.tn + c.fp == 0) throw InvalidArgument("specificity undefined: evaluation set has no negatives");
    if (c.tp + c.fn == 0) throw InvalidArgument("sensitivity undefined: evaluation set has no positives");
    SpSeAcc r;
    r.sp = 100.0 * static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
    r.se = 100.0 * static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    r.acc = (r.sp + r.se) / 2.0;
    return r;
}

RocCurve roc_curve(const std::vector<ScoredSample>& samples) {
    RocCurve curve;
    for (const auto& s : samples) {
        if (!std::isfinite(s.score)) throw InvalidArgument("roc_curve: non-finite score");
        if (s.label == 1) ++curve.positives;
        else if (s.label == 0) ++curve.negatives;
        else throw InvalidArgument("roc_curve: labels must be 0 or 1");
    }
    if (curve.positives == 0 || curve.negatives == 0)
        throw InvalidArgument("roc_curve: need at least one positive and one negative sample");

    std::vector<ScoredSample> sorted = samples;
    std::sort(sorted.begin(), sorted.end(), [](const ScoredSample& a, const ScoredSample& b) { return a.score > b.score; });
    const double P = static_cast<double>(curve.positives);
    const double N = static_cast<double>(curve.negatives);

    curve.points.push_back({sorted.front().score + 1.0, 0.0, 0.0, 0, 0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double t = sorted[i].score;
        while (i < sorted.size() && sorted[i].score == t) {
            if (sorted[i].label == 1) ++tp;
            else ++fp;
            ++i;
        }
        curve.points.push_back({t, static_cast<double>(fp) / N, static_cast<double>(tp) / P, tp, fp});
    }
    return curve;
}

double auc(const RocCurve& curve) {
    if (curve.points.size() < 2 || curve.positives == 0 || curve.negatives == 0)
        throw InvalidArgument("auc: invalid ROC curve");
    // Twice the area in count units: sum of dFP * (TP_prev + TP_cur).
    unsigned long long twice_area = 0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        twice_area += static_cast<unsigned long long>(b.fp - a.fp) * (a.tp + b.tp);
    }
    return static_cast<double>(twice_area) /
           (2.0 * static_cast<double>(curve.positives) * static_cast<double>(curve.negatives));
}

Cutoff choose_cutoff(const RocCurve& curve) {
    if (curve.points.empty()) throw InvalidArgument("choose_cutoff: empty ROC curve");
    const auto P = static_cast<__int128>(curve.positives);
    const auto N = static_cast<__int128>(curve.negatives);
    // Sp + Se is an increasing function of tp*N - fp*P.
    auto objective = [&](const RocPoint& p) { return static_cast<__int128>(p.tp) * N - static_cast<__int128>(p.fp) * P; };
    std::size_t best = 0;
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& cand = curve.points[i];
        const auto& cur = curve.points[best];
        const auto oc = objective(cand), ob = objective(cur);
        if (oc > ob || (oc == ob && (cand.tp > cur.tp || (cand.tp == cur.tp && cand.threshold < cur.threshold))))
            best = i;
    }
    const auto& p = curve.points[best];
    Cutoff c;
    c.threshold = p.threshold;
    c.se = 100.0 * static_cast<double>(p.tp) / static_cast<double>(curve.positives);
    c.sp = 100.0 * static_cast<double>(curve.negatives - p.fp) / static_cast<double>(curve.negatives);
    return c;
}

std::string interpret(double a) {
    if (!(a >= 0.0 && a <= 1.0)) throw InvalidArgument("interpret: AUC must lie in [0, 1]");
    if (a < 0.5) return "Worse than chance";
    if (a < 0.6) return "No discrimination";
    if (a < 0.7) return "Poor discrimination";
    if (a < 0.8) return "Acceptable discrimination";
    if (a < 0.9) return "Good discrimination";
    return "Excellent discrimination";
}

double round_half_up(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const double scaled = value * scale;
    const double slack = 1e-9 * std::max(1.0, std::abs(scaled));
    return std::floor(scaled + 0.5 + slack) / scale;
}

namespace {

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, round_half_up(v, decimals));
    return buf;
}

}  // namespace

RenderedReport render_report(const std::vector<ReportRow>& rows) {
    if (rows.empty()) throw InvalidArgument("report: no rows");
    std::size_t name_width = 5;
    for (const auto& r : rows) name_width = std::max(name_width, r.model.size());

    Json doc;
    doc["columns"] = {"AUC", "Sp (%)", "Se (%)", "Acc (%)"};
    doc["rows"] = Json::array();
    std::ostringstream text;
    auto pad_right = [&](const std::string& s) { return s + std::string(name_width - s.size(), ' '); };
    auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
    text << pad_right("Model") << pad_left("AUC", 8) << pad_left("Sp (%)", 9) << pad_left("Se (%)", 9)
         << pad_left("Acc (%)", 9) << '\n';
    for (const auto& r : rows) {
        const double acc = (r.sp + r.se) / 2.0;
        if (r.acc && std::abs(*r.acc - acc) > 0.01 + 1e-9)
            throw ConsistencyError("report row \"" + r.model + "\": Acc " + fixed(*r.acc, 2) + " differs from (Sp+Se)/2 = " +
                                   fixed(acc, 3));
        text << pad_right(r.model) << pad_left(fixed(r.auc, 3), 8) << pad_left(fixed(r.sp, 2), 9)
             << pad_left(fixed(r.se, 2), 9) << pad_left(fixed(acc, 2), 9) << '\n';
        doc["rows"].push_back({{"model", r.model},
                               {"auc", r.auc},
                               {"sp", r.sp},
                               {"se", r.se},
                               {"acc", acc},
                               {"interpretation", interpret(std::clamp(r.auc, 0.0, 1.0))}});
    }
    return {text.str(), doc.dump(2) + "\n"};
}

std::vector<ReportRow> report_rows_from_json(const std::string& text) {
    std::vector<ReportRow> rows;
    try {
        const Json doc = Json::parse(text);
        for (const auto& r : doc.at("rows")) {
            ReportRow row;
            row.model = r.at("model").get<std::string>();
            row.auc = r.at("auc").get<double>();
            row.sp = r.at("sp").get<double>();
            row.se = r.at("se").get<double>();
            if (r.contains("acc")) row.acc = r.at("acc").get<double>();
            rows.push_back(std::move(row));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("results file: ") + e.what());
    }
    return rows;
}

std::string roc_to_text(const RocCurve& curve) {
    std::ostringstream out;
    out << "# threshold fpr tpr\n";
    char buf[96];
    for (const auto& p : curve.points) {
        std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.threshold, p.fpr, p.tpr);
        out << buf;
    }
    return out.str();
}

}  // namespace msens
