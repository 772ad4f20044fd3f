#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsnet/error.hpp"

namespace dsnet {

struct ConfusionMatrix {
    long tp = 0;
    long tn = 0;
    long fp = 0;
    long fn = 0;
    int positive_class = 1;

    long total() const { return tp + tn + fp + fn; }
};

inline ConfusionMatrix confusion(const std::vector<int>& predicted,
                                 const std::vector<int>& actual,
                                 int positive) {
    if (predicted.size() != actual.size()) {
        throw ShapeError("confusion: predicted and actual lengths differ");
    }
    if (predicted.empty()) {
        throw ShapeError("confusion: empty label arrays");
    }
    ConfusionMatrix cm;
    cm.positive_class = positive;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const bool act_pos = actual[i] == positive;
        const bool pred_pos = predicted[i] == positive;
        if (act_pos && pred_pos) ++cm.tp;
        else if (!act_pos && !pred_pos) ++cm.tn;
        else if (!act_pos && pred_pos) ++cm.fp;
        else ++cm.fn;
    }
    return cm;
}

inline double accuracy(const ConfusionMatrix& cm) {
    if (cm.total() <= 0) throw DomainError("accuracy of an empty matrix");
    return static_cast<double>(cm.tp + cm.tn) /
           static_cast<double>(cm.total());
}

// Zero-denominator convention: a degenerate predictor scores 0 here and the
// report carries a flag (see compute_metrics) instead of failing.
inline double precision(const ConfusionMatrix& cm) {
    if (cm.tp + cm.fp == 0) return 0.0;
    return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
}

inline double recall(const ConfusionMatrix& cm) {
    if (cm.tp + cm.fn == 0) return 0.0;
    return static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
}

inline double f1(const ConfusionMatrix& cm) {
    const double p = precision(cm);
    const double r = recall(cm);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

struct RocPoint {
    double threshold = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
};

// One point per distinct score (ties grouped into a single threshold step),
// preceded by the (0,0) point at threshold +inf. A sample is predicted
// positive when score >= threshold, so the final point is always (1,1).
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<int>& actual) {
    if (scores.size() != actual.size()) {
        throw ShapeError("roc_curve: scores and labels lengths differ");
    }
    if (scores.empty()) throw ShapeError("roc_curve: empty input");
    long pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] >= 0.0 && scores[i] <= 1.0)) {
            throw DomainError("roc_curve: scores must lie in [0,1]");
        }
        (actual[i] == 1 ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) {
        throw DomainError("roc_curve: need both classes, AUC is undefined "
                          "on a single-class sample");
    }

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b];
    });

    std::vector<RocPoint> curve;
    curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (actual[order[i]] == 1 ? tp : fp) += 1;
            ++i;
        }
        curve.push_back({s, static_cast<double>(tp) / pos,
                         static_cast<double>(fp) / neg});
    }
    return curve;
}

inline double auc_trapezoid(const std::vector<RocPoint>& curve) {
    if (curve.size() < 2) throw DomainError("auc_trapezoid: too few points");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        area += (curve[i].fpr - curve[i - 1].fpr) *
                (curve[i].tpr + curve[i - 1].tpr) / 2.0;
    }
    return area;
}

// Independent AUC route: the fraction of (positive, negative) pairs ranked
// correctly, ties worth half. Agrees with the trapezoid over the grouped
// ROC curve to rounding error.
inline double auc_pairwise_oracle(const std::vector<double>& scores,
                                  const std::vector<int>& actual) {
    if (scores.size() != actual.size()) {
        throw ShapeError("auc oracle: scores and labels lengths differ");
    }
    long pos = 0, neg = 0;
    for (int a : actual) (a == 1 ? pos : neg) += 1;
    if (pos == 0 || neg == 0) {
        throw DomainError("auc oracle: need both classes");
    }
    double credit = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (actual[i] != 1) continue;
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (actual[j] == 1) continue;
            if (scores[i] > scores[j]) credit += 1.0;
            else if (scores[i] == scores[j]) credit += 0.5;
        }
    }
    return credit / (static_cast<double>(pos) * static_cast<double>(neg));
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    std::string split;
    double accuracy = 0.0;
    bool auc_defined = false;
    double auc = 0.0;
    ConfusionMatrix cm;
    std::vector<std::string> class_names;
    std::vector<ClassMetrics> per_class;  // indexed by class id
    double train_seconds = 0.0;
    double predict_seconds = 0.0;
    std::vector<std::string> flags;
};

// Full report from raw prediction arrays. `positive_scores` holds the
// class-1 probability per sample and feeds ROC/AUC; a single-class sample
// leaves the AUC undefined and flagged rather than failing the whole
// evaluation.
inline MetricsReport compute_metrics(const std::vector<int>& predicted,
                                     const std::vector<int>& actual,
                                     const std::vector<double>& positive_scores,
                                     const std::vector<std::string>& class_names,
                                     const std::string& split) {
    MetricsReport rep;
    rep.split = split;
    rep.class_names = class_names;
    rep.cm = confusion(predicted, actual, 1);
    rep.accuracy = accuracy(rep.cm);
    for (std::size_t cls = 0; cls < class_names.size(); ++cls) {
        const ConfusionMatrix cm =
            confusion(predicted, actual, static_cast<int>(cls));
        ClassMetrics m;
        m.precision = precision(cm);
        m.recall = recall(cm);
        m.f1 = f1(cm);
        if (cm.tp + cm.fp == 0) {
            rep.flags.push_back("precision_zero_denominator:" +
                                class_names[cls]);
        }
        if (cm.tp + cm.fn == 0) {
            rep.flags.push_back("recall_zero_denominator:" + class_names[cls]);
        }
        rep.per_class.push_back(m);
    }
    try {
        rep.auc = auc_trapezoid(roc_curve(positive_scores, actual));
        rep.auc_defined = true;
    } catch (const DomainError&) {
        rep.flags.push_back("auc_undefined_single_class");
    }
    return rep;
}

// Wall-clock fields are reported to 0.01 s; they are machine-dependent and
// excluded from any byte-level report comparison.
inline double round_hundredth(double seconds) {
    return std::round(seconds * 100.0) / 100.0;
}

inline nlohmann::json metrics_to_json(const MetricsReport& rep) {
    nlohmann::json per_class;
    for (std::size_t cls = 0; cls < rep.class_names.size(); ++cls) {
        per_class[rep.class_names[cls]] = {
            {"precision", rep.per_class[cls].precision},
            {"recall", rep.per_class[cls].recall},
            {"f1", rep.per_class[cls].f1},
        };
    }
    nlohmann::json j{
        {"schema_version", 1},
        {"split", rep.split},
        {"accuracy", rep.accuracy},
        {"auc", rep.auc_defined ? nlohmann::json(rep.auc)
                                : nlohmann::json(nullptr)},
        {"confusion",
         {{"tp", rep.cm.tp},
          {"tn", rep.cm.tn},
          {"fp", rep.cm.fp},
          {"fn", rep.cm.fn},
          {"positive_class", rep.cm.positive_class}}},
        {"per_class", per_class},
        {"timing",
         {{"train_seconds", round_hundredth(rep.train_seconds)},
          {"predict_seconds", round_hundredth(rep.predict_seconds)}}},
        {"flags", rep.flags},
    };
    return j;
}

}  // namespace dsnet
