#include "rfcn/metrics.hpp"

#include "rfcn/error.hpp"

namespace rfcn {

double precision_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    if (tp + fp == 0) return fn == 0 ? 1.0 : 0.0;
    return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double recall_from_counts(std::int64_t tp, std::int64_t fn, std::int64_t fp) {
    if (tp + fn == 0) return fp == 0 ? 1.0 : 0.0;
    return static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double f_measure_from_pr(double precision, double recall) {
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double iou_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn) {
    if (tp + fp + fn == 0) return 1.0;
    return static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
}

MetricsReport MetricsReport::from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                         std::int64_t tn) {
    MetricsReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.tn = tn;
    r.precision = precision_from_counts(tp, fp, fn);
    r.recall = recall_from_counts(tp, fn, fp);
    r.f_measure = f_measure_from_pr(r.precision, r.recall);
    r.iou = iou_from_counts(tp, fp, fn);
    return r;
}

MetricsReport score(const Tensor& pred, const Tensor& gt, double threshold) {
    require_same_shape(pred, gt, "score");
    if (threshold <= 0.0 || threshold >= 1.0) {
        throw ArgumentError("score: threshold must lie in (0,1)");
    }
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::int64_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] > threshold;
        const bool g = gt[i] > 0.5;
        if (p && g) {
            ++tp;
        } else if (p) {
            ++fp;
        } else if (g) {
            ++fn;
        } else {
            ++tn;
        }
    }
    return MetricsReport::from_counts(tp, fp, fn, tn);
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports, AggregateMode mode) {
    if (reports.empty()) throw ArgumentError("aggregate: empty report list");
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    for (const MetricsReport& r : reports) {
        tp += r.tp;
        fp += r.fp;
        fn += r.fn;
        tn += r.tn;
    }
    MetricsReport out = MetricsReport::from_counts(tp, fp, fn, tn);
    if (mode == AggregateMode::Macro) {
        double p = 0.0, rr = 0.0, f = 0.0, j = 0.0;
        for (const MetricsReport& r : reports) {
            p += r.precision;
            rr += r.recall;
            f += r.f_measure;
            j += r.iou;
        }
        const double n = static_cast<double>(reports.size());
        out.precision = p / n;
        out.recall = rr / n;
        out.f_measure = f / n;
        out.iou = j / n;
    }
    return out;
}

}  // namespace rfcn
