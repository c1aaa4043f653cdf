#pragma once

#include <cstdint>
#include <vector>

#include "rfcn/tensor.hpp"

namespace rfcn {

/// Confusion counts over pixels with the four derived binary-segmentation
/// scores. Derived values are always recomputable from the counts.
struct MetricsReport {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
    double precision = 0.0, recall = 0.0, f_measure = 0.0, iou = 0.0;

    static MetricsReport from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn,
                                     std::int64_t tn);
    std::int64_t total() const { return tp + fp + fn + tn; }
};

/// precision = tp/(tp+fp), recall = tp/(tp+fn),
/// F = 2*p*r/(p+r), IoU = tp/(tp+fp+fn).
/// Empty-vs-empty comparisons score perfect; degenerate misses score zero:
/// precision := 1 when tp+fp = 0 and fn = 0, else 0 (same pattern for
/// recall); F := 0 when p+r = 0; IoU := 1 when tp+fp+fn = 0.
double precision_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);
double recall_from_counts(std::int64_t tp, std::int64_t fn, std::int64_t fp);
double f_measure_from_pr(double precision, double recall);
double iou_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn);

/// Binarizes pred at `threshold` and counts against the ground-truth mask.
MetricsReport score(const Tensor& pred, const Tensor& gt, double threshold = 0.5);

enum class AggregateMode { Micro, Macro };

/// Micro sums raw counts then derives; macro averages per-report metrics.
MetricsReport aggregate(const std::vector<MetricsReport>& reports,
                        AggregateMode mode = AggregateMode::Micro);

}  // namespace rfcn
