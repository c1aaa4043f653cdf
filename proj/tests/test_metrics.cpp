#include "doctest.h"

#include <cmath>

#include "rfcn/error.hpp"
#include "rfcn/metrics.hpp"
#include "rfcn/rng.hpp"

using namespace rfcn;

TEST_CASE("perfect mask scores one everywhere") {
    Tensor gt({2, 2}, {1, 0, 1, 0});
    Tensor pred({2, 2}, {0.9, 0.1, 0.8, 0.2});
    MetricsReport r = score(pred, gt);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 1.0);
    CHECK(r.f_measure == 1.0);
    CHECK(r.iou == 1.0);
    CHECK(r.total() == 4);
}

TEST_CASE("direct formula evaluation") {
    MetricsReport r = MetricsReport::from_counts(3, 1, 1, 10);
    CHECK(r.precision == doctest::Approx(0.75));
    CHECK(r.recall == doctest::Approx(0.75));
    CHECK(r.f_measure == doctest::Approx(0.75));
    CHECK(r.iou == doctest::Approx(0.6));
}

TEST_CASE("published precision/recall rows reproduce the published F to 3 decimals") {
    struct Row {
        double p, r, f;
    };
    // Per-network rows of the paper's three results tables.
    const Row rows[] = {
        {0.868, 0.922, 0.894},    // FC-Lenet
        {0.941, 0.786, 0.856},    // LSTM
        {0.955, 0.877, 0.914},    // GRU
        {0.96, 0.877, 0.916},     // RFC-Lenet
        {0.7759, 0.6810, 0.7254}, // FC-VGG SegTrack
        {0.8325, 0.7280, 0.7767}, // RFC-VGG SegTrack
        {0.6834, 0.5454, 0.6066}, // FC-VGG DAVIS
        {0.7233, 0.5586, 0.6304}, // RFC-VGG DAVIS
        {0.827, 0.585, 0.685},    // FC-12s
        {0.835, 0.587, 0.69},     // RFC-12s (D)
        {0.797, 0.623, 0.7},      // RFC-12s (EE)
    };
    for (const Row& row : rows) {
        CHECK(std::abs(f_measure_from_pr(row.p, row.r) - row.f) < 1e-3);
    }
    CHECK(f_measure_from_pr(0.96, 0.877) == doctest::Approx(0.9166).epsilon(1e-4));
}

TEST_CASE("zero-denominator conventions") {
    // Empty prediction and empty truth: perfect.
    MetricsReport empty = MetricsReport::from_counts(0, 0, 0, 9);
    CHECK(empty.precision == 1.0);
    CHECK(empty.recall == 1.0);
    CHECK(empty.iou == 1.0);
    // Missed everything: degenerate zero.
    MetricsReport miss = MetricsReport::from_counts(0, 0, 5, 4);
    CHECK(miss.precision == 0.0);
    CHECK(miss.recall == 0.0);
    CHECK(miss.f_measure == 0.0);
    // Predicted only garbage.
    MetricsReport junk = MetricsReport::from_counts(0, 5, 0, 4);
    CHECK(junk.precision == 0.0);
    CHECK(junk.recall == 0.0);
}

TEST_CASE("F-measure is the harmonic mean; IoU = F/(2-F)") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const std::int64_t tp = rng.uniform_int(0, 50);
        const std::int64_t fp = rng.uniform_int(0, 50);
        const std::int64_t fn = rng.uniform_int(0, 50);
        if (tp + fp + fn == 0) continue;
        MetricsReport r = MetricsReport::from_counts(tp, fp, fn, 7);
        if (r.precision + r.recall > 0) {
            CHECK(r.f_measure >= std::min(r.precision, r.recall) - 1e-12);
            CHECK(r.f_measure <= std::max(r.precision, r.recall) + 1e-12);
        }
        CHECK(r.iou == doctest::Approx(r.f_measure / (2.0 - r.f_measure)).epsilon(1e-12));
        CHECK(r.iou <= r.f_measure + 1e-12);
    }
}

TEST_CASE("threshold monotonicity: raising the threshold never adds positives") {
    Rng rng(6);
    Tensor pred = rng.uniform_tensor({8, 8}, 0.0, 1.0);
    Tensor gt({8, 8});
    for (std::int64_t i = 0; i < gt.size(); ++i) gt[i] = rng.uniform() < 0.3 ? 1.0 : 0.0;
    std::int64_t prev = 65;
    for (double th : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        MetricsReport r = score(pred, gt, th);
        CHECK(r.tp + r.fp <= prev);
        prev = r.tp + r.fp;
    }
}

TEST_CASE("aggregate micro vs macro") {
    MetricsReport a = MetricsReport::from_counts(1, 0, 1, 2);
    MetricsReport b = MetricsReport::from_counts(1, 1, 0, 2);
    CHECK(aggregate({a}).f_measure == a.f_measure);

    MetricsReport micro = aggregate({a, b}, AggregateMode::Micro);
    CHECK(micro.precision == doctest::Approx(2.0 / 3.0));
    MetricsReport macro = aggregate({a, b}, AggregateMode::Macro);
    CHECK(macro.precision == doctest::Approx(0.75));

    MetricsReport twice = aggregate({a, a}, AggregateMode::Micro);
    CHECK(twice.precision == a.precision);
    CHECK(twice.f_measure == a.f_measure);

    CHECK_THROWS_AS(aggregate({}), ArgumentError);
}

TEST_CASE("score validates shapes and threshold") {
    CHECK_THROWS_AS(score(Tensor({2, 2}), Tensor({2, 3})), DimensionError);
    CHECK_THROWS_AS(score(Tensor({2, 2}), Tensor({2, 2}), 1.5), ArgumentError);
}
