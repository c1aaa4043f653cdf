#include "doctest.h"

#include "rfcn/error.hpp"
#include "rfcn/rng.hpp"
#include "rfcn/tensor.hpp"

using namespace rfcn;

TEST_CASE("tensor shape and data agree") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.rank() == 2);
    CHECK(t.at(1, 2) == 0.0);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
    CHECK_THROWS_AS(Tensor({0, 3}), DimensionError);
}

TEST_CASE("row-major indexing") {
    Tensor t({2, 2, 3});
    t.at(1, 0, 2) = 5.0;
    CHECK(t[1 * 6 + 0 * 3 + 2] == 5.0);
    Tensor k({2, 1, 2, 2});
    k.at4(1, 0, 1, 1) = 7.0;
    CHECK(k[1 * 4 + 3] == 7.0);
}

TEST_CASE("reshape keeps row-major order and total size") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = t.reshaped({6});
    CHECK(r[4] == 5.0);
    Tensor back = r.reshaped({2, 3});
    CHECK(back == t);
    CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}

TEST_CASE("finite check") {
    Tensor t({2}, {1.0, 2.0});
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("rng determinism and stream derivation") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    Rng c(42);
    Rng d1 = c.derive("data");
    Rng d2 = c.derive("train");
    CHECK(d1.uniform() != d2.uniform());
    CHECK(Rng::derive_seed(7, "x") == Rng::derive_seed(7, "x"));
    CHECK(Rng::derive_seed(7, "x") != Rng::derive_seed(8, "x"));
}

TEST_CASE("rng ranges") {
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
        double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        int k = r.uniform_int(2, 5);
        CHECK(k >= 2);
        CHECK(k <= 5);
    }
    Tensor n = r.normal_tensor({1000});
    double mean = 0.0;
    for (std::int64_t i = 0; i < n.size(); ++i) mean += n[i];
    mean /= static_cast<double>(n.size());
    CHECK(std::abs(mean) < 0.15);
}
