#include "doctest.h"

#include <cstring>

#include "rfcn/error.hpp"
#include "rfcn/kernels.hpp"
#include "rfcn/rng.hpp"
#include "rfcn/tensor.hpp"

using namespace rfcn;
using kernels::Conv2dGeom;
using kernels::Pool2dGeom;

TEST_CASE("conv2d output arithmetic follows the committed padding convention") {
    // Table-style parameter sets evaluated symbolically.
    Conv2dGeom g1 = Conv2dGeom::infer({3, 240, 360}, {64, 3, 11, 11}, 4, 40);
    CHECK(g1.out_h == 68);  // floor((240 + 40 - 11)/4) + 1
    CHECK(g1.out_w == 98);
    Conv2dGeom g2 = Conv2dGeom::infer({1, 120, 180}, {20, 1, 5, 5}, 3, 10);
    CHECK(g2.out_h == 42);  // floor((120 + 10 - 5)/3) + 1
    CHECK(g2.out_w == 62);
    // Odd total padding splits floor before, ceil after.
    CHECK(g2.pad_before == 5);
    Conv2dGeom g3 = Conv2dGeom::infer({1, 6, 6}, {1, 1, 3, 3}, 1, 1);
    CHECK(g3.pad_before == 0);
    CHECK(g3.out_h == 5);
}

TEST_CASE("conv2d rejects mismatched channels naming both shapes") {
    try {
        Conv2dGeom::infer({3, 8, 8}, {4, 2, 3, 3}, 1, 0);
        FAIL("expected DimensionError");
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("(4x2x3x3)") != std::string::npos);
        CHECK(msg.find("(3x8x8)") != std::string::npos);
    }
    CHECK_THROWS_AS(Conv2dGeom::infer({1, 4, 4}, {1, 1, 6, 6}, 1, 1), DimensionError);
    CHECK_THROWS_AS(Conv2dGeom::infer({1, 4, 4}, {1, 1, 3, 3}, 0, 0), ArgumentError);
}

TEST_CASE("maxpool geometry") {
    Pool2dGeom g = Pool2dGeom::infer({1, 13, 13}, 2, 2);
    CHECK(g.out_h == 6);
    CHECK_THROWS_AS(Pool2dGeom::infer({1, 1, 1}, 2, 2), DimensionError);
}

namespace {

struct ConvCase {
    Tensor x, k, b;
    Conv2dGeom g;
};

ConvCase random_case(Rng& rng) {
    const int cin = rng.uniform_int(1, 3);
    const int cout = rng.uniform_int(1, 3);
    const int h = rng.uniform_int(3, 10);
    const int w = rng.uniform_int(3, 10);
    const int kh = rng.uniform_int(1, std::min(4, h));
    const int kw = rng.uniform_int(1, std::min(4, w));
    const int stride = rng.uniform_int(1, 3);
    const int pad = rng.uniform_int(0, 4);
    ConvCase c{rng.normal_tensor({cin, h, w}), rng.normal_tensor({cout, cin, kh, kw}),
               rng.normal_tensor({cout}), {}};
    c.g = Conv2dGeom::infer(c.x.shape(), c.k.shape(), stride, pad);
    return c;
}

}  // namespace

TEST_CASE("parallel conv kernels match the serial reference") {
    Rng rng(7);
    for (int trial = 0; trial < 40; ++trial) {
        ConvCase c = random_case(rng);
        Tensor out_p({c.g.out_c, c.g.out_h, c.g.out_w});
        Tensor out_s(out_p.shape());
        kernels::conv2d_forward(out_p.data(), c.x.data(), c.k.data(), c.b.data(), c.g);
        kernels::serial::conv2d_forward(out_s.data(), c.x.data(), c.k.data(), c.b.data(), c.g);
        for (std::int64_t i = 0; i < out_p.size(); ++i) {
            CHECK(out_p[i] == doctest::Approx(out_s[i]).epsilon(1e-12));
        }

        Tensor dy = rng.normal_tensor(out_p.shape());
        Tensor dx_p(c.x.shape()), dx_s(c.x.shape());
        kernels::conv2d_backward_input(dx_p.data(), dy.data(), c.k.data(), c.g);
        kernels::serial::conv2d_backward_input(dx_s.data(), dy.data(), c.k.data(), c.g);
        for (std::int64_t i = 0; i < dx_p.size(); ++i) {
            CHECK(dx_p[i] == doctest::Approx(dx_s[i]).epsilon(1e-12));
        }

        Tensor dk_p(c.k.shape()), dk_s(c.k.shape());
        kernels::conv2d_backward_kernels(dk_p.data(), dy.data(), c.x.data(), c.g);
        kernels::serial::conv2d_backward_kernels(dk_s.data(), dy.data(), c.x.data(), c.g);
        for (std::int64_t i = 0; i < dk_p.size(); ++i) {
            CHECK(dk_p[i] == doctest::Approx(dk_s[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("parallel maxpool and dense match the serial reference bitwise") {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const int c = rng.uniform_int(1, 3);
        const int h = rng.uniform_int(2, 9);
        const int k = rng.uniform_int(1, std::min(3, h));
        const int stride = rng.uniform_int(1, 2);
        Tensor x = rng.normal_tensor({c, h, h});
        Pool2dGeom g = Pool2dGeom::infer(x.shape(), k, stride);
        Tensor out_p({g.c, g.out_h, g.out_w}), out_s(out_p.shape());
        std::vector<std::int32_t> am_p(static_cast<size_t>(g.out_size()));
        std::vector<std::int32_t> am_s(am_p.size());
        kernels::maxpool2d_forward(out_p.data(), am_p.data(), x.data(), g);
        kernels::serial::maxpool2d_forward(out_s.data(), am_s.data(), x.data(), g);
        CHECK(out_p == out_s);
        CHECK(am_p == am_s);

        const int m = rng.uniform_int(1, 20), n = rng.uniform_int(1, 20);
        Tensor w = rng.normal_tensor({m, n});
        Tensor xv = rng.normal_tensor({n});
        Tensor b = rng.normal_tensor({m});
        Tensor y_p({m}), y_s({m});
        kernels::dense_forward(y_p.data(), xv.data(), w.data(), b.data(), m, n);
        kernels::serial::dense_forward(y_s.data(), xv.data(), w.data(), b.data(), m, n);
        CHECK(y_p == y_s);
    }
}

TEST_CASE("kernels are deterministic run to run") {
    Rng rng(3);
    ConvCase c = random_case(rng);
    Tensor a({c.g.out_c, c.g.out_h, c.g.out_w}), b(a.shape());
    kernels::conv2d_forward(a.data(), c.x.data(), c.k.data(), c.b.data(), c.g);
    kernels::conv2d_forward(b.data(), c.x.data(), c.k.data(), c.b.data(), c.g);
    CHECK(a == b);
}
