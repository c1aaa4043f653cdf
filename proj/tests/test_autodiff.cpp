#include "doctest.h"

#include <cmath>

#include "rfcn/autodiff.hpp"
#include "rfcn/error.hpp"
#include "rfcn/gradcheck.hpp"
#include "rfcn/init.hpp"
#include "rfcn/rng.hpp"

using namespace rfcn;

namespace {

double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

TEST_CASE("activations at reference points") {
    Tape t;
    Var x = t.leaf(Tensor({3}, {0.0, 0.0, -3.0}));
    CHECK(t.value(sigmoid(t, x))[0] == doctest::Approx(0.5));
    CHECK(t.value(tanh_op(t, x))[1] == 0.0);
    CHECK(t.value(relu(t, x))[2] == 0.0);
}

TEST_CASE("sigmoid gradient at zero is a quarter") {
    Tape t;
    Var x = t.leaf(Tensor({1}, {0.0}));
    Var y = sigmoid(t, x);
    t.backward(y, Tensor({1}, {1.0}));
    CHECK(t.grad(x)[0] == doctest::Approx(0.25));

    Tensor fd = finite_difference_gradient(
        [](const Tensor& v) { return 1.0 / (1.0 + std::exp(-v[0])); }, Tensor({1}, {0.0}), 1e-5);
    CHECK(std::abs(t.grad(x)[0] - fd[0]) < 1e-8);
}

TEST_CASE("conv2d identity kernel and full-window sum") {
    Tape t;
    Var x = t.leaf(Tensor::ones({1, 3, 3}));
    Var k = t.leaf(Tensor::ones({1, 1, 1, 1}));
    Var b = t.leaf(Tensor({1}));
    Var y = conv2d(t, x, k, {b}, 1, 0);
    CHECK(t.value(y).shape() == Shape{1, 3, 3});
    for (std::int64_t i = 0; i < 9; ++i) CHECK(t.value(y)[i] == 1.0);

    Tape t2;
    Var x2 = t2.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4}));
    Var k2 = t2.leaf(Tensor::ones({1, 1, 2, 2}));
    Var y2 = conv2d(t2, x2, k2, std::nullopt, 1, 0);
    CHECK(t2.value(y2).shape() == Shape{1, 1, 1});
    CHECK(t2.value(y2)[0] == 10.0);
}

TEST_CASE("transposed conv stamps its kernel") {
    Tape t;
    Var x = t.leaf(Tensor({1, 1, 1}, {1.0}));
    Var k = t.leaf(Tensor::ones({1, 1, 2, 2}));
    Var y = transposed_conv2d(t, x, k, 1, 2, 2);
    CHECK(t.value(y).shape() == Shape{1, 2, 2});
    for (std::int64_t i = 0; i < 4; ++i) CHECK(t.value(y)[i] == 1.0);

    CHECK_THROWS_AS(transposed_conv2d(t, x, k, 1, 3, 3), DimensionError);
}

TEST_CASE("conv2d and transposed_conv2d are adjoint") {
    // Pairing holds on geometries where the strided grid tiles the input
    // exactly ((H - kh) divisible by the stride, zero padding).
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int cin = rng.uniform_int(1, 3), cout = rng.uniform_int(1, 3);
        const int kh = rng.uniform_int(1, 3), kw = rng.uniform_int(1, 3);
        const int s = rng.uniform_int(1, 3);
        const int oh = rng.uniform_int(1, 4), ow = rng.uniform_int(1, 4);
        const int h = (oh - 1) * s + kh, w = (ow - 1) * s + kw;
        Tensor xv = rng.normal_tensor({cin, h, w});
        Tensor kv = rng.normal_tensor({cout, cin, kh, kw});
        Tensor yv = rng.normal_tensor({cout, oh, ow});

        Tape t;
        Var ax = conv2d(t, t.leaf(xv), t.leaf(kv), std::nullopt, s, 0);
        Tape t2;
        Var aty = transposed_conv2d(t2, t2.leaf(yv), t2.leaf(kv), s, h, w);
        CHECK(dot(t.value(ax), yv) == doctest::Approx(dot(xv, t2.value(aty))).epsilon(1e-10));
    }
}

TEST_CASE("bilinear deconv kernel preserves constants in the interior") {
    Tensor k = bilinear_deconv_kernel(1, 1, 10, 10, 4);
    Tape t;
    Var x = t.leaf(Tensor::full({1, 4, 4}, 3.7));
    Var y = transposed_conv2d(t, x, t.leaf(k), 4, 16, 16);
    const Tensor& out = t.value(y);
    for (int yy = 5; yy <= 10; ++yy)
        for (int xx = 5; xx <= 10; ++xx) CHECK(out.at(0, yy, xx) == doctest::Approx(3.7).epsilon(1e-12));
}

TEST_CASE("maxpool window maximum, tie-break, and gradient") {
    Tape t;
    Var x = t.leaf(Tensor({1, 2, 2}, {1, 2, 3, 4}));
    Var y = maxpool2d(t, x, 2, 2);
    CHECK(t.value(y).shape() == Shape{1, 1, 1});
    CHECK(t.value(y)[0] == 4.0);

    // Constant input: gradient goes to exactly the first element per window.
    Tape tc;
    Var xc = tc.leaf(Tensor::ones({1, 4, 4}));
    Var yc = maxpool2d(tc, xc, 2, 2);
    tc.backward(yc, Tensor::ones({1, 2, 2}));
    const Tensor& g = tc.grad(xc);
    int nonzero = 0;
    for (std::int64_t i = 0; i < g.size(); ++i) nonzero += g[i] != 0.0;
    CHECK(nonzero == 4);
    CHECK(g.at(0, 0, 0) == 1.0);
    CHECK(g.at(0, 0, 2) == 1.0);
    CHECK(g.at(0, 2, 0) == 1.0);
    CHECK(g.at(0, 2, 2) == 1.0);

    // Away from ties the analytic gradient matches finite differences.
    Rng rng(9);
    Tensor xr = rng.normal_tensor({1, 6, 6});
    Tape tr;
    Var xv = tr.leaf(xr);
    Var yr = maxpool2d(tr, xv, 2, 2);
    Tensor seed = rng.normal_tensor(tr.value(yr).shape());
    tr.backward(yr, seed);
    Tensor fd = finite_difference_gradient(
        [&](const Tensor& probe) {
            Tape tp;
            Var out = maxpool2d(tp, tp.leaf(probe), 2, 2);
            return dot(tp.value(out), seed);
        },
        xr, 1e-5);
    GradCompare cmp{1e-6, 1e-9};
    CHECK(cmp.max_rel_error(tr.grad(xv), fd) < 1e-6);
}

TEST_CASE("dense identity, hadamard, flatten round-trip") {
    Tape t;
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Var x = t.leaf(Tensor({2}, {3.0, -4.0}));
    Var y = dense(t, x, t.leaf(eye), {t.leaf(Tensor({2}))});
    CHECK(t.value(y) == t.value(x));

    Var a = t.leaf(Tensor({2}, {1, 2}));
    Var b = t.leaf(Tensor({2}, {3, 4}));
    const Tensor& prod = t.value(mul(t, a, b));
    CHECK(prod[0] == 3.0);
    CHECK(prod[1] == 8.0);

    Var m = t.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var flat = flatten(t, m);
    CHECK(t.value(flat).shape() == Shape{6});
    Var back = reshape(t, flat, {2, 3});
    CHECK(t.value(back) == t.value(m));

    CHECK_THROWS_AS(mul(t, a, m), DimensionError);
    CHECK_THROWS_AS(dense(t, m, t.leaf(eye), std::nullopt), DimensionError);
}

TEST_CASE("backward accumulates over repeated uses") {
    Tape t;
    Var x = t.leaf(Tensor({1}, {2.0}));
    Var y = mul(t, x, x);
    t.backward(y, Tensor({1}, {1.0}));
    CHECK(t.grad(x)[0] == 4.0);
}

TEST_CASE("gradient accumulation is additive in execution order") {
    Tensor xv({3}, {0.3, -0.2, 0.9});
    Tape t;
    Var x = t.leaf(xv);
    Var f = sigmoid(t, x);
    Var g = tanh_op(t, x);
    Var h = add(t, f, g);
    t.backward(h, Tensor::ones({3}));

    Tape tf;
    Var xf = tf.leaf(xv);
    tf.backward(sigmoid(tf, xf), Tensor::ones({3}));
    Tape tg;
    Var xg = tg.leaf(xv);
    tg.backward(tanh_op(tg, xg), Tensor::ones({3}));
    for (int i = 0; i < 3; ++i) {
        CHECK(t.grad(x)[i] == tg.grad(xg)[i] + tf.grad(xf)[i]);
    }
}

TEST_CASE("backward seed shape must match output") {
    Tape t;
    Var x = t.leaf(Tensor({2}, {0.0, 0.0}));
    Var y = sigmoid(t, x);
    CHECK_THROWS_AS(t.backward(y, Tensor({3})), DimensionError);
}

TEST_CASE("leaves off any path get zero gradients") {
    Tape t;
    Var x = t.leaf(Tensor({2}, {1.0, 1.0}));
    Var unused = t.leaf(Tensor({4}, {9, 9, 9, 9}));
    Var y = tanh_op(t, x);
    t.backward(y, Tensor::ones({2}));
    for (int i = 0; i < 4; ++i) CHECK(t.grad(unused)[i] == 0.0);
}

TEST_CASE("finite difference oracle sanity") {
    Tensor fd = finite_difference_gradient([](const Tensor& v) { return v[0] * v[0]; },
                                           Tensor({1}, {3.0}), 1e-5);
    CHECK(std::abs(fd[0] - 6.0) < 1e-8);

    Tensor zeros({4});
    Tensor fd2 = finite_difference_gradient(
        [](const Tensor& v) {
            double s = 0.0;
            for (std::int64_t i = 0; i < v.size(); ++i) s += 1.0 / (1.0 + std::exp(-v[i]));
            return s;
        },
        zeros, 1e-5);
    for (int i = 0; i < 4; ++i) CHECK(fd2[i] == doctest::Approx(0.25).epsilon(1e-8));
}

TEST_CASE("conv2d analytic gradients agree with finite differences") {
    Rng rng(21);
    Tensor xv = rng.normal_tensor({1, 4, 4});
    Tensor kv = rng.normal_tensor({2, 1, 3, 3});
    Tensor bv = rng.normal_tensor({2});
    Tensor seed;

    auto forward = [&](const Tensor& x, const Tensor& k, const Tensor& b) {
        Tape t;
        Var y = conv2d(t, t.leaf(x), t.leaf(k), {t.leaf(b)}, 1, 2);
        return t.value(y);
    };
    Rng seed_rng(22);
    seed = seed_rng.normal_tensor(forward(xv, kv, bv).shape());

    Tape t;
    Var x = t.leaf(xv), k = t.leaf(kv), b = t.leaf(bv);
    Var y = conv2d(t, x, k, {b}, 1, 2);
    t.backward(y, seed);

    GradCompare cmp;  // 1e-4 relative, 1e-6 floor
    Tensor fdx = finite_difference_gradient(
        [&](const Tensor& p) { return dot(forward(p, kv, bv), seed); }, xv, 1e-5);
    CHECK(cmp.max_rel_error(t.grad(x), fdx) < 1e-6);
    Tensor fdk = finite_difference_gradient(
        [&](const Tensor& p) { return dot(forward(xv, p, bv), seed); }, kv, 1e-5);
    CHECK(cmp.max_rel_error(t.grad(k), fdk) < 1e-6);
    Tensor fdb = finite_difference_gradient(
        [&](const Tensor& p) { return dot(forward(xv, kv, p), seed); }, bv, 1e-5);
    CHECK(cmp.max_rel_error(t.grad(b), fdb) < 1e-6);
}

TEST_CASE("transposed conv gradients agree with finite differences") {
    Rng rng(31);
    Tensor xv = rng.normal_tensor({2, 3, 3});
    Tensor kv = rng.normal_tensor({2, 1, 3, 3});
    auto forward = [&](const Tensor& x, const Tensor& k) {
        Tape t;
        Var y = transposed_conv2d(t, t.leaf(x), t.leaf(k), 2, 6, 6);
        return t.value(y);
    };
    Tensor seed = rng.normal_tensor(forward(xv, kv).shape());
    Tape t;
    Var x = t.leaf(xv), k = t.leaf(kv);
    t.backward(transposed_conv2d(t, x, k, 2, 6, 6), seed);
    GradCompare cmp;
    Tensor fdx = finite_difference_gradient(
        [&](const Tensor& p) { return dot(forward(p, kv), seed); }, xv, 1e-5);
    CHECK(cmp.max_rel_error(t.grad(x), fdx) < 1e-6);
    Tensor fdk = finite_difference_gradient(
        [&](const Tensor& p) { return dot(forward(xv, p), seed); }, kv, 1e-5);
    CHECK(cmp.max_rel_error(t.grad(k), fdk) < 1e-6);
}

TEST_CASE("identical inputs give bitwise identical outputs and gradients") {
    Rng rng1(77), rng2(77);
    auto run = [](Rng& rng) {
        Tensor xv = rng.normal_tensor({1, 5, 5});
        Tensor kv = rng.normal_tensor({2, 1, 3, 3});
        Tape t;
        Var x = t.leaf(xv), k = t.leaf(kv);
        Var y = relu(t, conv2d(t, x, k, std::nullopt, 1, 2));
        Var p = maxpool2d(t, y, 2, 2);
        t.backward(p, Tensor::ones(t.value(p).shape()));
        return std::pair<Tensor, Tensor>(t.value(p), t.grad(k));
    };
    auto [v1, g1] = run(rng1);
    auto [v2, g2] = run(rng2);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}
