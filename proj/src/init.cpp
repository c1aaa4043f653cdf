#include "rfcn/init.hpp"

#include <cmath>

#include "rfcn/error.hpp"

namespace rfcn {

Tensor glorot_uniform(Rng& rng, Shape shape, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    return rng.uniform_tensor(std::move(shape), -bound, bound);
}

Tensor orthogonal_matrix(Rng& rng, int n) {
    Tensor q({n, n});
    for (int i = 0; i < n; ++i) q.at(i, i) = 1.0;
    if (n < 2) return q;
    const int rotations = 3 * n;
    for (int r = 0; r < rotations; ++r) {
        int i = rng.uniform_int(0, n - 1);
        int j = rng.uniform_int(0, n - 2);
        if (j >= i) ++j;
        const double a = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
        const double c = std::cos(a), s = std::sin(a);
        for (int col = 0; col < n; ++col) {
            const double qi = q.at(i, col), qj = q.at(j, col);
            q.at(i, col) = c * qi - s * qj;
            q.at(j, col) = s * qi + c * qj;
        }
    }
    return q;
}

namespace {

// Triangle weights of the classic bilinear upsampling filler, then normalized
// per stride phase so every output position's taps sum to one.
std::vector<double> bilinear_1d(int k, int stride) {
    std::vector<double> w(static_cast<size_t>(k), 0.0);
    const double f = static_cast<double>((k + 1) / 2);
    const double c = (k % 2 == 1) ? f - 1.0 : f - 0.5;
    for (int y = 0; y < k; ++y) w[static_cast<size_t>(y)] = std::max(0.0, 1.0 - std::abs(y - c) / f);
    std::vector<double> phase_sum(static_cast<size_t>(stride), 0.0);
    for (int y = 0; y < k; ++y) phase_sum[static_cast<size_t>(y % stride)] += w[static_cast<size_t>(y)];
    for (int y = 0; y < k; ++y) {
        const double s = phase_sum[static_cast<size_t>(y % stride)];
        if (s > 0.0) w[static_cast<size_t>(y)] /= s;
    }
    return w;
}

}  // namespace

Tensor bilinear_deconv_kernel(int cin, int cout, int kh, int kw, int stride) {
    if (cin < 1 || cout < 1 || kh < 1 || kw < 1 || stride < 1) {
        throw ArgumentError("bilinear_deconv_kernel: non-positive geometry");
    }
    const auto wy = bilinear_1d(kh, stride);
    const auto wx = bilinear_1d(kw, stride);
    Tensor k({cin, cout, kh, kw});
    for (int i = 0; i < cin; ++i)
        for (int o = 0; o < cout; ++o)
            for (int y = 0; y < kh; ++y)
                for (int x = 0; x < kw; ++x)
                    k.at4(i, o, y, x) = wy[static_cast<size_t>(y)] * wx[static_cast<size_t>(x)] / cin;
    return k;
}

}  // namespace rfcn
