#include "rfcn/kernels.hpp"

namespace rfcn::kernels::serial {

// Direct per-element definitions with explicit bounds checks; no loop
// restructuring shared with the parallel versions.

void conv2d_forward(double* out, const double* x, const double* k, const double* bias,
                    const Conv2dGeom& g) {
    for (int f = 0; f < g.out_c; ++f) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                double acc = bias ? bias[f] : 0.0;
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < g.kh; ++ky) {
                        for (int kx = 0; kx < g.kw; ++kx) {
                            const int iy = oy * g.stride + ky - g.pad_before;
                            const int ix = ox * g.stride + kx - g.pad_before;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            acc += k[((static_cast<std::int64_t>(f) * g.in_c + c) * g.kh + ky) * g.kw + kx] *
                                   x[(static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w + ix];
                        }
                    }
                }
                out[(static_cast<std::int64_t>(f) * g.out_h + oy) * g.out_w + ox] = acc;
            }
        }
    }
}

void conv2d_backward_input(double* dx, const double* dy, const double* k, const Conv2dGeom& g) {
    for (int f = 0; f < g.out_c; ++f) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const double gy = dy[(static_cast<std::int64_t>(f) * g.out_h + oy) * g.out_w + ox];
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < g.kh; ++ky) {
                        for (int kx = 0; kx < g.kw; ++kx) {
                            const int iy = oy * g.stride + ky - g.pad_before;
                            const int ix = ox * g.stride + kx - g.pad_before;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            dx[(static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w + ix] +=
                                gy * k[((static_cast<std::int64_t>(f) * g.in_c + c) * g.kh + ky) * g.kw + kx];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernels(double* dk, const double* dy, const double* x, const Conv2dGeom& g) {
    for (int f = 0; f < g.out_c; ++f) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const double gy = dy[(static_cast<std::int64_t>(f) * g.out_h + oy) * g.out_w + ox];
                for (int c = 0; c < g.in_c; ++c) {
                    for (int ky = 0; ky < g.kh; ++ky) {
                        for (int kx = 0; kx < g.kw; ++kx) {
                            const int iy = oy * g.stride + ky - g.pad_before;
                            const int ix = ox * g.stride + kx - g.pad_before;
                            if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                            dk[((static_cast<std::int64_t>(f) * g.in_c + c) * g.kh + ky) * g.kw + kx] +=
                                gy * x[(static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w + ix];
                        }
                    }
                }
            }
        }
    }
}

void maxpool2d_forward(double* out, std::int32_t* argmax, const double* x, const Pool2dGeom& g) {
    for (int c = 0; c < g.c; ++c) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                std::int64_t best_idx = -1;
                double best = 0.0;
                for (int ky = 0; ky < g.k; ++ky) {
                    for (int kx = 0; kx < g.k; ++kx) {
                        const int iy = oy * g.stride + ky;
                        const int ix = ox * g.stride + kx;
                        const std::int64_t idx =
                            (static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w + ix;
                        if (best_idx < 0 || x[idx] > best) {
                            best = x[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::int64_t o = (static_cast<std::int64_t>(c) * g.out_h + oy) * g.out_w + ox;
                out[o] = best;
                argmax[o] = static_cast<std::int32_t>(best_idx);
            }
        }
    }
}

void dense_forward(double* y, const double* x, const double* w, const double* bias, int m, int n) {
    for (int i = 0; i < m; ++i) {
        double acc = bias ? bias[i] : 0.0;
        for (int j = 0; j < n; ++j) acc += w[static_cast<std::int64_t>(i) * n + j] * x[j];
        y[i] = acc;
    }
}

}  // namespace rfcn::kernels::serial
