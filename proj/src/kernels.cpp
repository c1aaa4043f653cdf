#include "rfcn/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <string>

#include "rfcn/error.hpp"

namespace rfcn::kernels {

namespace {
constexpr std::int64_t kParallelCutoff = 16384;

#ifndef _OPENMP
int omp_get_num_threads() { return 1; }
int omp_get_thread_num() { return 0; }
#endif
}

Conv2dGeom Conv2dGeom::infer(const Shape& x, const Shape& k, int stride, int pad) {
    if (x.size() != 3) throw DimensionError("conv2d: input must be CxHxW, got " + shape_to_string(x));
    if (k.size() != 4) throw DimensionError("conv2d: kernels must be FxCxKHxKW, got " + shape_to_string(k));
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) throw ArgumentError("conv2d: negative padding");
    Conv2dGeom g;
    g.in_c = x[0];
    g.in_h = x[1];
    g.in_w = x[2];
    g.out_c = k[0];
    g.kh = k[2];
    g.kw = k[3];
    g.stride = stride;
    g.pad = pad;
    g.pad_before = pad / 2;
    if (k[1] != g.in_c) {
        throw DimensionError("conv2d: kernel channel extent does not match input channels: kernels " +
                             shape_to_string(k) + " vs input " + shape_to_string(x));
    }
    if (g.kh > g.in_h + pad || g.kw > g.in_w + pad) {
        throw DimensionError("conv2d: kernel " + std::to_string(g.kh) + "x" + std::to_string(g.kw) +
                             " exceeds padded input " + std::to_string(g.in_h + pad) + "x" +
                             std::to_string(g.in_w + pad));
    }
    g.out_h = (g.in_h + pad - g.kh) / stride + 1;
    g.out_w = (g.in_w + pad - g.kw) / stride + 1;
    if (g.out_h < 1 || g.out_w < 1) {
        throw DimensionError("conv2d: empty output for input " + shape_to_string(x) + " kernels " +
                             shape_to_string(k));
    }
    return g;
}

Pool2dGeom Pool2dGeom::infer(const Shape& x, int k, int stride) {
    if (x.size() != 3) throw DimensionError("maxpool2d: input must be CxHxW, got " + shape_to_string(x));
    if (k < 1) throw ArgumentError("maxpool2d: window must be >= 1");
    if (stride < 1) throw ArgumentError("maxpool2d: stride must be >= 1");
    Pool2dGeom g;
    g.c = x[0];
    g.in_h = x[1];
    g.in_w = x[2];
    g.k = k;
    g.stride = stride;
    if (k > g.in_h || k > g.in_w) {
        throw DimensionError("maxpool2d: window " + std::to_string(k) + " exceeds input " +
                             std::to_string(g.in_h) + "x" + std::to_string(g.in_w));
    }
    g.out_h = (g.in_h - k) / stride + 1;
    g.out_w = (g.in_w - k) / stride + 1;
    return g;
}

void conv2d_forward(double* out, const double* x, const double* k, const double* bias,
                    const Conv2dGeom& g) {
    const int s = g.stride, pb = g.pad_before;
#pragma omp parallel for collapse(2) schedule(static)
    for (int f = 0; f < g.out_c; ++f) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            double* orow = out + (static_cast<std::int64_t>(f) * g.out_h + oy) * g.out_w;
            const double b = bias ? bias[f] : 0.0;
            for (int ox = 0; ox < g.out_w; ++ox) orow[ox] = b;
            for (int c = 0; c < g.in_c; ++c) {
                for (int ky = 0; ky < g.kh; ++ky) {
                    const int iy = oy * s + ky - pb;
                    if (iy < 0 || iy >= g.in_h) continue;
                    const double* xrow = x + (static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w;
                    const double* krow =
                        k + ((static_cast<std::int64_t>(f) * g.in_c + c) * g.kh + ky) * g.kw;
                    for (int kx = 0; kx < g.kw; ++kx) {
                        const double w = krow[kx];
                        const int lo = std::max(0, ceil_div(pb - kx, s));
                        const int hi = std::min(g.out_w - 1, floor_div(g.in_w - 1 + pb - kx, s));
                        const double* xp = xrow + kx - pb;
                        if (s == 1) {
                            for (int ox = lo; ox <= hi; ++ox) orow[ox] += w * xp[ox];
                        } else {
                            for (int ox = lo; ox <= hi; ++ox) orow[ox] += w * xp[ox * s];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_input(double* dx, const double* dy, const double* k, const Conv2dGeom& g) {
    const int s = g.stride, pb = g.pad_before;
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < g.in_c; ++c) {
        for (int iy = 0; iy < g.in_h; ++iy) {
            double* dxrow = dx + (static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w;
            for (int ky = 0; ky < g.kh; ++ky) {
                const int t = iy + pb - ky;
                if (t < 0 || t % s != 0) continue;
                const int oy = t / s;
                if (oy >= g.out_h) continue;
                for (int f = 0; f < g.out_c; ++f) {
                    const double* dyrow =
                        dy + (static_cast<std::int64_t>(f) * g.out_h + oy) * g.out_w;
                    const double* krow =
                        k + ((static_cast<std::int64_t>(f) * g.in_c + c) * g.kh + ky) * g.kw;
                    for (int kx = 0; kx < g.kw; ++kx) {
                        const double w = krow[kx];
                        const int lo = std::max(0, ceil_div(pb - kx, s));
                        const int hi = std::min(g.out_w - 1, floor_div(g.in_w - 1 + pb - kx, s));
                        double* dxp = dxrow + kx - pb;
                        if (s == 1) {
                            for (int ox = lo; ox <= hi; ++ox) dxp[ox] += w * dyrow[ox];
                        } else {
                            for (int ox = lo; ox <= hi; ++ox) dxp[ox * s] += w * dyrow[ox];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_kernels(double* dk, const double* dy, const double* x, const Conv2dGeom& g) {
    const int s = g.stride, pb = g.pad_before;
#pragma omp parallel for collapse(2) schedule(static)
    for (int f = 0; f < g.out_c; ++f) {
        for (int c = 0; c < g.in_c; ++c) {
            for (int ky = 0; ky < g.kh; ++ky) {
                for (int kx = 0; kx < g.kw; ++kx) {
                    double acc = 0.0;
                    const int lo = std::max(0, ceil_div(pb - kx, s));
                    const int hi = std::min(g.out_w - 1, floor_div(g.in_w - 1 + pb - kx, s));
                    for (int oy = 0; oy < g.out_h; ++oy) {
                        const int iy = oy * s + ky - pb;
                        if (iy < 0 || iy >= g.in_h) continue;
                        const double* xp =
                            x + (static_cast<std::int64_t>(c) * g.in_h + iy) * g.in_w + kx - pb;
                        const double* dyrow =
                            dy + (static_cast<std::int64_t>(f) * g.out_h + oy) * g.out_w;
                        if (s == 1) {
                            for (int ox = lo; ox <= hi; ++ox) acc += dyrow[ox] * xp[ox];
                        } else {
                            for (int ox = lo; ox <= hi; ++ox) acc += dyrow[ox] * xp[ox * s];
                        }
                    }
                    dk[((static_cast<std::int64_t>(f) * g.in_c + c) * g.kh + ky) * g.kw + kx] += acc;
                }
            }
        }
    }
}

void conv2d_backward_bias(double* db, const double* dy, const Conv2dGeom& g) {
    const std::int64_t plane = static_cast<std::int64_t>(g.out_h) * g.out_w;
#pragma omp parallel for schedule(static)
    for (int f = 0; f < g.out_c; ++f) {
        const double* p = dy + f * plane;
        double acc = 0.0;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
        db[f] += acc;
    }
}

void maxpool2d_forward(double* out, std::int32_t* argmax, const double* x, const Pool2dGeom& g) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int c = 0; c < g.c; ++c) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const int iy0 = oy * g.stride, ix0 = ox * g.stride;
                // First occurrence in row-major window order wins ties.
                std::int64_t best_idx =
                    (static_cast<std::int64_t>(c) * g.in_h + iy0) * g.in_w + ix0;
                double best = x[best_idx];
                for (int ky = 0; ky < g.k; ++ky) {
                    const double* xrow =
                        x + (static_cast<std::int64_t>(c) * g.in_h + iy0 + ky) * g.in_w + ix0;
                    for (int kx = 0; kx < g.k; ++kx) {
                        if (xrow[kx] > best) {
                            best = xrow[kx];
                            best_idx = (static_cast<std::int64_t>(c) * g.in_h + iy0 + ky) * g.in_w +
                                       ix0 + kx;
                        }
                    }
                }
                const std::int64_t o =
                    (static_cast<std::int64_t>(c) * g.out_h + oy) * g.out_w + ox;
                out[o] = best;
                argmax[o] = static_cast<std::int32_t>(best_idx);
            }
        }
    }
}

void maxpool2d_backward(double* dx, const double* dy, const std::int32_t* argmax,
                        const Pool2dGeom& g) {
    const std::int64_t oplane = static_cast<std::int64_t>(g.out_h) * g.out_w;
    // Windows may overlap within a channel, so scatter per channel serially;
    // channels never alias each other.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < g.c; ++c) {
        const double* dyp = dy + c * oplane;
        const std::int32_t* ap = argmax + c * oplane;
        for (std::int64_t i = 0; i < oplane; ++i) dx[ap[i]] += dyp[i];
    }
}

void dense_forward(double* y, const double* x, const double* w, const double* bias, int m, int n) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(m) * n >= kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        const double* wrow = w + static_cast<std::int64_t>(i) * n;
        double acc = bias ? bias[i] : 0.0;
        for (int j = 0; j < n; ++j) acc += wrow[j] * x[j];
        y[i] = acc;
    }
}

void dense_backward_input(double* dx, const double* dy, const double* w, int m, int n) {
    // Streams W row-major; threads own disjoint column slices, so per-column
    // accumulation order (ascending i) is fixed for any thread count.
#pragma omp parallel if (static_cast<std::int64_t>(m) * n >= kParallelCutoff)
    {
        const int nt = omp_get_num_threads();
        const int tid = omp_get_thread_num();
        const int lo = static_cast<int>(static_cast<std::int64_t>(n) * tid / nt);
        const int hi = static_cast<int>(static_cast<std::int64_t>(n) * (tid + 1) / nt);
        for (int i = 0; i < m; ++i) {
            const double g = dy[i];
            const double* wrow = w + static_cast<std::int64_t>(i) * n;
            for (int j = lo; j < hi; ++j) dx[j] += g * wrow[j];
        }
    }
}

void dense_backward_weights(double* dw, const double* dy, const double* x, int m, int n) {
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(m) * n >= kParallelCutoff)
    for (int i = 0; i < m; ++i) {
        double* dwrow = dw + static_cast<std::int64_t>(i) * n;
        const double g = dy[i];
        for (int j = 0; j < n; ++j) dwrow[j] += g * x[j];
    }
}

void act_forward(double* y, const double* x, std::int64_t n, Act a) {
    switch (a) {
        case Act::Sigmoid:
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
            for (std::int64_t i = 0; i < n; ++i) y[i] = 1.0 / (1.0 + std::exp(-x[i]));
            break;
        case Act::Tanh:
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
            for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
            break;
        case Act::Relu:
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
            for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
            break;
    }
}

void act_backward(double* dx, const double* dy, const double* x, const double* y, std::int64_t n,
                  Act a) {
    switch (a) {
        case Act::Sigmoid:
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
            for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * y[i] * (1.0 - y[i]);
            break;
        case Act::Tanh:
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
            for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
            break;
        case Act::Relu:
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
            for (std::int64_t i = 0; i < n; ++i) dx[i] += x[i] > 0.0 ? dy[i] : 0.0;
            break;
    }
}

void add_forward(double* out, const double* a, const double* b, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void mul_forward(double* out, const double* a, const double* b, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void axpy(double* y, double alpha, const double* x, std::int64_t n) {
#pragma omp parallel for schedule(static) if (n >= kParallelCutoff)
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace rfcn::kernels
