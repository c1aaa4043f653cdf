#pragma once

#include <cstdint>
#include <vector>

#include "rfcn/tensor.hpp"

namespace rfcn::kernels {

inline int floor_div(int a, int b) {
    int q = a / b, r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}
inline int ceil_div(int a, int b) { return -floor_div(-a, b); }

/// Geometry of a 2-D cross-correlation. `pad` is the total number of zero
/// rows/columns added per spatial dimension, split floor(pad/2) before and
/// ceil(pad/2) after.
struct Conv2dGeom {
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, kh = 0, kw = 0;
    int stride = 1;
    int pad = 0;
    int pad_before = 0;
    int out_h = 0, out_w = 0;

    static Conv2dGeom infer(const Shape& x, const Shape& k, int stride, int pad);
    std::int64_t out_size() const {
        return static_cast<std::int64_t>(out_c) * out_h * out_w;
    }
};

struct Pool2dGeom {
    int c = 0, in_h = 0, in_w = 0;
    int k = 0, stride = 0;
    int out_h = 0, out_w = 0;

    static Pool2dGeom infer(const Shape& x, int k, int stride);
    std::int64_t out_size() const { return static_cast<std::int64_t>(c) * out_h * out_w; }
};

// Parallel (OpenMP) kernels. Forward kernels overwrite their destination;
// backward kernels accumulate (+=) so gradient contributions sum naturally.
// Parallel loops are partitioned so each destination element is owned by
// exactly one thread; results are bitwise identical for any thread count.

void conv2d_forward(double* out, const double* x, const double* k, const double* bias,
                    const Conv2dGeom& g);
void conv2d_backward_input(double* dx, const double* dy, const double* k, const Conv2dGeom& g);
void conv2d_backward_kernels(double* dk, const double* dy, const double* x, const Conv2dGeom& g);
void conv2d_backward_bias(double* db, const double* dy, const Conv2dGeom& g);

void maxpool2d_forward(double* out, std::int32_t* argmax, const double* x, const Pool2dGeom& g);
void maxpool2d_backward(double* dx, const double* dy, const std::int32_t* argmax,
                        const Pool2dGeom& g);

void dense_forward(double* y, const double* x, const double* w, const double* bias, int m, int n);
void dense_backward_input(double* dx, const double* dy, const double* w, int m, int n);
void dense_backward_weights(double* dw, const double* dy, const double* x, int m, int n);

enum class Act { Sigmoid, Tanh, Relu };

void act_forward(double* y, const double* x, std::int64_t n, Act a);
/// dx += dy * f'(x); `y` is the forward output (used for sigmoid/tanh), `x`
/// the forward input (used for relu).
void act_backward(double* dx, const double* dy, const double* x, const double* y, std::int64_t n,
                  Act a);

void add_forward(double* out, const double* a, const double* b, std::int64_t n);
void mul_forward(double* out, const double* a, const double* b, std::int64_t n);
void axpy(double* y, double alpha, const double* x, std::int64_t n);  // y += alpha*x

}  // namespace rfcn::kernels

namespace rfcn::kernels::serial {

// Naive single-threaded reference implementations, written directly from the
// operator definitions. Kept for testing the parallel kernels against and for
// the serial-vs-parallel benchmark.

void conv2d_forward(double* out, const double* x, const double* k, const double* bias,
                    const Conv2dGeom& g);
void conv2d_backward_input(double* dx, const double* dy, const double* k, const Conv2dGeom& g);
void conv2d_backward_kernels(double* dk, const double* dy, const double* x, const Conv2dGeom& g);

void maxpool2d_forward(double* out, std::int32_t* argmax, const double* x, const Pool2dGeom& g);

void dense_forward(double* y, const double* x, const double* w, const double* bias, int m, int n);

}  // namespace rfcn::kernels::serial
