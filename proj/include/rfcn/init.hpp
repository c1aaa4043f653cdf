#pragma once

#include "rfcn/rng.hpp"
#include "rfcn/tensor.hpp"

namespace rfcn {

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(Rng& rng, Shape shape, int fan_in, int fan_out);

/// Random orthogonal n x n matrix built from composed Givens rotations.
Tensor orthogonal_matrix(Rng& rng, int n);

/// Bilinear interpolation weights for a Cin x Cout x KH x KW transposed
/// convolution of the given stride, normalized so each output phase sums to
/// one across taps and input channels; applying the kernel to a constant map
/// reproduces the constant away from borders.
Tensor bilinear_deconv_kernel(int cin, int cout, int kh, int kw, int stride);

}  // namespace rfcn
