#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "rfcn/tensor.hpp"

namespace rfcn {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps) for every
/// coordinate. `f` must be deterministic.
Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double eps);

/// Same, restricted to the listed coordinates (others left zero).
Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double eps,
                                  const std::vector<std::int64_t>& coords);

/// max over coords of |a-b| / max(|a|, |b|, abs_floor/rel_tol-ish scale).
/// A coordinate passes when |a-b| <= max(abs_floor, rel_tol*max(|a|,|b|));
/// the returned value is the largest ratio |a-b| / max(abs_floor/rel_tol... )
struct GradCompare {
    double rel_tol = 1e-4;
    double abs_floor = 1e-6;
    bool ok(double analytic, double numeric) const;
    /// Worst relative discrepancy over the listed coords (all coords if empty).
    double max_rel_error(const Tensor& analytic, const Tensor& numeric,
                         const std::vector<std::int64_t>& coords = {}) const;
};

}  // namespace rfcn
