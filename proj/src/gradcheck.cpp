#include "rfcn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rfcn/error.hpp"

namespace rfcn {

Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double eps) {
    std::vector<std::int64_t> all(static_cast<size_t>(x.size()));
    for (std::int64_t i = 0; i < x.size(); ++i) all[static_cast<size_t>(i)] = i;
    return finite_difference_gradient(f, x, eps, all);
}

Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double eps,
                                  const std::vector<std::int64_t>& coords) {
    if (eps <= 0.0) throw ArgumentError("finite_difference_gradient: eps must be positive");
    Tensor g(x.shape());
    Tensor probe = x;
    for (std::int64_t i : coords) {
        const double saved = probe[i];
        probe[i] = saved + eps;
        const double fp = f(probe);
        probe[i] = saved - eps;
        const double fm = f(probe);
        probe[i] = saved;
        g[i] = (fp - fm) / (2.0 * eps);
    }
    return g;
}

bool GradCompare::ok(double analytic, double numeric) const {
    const double diff = std::abs(analytic - numeric);
    return diff <= std::max(abs_floor, rel_tol * std::max(std::abs(analytic), std::abs(numeric)));
}

double GradCompare::max_rel_error(const Tensor& analytic, const Tensor& numeric,
                                  const std::vector<std::int64_t>& coords) const {
    require_same_shape(analytic, numeric, "gradient compare");
    double worst = 0.0;
    auto visit = [&](std::int64_t i) {
        const double a = analytic[i], b = numeric[i];
        const double scale = std::max({std::abs(a), std::abs(b), abs_floor / rel_tol});
        worst = std::max(worst, std::abs(a - b) / scale);
    };
    if (coords.empty()) {
        for (std::int64_t i = 0; i < analytic.size(); ++i) visit(i);
    } else {
        for (std::int64_t i : coords) visit(i);
    }
    return worst;
}

}  // namespace rfcn
