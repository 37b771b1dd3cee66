#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "cpinn/autodiff/batch_jet.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

struct ErrorNorms {
    double l2 = 0.0;    // root mean square
    double linf = 0.0;  // max absolute
};

inline ErrorNorms errors_l2_linf(const Vec& predicted, const Vec& exact) {
    if (predicted.size() == 0) throw GeometryError("error norms over an empty grid");
    if (predicted.size() != exact.size()) throw InvalidHandle("field and reference differ in length");
    const Vec diff = (predicted - exact).cwiseAbs();
    return {std::sqrt(diff.squaredNorm() / static_cast<double>(diff.size())), diff.maxCoeff()};
}

/// ||g_t - g_{t-1}|| / ||theta_t - theta_{t-1}||; empty when the step is zero.
inline std::optional<double> sigma_proxy(const Vec& grad_t, const Vec& grad_prev, const Vec& theta_t,
                                         const Vec& theta_prev) {
    const double step = (theta_t - theta_prev).norm();
    if (!(step > 0.0)) return std::nullopt;
    return (grad_t - grad_prev).norm() / step;
}

/// Median of the finite entries; NaN when there are none.
inline double finite_median(std::vector<double> v) {
    v.erase(std::remove_if(v.begin(), v.end(), [](double x) { return !std::isfinite(x); }), v.end());
    if (v.empty()) return std::nan("");
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    if (v.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(v.begin(), mid);
    return 0.5 * (lo + hi);
}

/// Reference values on a fixed evaluation set, for error tracking.
class ErrorProbe {
public:
    ErrorProbe(const NetworkArch& arch, PointSet grid, Vec reference)
        : reference_(std::move(reference)), eval_(arch, std::move(grid), JetOrder::kValue, 2048) {}

    ErrorNorms operator()(const ParamVector& params) {
        return errors_l2_linf(eval_.forward(params).row(0).transpose(), reference_);
    }

    Vec predict(const ParamVector& params) { return eval_.forward(params).row(0).transpose(); }
    const PointSet& grid() const { return eval_.points(); }
    const Vec& reference() const { return reference_; }

private:
    Vec reference_;
    BatchJetEvaluator eval_;
};

}  // namespace cpinn
