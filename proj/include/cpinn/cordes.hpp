#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>

#include "cpinn/autodiff/network.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

/// Coefficients of A:D^2u + b.grad(u) - c u at one point.
struct CoefficientSample {
    Mat A;
    Vec b;
    double c = 0.0;
};

using CoefficientField = std::function<CoefficientSample(const Vec&)>;

inline constexpr double kDefaultDelta = 1e-8;
inline constexpr double kNearViolation = 0.05;

namespace detail {
inline double trace_of_square(const Mat& A) { return A.cwiseProduct(A.transpose()).sum(); }
}  // namespace detail

/// (tr A)^2 / tr(A^2).
inline double cordes_ratio(const Mat& A) {
    const double t2 = detail::trace_of_square(A);
    if (!(t2 > 0.0)) throw DegenerateCoefficient("Cordes ratio of a zero matrix");
    const double t = A.trace();
    return t * t / t2;
}

/// Optimal pointwise scaling tr(A) / (tr(A^2) + delta).
inline double multiplier(const Mat& A, double delta = kDefaultDelta) {
    return A.trace() / (detail::trace_of_square(A) + delta);
}

struct ContractionGap {
    double achieved = 0.0;  // ||I - lambda A||_F^2 at the optimal lambda
    double bound = 0.0;     // 1 - epsilon
};

inline ContractionGap contraction_gap(const Mat& A) {
    const double ratio = cordes_ratio(A);
    const auto n = static_cast<double>(A.rows());
    const double lambda = multiplier(A, 0.0);
    ContractionGap g;
    g.achieved = (Mat::Identity(A.rows(), A.cols()) - lambda * A).squaredNorm();
    g.bound = 1.0 - (ratio - (n - 1.0));
    return g;
}

enum class CordesCase { kPrincipalOnly, kWithLowerOrder };

inline const char* to_string(CordesCase c) {
    return c == CordesCase::kPrincipalOnly ? "principal_only" : "with_lower_order";
}

struct CordesReport {
    CordesCase cordes_case = CordesCase::kPrincipalOnly;
    /// Sampled infimum of the case's margin, clamped above at 1. Not clamped
    /// below: a non-positive value means the condition failed.
    double epsilon = 0.0;
    /// Principal case: min (tr A)^2/tr(A^2). Lower-order case: min of the
    /// reciprocal of the generalised ratio. epsilon = worst_ratio - (d-1) or
    /// worst_ratio - d respectively, before clamping.
    double worst_ratio = 0.0;
    Vec worst_point;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double lambda_mean = 0.0;
    std::optional<double> aux_lambda;
    Eigen::Index n_samples = 0;

    bool valid() const { return epsilon > 0.0; }
    bool near_violation() const { return epsilon < kNearViolation; }
};

/// Samples the Cordes condition over `points` (d x N). With `aux_lambda` and
/// non-zero lower-order terms the generalised inequality is used; otherwise
/// the principal part alone.
inline CordesReport check_cordes(const CoefficientField& field, const PointSet& points,
                                 std::optional<double> aux_lambda = std::nullopt,
                                 double delta = kDefaultDelta) {
    if (points.cols() == 0) throw GeometryError("empty sample set for the Cordes check");
    const auto d = static_cast<double>(points.rows());

    bool lower_order = false;
    if (aux_lambda) {
        if (!(*aux_lambda > 0.0)) throw DegenerateCoefficient("auxiliary lambda must be positive");
        for (Eigen::Index j = 0; j < points.cols() && !lower_order; ++j) {
            const auto s = field(points.col(j));
            lower_order = (s.b.size() > 0 && s.b.squaredNorm() > 0.0) || s.c != 0.0;
        }
    }

    CordesReport r;
    r.cordes_case = lower_order ? CordesCase::kWithLowerOrder : CordesCase::kPrincipalOnly;
    if (lower_order) r.aux_lambda = aux_lambda;
    r.n_samples = points.cols();
    r.worst_ratio = std::numeric_limits<double>::infinity();
    r.lambda_min = std::numeric_limits<double>::infinity();
    r.lambda_max = -std::numeric_limits<double>::infinity();
    double lambda_sum = 0.0;

    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        const Vec x = points.col(j);
        const auto s = field(x);
        double ratio;
        if (lower_order) {
            const double lam = *aux_lambda;
            const double bb = s.b.size() > 0 ? s.b.squaredNorm() : 0.0;
            const double num = detail::trace_of_square(s.A) + bb / (2.0 * lam) + s.c * s.c / (lam * lam);
            const double den = s.A.trace() + s.c / lam;
            if (!(num > 0.0)) throw DegenerateCoefficient("zero coefficients at a sample point");
            ratio = den * den / num;
        } else {
            ratio = cordes_ratio(s.A);
        }
        if (ratio < r.worst_ratio) {
            r.worst_ratio = ratio;
            r.worst_point = x;
        }
        const double lam = multiplier(s.A, delta);
        r.lambda_min = std::min(r.lambda_min, lam);
        r.lambda_max = std::max(r.lambda_max, lam);
        lambda_sum += lam;
    }
    r.lambda_mean = lambda_sum / static_cast<double>(points.cols());
    r.epsilon = std::min(1.0, r.worst_ratio - (lower_order ? d : d - 1.0));
    return r;
}

}  // namespace cpinn
