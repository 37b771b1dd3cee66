#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "cpinn/autodiff/network.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

/// Bounded domain: axis-aligned box, ball, or origin-centred ellipsoid.
struct Domain {
    enum class Kind { kRectangle, kBall, kEllipsoid, kHypercube };

    Kind kind = Kind::kRectangle;
    int dim = 2;
    Vec lo;          // bounding box
    Vec hi;
    Vec center;      // ball
    double radius = 0.0;
    Vec semi_axes;   // ellipsoid

    static Domain rectangle(Vec lo, Vec hi) {
        if (lo.size() != hi.size() || lo.size() == 0) throw GeometryError("rectangle bounds have mismatched length");
        for (Eigen::Index i = 0; i < lo.size(); ++i) {
            if (!(hi[i] > lo[i])) throw GeometryError("rectangle has a non-positive extent");
        }
        Domain d;
        d.kind = Kind::kRectangle;
        d.dim = static_cast<int>(lo.size());
        d.lo = std::move(lo);
        d.hi = std::move(hi);
        return d;
    }

    static Domain hypercube(int dim, double lo, double hi) {
        Domain d = rectangle(Vec::Constant(dim, lo), Vec::Constant(dim, hi));
        d.kind = Kind::kHypercube;
        return d;
    }

    static Domain ball(Vec center, double radius) {
        if (!(radius > 0.0)) throw GeometryError("ball radius must be positive");
        Domain d;
        d.kind = Kind::kBall;
        d.dim = static_cast<int>(center.size());
        d.lo = center.array() - radius;
        d.hi = center.array() + radius;
        d.center = std::move(center);
        d.radius = radius;
        return d;
    }

    static Domain ellipsoid(Vec semi_axes) {
        for (Eigen::Index i = 0; i < semi_axes.size(); ++i) {
            if (!(semi_axes[i] > 0.0)) throw GeometryError("ellipsoid semi-axes must be positive");
        }
        Domain d;
        d.kind = Kind::kEllipsoid;
        d.dim = static_cast<int>(semi_axes.size());
        d.lo = -semi_axes;
        d.hi = semi_axes;
        d.center = Vec::Zero(d.dim);
        d.semi_axes = std::move(semi_axes);
        return d;
    }

    bool is_box() const { return kind == Kind::kRectangle || kind == Kind::kHypercube; }

    /// Level function: < 1 inside, 1 on the boundary (box: max normalised
    /// distance from the centre).
    double level(const Vec& x) const {
        switch (kind) {
            case Kind::kBall: return (x - center).norm() / radius;
            case Kind::kEllipsoid: return std::sqrt((x.array() / semi_axes.array()).square().sum());
            default: {
                const Vec mid = 0.5 * (lo + hi);
                const Vec half = 0.5 * (hi - lo);
                return ((x - mid).array().abs() / half.array()).maxCoeff();
            }
        }
    }

    bool contains(const Vec& x) const { return level(x) < 1.0; }

    Vec box_center() const { return 0.5 * (lo + hi); }

    std::string describe() const {
        std::ostringstream os;
        os.precision(6);
        auto vec = [&](const Vec& v) {
            os << "(";
            for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
            os << ")";
        };
        switch (kind) {
            case Kind::kRectangle: os << "rectangle lo="; vec(lo); os << " hi="; vec(hi); break;
            case Kind::kHypercube: os << "hypercube d=" << dim << " [" << lo[0] << "," << hi[0] << "]"; break;
            case Kind::kBall: os << "ball center="; vec(center); os << " r=" << radius; break;
            case Kind::kEllipsoid: os << "ellipsoid axes="; vec(semi_axes); break;
        }
        return os.str();
    }
};

/// Which measure-zero sets carry undefined coefficients for a problem.
struct SingularSet {
    bool axes = false;      // x_i = 0
    bool diagonal = false;  // x_1 = x_2
};

inline constexpr double kSingularJitter = 1e-12;

/// Moves points off the declared singular sets by kSingularJitter.
inline void jitter_singular(PointSet& pts, const SingularSet& s) {
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        if (s.axes) {
            for (Eigen::Index i = 0; i < pts.rows(); ++i) {
                if (pts(i, j) == 0.0) pts(i, j) = kSingularJitter;
            }
        }
        if (s.diagonal && pts.rows() >= 2 && pts(0, j) == pts(1, j)) pts(0, j) += kSingularJitter;
    }
}

namespace detail {
inline Vec unit_direction(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec v(d);
    do {
        for (int i = 0; i < d; ++i) v[i] = normal(rng);
    } while (v.norm() == 0.0);
    return v / v.norm();
}
}  // namespace detail

/// n i.i.d. uniform points strictly inside the domain, as a d x n matrix.
inline PointSet sample_interior(const Domain& dom, Eigen::Index n, std::uint64_t seed,
                                const SingularSet& singular = {}) {
    if (n <= 0) throw GeometryError("sample count must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointSet pts(dom.dim, n);
    Vec x(dom.dim);
    Eigen::Index accepted = 0;
    long long attempts = 0;
    while (accepted < n) {
        for (int i = 0; i < dom.dim; ++i) x[i] = dom.lo[i] + (dom.hi[i] - dom.lo[i]) * unit(rng);
        ++attempts;
        if (dom.contains(x)) pts.col(accepted++) = x;
        if (attempts > 10000 && static_cast<double>(accepted) < 0.01 * static_cast<double>(attempts)) {
            throw GeometryError("rejection sampling acceptance below 1% for " + dom.describe());
        }
    }
    jitter_singular(pts, singular);
    return pts;
}

/// n points on the boundary. Boxes: faces chosen by measure, uniform on the
/// face. Ball: uniform direction. Ellipsoid: uniform sphere direction scaled
/// by the semi-axes (not uniform in surface measure).
inline PointSet sample_boundary(const Domain& dom, Eigen::Index n, std::uint64_t seed,
                                const SingularSet& singular = {}) {
    if (n <= 0) throw GeometryError("sample count must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    PointSet pts(dom.dim, n);
    const int d = dom.dim;

    if (dom.is_box()) {
        const Vec ext = dom.hi - dom.lo;
        Vec face_measure(d);
        for (int i = 0; i < d; ++i) {
            double m = 1.0;
            for (int k = 0; k < d; ++k) {
                if (k != i) m *= ext[k];
            }
            face_measure[i] = m;
        }
        std::discrete_distribution<int> pick_axis(face_measure.data(), face_measure.data() + d);
        for (Eigen::Index j = 0; j < n; ++j) {
            const int axis = pick_axis(rng);
            const bool upper = unit(rng) < 0.5;
            for (int k = 0; k < d; ++k) pts(k, j) = dom.lo[k] + ext[k] * unit(rng);
            pts(axis, j) = upper ? dom.hi[axis] : dom.lo[axis];
        }
    } else {
        for (Eigen::Index j = 0; j < n; ++j) {
            const Vec u = detail::unit_direction(d, rng);
            if (dom.kind == Domain::Kind::kBall) {
                pts.col(j) = dom.center + dom.radius * u;
            } else {
                pts.col(j) = dom.semi_axes.cwiseProduct(u);
            }
        }
    }
    jitter_singular(pts, singular);
    return pts;
}

inline constexpr std::uint64_t kEvalCloudSeed = 20240601;

/// Evaluation points. Dimension <= 3: tensor grid over the bounding box with
/// boundary nodes, first coordinate fastest, filtered to the closed domain
/// for balls and ellipsoids. Higher dimensions: a uniform Monte Carlo cloud
/// of resolution^2 interior points.
inline PointSet eval_grid(const Domain& dom, int resolution) {
    if (resolution < 2) throw GeometryError("grid resolution must be at least 2");
    const int d = dom.dim;
    if (d > 3) {
        return sample_interior(dom, static_cast<Eigen::Index>(resolution) * resolution, kEvalCloudSeed);
    }
    Eigen::Index total = 1;
    for (int i = 0; i < d; ++i) total *= resolution;
    PointSet pts(d, total);
    Eigen::Index kept = 0;
    Vec x(d);
    for (Eigen::Index idx = 0; idx < total; ++idx) {
        Eigen::Index rem = idx;
        for (int i = 0; i < d; ++i) {
            const Eigen::Index k = rem % resolution;
            rem /= resolution;
            x[i] = (k == resolution - 1) ? dom.hi[i]
                                         : dom.lo[i] + (dom.hi[i] - dom.lo[i]) * static_cast<double>(k) / (resolution - 1);
        }
        if (dom.is_box() || dom.level(x) <= 1.0 + 1e-12) pts.col(kept++) = x;
    }
    pts.conservativeResize(d, kept);
    return pts;
}

}  // namespace cpinn
