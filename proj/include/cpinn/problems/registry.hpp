#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "cpinn/autodiff/jet.hpp"
#include "cpinn/cordes.hpp"
#include "cpinn/problems/domain.hpp"

namespace cpinn {

enum class ProblemClass { kLinear, kHJB, kMongeAmpere, kTransport };

inline const char* to_string(ProblemClass c) {
    switch (c) {
        case ProblemClass::kLinear: return "linear";
        case ProblemClass::kHJB: return "hjb";
        case ProblemClass::kMongeAmpere: return "monge_ampere";
        case ProblemClass::kTransport: return "transport";
    }
    return "?";
}

/// One control of an HJB operator: A^a:D^2u + b^a.grad(u) - c^a u - f^a.
struct HJBBranch {
    CoefficientField coefficients;
    ScalarField source;
};

struct HJBSpec {
    std::vector<HJBBranch> controls;
};

/// A benchmark PDE. For linear problems `coefficients` and `source` define
/// A:D^2u + b.grad(u) - c u = f. For Monge-Ampere, det(D^2u) = source. For
/// transport, `source` is the source density and the target is uniform on
/// the same domain. HJB problems carry their controls in `hjb`.
struct ProblemSpec {
    std::string name;
    std::string description;
    ProblemClass problem_class = ProblemClass::kLinear;
    Domain domain;
    CoefficientField coefficients;
    ScalarField source;
    ScalarField boundary;
    JetField exact;
    bool lower_order = false;
    SingularSet singular;
    std::optional<HJBSpec> hjb;

    bool has_exact() const { return static_cast<bool>(exact); }
    int dim() const { return domain.dim; }

    double exact_value(const Vec& x) const { return exact(x).value; }
};

/// A:H + b.g - c v for a jet of the unknown.
inline double apply_operator(const CoefficientSample& s, const JetValue& u) {
    double r = s.A.cwiseProduct(u.hess).sum() - s.c * u.value;
    if (s.b.size() > 0) r += s.b.dot(u.grad);
    return r;
}

namespace detail {

inline double sgn(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline CoefficientSample principal(Mat A) {
    CoefficientSample s;
    s.b = Vec::Zero(A.rows());
    s.A = std::move(A);
    return s;
}

inline Mat mat2(double a11, double a12, double a22) {
    Mat A(2, 2);
    A << a11, a12, a12, a22;
    return A;
}

inline JetValue jet2d(double v, double u1, double u2, double u11, double u12, double u22) {
    JetValue j;
    j.value = v;
    j.grad = Vec(2);
    j.grad << u1, u2;
    j.hess = mat2(u11, u12, u22);
    return j;
}

/// Wraps a linear operator and an exact jet into a source field f = L u.
inline ScalarField source_from_exact(CoefficientField coeffs, JetField exact) {
    return [coeffs = std::move(coeffs), exact = std::move(exact)](const Vec& x) {
        return apply_operator(coeffs(x), exact(x));
    };
}

inline ScalarField value_of(JetField exact) {
    return [exact = std::move(exact)](const Vec& x) { return exact(x).value; };
}

// Coefficient matrix shared by both Example 4.1 cases.
inline CoefficientSample ex41_coefficients(const Vec& x) {
    const double x1 = x[0], x2 = x[1];
    const double a11 = std::cbrt(2.0 * x1 - x2) + 4.0 * std::exp(2.0 - x1);
    const double a12 = 0.5 * std::sin(10.0 * x1 * x2) - 0.5 * std::sqrt(std::max(0.0, x1 + 2.0));
    const double a22 = std::pow(std::abs(x2 - 2.0 * x1), 0.25) + 3.0;
    return principal(mat2(a11, a12, a22));
}

// |x1|^3 cos(x2) / 6
inline JetValue ex41_smooth_exact(const Vec& x) {
    const double x1 = x[0], x2 = x[1];
    const double a = std::abs(x1);
    const double c = std::cos(x2), s = std::sin(x2);
    return jet2d(a * a * a * c / 6.0, 0.5 * x1 * a * c, -a * a * a * s / 6.0, a * c, -0.5 * x1 * a * s,
                 -a * a * a * c / 6.0);
}

// |x1 - x2|^(8/3)
inline JetValue ex41_singular_exact(const Vec& x) {
    const double t = x[0] - x[1];
    const double a = std::abs(t);
    const double v = std::pow(a, 8.0 / 3.0);
    const double d1 = 8.0 / 3.0 * sgn(t) * std::pow(a, 5.0 / 3.0);
    const double d2 = 40.0 / 9.0 * std::pow(a, 2.0 / 3.0);
    return jet2d(v, d1, -d1, d2, -d2, d2);
}

// |x| with the a.e. convention, plus b = x.
inline CoefficientSample radial_coefficients(const Vec& x, double a11, double a22_scale, double a22, double c) {
    const double r = x.norm();
    CoefficientSample s;
    s.A = mat2(r + a11, -r, a22_scale * r + a22);
    s.b = x;
    s.c = c;
    return s;
}

inline CoefficientSample sign_coefficients(const Vec& x, double c) {
    CoefficientSample s;
    s.A = mat2(2.0, sgn(x[0] * x[1]), 2.0);
    s.b = x;
    s.c = c;
    return s;
}

// sin(2 pi x1) sin(pi x2) exp(x1 cos x2)
inline JetValue ex42_continuous_exact(const Vec& x) {
    constexpr double pi = std::numbers::pi;
    const double x1 = x[0], x2 = x[1];
    const double S1 = std::sin(2 * pi * x1), C1 = std::cos(2 * pi * x1);
    const double S2 = std::sin(pi * x2), C2 = std::cos(pi * x2);
    const double E = std::exp(x1 * std::cos(x2));
    const double p1 = std::cos(x2), p2 = -x1 * std::sin(x2);
    const double p12 = -std::sin(x2), p22 = -x1 * std::cos(x2);
    const double k1 = 2 * pi * C1 + S1 * p1;
    const double u1 = S2 * E * k1;
    const double u2 = S1 * E * (pi * C2 + S2 * p2);
    const double u11 = S2 * E * (4 * pi * C1 * p1 + S1 * p1 * p1 - 4 * pi * pi * S1);
    const double u22 = S1 * E * (2 * pi * C2 * p2 + S2 * p2 * p2 - pi * pi * S2 + S2 * p22);
    const double u12 = pi * C2 * E * k1 + S2 * E * p2 * k1 + S2 * E * S1 * p12;
    return jet2d(S1 * S2 * E, u1, u2, u11, u12, u22);
}

// h(x1) h(x2), h(t) = t (e^(1-|t|) - 1)
inline JetValue ex42_discontinuous_exact(const Vec& x) {
    auto h = [](double t, double& d1, double& d2) {
        const double e = std::exp(1.0 - std::abs(t));
        d1 = e * (1.0 - std::abs(t)) - 1.0;
        d2 = -sgn(t) * e * (2.0 - std::abs(t));
        return t * (e - 1.0);
    };
    double a1, a2, b1, b2;
    const double ha = h(x[0], a1, a2);
    const double hb = h(x[1], b1, b2);
    return jet2d(ha * hb, a1 * hb, ha * b1, a2 * hb, a1 * b1, ha * b2);
}

// (1 - sum (x_i/a_i)^2) exp(x1 x2 x3)
inline JetValue ex43_ellipsoid_exact(const Vec& x, const Vec& axes) {
    const Vec inv2 = axes.array().square().inverse();
    const double B = 1.0 - (x.array().square() * inv2.array()).sum();
    Vec gB = -2.0 * x.cwiseProduct(inv2);
    Mat HB = Mat(Vec(-2.0 * inv2).asDiagonal());
    const double P = x[0] * x[1] * x[2];
    Vec gP(3);
    gP << x[1] * x[2], x[0] * x[2], x[0] * x[1];
    Mat HP(3, 3);
    HP << 0, x[2], x[1], x[2], 0, x[0], x[1], x[0], 0;
    const double E = std::exp(P);
    JetValue j;
    j.value = B * E;
    j.grad = E * (gB + B * gP);
    j.hess = E * (HB + gB * gP.transpose() + gP * gB.transpose() + B * (HP + gP * gP.transpose()));
    return j;
}

// prod cos(pi x_i / 2) + prod sin(pi x_i)
inline JetValue cube_exact(const Vec& x) {
    constexpr double pi = std::numbers::pi;
    const auto d = x.size();
    Vec c(d), s(d), cp(d), sp(d);
    for (Eigen::Index i = 0; i < d; ++i) {
        c[i] = std::cos(0.5 * pi * x[i]);
        cp[i] = std::sin(0.5 * pi * x[i]);
        s[i] = std::sin(pi * x[i]);
        sp[i] = std::cos(pi * x[i]);
    }
    auto prod_except = [&](const Vec& v, Eigen::Index i, Eigen::Index j) {
        double p = 1.0;
        for (Eigen::Index k = 0; k < d; ++k) {
            if (k != i && k != j) p *= v[k];
        }
        return p;
    };
    JetValue out;
    out.value = c.prod() + s.prod();
    out.grad.resize(d);
    out.hess.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        out.grad[i] = -0.5 * pi * cp[i] * prod_except(c, i, -1) + pi * sp[i] * prod_except(s, i, -1);
        out.hess(i, i) = -0.25 * pi * pi * c.prod() - pi * pi * s.prod();
        for (Eigen::Index j = i + 1; j < d; ++j) {
            const double v = 0.25 * pi * pi * cp[i] * cp[j] * prod_except(c, i, j) +
                             pi * pi * sp[i] * sp[j] * prod_except(s, i, j);
            out.hess(i, j) = out.hess(j, i) = v;
        }
    }
    return out;
}

inline CoefficientSample cube_coefficients(const Vec& x) {
    const auto d = x.size();
    Mat A(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            A(i, j) = (i == j) ? static_cast<double>(d) : sgn(x[i] * x[j]);
        }
    }
    return principal(std::move(A));
}

inline CoefficientSample hjb_coefficients(const Vec& x, int control) {
    const double s = sgn(x[0] * x[1]);
    CoefficientSample out;
    out.A = control == 0 ? mat2(2.0 + s, 0.5 + 0.5 * s, 1.5 + 0.5 * s) : mat2(1.5 + 0.5 * s, 0.5 + 0.5 * s, 2.0 + s);
    out.b = Vec(2);
    out.b << 1.0, 0.0;
    out.c = 1.0;
    return out;
}

inline JetValue hjb_exact(const Vec& x) {
    const double s1 = std::sin(x[0]), c1 = std::cos(x[0]);
    const double s2 = std::sin(x[1]), c2 = std::cos(x[1]);
    return jet2d(s1 * s2, c1 * s2, s1 * c2, -s1 * s2, c1 * c2, -s1 * s2);
}

// exp(|x|^2 / 2)
inline JetValue ma_exact(const Vec& x) {
    const double u = std::exp(0.5 * x.squaredNorm());
    JetValue j;
    j.value = u;
    j.grad = u * x;
    j.hess = u * (Mat::Identity(x.size(), x.size()) + x * x.transpose());
    return j;
}

}  // namespace detail

/// Auxiliary profile of the square-to-square transport benchmark and its
/// first two derivatives.
namespace ex51 {
inline double q(double z) {
    constexpr double pi = std::numbers::pi;
    return (-z * z / (8 * pi) + 1 / (256 * pi * pi * pi) + 1 / (32 * pi)) * std::cos(8 * pi * z) +
           z * std::sin(8 * pi * z) / (32 * pi * pi);
}
inline double dq(double z) { return (z * z - 0.25) * std::sin(8 * std::numbers::pi * z); }
inline double d2q(double z) {
    constexpr double pi = std::numbers::pi;
    return 2 * z * std::sin(8 * pi * z) + 8 * pi * (z * z - 0.25) * std::cos(8 * pi * z);
}

/// Source density.
inline double density(const Vec& x) {
    const double qa = q(x[0]), qb = q(x[1]);
    const double da = dq(x[0]), db = dq(x[1]);
    const double ha = d2q(x[0]), hb = d2q(x[1]);
    return 1 + 4 * (ha * qb + qa * hb) + 16 * (qa * qb * ha * hb - da * da * db * db);
}

/// Brenier potential |x|^2/2 + 4 q(x1) q(x2).
inline JetValue potential(const Vec& x) {
    const double qa = q(x[0]), qb = q(x[1]);
    const double da = dq(x[0]), db = dq(x[1]);
    const double ha = d2q(x[0]), hb = d2q(x[1]);
    return detail::jet2d(0.5 * x.squaredNorm() + 4 * qa * qb, x[0] + 4 * da * qb, x[1] + 4 * qa * db,
                         1 + 4 * ha * qb, 4 * da * db, 1 + 4 * qa * hb);
}
}  // namespace ex51

/// Names of every shipped benchmark, in registry order.
inline std::vector<std::string> problem_names() {
    return {"ex4.1-smooth",      "ex4.1-singular",      "ex4.2-continuous", "ex4.2-discontinuous",
            "ex4.3-ellipsoid",   "ex4.3-5d",            "ex4.3-20d",        "ex4.4-continuous",
            "ex4.4-discontinuous", "ex4.5-hjb",         "ex4.6-ma",         "ex5.1-ot"};
}

namespace detail {

inline ProblemSpec linear_with_exact(std::string name, std::string desc, Domain dom, CoefficientField coeffs,
                                     JetField exact, bool lower_order, SingularSet singular) {
    ProblemSpec p;
    p.name = std::move(name);
    p.description = std::move(desc);
    p.problem_class = ProblemClass::kLinear;
    p.domain = std::move(dom);
    p.coefficients = coeffs;
    p.exact = exact;
    p.source = source_from_exact(coeffs, exact);
    p.boundary = value_of(exact);
    p.lower_order = lower_order;
    p.singular = singular;
    return p;
}

inline ProblemSpec make_problem(const std::string& name) {
    const Vec lo2 = Vec::Constant(2, -1.0), hi2 = Vec::Constant(2, 1.0);
    if (name == "ex4.1-smooth") {
        return linear_with_exact(name, "diffusion-dominated, u = |x1|^3 cos(x2) / 6",
                                 Domain::rectangle(Vec::Constant(2, -2.0), Vec::Constant(2, 2.0)),
                                 ex41_coefficients, ex41_smooth_exact, false, {});
    }
    if (name == "ex4.1-singular") {
        return linear_with_exact(name, "weakly singular, u = (x1 - x2)^(8/3) on the disc of radius 2",
                                 Domain::ball(Vec::Zero(2), 2.0), ex41_coefficients, ex41_singular_exact, false,
                                 {false, true});
    }
    if (name == "ex4.2-continuous") {
        return linear_with_exact(
            name, "drift and reaction, continuous A",
            Domain::rectangle(lo2, hi2),
            [](const Vec& x) { return radial_coefficients(x, 1.0, 5.0, 1.0, 3.0); }, ex42_continuous_exact, true,
            {});
    }
    if (name == "ex4.2-discontinuous") {
        return linear_with_exact(
            name, "drift and reaction, A off-diagonal sign(x1 x2)", Domain::rectangle(lo2, hi2),
            [](const Vec& x) { return sign_coefficients(x, 3.0); }, ex42_discontinuous_exact, true, {true, false});
    }
    if (name == "ex4.3-ellipsoid") {
        Vec axes(3);
        axes << 1.5, 1.0, 0.8;
        if (axes.array().square().maxCoeff() >= 9.0) throw GeometryError("ellipsoid semi-axes violate a^2 < 9");
        return linear_with_exact(
            name, "A = 3I + x x^T on an ellipsoid", Domain::ellipsoid(axes),
            [](const Vec& x) { return principal(3.0 * Mat::Identity(3, 3) + x * x.transpose()); },
            [axes](const Vec& x) { return ex43_ellipsoid_exact(x, axes); }, false, {});
    }
    if (name == "ex4.3-5d" || name == "ex4.3-20d") {
        const int d = name == "ex4.3-5d" ? 5 : 20;
        return linear_with_exact(name, "A_ii = d, A_ij = sign(x_i x_j) on (-1,1)^" + std::to_string(d),
                                 Domain::hypercube(d, -1.0, 1.0), cube_coefficients, cube_exact, false,
                                 {true, false});
    }
    if (name == "ex4.4-continuous" || name == "ex4.4-discontinuous") {
        ProblemSpec p;
        p.name = name;
        p.problem_class = ProblemClass::kLinear;
        p.lower_order = true;
        p.source = [](const Vec&) { return 2.0; };
        p.boundary = [](const Vec&) { return 0.0; };
        if (name == "ex4.4-continuous") {
            p.description = "unknown solution, continuous A, f = 2";
            p.domain = Domain::rectangle(Vec::Constant(2, -0.5), Vec::Constant(2, 0.5));
            p.coefficients = [](const Vec& x) { return radial_coefficients(x, 2.0, 3.0, 2.0, 4.0); };
        } else {
            p.description = "unknown solution, A off-diagonal sign(x1 x2), f = 2";
            p.domain = Domain::rectangle(lo2, hi2);
            p.coefficients = [](const Vec& x) { return sign_coefficients(x, 3.0); };
            p.singular.axes = true;
        }
        return p;
    }
    if (name == "ex4.5-hjb") {
        ProblemSpec p;
        p.name = name;
        p.description = "HJB with two controls, u = sin(x1) sin(x2)";
        p.problem_class = ProblemClass::kHJB;
        p.domain = Domain::rectangle(Vec::Constant(2, -std::numbers::pi), Vec::Constant(2, std::numbers::pi));
        p.exact = hjb_exact;
        p.boundary = value_of(hjb_exact);
        p.lower_order = true;
        p.singular.axes = true;
        HJBSpec h;
        for (int a = 0; a < 2; ++a) {
            CoefficientField cf = [a](const Vec& x) { return hjb_coefficients(x, a); };
            h.controls.push_back({cf, source_from_exact(cf, hjb_exact)});
        }
        p.coefficients = h.controls[0].coefficients;
        p.source = h.controls[0].source;
        p.hjb = std::move(h);
        return p;
    }
    if (name == "ex4.6-ma") {
        ProblemSpec p;
        p.name = name;
        p.description = "Monge-Ampere, u = exp(|x|^2 / 2) on the unit square";
        p.problem_class = ProblemClass::kMongeAmpere;
        p.domain = Domain::rectangle(Vec::Zero(2), Vec::Ones(2));
        p.exact = ma_exact;
        p.source = [](const Vec& x) {
            const double r2 = x.squaredNorm();
            return (1.0 + r2) * std::exp(r2);
        };
        p.boundary = value_of(ma_exact);
        return p;
    }
    if (name == "ex5.1-ot") {
        ProblemSpec p;
        p.name = name;
        p.description = "square-to-square optimal transport, uniform target";
        p.problem_class = ProblemClass::kTransport;
        p.domain = Domain::rectangle(Vec::Constant(2, -0.5), Vec::Constant(2, 0.5));
        p.exact = ex51::potential;
        p.source = ex51::density;
        return p;
    }
    std::string known;
    for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
    throw RegistryError("unknown problem '" + name + "'; available: " + known);
}

}  // namespace detail

/// Looks up a shipped benchmark by name.
inline ProblemSpec get_problem(const std::string& name) { return detail::make_problem(name); }

/// Residual L u - f of a linear (or HJB branch) operator for a known jet.
inline double linear_residual_value(const CoefficientField& coeffs, const ScalarField& source, const Vec& x,
                                    const JetValue& u) {
    return apply_operator(coeffs(x), u) - source(x);
}

/// Pointwise HJB residual max_a (L^a u - f^a).
inline double hjb_residual_value(const HJBSpec& h, const Vec& x, const JetValue& u) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& c : h.controls) best = std::max(best, linear_residual_value(c.coefficients, c.source, x, u));
    return best;
}

}  // namespace cpinn
