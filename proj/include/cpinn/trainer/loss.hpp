#pragma once

#include <string>
#include <vector>

#include "cpinn/autodiff/jet.hpp"
#include "cpinn/cordes.hpp"
#include "cpinn/problems/registry.hpp"

namespace cpinn {

enum class LossMode { kCordes, kPlain };

inline const char* to_string(LossMode m) { return m == LossMode::kCordes ? "cordes" : "plain"; }

struct LossConfig {
    double w_int = 1.0;
    double w_bc = 100.0;
    double delta = kDefaultDelta;
    Eigen::Index n_interior = 10000;
    Eigen::Index n_boundary = 1000;
    LossMode mode = LossMode::kCordes;

    void validate() const {
        if (!(w_int > 0.0) || !(w_bc > 0.0)) throw ConfigError("loss weights must be positive");
        if (delta < 0.0) throw ConfigError("delta must be non-negative");
        if (n_interior <= 0 || n_boundary <= 0) throw ConfigError("sample counts must be positive");
    }
};

/// A linear operator A:D^2u + b.grad(u) - c u with source f.
struct LinearPDE {
    CoefficientField coefficients;
    ScalarField source;
};

inline LinearPDE linear_part(const ProblemSpec& spec) { return {spec.coefficients, spec.source}; }

/// L u_theta(x) - f(x) recorded on the tape.
inline Var linear_residual(const NetworkArch& arch, const ParamVector& params, const LinearPDE& pde, const Vec& x,
                           Tape& tape) {
    const Jet2 u = jet2_eval(arch, params, x, tape);
    const CoefficientSample s = pde.coefficients(x);
    const int d = arch.input_dim;
    std::vector<Var> terms;
    terms.reserve(static_cast<std::size_t>(d * d + d + 2));
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            if (s.A(i, j) != 0.0) terms.push_back(s.A(i, j) * u.h(i, j));
        }
        if (s.b.size() > 0 && s.b[i] != 0.0) terms.push_back(s.b[i] * u.grad[static_cast<std::size_t>(i)]);
    }
    if (s.c != 0.0) terms.push_back(-s.c * u.value);
    terms.push_back(tape.constant(-pde.source(x)));
    return sum(terms);
}

/// Mean over points of (lambda(x) (L u_theta - f))^2; lambda = 1 in plain mode.
inline Var interior_loss(const NetworkArch& arch, const ParamVector& params, const LinearPDE& pde,
                         const PointSet& points, double delta, LossMode mode, Tape& tape) {
    if (points.cols() == 0) throw GeometryError("empty interior point set");
    std::vector<Var> terms;
    terms.reserve(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        const Vec x = points.col(j);
        const double lam = mode == LossMode::kCordes ? multiplier(pde.coefficients(x).A, delta) : 1.0;
        terms.push_back(square(lam * linear_residual(arch, params, pde, x, tape)));
    }
    return sum(terms) / static_cast<double>(points.cols());
}

inline Var cordes_loss(const NetworkArch& arch, const ParamVector& params, const LinearPDE& pde,
                       const PointSet& points, double delta, Tape& tape) {
    return interior_loss(arch, params, pde, points, delta, LossMode::kCordes, tape);
}

/// Mean squared Dirichlet mismatch.
inline Var boundary_loss(const NetworkArch& arch, const ParamVector& params, const ScalarField& g,
                         const PointSet& points, Tape& tape) {
    if (points.cols() == 0) throw GeometryError("empty boundary point set");
    std::vector<Var> terms;
    terms.reserve(static_cast<std::size_t>(points.cols()));
    for (Eigen::Index j = 0; j < points.cols(); ++j) {
        const Vec x = points.col(j);
        terms.push_back(square(jet2_eval(arch, params, x, tape).value - g(x)));
    }
    return sum(terms) / static_cast<double>(points.cols());
}

inline Var composite_loss(const LossConfig& cfg, Var interior, Var boundary) {
    return cfg.w_int * interior + cfg.w_bc * boundary;
}

}  // namespace cpinn
