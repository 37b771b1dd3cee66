#pragma once

#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "cpinn/problems/registry.hpp"

namespace cpinn {

struct FdField {
    int n = 0;        // intervals per axis
    PointSet nodes;   // 2 x (n+1)^2, first coordinate fastest
    Vec values;
    double residual = 0.0;  // relative residual of the linear solve
};

/// Second-order finite differences for A:D^2u + b.grad(u) - c u = f on a
/// rectangle with Dirichlet data: 5-point second derivatives, the 4-corner
/// cross stencil for u_12, central first derivatives, direct sparse LU.
inline FdField fd_reference_solve(const ProblemSpec& spec, int n) {
    if (spec.problem_class != ProblemClass::kLinear) throw ConfigError("fd reference needs a linear problem");
    if (spec.dim() != 2 || !spec.domain.is_box()) throw GeometryError("fd reference needs a 2D rectangle");
    if (n < 2) throw ConfigError("fd grid needs at least 2 intervals");

    const Domain& dom = spec.domain;
    const double h1 = (dom.hi[0] - dom.lo[0]) / n;
    const double h2 = (dom.hi[1] - dom.lo[1]) / n;
    const int m = n + 1;
    FdField out;
    out.n = n;
    out.nodes = eval_grid(dom, m);
    auto node = [m](int i, int j) { return static_cast<Eigen::Index>(j) * m + i; };
    auto unknown = [n](int i, int j) { return static_cast<Eigen::Index>(j - 1) * (n - 1) + (i - 1); };
    auto interior = [n](int i, int j) { return i > 0 && i < n && j > 0 && j < n; };

    Vec g = Vec::Zero(static_cast<Eigen::Index>(m) * m);
    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
            if (!interior(i, j)) g[node(i, j)] = spec.boundary(out.nodes.col(node(i, j)));
        }
    }

    const Eigen::Index N = static_cast<Eigen::Index>(n - 1) * (n - 1);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(N) * 9);
    Vec rhs(N);
    PointSet probe(2, 1);
    for (int j = 1; j < n; ++j) {
        for (int i = 1; i < n; ++i) {
            probe.col(0) = out.nodes.col(node(i, j));
            jitter_singular(probe, spec.singular);
            const Vec x = probe.col(0);
            const CoefficientSample s = spec.coefficients(x);
            const double a11 = s.A(0, 0), a22 = s.A(1, 1), a12 = 0.5 * (s.A(0, 1) + s.A(1, 0));
            const double b1 = s.b.size() > 0 ? s.b[0] : 0.0, b2 = s.b.size() > 0 ? s.b[1] : 0.0;

            // Stencil weights indexed by (di, dj) in {-1,0,1}^2.
            double w[3][3] = {};
            w[1][1] = -2.0 * a11 / (h1 * h1) - 2.0 * a22 / (h2 * h2) - s.c;
            w[2][1] += a11 / (h1 * h1) + b1 / (2.0 * h1);
            w[0][1] += a11 / (h1 * h1) - b1 / (2.0 * h1);
            w[1][2] += a22 / (h2 * h2) + b2 / (2.0 * h2);
            w[1][0] += a22 / (h2 * h2) - b2 / (2.0 * h2);
            const double cross = 2.0 * a12 / (4.0 * h1 * h2);
            w[2][2] += cross;
            w[0][0] += cross;
            w[2][0] -= cross;
            w[0][2] -= cross;

            const Eigen::Index row = unknown(i, j);
            double r = spec.source(x);
            for (int di = -1; di <= 1; ++di) {
                for (int dj = -1; dj <= 1; ++dj) {
                    const double wt = w[di + 1][dj + 1];
                    if (wt == 0.0) continue;
                    const int ii = i + di, jj = j + dj;
                    if (interior(ii, jj)) {
                        trip.emplace_back(row, unknown(ii, jj), wt);
                    } else {
                        r -= wt * g[node(ii, jj)];
                    }
                }
            }
            rhs[row] = r;
        }
    }

    Eigen::SparseMatrix<double> K(N, N);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(K);
    if (lu.info() != Eigen::Success) {
        throw SingularSystemError("finite-difference system is singular (ellipticity lost at the grid scale?)");
    }
    const Vec u = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !u.allFinite()) throw SingularSystemError("finite-difference solve failed");
    const double scale = std::max(rhs.norm(), 1e-300);
    out.residual = (K * u - rhs).norm() / scale;
    if (out.residual > 1e-10) {
        throw SingularSystemError("finite-difference solve is ill-conditioned, relative residual " +
                                  std::to_string(out.residual));
    }

    out.values = g;
    for (int j = 1; j < n; ++j) {
        for (int i = 1; i < n; ++i) out.values[node(i, j)] = u[unknown(i, j)];
    }
    return out;
}

}  // namespace cpinn
