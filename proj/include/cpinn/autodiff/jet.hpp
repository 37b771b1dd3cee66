#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cpinn/autodiff/network.hpp"
#include "cpinn/autodiff/tape.hpp"

namespace cpinn {

/// Value, input gradient and input Hessian of a scalar field at one point,
/// all recorded on a tape. `hess` is d x d row-major and stores the same
/// handle at (i, j) and (j, i).
struct Jet2 {
    Var value;
    std::vector<Var> grad;
    std::vector<Var> hess;
    int dim = 0;

    Var h(int i, int j) const { return hess[static_cast<std::size_t>(i * dim + j)]; }
};

/// Plain-number counterpart of Jet2.
struct JetValue {
    double value = 0.0;
    Vec grad;
    Mat hess;
};

/// Scalar field with exact first and second derivatives.
using JetField = std::function<JetValue(const Vec&)>;
using ScalarField = std::function<double(const Vec&)>;

/// Propagates (value, gradient, Hessian) through the network on the tape.
/// The Hessian is assembled from the packed upper triangle, so symmetry is
/// exact.
inline Jet2 jet2_eval(const NetworkArch& arch, const ParamVector& params, const Vec& x, Tape& tape) {
    const int d = arch.input_dim;
    if (x.size() != d) throw PropagationError("point has wrong dimension", static_cast<int>(x.size()));
    for (int i = 0; i < d; ++i) {
        if (!std::isfinite(x[i])) throw PropagationError("non-finite input", i);
    }
    const auto theta = tape.bind_parameters(params);
    const int npairs = num_hess_pairs(d);

    // Per-neuron channels of the current layer's activations.
    struct Channels {
        std::vector<Var> value;
        std::vector<std::vector<Var>> grad;  // [neuron][k]
        std::vector<std::vector<Var>> hess;  // [neuron][pair]
    };

    const auto& layout = params.layout;
    const std::size_t nl = layout.size();
    Channels cur;

    for (std::size_t l = 0; l < nl; ++l) {
        const auto& s = layout[l];
        const bool last = (l + 1 == nl);
        Channels next;
        next.value.resize(static_cast<std::size_t>(s.fan_out));
        next.grad.assign(static_cast<std::size_t>(s.fan_out), {});
        next.hess.assign(static_cast<std::size_t>(s.fan_out), {});
        for (int j = 0; j < s.fan_out; ++j) {
            auto w = [&](int i) { return theta[static_cast<std::size_t>(s.weight_offset + j * s.fan_in + i)]; };
            Var bias = theta[static_cast<std::size_t>(s.bias_offset + j)];
            Var z;
            std::vector<Var> zg(static_cast<std::size_t>(d));
            std::vector<Var> zh;
            if (l == 0) {
                z = bias;
                for (int i = 0; i < d; ++i) z = z + w(i) * x[i];
                for (int k = 0; k < d; ++k) zg[static_cast<std::size_t>(k)] = w(k);
            } else {
                z = bias;
                for (int i = 0; i < s.fan_in; ++i) z = z + w(i) * cur.value[static_cast<std::size_t>(i)];
                for (int k = 0; k < d; ++k) {
                    Var acc = w(0) * cur.grad[0][static_cast<std::size_t>(k)];
                    for (int i = 1; i < s.fan_in; ++i) acc = acc + w(i) * cur.grad[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
                    zg[static_cast<std::size_t>(k)] = acc;
                }
                zh.resize(static_cast<std::size_t>(npairs));
                for (int p = 0; p < npairs; ++p) {
                    Var acc = w(0) * cur.hess[0][static_cast<std::size_t>(p)];
                    for (int i = 1; i < s.fan_in; ++i) acc = acc + w(i) * cur.hess[static_cast<std::size_t>(i)][static_cast<std::size_t>(p)];
                    zh[static_cast<std::size_t>(p)] = acc;
                }
            }

            auto& out_g = next.grad[static_cast<std::size_t>(j)];
            auto& out_h = next.hess[static_cast<std::size_t>(j)];
            out_h.resize(static_cast<std::size_t>(npairs));
            if (last) {
                next.value[static_cast<std::size_t>(j)] = z;
                out_g = zg;
                for (int k = 0; k < d; ++k) {
                    for (int m = k; m < d; ++m) {
                        const auto p = static_cast<std::size_t>(hess_pair_index(d, k, m));
                        out_h[p] = zh.empty() ? tape.constant(0.0) : zh[p];
                    }
                }
                continue;
            }
            const Var t = tanh(z);
            const Var s1 = 1.0 - square(t);
            const Var s2 = -2.0 * (t * s1);
            next.value[static_cast<std::size_t>(j)] = t;
            out_g.resize(static_cast<std::size_t>(d));
            for (int k = 0; k < d; ++k) out_g[static_cast<std::size_t>(k)] = s1 * zg[static_cast<std::size_t>(k)];
            for (int k = 0; k < d; ++k) {
                for (int m = k; m < d; ++m) {
                    const auto p = static_cast<std::size_t>(hess_pair_index(d, k, m));
                    Var term = s2 * (zg[static_cast<std::size_t>(k)] * zg[static_cast<std::size_t>(m)]);
                    if (!zh.empty()) term = term + s1 * zh[p];
                    out_h[p] = term;
                }
            }
        }
        cur = std::move(next);
    }

    Jet2 jet;
    jet.dim = d;
    jet.value = cur.value[0];
    jet.grad = cur.grad[0];
    jet.hess.resize(static_cast<std::size_t>(d * d));
    for (int k = 0; k < d; ++k) {
        for (int m = 0; m < d; ++m) {
            jet.hess[static_cast<std::size_t>(k * d + m)] = cur.hess[0][static_cast<std::size_t>(hess_pair_index(d, k, m))];
        }
    }
    return jet;
}

inline JetValue to_values(const Jet2& jet) {
    JetValue v;
    v.value = jet.value.value();
    v.grad.resize(jet.dim);
    v.hess.resize(jet.dim, jet.dim);
    for (int i = 0; i < jet.dim; ++i) {
        v.grad[i] = jet.grad[static_cast<std::size_t>(i)].value();
        for (int j = 0; j < jet.dim; ++j) v.hess(i, j) = jet.h(i, j).value();
    }
    return v;
}

/// Network output at one point, no derivatives.
inline double network_value(const ParamVector& params, const Vec& x) {
    Vec a = x;
    const std::size_t nl = params.layout.size();
    for (std::size_t l = 0; l < nl; ++l) {
        Vec z = params.weights(l) * a + params.biases(l);
        a = (l + 1 == nl) ? z : Vec(z.array().tanh());
    }
    return a[0];
}

/// Central-difference gradient and Hessian of `field` at x with step h. The
/// mixed stencil is symmetric in (i, j), so one value fills both entries.
inline JetValue finite_diff_jet(const ScalarField& field, const Vec& x, double h) {
    const Eigen::Index d = x.size();
    JetValue out;
    out.value = field(x);
    out.grad.resize(d);
    out.hess.resize(d, d);
    Vec xp = x;
    for (Eigen::Index i = 0; i < d; ++i) {
        xp[i] = x[i] + h;
        const double fp = field(xp);
        xp[i] = x[i] - h;
        const double fm = field(xp);
        xp[i] = x[i];
        out.grad[i] = (fp - fm) / (2.0 * h);
        out.hess(i, i) = (fp - 2.0 * out.value + fm) / (h * h);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i + 1; j < d; ++j) {
            auto eval = [&](double si, double sj) {
                Vec y = x;
                y[i] += si * h;
                y[j] += sj * h;
                return field(y);
            };
            out.hess(i, j) = out.hess(j, i) =
                (eval(1, 1) - eval(1, -1) - eval(-1, 1) + eval(-1, -1)) / (4.0 * h * h);
        }
    }
    return out;
}

}  // namespace cpinn
