#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "cpinn/autodiff/network.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

class Tape;

/// Handle to a scalar recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    int index = -1;

    double value() const;
    bool valid() const { return tape != nullptr && index >= 0; }
};

/// Append-only record of scalar operations with their local partials.
/// Every node has at most two parents, which covers all the elementary
/// operations the jet propagation needs.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(double v) { return push(v, -1, 0.0, -1, 0.0); }
    Var variable(double v) { return push(v, -1, 0.0, -1, 0.0); }

    Var unary(double v, Var a, double da) { return push(v, a.index, da, -1, 0.0); }
    Var binary(double v, Var a, double da, Var b, double db) {
        return push(v, a.index, da, b.index, db);
    }

    /// Records theta as leaves the first time; later calls return the same
    /// leaves so several jets can share one parameter set.
    std::span<const Var> bind_parameters(const ParamVector& params) {
        if (param_leaves_.empty()) {
            param_leaves_.reserve(static_cast<std::size_t>(params.size()));
            for (Eigen::Index i = 0; i < params.size(); ++i) param_leaves_.push_back(variable(params.values[i]));
        } else if (static_cast<Eigen::Index>(param_leaves_.size()) != params.size()) {
            throw InvalidHandle("tape is already bound to a parameter vector of different length");
        } else {
            for (Eigen::Index i = 0; i < params.size(); ++i) {
                if (nodes_[static_cast<std::size_t>(param_leaves_[static_cast<std::size_t>(i)].index)].value !=
                    params.values[i]) {
                    throw InvalidHandle("tape is already bound to different parameter values");
                }
            }
        }
        return param_leaves_;
    }

    std::span<const Var> parameters() const { return param_leaves_; }

    double value(int index) const { return nodes_.at(static_cast<std::size_t>(index)).value; }
    std::size_t size() const { return nodes_.size(); }

    bool owns(Var v) const { return v.tape == this && v.index >= 0 && static_cast<std::size_t>(v.index) < nodes_.size(); }

    /// Adjoints of every node with respect to `out`. The tape itself is not
    /// modified, so the sweep can be repeated.
    std::vector<double> adjoints(Var out) const {
        if (!owns(out)) throw InvalidHandle("scalar handle is not recorded on this tape");
        std::vector<double> adj(static_cast<std::size_t>(out.index) + 1, 0.0);
        adj[static_cast<std::size_t>(out.index)] = 1.0;
        for (int i = out.index; i >= 0; --i) {
            const double a = adj[static_cast<std::size_t>(i)];
            if (a == 0.0) continue;
            const Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.parent[0] >= 0) adj[static_cast<std::size_t>(n.parent[0])] += a * n.partial[0];
            if (n.parent[1] >= 0) adj[static_cast<std::size_t>(n.parent[1])] += a * n.partial[1];
        }
        return adj;
    }

    /// d out / d theta for the bound parameter leaves.
    Vec gradient(Var out) const {
        const auto adj = adjoints(out);
        Vec g = Vec::Zero(static_cast<Eigen::Index>(param_leaves_.size()));
        for (std::size_t i = 0; i < param_leaves_.size(); ++i) {
            const auto idx = static_cast<std::size_t>(param_leaves_[i].index);
            if (idx < adj.size()) g[static_cast<Eigen::Index>(i)] = adj[idx];
        }
        return g;
    }

private:
    struct Node {
        double value;
        std::array<int, 2> parent;
        std::array<double, 2> partial;
    };

    Var push(double v, int pa, double da, int pb, double db) {
        nodes_.push_back(Node{v, {pa, pb}, {da, db}});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::vector<Node> nodes_;
    std::vector<Var> param_leaves_;
};

inline double Var::value() const {
    if (!valid()) throw InvalidHandle("uninitialised scalar handle");
    return tape->value(index);
}

namespace detail {
inline Tape* same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw InvalidHandle("operands recorded on different tapes");
    return a.tape;
}
}  // namespace detail

inline Var operator+(Var a, Var b) {
    return detail::same_tape(a, b)->binary(a.value() + b.value(), a, 1.0, b, 1.0);
}
inline Var operator-(Var a, Var b) {
    return detail::same_tape(a, b)->binary(a.value() - b.value(), a, 1.0, b, -1.0);
}
inline Var operator*(Var a, Var b) {
    return detail::same_tape(a, b)->binary(a.value() * b.value(), a, b.value(), b, a.value());
}
inline Var operator/(Var a, Var b) {
    const double bv = b.value();
    return detail::same_tape(a, b)->binary(a.value() / bv, a, 1.0 / bv, b, -a.value() / (bv * bv));
}
inline Var operator-(Var a) { return a.tape->unary(-a.value(), a, -1.0); }

inline Var operator+(Var a, double c) { return a.tape->unary(a.value() + c, a, 1.0); }
inline Var operator+(double c, Var a) { return a + c; }
inline Var operator-(Var a, double c) { return a.tape->unary(a.value() - c, a, 1.0); }
inline Var operator-(double c, Var a) { return a.tape->unary(c - a.value(), a, -1.0); }
inline Var operator*(Var a, double c) { return a.tape->unary(a.value() * c, a, c); }
inline Var operator*(double c, Var a) { return a * c; }
inline Var operator/(Var a, double c) { return a.tape->unary(a.value() / c, a, 1.0 / c); }

inline Var square(Var a) { return a.tape->unary(a.value() * a.value(), a, 2.0 * a.value()); }
inline Var tanh(Var a) {
    const double t = std::tanh(a.value());
    return a.tape->unary(t, a, 1.0 - t * t);
}
inline Var exp(Var a) {
    const double e = std::exp(a.value());
    return a.tape->unary(e, a, e);
}
inline Var sqrt(Var a) {
    const double s = std::sqrt(a.value());
    return a.tape->unary(s, a, 0.5 / s);
}
inline Var sin(Var a) { return a.tape->unary(std::sin(a.value()), a, std::cos(a.value())); }
inline Var cos(Var a) { return a.tape->unary(std::cos(a.value()), a, -std::sin(a.value())); }

/// Sum of a non-empty list of handles.
inline Var sum(std::span<const Var> terms) {
    if (terms.empty()) throw InvalidHandle("sum of an empty list");
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
    return acc;
}

/// d loss / d theta for every parameter bound on the tape.
inline Vec loss_backward(const Tape& tape, Var loss) { return tape.gradient(loss); }

}  // namespace cpinn
