#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpinn/errors.hpp"

namespace cpinn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
/// Points are stored column-wise: a d x N matrix holds N points of dimension d.
using PointSet = Eigen::MatrixXd;

enum class Activation { kTanh };

/// Fully connected scalar-output network: input_dim -> hidden_widths... -> 1.
struct NetworkArch {
    int input_dim = 2;
    std::vector<int> hidden_widths = {32, 32, 32};
    Activation activation = Activation::kTanh;

    static constexpr int output_dim = 1;

    /// Layer widths including input and output, e.g. {2, 32, 32, 1}.
    std::vector<int> widths() const {
        std::vector<int> w;
        w.reserve(hidden_widths.size() + 2);
        w.push_back(input_dim);
        w.insert(w.end(), hidden_widths.begin(), hidden_widths.end());
        w.push_back(output_dim);
        return w;
    }

    int num_layers() const { return static_cast<int>(hidden_widths.size()) + 1; }

    void validate() const {
        if (input_dim < 1) throw InvalidArchitecture("input dimension must be positive");
        if (hidden_widths.empty()) throw InvalidArchitecture("at least one hidden layer is required");
        for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
            if (hidden_widths[i] < 1) {
                throw InvalidArchitecture("hidden layer " + std::to_string(i) + " has zero width");
            }
        }
    }

    std::string describe() const {
        std::string s;
        for (int w : widths()) s += (s.empty() ? "" : "-") + std::to_string(w);
        return s;
    }
};

/// Where one affine layer lives inside the flat parameter vector. Weights are
/// stored row-major (fan_out x fan_in) followed by the fan_out biases.
struct LayerSlice {
    int fan_in = 0;
    int fan_out = 0;
    Eigen::Index weight_offset = 0;
    Eigen::Index bias_offset = 0;

    Eigen::Index size() const { return static_cast<Eigen::Index>(fan_in + 1) * fan_out; }
};

inline std::vector<LayerSlice> make_layout(const NetworkArch& arch) {
    arch.validate();
    const auto w = arch.widths();
    std::vector<LayerSlice> layout;
    Eigen::Index offset = 0;
    for (std::size_t l = 1; l < w.size(); ++l) {
        LayerSlice s;
        s.fan_in = w[l - 1];
        s.fan_out = w[l];
        s.weight_offset = offset;
        s.bias_offset = offset + static_cast<Eigen::Index>(s.fan_in) * s.fan_out;
        offset += s.size();
        layout.push_back(s);
    }
    return layout;
}

inline Eigen::Index param_count(const NetworkArch& arch) {
    Eigen::Index n = 0;
    for (const auto& s : make_layout(arch)) n += s.size();
    return n;
}

using RowMajorMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameter vector theta with its layer layout.
struct ParamVector {
    Vec values;
    std::vector<LayerSlice> layout;

    Eigen::Index size() const { return values.size(); }

    Eigen::Map<const RowMajorMat> weights(std::size_t layer) const {
        const auto& s = layout.at(layer);
        return {values.data() + s.weight_offset, s.fan_out, s.fan_in};
    }
    Eigen::Map<RowMajorMat> weights(std::size_t layer) {
        const auto& s = layout.at(layer);
        return {values.data() + s.weight_offset, s.fan_out, s.fan_in};
    }
    Eigen::Map<const Vec> biases(std::size_t layer) const {
        const auto& s = layout.at(layer);
        return {values.data() + s.bias_offset, s.fan_out};
    }
    Eigen::Map<Vec> biases(std::size_t layer) {
        const auto& s = layout.at(layer);
        return {values.data() + s.bias_offset, s.fan_out};
    }
};

/// Xavier-uniform weights, zero biases. Deterministic for a given seed.
inline ParamVector init_network(const NetworkArch& arch, std::uint64_t seed) {
    ParamVector p;
    p.layout = make_layout(arch);
    p.values = Vec::Zero(param_count(arch));
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < p.layout.size(); ++l) {
        const auto& s = p.layout[l];
        const double bound = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        auto w = p.weights(l);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    }
    return p;
}

/// Index of the Hessian channel (k, l) in packed upper-triangular order.
inline int hess_pair_index(int d, int k, int l) {
    if (k > l) std::swap(k, l);
    return k * d - k * (k - 1) / 2 + (l - k);
}

inline int num_hess_pairs(int d) { return d * (d + 1) / 2; }

}  // namespace cpinn
