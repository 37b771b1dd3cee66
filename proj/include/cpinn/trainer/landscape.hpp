#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "cpinn/autodiff/network.hpp"

namespace cpinn {

struct LandscapeProbe {
    Vec dir1;
    Vec dir2;
    Vec offsets;   // shared by both axes
    Mat surface;   // surface(i, j) = loss(theta + offsets[i] d1 + offsets[j] d2)
};

/// Gaussian direction rescaled so that each neuron's incoming weights and
/// bias have the same norm as in `params`. Layer norms then match too.
inline Vec filter_normalized_direction(const ParamVector& params, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    ParamVector dir = params;
    for (auto& v : dir.values) v = gauss(rng);
    ParamVector ref = params;
    for (std::size_t l = 0; l < params.layout.size(); ++l) {
        auto W = dir.weights(l);
        auto b = dir.biases(l);
        const auto W0 = ref.weights(l);
        const auto b0 = ref.biases(l);
        for (Eigen::Index j = 0; j < W.rows(); ++j) {
            const double target = std::sqrt(W0.row(j).squaredNorm() + b0[j] * b0[j]);
            const double have = std::sqrt(W.row(j).squaredNorm() + b[j] * b[j]);
            const double s = have > 0.0 ? target / have : 0.0;
            W.row(j) *= s;
            b[j] *= s;
        }
    }
    return dir.values;
}

/// Loss on a grid_n x grid_n plane through `params` spanned by two random
/// filter-normalized directions, offsets in [-half_width, half_width].
inline LandscapeProbe landscape_probe(const ParamVector& params, const std::function<double(const ParamVector&)>& loss,
                                      double half_width, int grid_n, std::uint64_t seed) {
    if (grid_n < 1) throw ConfigError("landscape grid needs at least one node");
    if (!params.values.allFinite()) throw InvalidHandle("landscape probe at non-finite parameters");
    std::mt19937_64 rng(seed);
    LandscapeProbe p;
    p.dir1 = filter_normalized_direction(params, rng);
    p.dir2 = filter_normalized_direction(params, rng);
    p.offsets = grid_n == 1 ? Vec(Vec::Zero(1)) : Vec(Vec::LinSpaced(grid_n, -half_width, half_width));
    if (grid_n % 2 == 1) p.offsets[grid_n / 2] = 0.0;
    p.surface.resize(grid_n, grid_n);
    ParamVector probe = params;
    for (int i = 0; i < grid_n; ++i) {
        for (int j = 0; j < grid_n; ++j) {
            if (p.offsets[i] == 0.0 && p.offsets[j] == 0.0) {
                probe.values = params.values;
            } else {
                probe.values = params.values + p.offsets[i] * p.dir1 + p.offsets[j] * p.dir2;
            }
            p.surface(i, j) = loss(probe);
        }
    }
    return p;
}

}  // namespace cpinn
