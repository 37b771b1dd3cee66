#pragma once

#include <cmath>
#include <string>

#include "cpinn/autodiff/network.hpp"
#include "cpinn/errors.hpp"

namespace cpinn {

/// Non-finite loss or gradient during training.
class TrainingDivergence : public NumericalError {
public:
    TrainingDivergence(const std::string& msg, long epoch)
        : NumericalError(msg + " at epoch " + std::to_string(epoch)), epoch_(epoch) {}
    long epoch() const { return epoch_; }

private:
    long epoch_;
};

struct AdamState {
    long t = 0;
    Vec m;
    Vec v;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const ParamVector& p, double lr = 3e-4) {
        AdamState s;
        s.m = Vec::Zero(p.size());
        s.v = Vec::Zero(p.size());
        s.lr = lr;
        return s;
    }
};

/// Bias-corrected Adam update in place.
inline void adam_step(AdamState& s, ParamVector& params, const Vec& grad) {
    if (grad.size() != params.size()) throw InvalidHandle("gradient length does not match the parameters");
    if (!grad.allFinite()) throw TrainingDivergence("non-finite gradient", s.t);
    if (s.m.size() != params.size()) {
        s.m = Vec::Zero(params.size());
        s.v = Vec::Zero(params.size());
    }
    ++s.t;
    s.m = s.beta1 * s.m + (1.0 - s.beta1) * grad;
    s.v = s.beta2 * s.v + (1.0 - s.beta2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    params.values.array() -= s.lr * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + s.eps);
}

}  // namespace cpinn
