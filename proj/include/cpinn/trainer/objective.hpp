#pragma once

#include <memory>
#include <string>
#include <vector>

#include "cpinn/autodiff/batch_jet.hpp"
#include "cpinn/trainer/loss.hpp"

namespace cpinn {

/// Residual rows that are linear in the jets: r_i = K.col(i) . jet_i - t_i.
/// Every linear PDE residual, Dirichlet mismatch and surrogate residual used
/// in training has this form.
struct LinearRows {
    Mat K;  // C x N
    Vec t;  // N
};

/// Coefficient row of A:H + b.g - c v in channel layout.
inline void operator_row(const CoefficientSample& s, int d, JetOrder order, Eigen::Ref<Vec> row) {
    row.setZero();
    row[0] = -s.c;
    if (order == JetOrder::kValue) return;
    if (s.b.size() > 0) {
        for (int k = 0; k < d; ++k) row[grad_channel(k)] = s.b[k];
    }
    if (order != JetOrder::kHessian) return;
    for (int k = 0; k < d; ++k) {
        for (int m = k; m < d; ++m) {
            row[hess_channel(d, k, m)] = (k == m) ? s.A(k, k) : s.A(k, m) + s.A(m, k);
        }
    }
}

/// Scaled rows lambda_i (L - f_i) for per-point coefficients.
inline LinearRows operator_rows(const std::vector<CoefficientSample>& samples, const Vec& f, int d, double delta,
                                LossMode mode) {
    const auto n = static_cast<Eigen::Index>(samples.size());
    LinearRows r;
    r.K.resize(num_channels(d, JetOrder::kHessian), n);
    r.t.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        const double lam = mode == LossMode::kCordes ? multiplier(s.A, delta) : 1.0;
        operator_row(s, d, JetOrder::kHessian, r.K.col(i));
        r.K.col(i) *= lam;
        r.t[i] = lam * f[i];
    }
    return r;
}

inline LinearRows operator_rows(const LinearPDE& pde, const PointSet& pts, double delta, LossMode mode) {
    std::vector<CoefficientSample> samples;
    samples.reserve(static_cast<std::size_t>(pts.cols()));
    Vec f(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        samples.push_back(pde.coefficients(pts.col(i)));
        f[i] = pde.source(pts.col(i));
    }
    return operator_rows(samples, f, static_cast<int>(pts.rows()), delta, mode);
}

/// Dirichlet rows u(x_i) - g(x_i).
inline LinearRows dirichlet_rows(const ScalarField& g, const PointSet& pts) {
    LinearRows r;
    r.K = Mat::Zero(1, pts.cols());
    r.K.row(0).setOnes();
    r.t.resize(pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) r.t[i] = g(pts.col(i));
    return r;
}

/// weight / N * sum_i r_i^2 over LinearRows, as a chunked pointwise loss.
inline PointwiseLoss mean_square_loss(std::shared_ptr<const LinearRows> rows, double weight) {
    const double scale = weight / static_cast<double>(rows->t.size());
    return [rows = std::move(rows), scale](const Mat& jets, Eigen::Index offset, Mat& cot) {
        const Eigen::Index n = jets.cols();
        const auto K = rows->K.middleCols(offset, n);
        const Eigen::Index c = K.rows();
        const Vec r = (K.array() * jets.topRows(c).array()).colwise().sum().transpose().matrix() -
                      rows->t.segment(offset, n);
        cot.topRows(c) = K * (2.0 * scale * r).asDiagonal();
        return scale * r.squaredNorm();
    };
}

/// One weighted term of a training objective over its own point set.
struct LossTerm {
    std::string label;
    bool boundary = false;
    std::unique_ptr<BatchJetEvaluator> evaluator;
    PointwiseLoss loss;
};

struct LossBreakdown {
    double total = 0.0;
    double interior = 0.0;
    double boundary = 0.0;
};

/// Sum of loss terms with a fused value-and-gradient sweep per term.
class Objective {
public:
    Objective() = default;
    Objective(Objective&&) = default;
    Objective& operator=(Objective&&) = default;

    void add(std::string label, bool boundary, std::unique_ptr<BatchJetEvaluator> ev, PointwiseLoss loss) {
        terms_.push_back(LossTerm{std::move(label), boundary, std::move(ev), std::move(loss)});
    }

    /// Convenience: mean-square term over linear rows.
    void add_rows(std::string label, bool boundary, const NetworkArch& arch, PointSet pts, JetOrder order,
                  LinearRows rows, double weight, Precision precision, Eigen::Index chunk) {
        auto ev = std::make_unique<BatchJetEvaluator>(arch, std::move(pts), order, chunk, precision);
        const int c = ev->channels();
        if (rows.K.rows() > c) rows.K.conservativeResize(c, Eigen::NoChange);
        add(std::move(label), boundary, std::move(ev),
            mean_square_loss(std::make_shared<const LinearRows>(std::move(rows)), weight));
    }

    LossBreakdown value_and_grad(const ParamVector& params, Vec& grad) {
        grad.setZero(params.size());
        LossBreakdown out;
        for (auto& term : terms_) {
            const double v = term.evaluator->value_and_grad(params, term.loss, scratch_);
            grad += scratch_;
            (term.boundary ? out.boundary : out.interior) += v;
        }
        out.total = out.interior + out.boundary;
        return out;
    }

    LossBreakdown value(const ParamVector& params) {
        LossBreakdown out;
        for (auto& term : terms_) {
            const Mat& jets = term.evaluator->forward(params);
            Mat cot(jets.rows(), jets.cols());
            cot.setZero();
            const double v = term.loss(jets, 0, cot);
            (term.boundary ? out.boundary : out.interior) += v;
        }
        out.total = out.interior + out.boundary;
        return out;
    }

    std::vector<LossTerm>& terms() { return terms_; }

private:
    std::vector<LossTerm> terms_;
    Vec scratch_;
};

}  // namespace cpinn
