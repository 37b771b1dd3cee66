#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <vector>

#include "cpinn/autodiff/jet.hpp"
#include "cpinn/autodiff/network.hpp"

namespace cpinn {

enum class JetOrder { kValue = 0, kGradient = 1, kHessian = 2 };

/// Number of jet channels per point: value, d gradient entries and the
/// packed upper triangle of the Hessian.
inline int num_channels(int d, JetOrder order) {
    switch (order) {
        case JetOrder::kValue: return 1;
        case JetOrder::kGradient: return 1 + d;
        case JetOrder::kHessian: return 1 + d + num_hess_pairs(d);
    }
    return 1;
}

inline int grad_channel(int k) { return 1 + k; }
inline int hess_channel(int d, int k, int l) { return 1 + d + hess_pair_index(d, k, l); }

/// Per-point loss over a chunk of jets. Receives the C x n jets of points
/// [offset, offset + n), writes dL/djets into `cotangent` (same shape) and
/// returns the chunk's contribution to L.
using PointwiseLoss = std::function<double(const Mat& jets, Eigen::Index offset, Mat& cotangent)>;

namespace detail {

/// tanh through exp, which Eigen vectorises; std::tanh is scalar.
template <typename Derived>
auto fast_tanh(const Eigen::ArrayBase<Derived>& z) {
    using S = typename Derived::Scalar;
    return S(1) - S(2) / ((S(2) * z).exp() + S(1));
}

/// Forward/reverse jet recurrence for one chunk of at most `capacity`
/// points, computed in scalar type S. Every layer buffer is
/// width x (C * n) with channel c in the contiguous column block
/// [c * n, (c + 1) * n).
template <typename S>
class JetKernel {
public:
    using MatS = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
    using VecS = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    using RowS = Eigen::Matrix<S, 1, Eigen::Dynamic>;
    using ArrS = Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic>;

    JetKernel(const NetworkArch& arch, JetOrder order, Eigen::Index capacity)
        : d_(arch.input_dim), c_(num_channels(arch.input_dim, order)), order_(order) {
        const auto w = arch.widths();
        z_.resize(w.size() - 2);
        y_.resize(w.size() - 2);
        for (std::size_t l = 0; l + 2 < w.size(); ++l) {
            z_[l].resize(w[l + 1], c_ * capacity);
            y_[l].resize(w[l + 1], c_ * capacity);
        }
    }

    int channels() const { return c_; }

    /// Copies theta into the kernel's scalar type and clears the gradient
    /// accumulators.
    void load(const ParamVector& params) {
        const std::size_t nl = params.layout.size();
        w_.resize(nl);
        b_.resize(nl);
        dw_.resize(nl);
        db_.resize(nl);
        for (std::size_t l = 0; l < nl; ++l) {
            w_[l] = params.weights(l).template cast<S>();
            b_[l] = params.biases(l).template cast<S>();
            dw_[l].setZero(w_[l].rows(), w_[l].cols());
            db_[l].setZero(b_[l].size());
        }
    }

    /// Jets of the chunk `x` (d x n, n <= capacity) into `out` (C x n).
    void forward(const Eigen::Ref<const Mat>& x, Mat& out) {
        n_ = x.cols();
        const Eigen::Index n = n_;
        const std::size_t nh = z_.size();
        x_ = x.template cast<S>();
        for (std::size_t l = 0; l < nh; ++l) {
            auto z = z_[l].leftCols(c_ * n);
            const MatS& W = w_[l];
            if (l == 0) {
                z.leftCols(n).noalias() = W * x_;
                for (int k = 0; k < c_ - 1 && k < d_; ++k) z.middleCols((1 + k) * n, n) = W.col(k).replicate(1, n);
                if (c_ > 1 + d_) z.rightCols((c_ - 1 - d_) * n).setZero();
            } else {
                z.noalias() = W * y_[l - 1].leftCols(c_ * n);
            }
            z.leftCols(n).colwise() += b_[l];
            activate(l);
        }
        flat_.noalias() = w_[nh] * y_[nh - 1].leftCols(c_ * n);
        out.resize(c_, n);
        for (int c = 0; c < c_; ++c) out.row(c) = flat_.segment(c * n, n).template cast<double>();
        out.row(0).array() += static_cast<double>(b_[nh][0]);
    }

    /// Accumulates dL/dtheta for the last forward chunk.
    void backward(const Mat& cotangent) {
        const Eigen::Index n = n_;
        const std::size_t nh = z_.size();
        flat_.resize(c_ * n);
        for (int c = 0; c < c_; ++c) flat_.segment(c * n, n) = cotangent.row(c).template cast<S>();
        dw_[nh].noalias() += flat_ * y_[nh - 1].leftCols(c_ * n).transpose();
        db_[nh][0] += flat_.head(n).sum();
        ybar_.resize(y_[nh - 1].rows(), c_ * n);
        ybar_.noalias() = w_[nh].transpose() * flat_;
        for (std::size_t l = nh; l-- > 0;) {
            activate_backward(l);
            db_[l] += zbar_.leftCols(n).rowwise().sum();
            if (l == 0) {
                dw_[l].noalias() += zbar_.leftCols(n) * x_.transpose();
                for (int k = 0; k < c_ - 1 && k < d_; ++k) dw_[l].col(k) += zbar_.middleCols((1 + k) * n, n).rowwise().sum();
            } else {
                dw_[l].noalias() += zbar_ * y_[l - 1].leftCols(c_ * n).transpose();
                ybar_.resize(y_[l - 1].rows(), c_ * n);
                ybar_.noalias() = w_[l].transpose() * zbar_;
            }
        }
    }

    /// Adds the accumulated gradient into `grad` (parameter layout order).
    void flush(const ParamVector& params, Vec& grad) const {
        for (std::size_t l = 0; l < params.layout.size(); ++l) {
            const auto& s = params.layout[l];
            Eigen::Map<RowMajorMat> dW(grad.data() + s.weight_offset, s.fan_out, s.fan_in);
            Eigen::Map<Vec> db(grad.data() + s.bias_offset, s.fan_out);
            dW += dw_[l].template cast<double>();
            db += db_[l].template cast<double>();
        }
    }

private:
    template <typename M>
    auto block(M& m, int c) const {
        return m.middleCols(static_cast<Eigen::Index>(c) * n_, n_).array();
    }

    void activate(std::size_t l) {
        const MatS& z = z_[l];
        MatS& y = y_[l];
        block(y, 0) = fast_tanh(block(z, 0));
        if (c_ == 1) return;
        s1_ = S(1) - block(y, 0).square();
        for (int k = 0; k < d_; ++k) block(y, grad_channel(k)) = s1_ * block(z, grad_channel(k));
        if (order_ != JetOrder::kHessian) return;
        s2_ = S(-2) * block(y, 0) * s1_;
        for (int k = 0; k < d_; ++k) {
            for (int m = k; m < d_; ++m) {
                const int p = hess_channel(d_, k, m);
                block(y, p) = s2_ * block(z, grad_channel(k)) * block(z, grad_channel(m)) + s1_ * block(z, p);
            }
        }
    }

    // Consumes ybar_ (cotangent of layer l's activations) and fills zbar_.
    void activate_backward(std::size_t l) {
        const MatS& z = z_[l];
        const MatS& y = y_[l];
        zbar_.resize(z.rows(), c_ * n_);
        const auto t = block(y, 0);
        s1_ = S(1) - t.square();
        block(zbar_, 0) = block(ybar_, 0) * s1_;
        if (c_ == 1) return;
        s2_ = S(-2) * t * s1_;
        for (int k = 0; k < d_; ++k) {
            block(zbar_, grad_channel(k)) = block(ybar_, grad_channel(k)) * s1_;
            block(zbar_, 0) += block(ybar_, grad_channel(k)) * s2_ * block(z, grad_channel(k));
        }
        if (order_ != JetOrder::kHessian) return;
        s2p_ = S(-2) * s1_.square() + S(4) * t.square() * s1_;
        for (int k = 0; k < d_; ++k) {
            for (int m = k; m < d_; ++m) {
                const int p = hess_channel(d_, k, m);
                const auto yb = block(ybar_, p);
                const auto zk = block(z, grad_channel(k));
                const auto zm = block(z, grad_channel(m));
                block(zbar_, p) = yb * s1_;
                block(zbar_, 0) += yb * (s2p_ * zk * zm + s2_ * block(z, p));
                if (k == m) {
                    block(zbar_, grad_channel(k)) += S(2) * yb * s2_ * zk;
                } else {
                    block(zbar_, grad_channel(k)) += yb * s2_ * zm;
                    block(zbar_, grad_channel(m)) += yb * s2_ * zk;
                }
            }
        }
    }

    int d_;
    int c_;
    JetOrder order_;
    Eigen::Index n_ = 0;
    std::vector<MatS> w_, dw_;
    std::vector<VecS> b_, db_;
    MatS x_;
    std::vector<MatS> z_;
    std::vector<MatS> y_;
    RowS flat_;
    MatS ybar_;
    MatS zbar_;
    ArrS s1_, s2_, s2p_;
};

}  // namespace detail

/// Arithmetic used inside the batched sweep. Parameters, gradients and loss
/// reductions stay in double either way.
enum class Precision { kDouble, kSingle };

/// Batched forward and reverse sweep of the layer-wise jet recurrence over a
/// fixed point set. Computes exactly what jet2_eval records on a Tape, with
/// one GEMM per layer and chunk. Chunks are processed in a fixed order, so
/// reductions are bit-reproducible.
class BatchJetEvaluator {
public:
    static constexpr Eigen::Index kDefaultChunk = 64;

    BatchJetEvaluator(const NetworkArch& arch, PointSet points, JetOrder order,
                      Eigen::Index chunk = kDefaultChunk, Precision precision = Precision::kDouble)
        : arch_(arch), points_(std::move(points)), order_(order),
          chunk_(std::max<Eigen::Index>(1, chunk)), precision_(precision) {
        arch_.validate();
        if (points_.rows() != arch_.input_dim) {
            throw PropagationError("point set has wrong dimension", static_cast<int>(points_.rows()));
        }
        for (Eigen::Index j = 0; j < points_.cols(); ++j) {
            for (Eigen::Index i = 0; i < points_.rows(); ++i) {
                if (!std::isfinite(points_(i, j))) throw PropagationError("non-finite input", static_cast<int>(i));
            }
        }
        if (precision_ == Precision::kDouble) {
            kd_ = std::make_unique<detail::JetKernel<double>>(arch_, order, chunk_);
        } else {
            ks_ = std::make_unique<detail::JetKernel<float>>(arch_, order, chunk_);
        }
    }

    const PointSet& points() const { return points_; }
    Eigen::Index size() const { return points_.cols(); }
    int channels() const { return num_channels(arch_.input_dim, order_); }
    JetOrder order() const { return order_; }
    Precision precision() const { return precision_; }
    const NetworkArch& arch() const { return arch_; }

    /// C x N jets at every point.
    const Mat& forward(const ParamVector& params) {
        if (kd_) return forward_impl(*kd_, params);
        return forward_impl(*ks_, params);
    }

    const Mat& outputs() const { return out_; }

    JetValue jet(Eigen::Index i) const { return jet_from_column(out_.col(i), arch_.input_dim, channels()); }

    /// Fused sweep: loss value and dL/dtheta for a pointwise loss.
    double value_and_grad(const ParamVector& params, const PointwiseLoss& loss, Vec& grad) {
        if (kd_) return sweep(*kd_, params, loss, grad);
        return sweep(*ks_, params, loss, grad);
    }

    /// dL/dtheta given dL/d(jets) for all points as a C x N matrix.
    Vec backward(const ParamVector& params, const Mat& cotangent) {
        if (cotangent.rows() != channels() || cotangent.cols() != size()) {
            throw InvalidHandle("cotangent shape does not match the jet batch");
        }
        Vec grad;
        value_and_grad(
            params,
            [&](const Mat&, Eigen::Index offset, Mat& cot) {
                cot = cotangent.middleCols(offset, cot.cols());
                return 0.0;
            },
            grad);
        return grad;
    }

    static JetValue jet_from_column(const Eigen::Ref<const Vec>& col, int d, int channels) {
        JetValue v;
        v.value = col[0];
        if (channels > 1) {
            v.grad.resize(d);
            for (int k = 0; k < d; ++k) v.grad[k] = col[grad_channel(k)];
        }
        if (channels > 1 + d) {
            v.hess.resize(d, d);
            for (int k = 0; k < d; ++k)
                for (int m = 0; m < d; ++m) v.hess(k, m) = col[hess_channel(d, k, m)];
        }
        return v;
    }

private:
    template <typename K>
    const Mat& forward_impl(K& kernel, const ParamVector& params) {
        const Eigen::Index N = size();
        kernel.load(params);
        out_.resize(channels(), N);
        for (Eigen::Index b = 0; b < N; b += chunk_) {
            const Eigen::Index n = std::min(chunk_, N - b);
            kernel.forward(points_.middleCols(b, n), chunk_out_);
            out_.middleCols(b, n) = chunk_out_;
        }
        return out_;
    }

    template <typename K>
    double sweep(K& kernel, const ParamVector& params, const PointwiseLoss& loss, Vec& grad) {
        grad.setZero(params.size());
        kernel.load(params);
        double total = 0.0;
        const Eigen::Index N = size();
        for (Eigen::Index b = 0; b < N; b += chunk_) {
            const Eigen::Index n = std::min(chunk_, N - b);
            kernel.forward(points_.middleCols(b, n), chunk_out_);
            cot_.setZero(channels(), n);
            total += loss(chunk_out_, b, cot_);
            kernel.backward(cot_);
        }
        kernel.flush(params, grad);
        return total;
    }

    NetworkArch arch_;
    PointSet points_;
    JetOrder order_;
    Eigen::Index chunk_;
    Precision precision_;
    std::unique_ptr<detail::JetKernel<double>> kd_;
    std::unique_ptr<detail::JetKernel<float>> ks_;
    Mat out_;
    Mat chunk_out_;
    Mat cot_;
};

/// Jets of the network at a batch of points.
inline Mat batch_jets(const NetworkArch& arch, const ParamVector& params, const PointSet& points, JetOrder order) {
    BatchJetEvaluator ev(arch, points, order);
    return ev.forward(params);
}

/// Network values at a batch of points.
inline Vec batch_values(const NetworkArch& arch, const ParamVector& params, const PointSet& points) {
    BatchJetEvaluator ev(arch, points, JetOrder::kValue, 2048);
    return ev.forward(params).row(0).transpose();
}

}  // namespace cpinn
