#include "catch_amalgamated.hpp"

#include <random>

#include "cpinn/autodiff/batch_jet.hpp"
#include "cpinn/autodiff/jet.hpp"

using namespace cpinn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Vec random_point(int d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Vec x(d);
    for (auto& v : x) v = u(rng);
    return x;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("network layout and initialisation") {
    const NetworkArch arch{2, {3, 4}, Activation::kTanh};
    CHECK(param_count(arch) == (2 + 1) * 3 + (3 + 1) * 4 + (4 + 1) * 1);
    const ParamVector p = init_network(arch, 7);
    CHECK(p.size() == param_count(arch));
    CHECK(p.values.allFinite());
    CHECK(init_network(arch, 7).values == p.values);
    CHECK(init_network(arch, 8).values != p.values);

    CHECK_THROWS_AS(init_network(NetworkArch{2, {3, 0}, Activation::kTanh}, 1), InvalidArchitecture);
    CHECK_THROWS_AS(init_network(NetworkArch{2, {}, Activation::kTanh}, 1), InvalidArchitecture);
    CHECK_THROWS_AS(init_network(NetworkArch{0, {3}, Activation::kTanh}, 1), InvalidArchitecture);
}

TEST_CASE("jet2_eval matches finite differences") {
    std::mt19937_64 rng(3);
    for (int d : {1, 2, 3, 5}) {
        const NetworkArch arch{d, {8, 8}, Activation::kTanh};
        for (int net = 0; net < 4; ++net) {
            const ParamVector p = init_network(arch, 100 + static_cast<std::uint64_t>(net));
            const Vec x = random_point(d, rng);
            Tape tape;
            const JetValue j = to_values(jet2_eval(arch, p, x, tape));
            const JetValue fd = finite_diff_jet([&](const Vec& y) { return network_value(p, y); }, x, 1e-4);
            CHECK_THAT(j.value, WithinAbs(network_value(p, x), 1e-14));
            for (int k = 0; k < d; ++k) CHECK(rel_err(j.grad[k], fd.grad[k]) < 1e-7);
            for (int k = 0; k < d; ++k)
                for (int m = 0; m < d; ++m) CHECK(rel_err(j.hess(k, m), fd.hess(k, m)) < 1e-5);
            CHECK(j.hess.isApprox(j.hess.transpose(), 0.0));
        }
    }
}

TEST_CASE("single-neuron network has a closed-form jet") {
    const NetworkArch arch{1, {1}, Activation::kTanh};
    ParamVector p = init_network(arch, 0);
    p.weights(0)(0, 0) = 0.7;
    p.biases(0)[0] = -0.2;
    p.weights(1)(0, 0) = 1.5;
    p.biases(1)[0] = 0.1;
    Vec x(1);
    x << 0.3;
    Tape tape;
    const JetValue j = to_values(jet2_eval(arch, p, x, tape));
    const double t = std::tanh(0.7 * 0.3 - 0.2);
    CHECK_THAT(j.value, WithinAbs(1.5 * t + 0.1, 1e-15));
    CHECK_THAT(j.grad[0], WithinAbs(1.5 * 0.7 * (1 - t * t), 1e-15));
    CHECK_THAT(j.hess(0, 0), WithinAbs(1.5 * 0.49 * (-2 * t * (1 - t * t)), 1e-15));
}

TEST_CASE("loss_backward matches finite differences in the parameters") {
    const NetworkArch arch{2, {5, 5}, Activation::kTanh};
    const ParamVector p = init_network(arch, 11);
    Vec x(2);
    x << 0.4, -0.3;

    auto loss_of = [&](const ParamVector& q) {
        Tape tape;
        const Jet2 j = jet2_eval(arch, q, x, tape);
        const Var l = square(j.h(0, 0) + 2.0 * j.h(0, 1) - j.grad[1] + 0.5 * j.value);
        return std::make_pair(l.value(), loss_backward(tape, l));
    };
    const auto [l0, g] = loss_of(p);
    (void)l0;
    CHECK(g.size() == p.size());
    for (Eigen::Index i = 0; i < p.size(); i += 3) {
        ParamVector a = p, b = p;
        const double h = 1e-5;
        a.values[i] += h;
        b.values[i] -= h;
        const double fd = (loss_of(a).first - loss_of(b).first) / (2 * h);
        CHECK(std::abs(g[i] - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
    }
}

TEST_CASE("tape rejects mismatched parameter rebinding") {
    const NetworkArch arch{2, {3}, Activation::kTanh};
    const ParamVector p = init_network(arch, 1);
    ParamVector q = p;
    q.values[0] += 1.0;
    Tape tape;
    Vec x = Vec::Zero(2);
    jet2_eval(arch, p, x, tape);
    CHECK_NOTHROW(jet2_eval(arch, p, x, tape));
    CHECK_THROWS_AS(jet2_eval(arch, q, x, tape), InvalidHandle);
}

TEST_CASE("jet2_eval rejects wrong dimension and non-finite input") {
    const NetworkArch arch{2, {3}, Activation::kTanh};
    const ParamVector p = init_network(arch, 1);
    Tape tape;
    CHECK_THROWS_AS(jet2_eval(arch, p, Vec::Zero(3), tape), PropagationError);
    Vec bad(2);
    bad << 0.0, std::nan("");
    Tape t2;
    CHECK_THROWS_AS(jet2_eval(arch, p, bad, t2), PropagationError);
}

TEST_CASE("batched jets agree with the tape") {
    std::mt19937_64 rng(5);
    for (int d : {2, 3}) {
        const NetworkArch arch{d, {6, 7}, Activation::kTanh};
        const ParamVector p = init_network(arch, 21);
        PointSet pts(d, 70);
        for (Eigen::Index j = 0; j < pts.cols(); ++j) pts.col(j) = random_point(d, rng);
        BatchJetEvaluator ev(arch, pts, JetOrder::kHessian, 16);
        ev.forward(p);
        for (Eigen::Index j = 0; j < pts.cols(); j += 7) {
            Tape tape;
            const JetValue ref = to_values(jet2_eval(arch, p, pts.col(j), tape));
            const JetValue got = ev.jet(j);
            CHECK_THAT(got.value, WithinAbs(ref.value, 1e-13));
            CHECK((got.grad - ref.grad).cwiseAbs().maxCoeff() < 1e-13);
            CHECK((got.hess - ref.hess).cwiseAbs().maxCoeff() < 1e-13);
        }
    }
}

TEST_CASE("batched value_and_grad matches the tape gradient") {
    const NetworkArch arch{2, {6, 6}, Activation::kTanh};
    const ParamVector p = init_network(arch, 4);
    std::mt19937_64 rng(9);
    PointSet pts(2, 37);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) pts.col(j) = random_point(2, rng);

    // Loss: sum over points of (u_11 + u_22 - u)^2.
    BatchJetEvaluator ev(arch, pts, JetOrder::kHessian, 8);
    Vec grad;
    const double v = ev.value_and_grad(
        p,
        [](const Mat& jets, Eigen::Index, Mat& cot) {
            const int d = 2;
            const Vec r = (jets.row(hess_channel(d, 0, 0)) + jets.row(hess_channel(d, 1, 1)) - jets.row(0)).transpose();
            cot.setZero();
            cot.row(hess_channel(d, 0, 0)) = 2.0 * r.transpose();
            cot.row(hess_channel(d, 1, 1)) = 2.0 * r.transpose();
            cot.row(0) = -2.0 * r.transpose();
            return r.squaredNorm();
        },
        grad);

    Tape tape;
    std::vector<Var> terms;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        const Jet2 jet = jet2_eval(arch, p, pts.col(j), tape);
        terms.push_back(square(jet.h(0, 0) + jet.h(1, 1) - jet.value));
    }
    const Var loss = sum(terms);
    CHECK_THAT(v, WithinRel(loss.value(), 1e-12));
    CHECK((grad - loss_backward(tape, loss)).cwiseAbs().maxCoeff() < 1e-11 * std::max(1.0, grad.norm()));
}

TEST_CASE("single-precision kernel tracks double precision") {
    const NetworkArch arch{2, {16, 16}, Activation::kTanh};
    const ParamVector p = init_network(arch, 2);
    std::mt19937_64 rng(1);
    PointSet pts(2, 50);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) pts.col(j) = random_point(2, rng);
    BatchJetEvaluator dbl(arch, pts, JetOrder::kHessian, 64, Precision::kDouble);
    BatchJetEvaluator sgl(arch, pts, JetOrder::kHessian, 64, Precision::kSingle);
    const Mat a = dbl.forward(p);
    const Mat b = sgl.forward(p);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, a.cwiseAbs().maxCoeff()));
}

TEST_CASE("channel layout") {
    CHECK(num_channels(3, JetOrder::kValue) == 1);
    CHECK(num_channels(3, JetOrder::kGradient) == 4);
    CHECK(num_channels(3, JetOrder::kHessian) == 10);
    CHECK(hess_channel(3, 0, 0) == 4);
    CHECK(hess_channel(3, 1, 0) == hess_channel(3, 0, 1));
    CHECK(hess_channel(3, 2, 2) == 9);
}
