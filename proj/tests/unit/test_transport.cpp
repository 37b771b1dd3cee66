#include "catch_amalgamated.hpp"

#include <numbers>

#include "cpinn/transport.hpp"

using namespace cpinn;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

/// One-hidden-layer tanh potential approximating
///   phi(x) = quad |x|^2 / 2 + shift . x
/// through small-argument expansions of tanh; error O(a^2).
PotentialState affine_map_potential(double quad, const Vec& shift) {
    const int d = static_cast<int>(shift.size());
    const double a = 1e-3, b = 0.5, eps = 1e-3;
    const NetworkArch arch{d, {2 * d + 1}, Activation::kTanh};
    ParamVector p = init_network(arch, 0);
    p.values.setZero();
    auto W0 = p.weights(0);
    auto b0 = p.biases(0);
    auto W1 = p.weights(1);
    const double t = std::tanh(b), sech2 = 1.0 - t * t;
    // tanh(b + a z) + tanh(b - a z) = 2 tanh b - 2 a^2 z^2 sech^2 b tanh b + O(a^4)
    const double c = -quad / (4.0 * a * a * sech2 * t);
    for (int k = 0; k < d; ++k) {
        W0(2 * k, k) = a;
        W0(2 * k + 1, k) = -a;
        b0[2 * k] = b;
        b0[2 * k + 1] = b;
        W1(0, 2 * k) = c;
        W1(0, 2 * k + 1) = c;
    }
    const double s = shift.norm();
    if (s > 0.0) {
        W0.row(2 * d) = eps * shift.transpose() / s;
        W1(0, 2 * d) = s / eps;
    }
    PotentialState st;
    st.arch = arch;
    st.params = p;
    st.anchor = Vec::Zero(d);
    return st;
}

Mat jets_of(const JetField& f, const PointSet& pts) {
    const int d = static_cast<int>(pts.rows());
    Mat J(num_channels(d, JetOrder::kHessian), pts.cols());
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const JetValue v = f(pts.col(i));
        J(0, i) = v.value;
        for (int k = 0; k < d; ++k) {
            J(grad_channel(k), i) = v.grad[k];
            for (int m = k; m < d; ++m) J(hess_channel(d, k, m), i) = v.hess(k, m);
        }
    }
    return J;
}

TransportProblem uniform_square() {
    TransportProblem p = example51_fields();
    p.mu = [](const Vec&) { return 1.0; };
    p.analytic_potential = nullptr;
    return p;
}

}  // namespace

TEST_CASE("profile function values") {
    constexpr double pi = std::numbers::pi;
    CHECK_THAT(ex51::q(0.0), WithinAbs(1.0 / (256 * pi * pi * pi) + 1.0 / (32 * pi), 1e-15));
    CHECK(ex51::dq(0.5) == 0.0);
    CHECK(ex51::dq(-0.5) == 0.0);
}

TEST_CASE("source density integrates to one and is positive") {
    const TransportProblem p = example51_fields();
    CHECK_THAT(box_integral(p.mu, p.source, 400000, 3), WithinAbs(1.0, 5e-3));
    const PointSet grid = eval_grid(p.source, 101);
    for (const auto& x : grid.colwise()) CHECK(p.mu(x) > 0.0);
    CHECK_NOTHROW(check_mass_balance(p));
}

TEST_CASE("source density is not peaked at the centre") {
    const TransportProblem p = example51_fields();
    const double centre = p.mu(Vec::Zero(2));
    Vec mid(2);
    mid << 0.5, 0.0;
    CHECK_THAT(centre, WithinAbs(0.558, 1e-3));
    CHECK(p.mu(mid) > centre);
}

TEST_CASE("analytic potential satisfies the transport equation") {
    const TransportProblem p = example51_fields();
    const PointSet pts = sample_interior(p.source, 500, 4);
    const Mat jets = jets_of(p.analytic_potential, pts);
    CHECK(ot_mean_residual(jets, p, pts) < 1e-5);
    const SurrogateLinearPDE s = ot_linearize(jets, p, pts);
    CHECK(s.residuals(jets).cwiseAbs().maxCoeff() < 1e-5);
    // The map sends the source box onto itself.
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Vec y = p.analytic_potential(pts.col(i)).grad;
        CHECK((y.array().abs() <= 0.5 + 1e-12).all());
    }
}

TEST_CASE("identity is the fixed point for uniform densities") {
    const TransportProblem p = uniform_square();
    const PointSet pts = sample_interior(p.source, 50, 2);
    const JetField id = [](const Vec& x) {
        JetValue j;
        j.value = 0.5 * x.squaredNorm();
        j.grad = x;
        j.hess = Mat::Identity(2, 2);
        return j;
    };
    const Mat jets = jets_of(id, pts);
    const SurrogateLinearPDE s = ot_linearize(jets, p, pts);
    CHECK(ot_mean_residual(jets, p, pts) == 0.0);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        CHECK(s.coefficients[static_cast<std::size_t>(i)].A == Mat::Identity(2, 2));
        CHECK(s.source[i] == 2.0);
    }

    // Adding a constant to the potential changes nothing.
    Mat shifted = jets;
    shifted.row(0).array() += 4.0;
    const SurrogateLinearPDE t = ot_linearize(shifted, p, pts);
    CHECK(t.source == s.source);
}

TEST_CASE("mass balance violations are rejected") {
    TransportProblem p = uniform_square();
    p.mu = [](const Vec&) { return 1.1; };
    CHECK_THROWS_AS(check_mass_balance(p), MassBalanceError);
    p.mu = [](const Vec&) { return 1.005; };
    CHECK_NOTHROW(check_mass_balance(p));
}

TEST_CASE("map evaluation for affine potentials") {
    Vec shift(2);
    shift << 0.1, -0.2;
    const PotentialState s = affine_map_potential(1.0, shift);
    const PointSet pts = sample_interior(Domain::hypercube(2, -0.5, 0.5), 40, 1);
    const Mat T = transport_map(s, pts);
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Vec expect = pts.col(i) + shift;
        CHECK((T.col(i) - expect).norm() < 1e-5);
        CHECK((transport_map(s, Vec(pts.col(i))) - T.col(i)).norm() < 1e-9);
    }
    const VectorField ref = [&shift](const Vec& x) { return Vec(x + shift); };
    CHECK(map_error(s, ref, Domain::hypercube(2, -0.5, 0.5), 20).linf < 1e-5);
}

TEST_CASE("normalization pins the anchor value without moving the map") {
    PotentialState s = affine_map_potential(1.0, Vec::Zero(2));
    s.anchor_value = 0.25;
    const PointSet pts = sample_interior(Domain::hypercube(2, -0.5, 0.5), 10, 1);
    const Mat before = transport_map(s, pts);
    normalize_potential(s);
    CHECK_THAT(batch_values(s.arch, s.params, s.anchor)[0], WithinAbs(0.25, 1e-12));
    CHECK((transport_map(s, pts) - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pushforward of the identity under a uniform source") {
    const TransportProblem p = uniform_square();
    const PotentialState s = affine_map_potential(1.0, Vec::Zero(2));
    const PushforwardReport r = pushforward_check(s, p, 100000, 5);
    CHECK(r.tv <= 0.02);
    CHECK(r.exit_fraction == 0.0);
    CHECK_FALSE(r.boundary_failure);
    CHECK_THAT(r.histogram.sum(), WithinAbs(1.0, 1e-12));
}

TEST_CASE("pushforward detects collapsed and escaping maps") {
    const TransportProblem p = uniform_square();
    Vec c(2);
    c << 0.05, 0.05;
    const PushforwardReport inside = pushforward_check(affine_map_potential(0.0, c), p, 20000, 1);
    CHECK_THAT(inside.tv, WithinAbs(0.99, 1e-9));
    CHECK_FALSE(inside.boundary_failure);

    const PushforwardReport outside = pushforward_check(affine_map_potential(0.0, Vec::Constant(2, 2.0)), p, 20000, 1);
    CHECK_THAT(outside.tv, WithinAbs(1.0, 1e-12));
    CHECK(outside.exit_fraction == 1.0);
    CHECK(outside.boundary_failure);
}

TEST_CASE("second boundary penalty vanishes for maps inside the box") {
    const Domain box = Domain::hypercube(2, -0.5, 0.5);
    const PointwiseLoss loss = detail::second_boundary_loss(box, 2, 1.0);
    Mat jets = Mat::Zero(3, 2);
    jets(1, 0) = 0.3;
    jets(2, 1) = 0.7;
    Mat cot = Mat::Zero(3, 2);
    // Only the second point is outside, by 0.2 in y2.
    CHECK_THAT(loss(jets, 0, cot), WithinAbs(0.5 * 0.04, 1e-15));
    CHECK_THAT(cot(2, 1), WithinAbs(0.2, 1e-15));
    CHECK(cot(1, 0) == 0.0);
}

TEST_CASE("transport solver rejects bad setups") {
    const TransportProblem p = example51_fields();
    const NetworkArch arch3{3, {4}, Activation::kTanh};
    CHECK_THROWS_AS(solve_transport(p, arch3, OuterConfig{}, LossConfig{}, TrainConfig{}), InvalidArchitecture);
    TransportProblem unbalanced = p;
    unbalanced.mu = [](const Vec&) { return 2.0; };
    const NetworkArch arch{2, {4}, Activation::kTanh};
    CHECK_THROWS_AS(solve_transport(unbalanced, arch, OuterConfig{}, LossConfig{}, TrainConfig{}), MassBalanceError);
}

TEST_CASE("short transport run normalizes the potential") {
    const TransportProblem p = example51_fields();
    const NetworkArch arch{2, {8}, Activation::kTanh};
    LossConfig cfg;
    cfg.n_interior = 200;
    cfg.n_boundary = 80;
    TrainConfig tc;
    tc.eval_every = 10;
    tc.eval_resolution = 10;
    tc.timing = false;
    OuterConfig oc;
    tc.lr = 1e-2;
    oc.warmup_epochs = 300;
    oc.outer_iterations = 1;
    oc.inner_epochs = 10;
    const TransportResult r = solve_transport(p, arch, oc, cfg, tc);
    CHECK_THAT(batch_values(arch, r.state.params, r.state.anchor)[0], WithinAbs(r.state.anchor_value, 1e-12));
    CHECK(r.train.extra["outer"].size() == 1);
    CHECK(r.train.history.back().epoch == 310);
}
