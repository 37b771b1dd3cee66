#include "catch_amalgamated.hpp"

#include <random>

#include "cpinn/cordes.hpp"
#include "cpinn/problems/registry.hpp"

using namespace cpinn;
using Catch::Matchers::WithinAbs;

namespace {

Mat random_spd(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    Mat B(d, d);
    for (auto& v : B.reshaped()) v = g(rng);
    return B * B.transpose() + 0.1 * Mat::Identity(d, d);
}

}  // namespace

TEST_CASE("cordes_ratio examples") {
    CHECK_THAT(cordes_ratio(Mat::Identity(2, 2)), WithinAbs(2.0, 1e-15));
    CHECK_THAT(cordes_ratio(Mat::Identity(5, 5)), WithinAbs(5.0, 1e-15));
    Mat A(2, 2);
    A << 1, 0, 0, 3;
    CHECK_THAT(cordes_ratio(A), WithinAbs(16.0 / 10.0, 1e-15));
    CHECK_THROWS_AS(cordes_ratio(Mat::Zero(2, 2)), DegenerateCoefficient);
}

TEST_CASE("cordes_ratio is scale invariant and bounded by d") {
    std::mt19937_64 rng(1);
    for (int d : {2, 3, 5}) {
        for (int i = 0; i < 50; ++i) {
            const Mat A = random_spd(d, rng);
            const double r = cordes_ratio(A);
            CHECK(r <= d + 1e-12);
            CHECK(r >= 1.0 - 1e-12);
            CHECK_THAT(cordes_ratio(3.7 * A), WithinAbs(r, 1e-12));
        }
    }
}

TEST_CASE("multiplier") {
    CHECK_THAT(multiplier(Mat::Identity(2, 2), 0.0), WithinAbs(1.0, 1e-15));
    CHECK_THAT(multiplier(Mat::Identity(3, 3), 0.0), WithinAbs(1.0, 1e-15));
    CHECK_THAT(multiplier(2.0 * Mat::Identity(2, 2), 0.0), WithinAbs(0.5, 1e-15));
    CHECK(multiplier(Mat::Zero(2, 2), 1e-8) == 0.0);
}

TEST_CASE("contraction gap is d minus the ratio") {
    std::mt19937_64 rng(2);
    for (int d : {2, 3, 5}) {
        for (int i = 0; i < 100; ++i) {
            const Mat A = random_spd(d, rng);
            const ContractionGap g = contraction_gap(A);
            CHECK_THAT(g.achieved, WithinAbs(d - cordes_ratio(A), 1e-12));
            CHECK(g.achieved <= g.bound + 1e-12);
            if (cordes_ratio(A) > d - 1) CHECK(g.achieved < 1.0);
        }
    }
}

TEST_CASE("check_cordes on the cube fields reproduces the exact rationals") {
    for (auto [name, num, eps] : {std::tuple{"ex4.3-5d", 125.0 / 29.0, 9.0 / 29.0},
                                  std::tuple{"ex4.3-20d", 8000.0 / 419.0, 39.0 / 419.0}}) {
        const ProblemSpec spec = get_problem(name);
        const PointSet pts = sample_interior(spec.domain, 200, 3, spec.singular);
        const CordesReport r = check_cordes(spec.coefficients, pts);
        CHECK(r.cordes_case == CordesCase::kPrincipalOnly);
        CHECK_THAT(r.worst_ratio, WithinAbs(num, 1e-12));
        CHECK_THAT(r.epsilon, WithinAbs(eps, 1e-12));
        CHECK(r.valid());
    }
}

TEST_CASE("check_cordes flags a failing field") {
    // Strongly anisotropic in 3D: (1 + 1 + 100)^2 / (1 + 1 + 10000) < 2.
    const CoefficientField f = [](const Vec&) {
        CoefficientSample s;
        s.A = Vec((Vec(3) << 1, 1, 100).finished()).asDiagonal();
        s.b = Vec::Zero(3);
        return s;
    };
    const PointSet pts = Mat::Zero(3, 4);
    const CordesReport r = check_cordes(f, pts);
    CHECK_FALSE(r.valid());
    CHECK(r.epsilon < 0.0);
    CHECK_THROWS_AS(check_cordes(f, PointSet(3, 0)), GeometryError);
}

TEST_CASE("near-violation flag") {
    const CoefficientField f = [](const Vec&) {
        CoefficientSample s;
        s.A = Vec((Vec(2) << 1.0, 30.0).finished()).asDiagonal();
        s.b = Vec::Zero(2);
        return s;
    };
    const CordesReport r = check_cordes(f, PointSet(Mat::Zero(2, 1)));
    // ratio = 961/901, epsilon ~ 0.067 in 2D.
    CHECK(r.valid());
    CHECK_FALSE(r.near_violation());
    const CoefficientField g = [](const Vec&) {
        CoefficientSample s;
        s.A = Vec((Vec(2) << 1.0, 50.0).finished()).asDiagonal();
        s.b = Vec::Zero(2);
        return s;
    };
    CHECK(check_cordes(g, PointSet(Mat::Zero(2, 1))).near_violation());
}

TEST_CASE("lower-order case with an auxiliary multiplier") {
    const CoefficientField f = [](const Vec&) {
        CoefficientSample s;
        s.A = Mat::Identity(2, 2);
        s.b = Vec::Zero(2);
        s.c = 1.0;
        return s;
    };
    const PointSet pts = Mat::Zero(2, 1);
    const CordesReport principal = check_cordes(f, pts);
    CHECK(principal.cordes_case == CordesCase::kPrincipalOnly);
    const CordesReport lower = check_cordes(f, pts, 1.0);
    CHECK(lower.cordes_case == CordesCase::kWithLowerOrder);
    // (2 + 1)^2 / (2 + 0 + 1) = 3 -> epsilon = 3 - 2 = 1.
    CHECK_THAT(lower.epsilon, WithinAbs(1.0, 1e-12));
    CHECK_THROWS_AS(check_cordes(f, pts, 0.0), DegenerateCoefficient);
}
