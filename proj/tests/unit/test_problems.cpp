#include "catch_amalgamated.hpp"

#include <numbers>
#include <set>

#include "cpinn/problems/expression.hpp"
#include "cpinn/problems/registry.hpp"

using namespace cpinn;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

TEST_CASE("registry lists every benchmark and rejects unknown names") {
    const auto names = problem_names();
    CHECK(names.size() == 12);
    CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());
    for (const auto& n : names) {
        const ProblemSpec p = get_problem(n);
        CHECK(p.name == n);
        CHECK(p.dim() == p.domain.dim);
        CHECK(static_cast<bool>(p.source));
    }
    CHECK_THROWS_AS(get_problem("ex9.9"), RegistryError);
    CHECK_THROWS_WITH(get_problem("ex9.9"), ContainsSubstring("ex4.1-smooth") && ContainsSubstring("ex5.1-ot"));
}

TEST_CASE("problem classes and dimensions") {
    CHECK(get_problem("ex4.3-5d").dim() == 5);
    CHECK(get_problem("ex4.3-20d").dim() == 20);
    CHECK(get_problem("ex4.3-ellipsoid").dim() == 3);
    CHECK(get_problem("ex4.5-hjb").problem_class == ProblemClass::kHJB);
    CHECK(get_problem("ex4.5-hjb").hjb->controls.size() == 2);
    CHECK(get_problem("ex4.6-ma").problem_class == ProblemClass::kMongeAmpere);
    CHECK(get_problem("ex5.1-ot").problem_class == ProblemClass::kTransport);
    CHECK_FALSE(get_problem("ex4.4-continuous").has_exact());
}

TEST_CASE("exact-solution jets agree with finite differences of the values") {
    for (const auto& name : problem_names()) {
        const ProblemSpec p = get_problem(name);
        if (!p.has_exact()) continue;
        const PointSet pts = sample_interior(p.domain, 30, 17, p.singular);
        const ScalarField value = [&p](const Vec& x) { return p.exact_value(x); };
        int checked = 0;
        for (Eigen::Index j = 0; j < pts.cols(); ++j) {
            const Vec x = pts.col(j);
            // Stay clear of the kinks of the piecewise solutions.
            if (x.cwiseAbs().minCoeff() < 0.05) continue;
            if (x.size() >= 2 && std::abs(x[0] - x[1]) < 0.05) continue;
            const JetValue e = p.exact(x);
            const JetValue fd = finite_diff_jet(value, x, 1e-4);
            const double scale = std::max(1.0, e.hess.cwiseAbs().maxCoeff());
            INFO(name << " at " << x.transpose());
            CHECK((e.grad - fd.grad).cwiseAbs().maxCoeff() < 1e-6 * scale);
            CHECK((e.hess - fd.hess).cwiseAbs().maxCoeff() < 1e-4 * scale);
            ++checked;
        }
        CHECK(checked > 0);
    }
}

TEST_CASE("ex4.4 data: f = 2, zero boundary") {
    for (const char* n : {"ex4.4-continuous", "ex4.4-discontinuous"}) {
        const ProblemSpec p = get_problem(n);
        const PointSet pts = sample_interior(p.domain, 10, 1, p.singular);
        for (Eigen::Index j = 0; j < pts.cols(); ++j) CHECK(p.source(pts.col(j)) == 2.0);
        const PointSet bd = sample_boundary(p.domain, 10, 1, p.singular);
        for (Eigen::Index j = 0; j < bd.cols(); ++j) CHECK(p.boundary(bd.col(j)) == 0.0);
    }
}

TEST_CASE("Monge-Ampere exact solution at the origin") {
    const ProblemSpec p = get_problem("ex4.6-ma");
    const JetValue j = p.exact(Vec::Zero(2));
    CHECK(j.hess.isApprox(Mat::Identity(2, 2)));
    CHECK_THAT(p.source(Vec::Zero(2)), WithinAbs(1.0, 1e-15));
}

TEST_CASE("HJB exact solution: both controls vanish") {
    const ProblemSpec p = get_problem("ex4.5-hjb");
    const PointSet pts = sample_interior(p.domain, 50, 2, p.singular);
    for (Eigen::Index j = 0; j < pts.cols(); ++j) {
        const Vec x = pts.col(j);
        CHECK(std::abs(hjb_residual_value(*p.hjb, x, p.exact(x))) < 1e-12);
    }
}

TEST_CASE("interior sampling stays inside and is seeded") {
    for (const char* n : {"ex4.1-singular", "ex4.3-ellipsoid", "ex4.3-5d", "ex4.1-smooth"}) {
        const ProblemSpec p = get_problem(n);
        const PointSet a = sample_interior(p.domain, 500, 4, p.singular);
        CHECK(a.cols() == 500);
        for (Eigen::Index j = 0; j < a.cols(); ++j) CHECK(p.domain.level(a.col(j)) < 1.0 + 1e-9);
        CHECK(a == sample_interior(p.domain, 500, 4, p.singular));
        CHECK(a != sample_interior(p.domain, 500, 5, p.singular));
    }
}

TEST_CASE("boundary sampling lies on the boundary") {
    for (const char* n : {"ex4.1-singular", "ex4.3-ellipsoid", "ex4.3-5d", "ex4.1-smooth"}) {
        const ProblemSpec p = get_problem(n);
        const PointSet b = sample_boundary(p.domain, 300, 4, p.singular);
        CHECK(b.cols() == 300);
        for (Eigen::Index j = 0; j < b.cols(); ++j) CHECK_THAT(p.domain.level(b.col(j)), WithinAbs(1.0, 1e-9));
    }
}

TEST_CASE("evaluation grid") {
    const ProblemSpec p = get_problem("ex4.1-smooth");
    const PointSet g = eval_grid(p.domain, 200);
    CHECK(g.cols() == 200 * 200);
    CHECK(g(0, 0) == -2.0);
    CHECK(g(0, 199) == 2.0);
    CHECK(g(1, 200) == g(1, 201));
    CHECK(g(1, g.cols() - 1) == 2.0);
    CHECK_THROWS_AS(eval_grid(p.domain, 1), GeometryError);

    const PointSet disc = eval_grid(get_problem("ex4.1-singular").domain, 51);
    CHECK(disc.cols() < 51 * 51);
    CHECK(disc.cols() > 0.75 * 51 * 51);
    CHECK(eval_grid(get_problem("ex4.3-20d").domain, 20).cols() == 400);
}

TEST_CASE("singular sets are jittered") {
    PointSet pts(2, 2);
    pts << 0.0, 0.5, 0.3, 0.5;
    SingularSet s;
    s.axes = true;
    s.diagonal = true;
    jitter_singular(pts, s);
    CHECK(pts(0, 0) != 0.0);
    CHECK(pts(0, 1) != pts(1, 1));
}

TEST_CASE("expression parser") {
    Vec x(2);
    x << 0.5, -2.0;
    CHECK_THAT(Expression::parse("x1 + 2*x2", 2)(x), WithinAbs(-3.5, 1e-15));
    CHECK_THAT(Expression::parse("-x2^2", 2)(x), WithinAbs(-4.0, 1e-15));
    CHECK_THAT(Expression::parse("2^3^2", 2)(x), WithinAbs(512.0, 1e-12));
    CHECK_THAT(Expression::parse("sin(pi*x1) + exp(0)", 2)(x), WithinAbs(2.0, 1e-15));
    CHECK_THAT(Expression::parse("abs(x2)/sqrt(4) - sign(x2)", 2)(x), WithinAbs(2.0, 1e-15));
    CHECK(Expression::parse("sign(0)", 2)(x) == 1.0);
    CHECK_THAT(Expression::parse("cos(e - e)", 2)(x), WithinAbs(1.0, 1e-15));

    CHECK_THROWS_AS(Expression::parse("x3", 2), ConfigError);
    CHECK_THROWS_AS(Expression::parse("1 +", 2), ConfigError);
    CHECK_THROWS_AS(Expression::parse("foo(1)", 2), ConfigError);
    CHECK_THROWS_WITH(Expression::parse("(1", 2, 7), ContainsSubstring("line 7"));
}
