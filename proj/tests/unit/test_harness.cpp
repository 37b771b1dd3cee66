#include "catch_amalgamated.hpp"

#include <filesystem>
#include <fstream>

#include "cpinn/harness/fd.hpp"
#include "cpinn/harness/run.hpp"

using namespace cpinn;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("cpinn_unit_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cells.push_back(c);
        rows.push_back(cells);
    }
    return rows;
}

double fd_error(const ProblemSpec& p, int n) {
    const FdField fd = fd_reference_solve(p, n);
    double e = 0.0;
    for (Eigen::Index i = 0; i < fd.values.size(); ++i) {
        e = std::max(e, std::abs(fd.values[i] - p.exact_value(fd.nodes.col(i))));
    }
    return e;
}

const char* kMixedCustom = R"cfg(
[custom]
dim = 2
domain = "rectangle"
lo = [0, 0]
hi = [1, 1]
a11 = "2"
a12 = "0.5"
a22 = "1"
f = "exp(x2) * (cos(x1) - sin(x1))"
exact = "sin(x1) * exp(x2)"
)cfg";

}  // namespace

TEST_CASE("config parsing reports the offending line") {
    CHECK_THROWS_WITH(ConfigDoc::parse("problem = \"ex4.1-smooth\"\nepochs 5\n"), ContainsSubstring("line 2"));
    CHECK_THROWS_WITH(ConfigDoc::parse("a = 1\na = 2\n"), ContainsSubstring("duplicate"));
    CHECK_THROWS_WITH(ConfigDoc::parse("[network\n"), ContainsSubstring("line 1"));
    CHECK_THROWS_WITH(parse_run_config(ConfigDoc::parse("problem = \"ex4.1-smooth\"\n\nfoo = 3\n")),
                      ContainsSubstring("line 3") && ContainsSubstring("foo"));
    CHECK_THROWS_AS(parse_run_config(ConfigDoc::parse("problem = \"nope\"\n")), RegistryError);
    CHECK_THROWS_WITH(parse_run_config(ConfigDoc::parse("problem = \"ex4.1-smooth\"\nmode = \"fast\"\n")),
                      ContainsSubstring("line 2"));
    CHECK_THROWS_AS(parse_run_config(ConfigDoc::parse("problem = \"ex4.1-smooth\"\n[network]\nhidden = [4, 0]\n")),
                    InvalidArchitecture);
    CHECK_THROWS_AS(parse_run_config(ConfigDoc::parse("problem = \"ex4.1-smooth\"\n[loss]\nw_bc = 0\n")),
                    ConfigError);
}

TEST_CASE("config values and defaults") {
    const RunConfig rc = parse_run_config(ConfigDoc::parse(R"(
problem = "ex4.3-5d"   # comment
mode = "both"
epochs = 100
precision = "double"
[network]
hidden = [16, 8]
[loss]
w_bc = 10
[landscape]
grid = 5
)"));
    CHECK(rc.problem == "ex4.3-5d");
    CHECK(rc.mode == RunMode::kBoth);
    CHECK(rc.train.epochs == 100);
    CHECK(rc.train.precision == Precision::kDouble);
    CHECK(rc.arch.input_dim == 5);
    CHECK(rc.arch.hidden_widths == std::vector<int>{16, 8});
    CHECK(rc.loss.w_bc == 10.0);
    CHECK(rc.loss.n_interior == 10000);
    CHECK(rc.train.lr == 3e-4);
    REQUIRE(rc.landscape.has_value());
    CHECK(rc.landscape->grid == 5);
    CHECK(rc.output == "runs/ex4.3-5d");
}

TEST_CASE("custom problem definitions") {
    const RunConfig rc = parse_run_config(ConfigDoc::parse(kMixedCustom));
    const ProblemSpec p = rc.spec();
    CHECK(p.name == "custom");
    CHECK(p.dim() == 2);
    Vec x(2);
    x << 0.3, 0.6;
    CHECK(p.coefficients(x).A(0, 1) == 0.5);
    CHECK_THAT(p.exact(x).hess(0, 0), WithinAbs(-std::sin(0.3) * std::exp(0.6), 1e-6));
    CHECK_THROWS_WITH(parse_run_config(ConfigDoc::parse("[custom]\ndim = 2\nlo = [0, 0]\nhi = [1, 1]\nf = \"x3\"\ng = \"0\"\n")),
                      ContainsSubstring("line 5"));
    CHECK_THROWS_AS(parse_run_config(ConfigDoc::parse("[custom]\ndim = 2\nf = \"1\"\n")), ConfigError);
}

TEST_CASE("finite differences converge at second order") {
    const ProblemSpec p = parse_run_config(ConfigDoc::parse(kMixedCustom)).spec();
    const double e1 = fd_error(p, 16), e2 = fd_error(p, 32);
    CHECK(e2 < 1e-4);
    CHECK(std::log2(e1 / e2) > 1.8);
    CHECK(fd_reference_solve(p, 16).residual < 1e-10);
}

TEST_CASE("finite differences on a benchmark with a known solution") {
    const ProblemSpec p = get_problem("ex4.2-continuous");
    const FdField fd = fd_reference_solve(p, 128);
    Vec exact(fd.values.size());
    for (Eigen::Index i = 0; i < exact.size(); ++i) exact[i] = p.exact_value(fd.nodes.col(i));
    CHECK(errors_l2_linf(fd.values, exact).l2 <= 1e-3);
}

TEST_CASE("finite-difference references for the problems without exact solutions") {
    for (const char* name : {"ex4.4-continuous", "ex4.4-discontinuous"}) {
        const ProblemSpec p = get_problem(name);
        const FdField a = fd_reference_solve(p, 128);
        const FdField b = fd_reference_solve(p, 256);
        // Nodes of the coarse grid are every other node of the fine grid.
        Vec fine(a.values.size());
        for (int j = 0; j <= 128; ++j)
            for (int i = 0; i <= 128; ++i) fine[j * 129 + i] = b.values[(2 * j) * 257 + 2 * i];
        INFO(name);
        CHECK(relative_l2(a.values, fine) <= 1e-3);
        CHECK(a.values.maxCoeff() <= 1e-12);  // f = 2 > 0 with zero data gives a non-positive solution
    }
    CHECK_THROWS_AS(fd_reference_solve(get_problem("ex4.1-singular"), 16), GeometryError);
    CHECK_THROWS_AS(fd_reference_solve(get_problem("ex4.6-ma"), 16), ConfigError);
}

TEST_CASE("a zero-epoch run writes every output") {
    const auto dir = scratch_dir("run0");
    RunConfig rc = parse_run_config(ConfigDoc::parse(R"(
problem = "ex4.4-continuous"
mode = "both"
epochs = 0
eval_resolution = 12
fd_n = 16
timing = false
[network]
hidden = [6]
[loss]
n_interior = 50
n_boundary = 20
[landscape]
grid = 3
half_width = 0.5
)"));
    const nlohmann::json s = run(rc, dir);
    for (const char* f : {"summary.json", "history_cordes.csv", "history_plain.csv", "field_cordes.csv",
                          "field_plain.csv", "fd_compare_cordes.csv", "landscape_plain.csv"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    const auto hist = read_csv(dir / "history_cordes.csv");
    REQUIRE(hist.size() == 2);
    CHECK(hist[0][0] == "epoch");
    CHECK(hist[0].size() == 9);
    CHECK(read_csv(dir / "landscape_cordes.csv").size() == 10);
    CHECK(s["fd_reference"]["n"] == 16);
    CHECK(s["total_wall_seconds"] == 0.0);
    CHECK_FALSE(s.contains("comparison"));
}

TEST_CASE("summary error matches the dumped field") {
    const auto dir = scratch_dir("field");
    RunConfig rc = parse_run_config(ConfigDoc::parse(R"(
problem = "ex4.2-continuous"
epochs = 3
eval_every = 1
eval_resolution = 15
[network]
hidden = [6]
[loss]
n_interior = 50
n_boundary = 20
)"));
    const nlohmann::json s = run(rc, dir);
    const auto rows = read_csv(dir / "field_cordes.csv");
    REQUIRE(rows.size() == 1 + 15 * 15);
    CHECK(rows[0].back() == "abs_error");
    double acc = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) acc += std::pow(std::stod(rows[i].back()), 2);
    const double l2 = std::sqrt(acc / static_cast<double>(rows.size() - 1));
    CHECK_THAT(s["runs"]["cordes"]["l2"].get<double>(), WithinAbs(l2, 1e-12));
    CHECK(read_csv(dir / "history_cordes.csv").size() == 5);
}

TEST_CASE("nonlinear runs write phased histories") {
    const auto dir = scratch_dir("phased");
    RunConfig rc = parse_run_config(ConfigDoc::parse(R"(
problem = "ex4.5-hjb"
epochs = 20
eval_every = 5
eval_resolution = 10
[network]
hidden = [6]
[loss]
n_interior = 60
n_boundary = 20
[outer]
iterations = 2
)"));
    run(rc, dir);
    const auto hist = read_csv(dir / "history_cordes.csv");
    CHECK(hist[0].size() == 11);
    CHECK(hist[0][9] == "phase");
    CHECK(hist.back()[9] == "outer");
}
