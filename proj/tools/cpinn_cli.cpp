#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "cpinn/harness/run.hpp"

namespace fs = std::filesystem;
using namespace cpinn;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

fs::path output_root() {
    const char* env = std::getenv("CPINN_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::current_path();
}

fs::path resolve(const fs::path& p) { return p.is_absolute() ? p : output_root() / p; }

nlohmann::json report_json(const CordesReport& r) {
    nlohmann::json j = {{"case", to_string(r.cordes_case)},
                        {"epsilon", r.epsilon},
                        {"valid", r.valid()},
                        {"near_violation", r.near_violation()},
                        {"worst_ratio", r.worst_ratio},
                        {"lambda_min", r.lambda_min},
                        {"lambda_max", r.lambda_max},
                        {"lambda_mean", r.lambda_mean},
                        {"samples", r.n_samples}};
    j["worst_point"] = std::vector<double>(r.worst_point.data(), r.worst_point.data() + r.worst_point.size());
    if (r.aux_lambda) j["aux_lambda"] = *r.aux_lambda;
    return j;
}

/// Coefficient fields to check. Nonlinear problems are checked on the
/// surrogate built at their exact solution.
std::vector<std::pair<std::string, CoefficientField>> cordes_fields(const ProblemSpec& spec) {
    switch (spec.problem_class) {
        case ProblemClass::kLinear:
            return {{"operator", spec.coefficients}};
        case ProblemClass::kHJB: {
            std::vector<std::pair<std::string, CoefficientField>> out;
            for (std::size_t a = 0; a < spec.hjb->controls.size(); ++a) {
                out.emplace_back("control " + std::to_string(a + 1), spec.hjb->controls[a].coefficients);
            }
            return out;
        }
        case ProblemClass::kMongeAmpere:
        case ProblemClass::kTransport: {
            const JetField exact = spec.exact;
            return {{"surrogate at the exact solution", [exact](const Vec& x) {
                         return detail::principal(cofactor(exact(x).hess));
                     }}};
        }
    }
    return {};
}

int cmd_check_cordes(const std::string& name, long samples, std::optional<double> lambda, std::uint64_t seed) {
    const ProblemSpec spec = get_problem(name);
    const PointSet pts = sample_interior(spec.domain, samples, seed, spec.singular);
    nlohmann::json out = {{"problem", spec.name}, {"checks", nlohmann::json::array()}};
    bool ok = true;
    for (const auto& [label, field] : cordes_fields(spec)) {
        const CordesReport r = check_cordes(field, pts, lambda);
        nlohmann::json j = report_json(r);
        j["field"] = label;
        out["checks"].push_back(j);
        ok = ok && r.valid();
    }
    std::cout << out.dump(2) << '\n';
    return ok ? 0 : kExitNumerical;
}

int cmd_fd_ref(const std::string& name, int n, const fs::path& out) {
    const ProblemSpec spec = get_problem(name);
    const FdField fd = fd_reference_solve(spec, n);
    nlohmann::json j = {{"problem", spec.name}, {"n", n}, {"solve_residual", fd.residual}};
    if (spec.has_exact()) {
        Vec exact(fd.nodes.cols());
        for (Eigen::Index i = 0; i < exact.size(); ++i) exact[i] = spec.exact_value(fd.nodes.col(i));
        const ErrorNorms e = errors_l2_linf(fd.values, exact);
        j["l2_vs_exact"] = e.l2;
        j["linf_vs_exact"] = e.linf;
    }
    const fs::path path = resolve(out.empty() ? fs::path("fd") / (spec.name + "_n" + std::to_string(n) + ".csv") : out);
    write_fd_csv(path, fd.nodes, fd.values, nullptr);
    j["output"] = path.string();
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_run(const std::string& config, bool force_landscape) {
    RunConfig rc = load_run_config(config);
    if (force_landscape && !rc.landscape) rc.landscape = LandscapeRequest{};
    const fs::path out = resolve(rc.output);
    const nlohmann::json summary = run(rc, out, &std::cerr);
    std::cout << summary.dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cordes-preconditioned PINN solver for non-divergence form PDEs"};
    app.require_subcommand(1);

    std::string config;
    auto* run_cmd = app.add_subcommand("run", "Train according to a config file");
    run_cmd->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

    app.add_subcommand("list-problems", "List the shipped benchmarks");

    std::string problem;
    long samples = 10000;
    std::optional<double> lambda;
    std::uint64_t seed = 0;
    auto* cc = app.add_subcommand("check-cordes", "Check the Cordes condition on sampled points");
    cc->add_option("problem", problem, "Problem name")->required();
    cc->add_option("--samples", samples, "Number of sample points")->check(CLI::PositiveNumber);
    cc->add_option("--lambda", lambda, "Auxiliary multiplier for the lower-order check");
    cc->add_option("--seed", seed, "Sampling seed");

    int n = 128;
    std::string fd_out;
    auto* fd = app.add_subcommand("fd-ref", "Finite-difference reference solution");
    fd->add_option("problem", problem, "Problem name")->required();
    fd->add_option("--n", n, "Intervals per axis")->check(CLI::Range(2, 4096));
    fd->add_option("--out", fd_out, "Output CSV path");

    auto* ls = app.add_subcommand("landscape", "Train and probe the loss landscape");
    ls->add_option("config", config, "Config file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (*run_cmd) return cmd_run(config, false);
        if (*ls) return cmd_run(config, true);
        if (*cc) return cmd_check_cordes(problem, samples, lambda, seed);
        if (*fd) return cmd_fd_ref(problem, n, fd_out);
        for (const auto& name : problem_names()) {
            const ProblemSpec p = get_problem(name);
            std::cout << name << "\t" << to_string(p.problem_class) << "\td=" << p.dim() << "\t" << p.description
                      << '\n';
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const TrainingFailure& e) {
        std::cerr << "numerical failure: " << e.what() << " (" << e.history().size() << " history rows recorded)\n";
        return kExitNumerical;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
