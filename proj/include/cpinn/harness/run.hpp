#pragma once

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "cpinn/harness/config.hpp"
#include "cpinn/harness/fd.hpp"
#include "cpinn/harness/output.hpp"
#include "cpinn/transport.hpp"

namespace cpinn {

/// Relative l2 distance ||a - b|| / ||b||.
inline double relative_l2(const Vec& a, const Vec& b) {
    if (a.size() != b.size() || b.size() == 0) throw InvalidHandle("relative_l2 needs equal, non-empty fields");
    const double nb = b.norm();
    if (!(nb > 0.0)) throw NumericalError("relative_l2 against a zero reference");
    return (a - b).norm() / nb;
}

/// Output of one training mode.
struct ModeRun {
    LossMode mode = LossMode::kCordes;
    TrainResult result;
    std::optional<PotentialState> potential;  // transport only
    nlohmann::json summary;
};

namespace detail {

inline nlohmann::json history_json(const HistoryRow& r) {
    nlohmann::json j = {{"epoch", r.epoch}, {"total_loss", r.total_loss}, {"grad_norm", r.grad_norm}};
    if (r.l2) j["l2"] = *r.l2;
    if (r.linf) j["linf"] = *r.linf;
    return j;
}

/// Median of the recorded ms/iter over the history.
inline double median_ms(const std::vector<HistoryRow>& rows) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.ms_per_iter > 0.0) v.push_back(r.ms_per_iter);
    }
    return v.empty() ? 0.0 : finite_median(v);
}

inline std::string mode_name(LossMode m) { return to_string(m); }

}  // namespace detail

/// Trains one mode of a run and writes its history and field files.
inline ModeRun run_mode(const RunConfig& rc, const ProblemSpec& spec, LossMode mode,
                        const std::filesystem::path& out_dir, std::ostream* log) {
    ModeRun out;
    out.mode = mode;
    LossConfig lc = rc.loss;
    lc.mode = mode;
    const std::string tag = detail::mode_name(mode);
    if (log) *log << "[" << spec.name << "] training " << tag << " (" << rc.train.epochs << " epochs)\n";

    bool phased = false;
    switch (spec.problem_class) {
        case ProblemClass::kLinear:
            out.result = train(spec, rc.arch, lc, rc.train);
            break;
        case ProblemClass::kHJB:
        case ProblemClass::kMongeAmpere:
            out.result = solve_nonlinear(spec, rc.arch, rc.outer(), lc, rc.train);
            phased = true;
            break;
        case ProblemClass::kTransport: {
            TransportResult tr = solve_transport(transport_problem(spec), rc.arch, rc.outer(), lc, rc.train);
            out.result = std::move(tr.train);
            out.potential = std::move(tr.state);
            phased = true;
            break;
        }
    }
    TrainResult& res = out.result;
    res.config["problem"] = spec.name;
    write_history_csv(out_dir / ("history_" + tag + ".csv"), res.history, phased);

    nlohmann::json s;
    s["mode"] = tag;
    s["seed"] = res.seed;
    s["config"] = res.config;
    s["wall_seconds"] = rc.train.timing ? res.wall_seconds : 0.0;
    s["ms_per_iter"] = detail::median_ms(res.history);
    s["final"] = detail::history_json(res.last());
    if (!res.extra.is_null()) s["extra"] = res.extra;

    // Final field on the evaluation grid, in double precision.
    const PointSet grid = eval_grid(spec.domain, rc.train.eval_resolution);
    const Vec predicted = batch_values(rc.arch, res.params, grid);
    if (spec.has_exact()) {
        Vec exact(grid.cols());
        for (Eigen::Index i = 0; i < grid.cols(); ++i) exact[i] = spec.exact_value(grid.col(i));
        const ErrorNorms e = errors_l2_linf(predicted, exact);
        s["l2"] = e.l2;
        s["linf"] = e.linf;
        if (rc.dump_field) write_field_csv(out_dir / ("field_" + tag + ".csv"), grid, predicted, &exact);
    } else if (rc.dump_field) {
        write_field_csv(out_dir / ("field_" + tag + ".csv"), grid, predicted, nullptr);
    }

    if (out.potential) {
        const TransportProblem tp = transport_problem(spec);
        if (tp.analytic_potential) {
            const ErrorNorms me = map_error(*out.potential, tp.analytic_map(), tp.source, rc.train.eval_resolution);
            s["map_l2"] = me.l2;
            s["map_linf"] = me.linf;
        }
        const PushforwardReport pf =
            pushforward_check(*out.potential, tp, rc.pushforward_samples, rc.train.seed + 101, 10);
        s["pushforward"] = {{"tv", pf.tv},
                            {"exit_fraction", pf.exit_fraction},
                            {"boundary_failure", pf.boundary_failure},
                            {"samples", pf.samples},
                            {"bins", pf.bins}};
        const PointSet src = eval_grid(tp.source, 21);
        write_transport_grid_csv(out_dir / ("transport_grid_" + tag + ".csv"), src, transport_map(*out.potential, src));
    }

    if (rc.landscape) {
        if (spec.problem_class != ProblemClass::kLinear) {
            throw ConfigError("landscape probes are available for linear problems");
        }
        TrainConfig tc = rc.train;
        tc.precision = Precision::kDouble;
        const Collocation pts = make_collocation(spec, lc, rc.train.seed);
        Objective obj = linear_objective(linear_part(spec), spec.boundary, rc.arch, lc, pts, tc);
        const LandscapeProbe lp = landscape_probe(
            res.params, [&obj](const ParamVector& p) { return obj.value(p).total; }, rc.landscape->half_width,
            rc.landscape->grid, rc.landscape->seed);
        write_landscape_csv(out_dir / ("landscape_" + tag + ".csv"), lp);
        s["landscape"] = {{"center_loss", lp.surface(lp.offsets.size() / 2, lp.offsets.size() / 2)},
                          {"max_loss", lp.surface.maxCoeff()},
                          {"grid", rc.landscape->grid},
                          {"half_width", rc.landscape->half_width}};
    }

    if (log) {
        *log << "[" << spec.name << "] " << tag << " done: loss " << res.last().total_loss;
        if (s.contains("l2")) *log << ", l2 " << s["l2"].get<double>();
        *log << '\n';
    }
    out.summary = std::move(s);
    return out;
}

/// Executes a run configuration and writes every output into `out_dir`.
/// Returns the summary that was written to summary.json.
inline nlohmann::json run(const RunConfig& rc, const std::filesystem::path& out_dir, std::ostream* log = nullptr) {
    const auto start = std::chrono::steady_clock::now();
    const ProblemSpec spec = rc.spec();
    std::filesystem::create_directories(out_dir);

    std::vector<LossMode> modes;
    if (rc.mode != RunMode::kPlain) modes.push_back(LossMode::kCordes);
    if (rc.mode != RunMode::kCordes) modes.push_back(LossMode::kPlain);

    nlohmann::json summary;
    summary["problem"] = spec.name;
    summary["problem_class"] = to_string(spec.problem_class);
    summary["seed"] = rc.train.seed;
    summary["epochs"] = rc.train.epochs;
    summary["architecture"] = rc.arch.describe();

    std::vector<ModeRun> runs;
    for (LossMode m : modes) {
        runs.push_back(run_mode(rc, spec, m, out_dir, log));
        summary["runs"][detail::mode_name(m)] = runs.back().summary;
    }

    if (rc.fd_n > 0) {
        const FdField fd = fd_reference_solve(spec, rc.fd_n);
        nlohmann::json fj = {{"n", fd.n}, {"solve_residual", fd.residual}};
        for (const auto& r : runs) {
            const Vec pred = batch_values(rc.arch, r.result.params, fd.nodes);
            const std::string tag = detail::mode_name(r.mode);
            fj["relative_l2"][tag] = relative_l2(pred, fd.values);
            write_fd_csv(out_dir / ("fd_compare_" + tag + ".csv"), fd.nodes, fd.values, &pred);
        }
        summary["fd_reference"] = fj;
    }

    if (runs.size() == 2 && runs[0].summary.contains("l2") && runs[1].summary.contains("l2")) {
        const double a = runs[0].summary["l2"], b = runs[1].summary["l2"];
        summary["comparison"] = {{"cordes_l2", a}, {"plain_l2", b}, {"cordes_better", a < b}};
    }
    summary["total_wall_seconds"] =
        rc.train.timing ? std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() : 0.0;
    write_json(out_dir / "summary.json", summary);
    return summary;
}

}  // namespace cpinn
