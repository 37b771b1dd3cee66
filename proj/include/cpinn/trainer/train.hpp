#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cpinn/trainer/adam.hpp"
#include "cpinn/trainer/metrics.hpp"
#include "cpinn/trainer/objective.hpp"

namespace cpinn {

struct HistoryRow {
    long epoch = 0;
    double total_loss = 0.0;
    double int_loss = 0.0;
    double bc_loss = 0.0;
    double grad_norm = 0.0;
    std::optional<double> sigma_proxy;
    std::optional<double> l2;
    std::optional<double> linf;
    double ms_per_iter = 0.0;
    std::string phase;
    int outer_k = 0;
};

/// Every epoch's loss, gradient norm and sharpness proxy (NaN when missing).
struct EpochTrace {
    std::vector<double> loss;
    std::vector<double> grad_norm;
    std::vector<double> sigma;
};

struct TrainResult {
    ParamVector params;
    std::vector<HistoryRow> history;
    EpochTrace trace;
    std::uint64_t seed = 0;
    nlohmann::json config;
    nlohmann::json extra;
    double wall_seconds = 0.0;

    const HistoryRow& last() const { return history.back(); }
};

/// Divergence with the history recorded up to the failure.
class TrainingFailure : public TrainingDivergence {
public:
    TrainingFailure(const TrainingDivergence& e, std::vector<HistoryRow> history, std::string phase)
        : TrainingDivergence(std::string(phase.empty() ? "" : phase + ": ") + "training diverged", e.epoch()),
          history_(std::move(history)), phase_(std::move(phase)) {}
    const std::vector<HistoryRow>& history() const { return history_; }
    const std::string& phase() const { return phase_; }

private:
    std::vector<HistoryRow> history_;
    std::string phase_;
};

struct FitOptions {
    long epochs = 0;
    long eval_every = 500;
    long epoch_offset = 0;
    bool record_initial = true;  // false when continuing from an earlier phase
    std::string phase;
    int outer_k = 0;
    bool timing = true;
};

/// Full-batch Adam on `objective` for opts.epochs updates, appending history
/// rows to `result`. The loss at theta_t is evaluated before update t, so a
/// phase of E updates records E + 1 evaluations.
inline void fit(Objective& objective, ParamVector& params, AdamState& adam, const FitOptions& opts,
                ErrorProbe* probe, TrainResult& result) {
    using clock = std::chrono::steady_clock;
    Vec grad, grad_prev, theta_prev;
    double busy_ms = 0.0;
    long busy_epochs = 0;
    const long every = std::max<long>(1, opts.eval_every);

    for (long t = 0; t <= opts.epochs; ++t) {
        const long epoch = opts.epoch_offset + t;
        const auto t0 = clock::now();
        LossBreakdown lb;
        try {
            lb = objective.value_and_grad(params, grad);
            if (!std::isfinite(lb.total)) throw TrainingDivergence("non-finite loss", epoch);
        } catch (const TrainingDivergence& e) {
            throw TrainingFailure(e, result.history, opts.phase);
        }
        const double gn = grad.norm();
        std::optional<double> sigma;
        if (t > 0) sigma = sigma_proxy(grad, grad_prev, params.values, theta_prev);
        result.trace.loss.push_back(lb.total);
        result.trace.grad_norm.push_back(gn);
        result.trace.sigma.push_back(sigma.value_or(std::nan("")));

        const bool record = (t % every == 0 || t == opts.epochs) && (t > 0 || opts.record_initial);
        if (t < opts.epochs) {
            theta_prev = params.values;
            grad_prev = grad;
            try {
                adam_step(adam, params, grad);
            } catch (const TrainingDivergence&) {
                throw TrainingFailure(TrainingDivergence("non-finite gradient", epoch), result.history, opts.phase);
            }
        }
        busy_ms += std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        ++busy_epochs;

        if (record) {
            HistoryRow row;
            row.epoch = epoch;
            row.total_loss = lb.total;
            row.int_loss = lb.interior;
            row.bc_loss = lb.boundary;
            row.grad_norm = gn;
            row.sigma_proxy = sigma;
            if (probe) {
                // The row describes theta_t, so evaluate before the update.
                // The update has already happened; use the stored iterate.
                ParamVector at_t = params;
                if (t < opts.epochs) at_t.values = theta_prev;
                const ErrorNorms e = (*probe)(at_t);
                row.l2 = e.l2;
                row.linf = e.linf;
            }
            row.ms_per_iter = opts.timing ? busy_ms / static_cast<double>(busy_epochs) : 0.0;
            row.phase = opts.phase;
            row.outer_k = opts.outer_k;
            result.history.push_back(row);
            busy_ms = 0.0;
            busy_epochs = 0;
        }
    }
}

struct TrainConfig {
    long epochs = 20000;
    std::uint64_t seed = 0;
    long eval_every = 500;
    int eval_resolution = 200;
    double lr = 3e-4;
    Precision precision = Precision::kSingle;
    Eigen::Index chunk = BatchJetEvaluator::kDefaultChunk;
    bool timing = true;
};

/// Collocation sets for one run; boundary points use a derived seed.
struct Collocation {
    PointSet interior;
    PointSet boundary;
};

inline Collocation make_collocation(const ProblemSpec& spec, const LossConfig& cfg, std::uint64_t seed) {
    return {sample_interior(spec.domain, cfg.n_interior, seed * 2 + 1, spec.singular),
            sample_boundary(spec.domain, cfg.n_boundary, seed * 2 + 2, spec.singular)};
}

/// Error probe on the evaluation grid, or nothing without an exact solution.
inline std::optional<ErrorProbe> make_probe(const ProblemSpec& spec, const NetworkArch& arch, int resolution) {
    if (!spec.has_exact()) return std::nullopt;
    PointSet grid = eval_grid(spec.domain, resolution);
    Vec ref(grid.cols());
    for (Eigen::Index i = 0; i < grid.cols(); ++i) ref[i] = spec.exact_value(grid.col(i));
    return ErrorProbe(arch, std::move(grid), std::move(ref));
}

inline nlohmann::json describe(const NetworkArch& arch, const LossConfig& loss, const TrainConfig& tc) {
    return {{"architecture", arch.describe()},
            {"mode", to_string(loss.mode)},
            {"w_int", loss.w_int},
            {"w_bc", loss.w_bc},
            {"delta", loss.delta},
            {"n_interior", loss.n_interior},
            {"n_boundary", loss.n_boundary},
            {"epochs", tc.epochs},
            {"seed", tc.seed},
            {"eval_every", tc.eval_every},
            {"eval_resolution", tc.eval_resolution},
            {"lr", tc.lr},
            {"precision", tc.precision == Precision::kSingle ? "single" : "double"}};
}

/// Composite objective (interior residual plus Dirichlet penalty) for a
/// linear problem on fixed collocation sets.
inline Objective linear_objective(const LinearPDE& pde, const ScalarField& g, const NetworkArch& arch,
                                  const LossConfig& cfg, const Collocation& pts, const TrainConfig& tc) {
    Objective obj;
    obj.add_rows("interior", false, arch, pts.interior, JetOrder::kHessian,
                 operator_rows(pde, pts.interior, cfg.delta, cfg.mode), cfg.w_int, tc.precision, tc.chunk);
    obj.add_rows("boundary", true, arch, pts.boundary, JetOrder::kValue, dirichlet_rows(g, pts.boundary), cfg.w_bc,
                 tc.precision, tc.chunk);
    return obj;
}

/// Trains a network on a linear problem with full-batch Adam.
inline TrainResult train(const ProblemSpec& spec, const NetworkArch& arch, const LossConfig& cfg,
                         const TrainConfig& tc) {
    if (spec.problem_class != ProblemClass::kLinear) {
        throw ConfigError("train() handles linear problems; '" + spec.name + "' is " + to_string(spec.problem_class));
    }
    if (arch.input_dim != spec.dim()) throw InvalidArchitecture("network input dimension does not match the problem");
    cfg.validate();
    const auto start = std::chrono::steady_clock::now();

    TrainResult result;
    result.seed = tc.seed;
    result.config = describe(arch, cfg, tc);
    result.config["problem"] = spec.name;
    result.params = init_network(arch, tc.seed);

    const Collocation pts = make_collocation(spec, cfg, tc.seed);
    Objective obj = linear_objective(linear_part(spec), spec.boundary, arch, cfg, pts, tc);
    auto probe = make_probe(spec, arch, tc.eval_resolution);
    AdamState adam = AdamState::for_params(result.params, tc.lr);

    FitOptions fo;
    fo.epochs = tc.epochs;
    fo.eval_every = tc.eval_every;
    fo.phase = "train";
    fo.timing = tc.timing;
    fit(obj, result.params, adam, fo, probe ? &*probe : nullptr, result);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace cpinn
