#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "cpinn/trainer/train.hpp"

namespace cpinn {

/// Cofactor matrix of a 2x2 or 3x3 matrix, so that M cof(M)^T = det(M) I.
inline Mat cofactor(const Mat& M) {
    if (M.rows() != M.cols()) throw InvalidHandle("cofactor of a non-square matrix");
    const auto n = M.rows();
    Mat C(n, n);
    if (n == 2) {
        C << M(1, 1), -M(1, 0), -M(0, 1), M(0, 0);
        return C;
    }
    if (n == 3) {
        for (int i = 0; i < 3; ++i) {
            const int i1 = (i + 1) % 3, i2 = (i + 2) % 3;
            for (int j = 0; j < 3; ++j) {
                const int j1 = (j + 1) % 3, j2 = (j + 2) % 3;
                C(i, j) = M(i1, j1) * M(i2, j2) - M(i1, j2) * M(i2, j1);
            }
        }
        return C;
    }
    throw InvalidHandle("cofactor supports 2x2 and 3x3 matrices, got " + std::to_string(n) + "x" + std::to_string(n));
}

/// Frozen linear problem produced by one outer linearization, defined on the
/// collocation points it was built from.
struct SurrogateLinearPDE {
    PointSet points;
    std::vector<CoefficientSample> coefficients;
    Vec source;
    std::vector<int> hjb_branch;  // per point, HJB only
    int ma_iteration = -1;        // outer index, MA and transport only
    double clamped_fraction = 0.0;

    Eigen::Index size() const { return points.cols(); }

    LinearRows rows(double delta, LossMode mode) const {
        return operator_rows(coefficients, source, static_cast<int>(points.rows()), delta, mode);
    }

    /// Pointwise A:H + b.g - c u - f for C x N Hessian jets on the same points.
    Vec residuals(const Mat& jets) const {
        const int d = static_cast<int>(points.rows());
        Vec r(size());
        for (Eigen::Index i = 0; i < size(); ++i) {
            r[i] = apply_operator(coefficients[static_cast<std::size_t>(i)],
                                  BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows()))) -
                   source[i];
        }
        return r;
    }

    double mean_abs_residual(const Mat& jets) const { return residuals(jets).cwiseAbs().mean(); }
};

// ---------------------------------------------------------------- HJB

inline constexpr double kBranchTieTol = 1e-10;

/// Branch residuals L^a u - f^a at x.
inline Vec hjb_branch_residuals(const HJBSpec& hjb, const Vec& x, const JetValue& u) {
    Vec r(static_cast<Eigen::Index>(hjb.controls.size()));
    for (std::size_t a = 0; a < hjb.controls.size(); ++a) {
        r[static_cast<Eigen::Index>(a)] = linear_residual_value(hjb.controls[a].coefficients, hjb.controls[a].source, x, u);
    }
    return r;
}

/// Index of the branch attaining max_a (L^a u - f^a); near-ties go to the
/// lowest index.
inline int hjb_active_branch(const JetValue& u, const HJBSpec& hjb, const Vec& x) {
    if (hjb.controls.empty()) throw ConfigError("HJB problem has no controls");
    const Vec r = hjb_branch_residuals(hjb, x, u);
    const double best = r.maxCoeff();
    for (Eigen::Index a = 0; a < r.size(); ++a) {
        if (r[a] >= best - kBranchTieTol) return static_cast<int>(a);
    }
    return 0;
}

/// Surrogate with the branch frozen per point at the current state.
inline SurrogateLinearPDE hjb_linearize(const Mat& jets, const HJBSpec& hjb, const PointSet& pts) {
    const int d = static_cast<int>(pts.rows());
    SurrogateLinearPDE s;
    s.points = pts;
    s.coefficients.reserve(static_cast<std::size_t>(pts.cols()));
    s.source.resize(pts.cols());
    s.hjb_branch.resize(static_cast<std::size_t>(pts.cols()));
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Vec x = pts.col(i);
        const int a = hjb_active_branch(BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows())),
                                        hjb, x);
        s.hjb_branch[static_cast<std::size_t>(i)] = a;
        s.coefficients.push_back(hjb.controls[static_cast<std::size_t>(a)].coefficients(x));
        s.source[i] = hjb.controls[static_cast<std::size_t>(a)].source(x);
    }
    return s;
}

/// mean |max_a (L^a u - f^a)| over the points.
inline double hjb_mean_residual(const Mat& jets, const HJBSpec& hjb, const PointSet& pts) {
    const int d = static_cast<int>(pts.rows());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        acc += std::abs(hjb_residual_value(hjb, pts.col(i),
                                           BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows()))));
    }
    return acc / static_cast<double>(pts.cols());
}

// ---------------------------------------------------------------- Monge-Ampere

struct ConvexityGuard {
    double eigen_floor = 1e-6;
    double max_clamped_fraction = 0.05;
};

/// Hessian with eigenvalues lifted to the floor; returns whether it was clamped.
inline bool clamp_hessian(Mat& H, double floor) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (H + H.transpose()), Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    if (lo >= floor) return false;
    H.diagonal().array() += floor - lo;
    return true;
}

/// Newton linearization of det(D^2u) = f around the current state:
/// cof(H):D^2v = f - det H + cof(H):H.
inline SurrogateLinearPDE ma_linearize(const Mat& jets, const ScalarField& f, const PointSet& pts,
                                       const ConvexityGuard& guard = {}) {
    const int d = static_cast<int>(pts.rows());
    SurrogateLinearPDE s;
    s.points = pts;
    s.coefficients.reserve(static_cast<std::size_t>(pts.cols()));
    s.source.resize(pts.cols());
    Eigen::Index clamped = 0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        Mat H = BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows())).hess;
        if (clamp_hessian(H, guard.eigen_floor)) ++clamped;
        CoefficientSample c;
        c.A = cofactor(H);
        c.b = Vec::Zero(d);
        c.c = 0.0;
        s.source[i] = f(pts.col(i)) - H.determinant() + c.A.cwiseProduct(H).sum();
        s.coefficients.push_back(std::move(c));
    }
    s.clamped_fraction = static_cast<double>(clamped) / static_cast<double>(pts.cols());
    if (s.clamped_fraction > guard.max_clamped_fraction) {
        throw NonConvexityError("Hessian below the eigenvalue floor at " + std::to_string(clamped) + " of " +
                                std::to_string(pts.cols()) + " points; use a more convex warm start");
    }
    return s;
}

/// mean |det(D^2u) - f| over the points.
inline double ma_mean_residual(const Mat& jets, const ScalarField& f, const PointSet& pts) {
    const int d = static_cast<int>(pts.rows());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const Mat H = BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows())).hess;
        acc += std::abs(H.determinant() - f(pts.col(i)));
    }
    return acc / static_cast<double>(pts.cols());
}

// ---------------------------------------------------------------- driver

enum class WarmStart { kPoissonRoot, kQuadratic };

inline const char* to_string(WarmStart w) { return w == WarmStart::kPoissonRoot ? "poisson-root" : "quadratic"; }

struct OuterConfig {
    long warmup_epochs = 8000;
    int outer_iterations = 4;
    long inner_epochs = 8000;
    ConvexityGuard guard;
    WarmStart warm_start = WarmStart::kPoissonRoot;

    /// Warm-up takes `fraction` of the budget, the rest is split evenly.
    static OuterConfig split(long total_epochs, double fraction = 0.2, int outer = 4) {
        if (total_epochs <= 0 || fraction < 0.0 || fraction > 1.0 || outer < 0) {
            throw ConfigError("invalid outer budget");
        }
        OuterConfig c;
        c.outer_iterations = outer;
        c.warmup_epochs = std::lround(static_cast<double>(total_epochs) * fraction);
        c.inner_epochs = outer > 0 ? (total_epochs - c.warmup_epochs) / outer : 0;
        if (outer == 0) c.warmup_epochs = total_epochs;
        return c;
    }

    long total_epochs() const { return warmup_epochs + outer_iterations * inner_epochs; }

    void validate() const {
        if (warmup_epochs <= 0 || outer_iterations < 0 || (outer_iterations > 0 && inner_epochs <= 0)) {
            throw ConfigError("outer loop counts must be positive");
        }
        if (guard.eigen_floor < 0.0) throw ConfigError("eigenvalue floor must be non-negative");
    }
};

/// One outer linearization: the true residual at the frozen state, whether
/// the step was taken, and the surrogate residual after inner training.
struct OuterRecord {
    int k = 0;
    double residual = 0.0;
    bool accepted = false;
    double surrogate_residual = std::nan("");
    double clamped_fraction = 0.0;
};

inline nlohmann::json to_json(const std::vector<OuterRecord>& log) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : log) {
        out.push_back({{"k", r.k},
                       {"residual", r.residual},
                       {"accepted", r.accepted},
                       {"surrogate_residual", r.surrogate_residual},
                       {"clamped_fraction", r.clamped_fraction}});
    }
    return out;
}

/// Accepted outer residuals never increase.
inline bool accepted_non_increasing(const std::vector<OuterRecord>& log) {
    double last = std::numeric_limits<double>::infinity();
    for (const auto& r : log) {
        if (!r.accepted) continue;
        if (r.residual > last) return false;
        last = r.residual;
    }
    return true;
}

namespace detail {

inline nlohmann::json outer_config_json(const OuterConfig& oc) {
    return {{"warmup_epochs", oc.warmup_epochs},
            {"outer_iterations", oc.outer_iterations},
            {"inner_epochs", oc.inner_epochs},
            {"eigen_floor", oc.guard.eigen_floor},
            {"warm_start", to_string(oc.warm_start)}};
}

/// Rows regressing the value channel onto a target function.
inline LinearRows value_rows(const ScalarField& target, const PointSet& pts) { return dirichlet_rows(target, pts); }

inline Objective surrogate_objective(const SurrogateLinearPDE& s, const ScalarField& g, const NetworkArch& arch,
                                     const LossConfig& cfg, const Collocation& pts, const TrainConfig& tc) {
    Objective obj;
    obj.add_rows("interior", false, arch, pts.interior, JetOrder::kHessian, s.rows(cfg.delta, cfg.mode), cfg.w_int,
                 tc.precision, tc.chunk);
    obj.add_rows("boundary", true, arch, pts.boundary, JetOrder::kValue, dirichlet_rows(g, pts.boundary), cfg.w_bc,
                 tc.precision, tc.chunk);
    return obj;
}

}  // namespace detail

/// Dual-loop solver for HJB and Monge-Ampere problems: a warm-up phase,
/// then outer linearizations each followed by inner training on the
/// frozen surrogate. Parameters and optimizer state carry across phases.
///
/// An outer step is accepted when the true residual at the new state does
/// not exceed the last accepted one; a rejected step keeps the previous
/// surrogate and continues training on it.
inline TrainResult solve_nonlinear(const ProblemSpec& spec, const NetworkArch& arch, const OuterConfig& oc,
                                   const LossConfig& cfg, const TrainConfig& tc) {
    const bool is_hjb = spec.problem_class == ProblemClass::kHJB;
    if (!is_hjb && spec.problem_class != ProblemClass::kMongeAmpere) {
        throw ConfigError("solve_nonlinear handles hjb and monge-ampere problems; '" + spec.name + "' is " +
                          to_string(spec.problem_class));
    }
    if (is_hjb && (!spec.hjb || spec.hjb->controls.empty())) throw ConfigError("HJB problem has no controls");
    if (arch.input_dim != spec.dim()) throw InvalidArchitecture("network input dimension does not match the problem");
    if (!is_hjb && (spec.dim() < 2 || spec.dim() > 3)) throw ConfigError("Monge-Ampere supports d = 2 or 3");
    cfg.validate();
    oc.validate();
    const auto start = std::chrono::steady_clock::now();

    TrainResult result;
    result.seed = tc.seed;
    result.config = describe(arch, cfg, tc);
    result.config["problem"] = spec.name;
    result.config["epochs"] = oc.total_epochs();
    result.config["outer"] = detail::outer_config_json(oc);
    result.params = init_network(arch, tc.seed);

    const Collocation pts = make_collocation(spec, cfg, tc.seed);
    auto probe = make_probe(spec, arch, tc.eval_resolution);
    ErrorProbe* probe_ptr = probe ? &*probe : nullptr;
    AdamState adam = AdamState::for_params(result.params, tc.lr);
    BatchJetEvaluator state_jets(arch, pts.interior, JetOrder::kHessian, 2048);

    FitOptions fo;
    fo.eval_every = tc.eval_every;
    fo.timing = tc.timing;

    // Warm-up.
    {
        Objective warm;
        if (is_hjb) {
            const auto& branch = spec.hjb->controls.front();
            warm = linear_objective({branch.coefficients, branch.source}, spec.boundary, arch, cfg, pts, tc);
        } else if (oc.warm_start == WarmStart::kPoissonRoot) {
            // Laplacian matched to d f^{1/d}, the trace of a Hessian whose
            // determinant is f when the Hessian is a multiple of I.
            const int d = spec.dim();
            const ScalarField f = spec.source;
            LinearPDE poisson{[d](const Vec&) { return detail::principal(Mat::Identity(d, d)); },
                              [f, d](const Vec& x) { return d * std::pow(std::max(f(x), 0.0), 1.0 / d); }};
            warm = linear_objective(poisson, spec.boundary, arch, cfg, pts, tc);
        } else {
            warm.add_rows("interior", false, arch, pts.interior, JetOrder::kValue,
                          detail::value_rows([](const Vec& x) { return 0.5 * x.squaredNorm(); }, pts.interior),
                          cfg.w_int, tc.precision, tc.chunk);
            warm.add_rows("boundary", true, arch, pts.boundary, JetOrder::kValue,
                          dirichlet_rows(spec.boundary, pts.boundary), cfg.w_bc, tc.precision, tc.chunk);
        }
        fo.epochs = oc.warmup_epochs;
        fo.phase = "warmup";
        fo.outer_k = 0;
        fit(warm, result.params, adam, fo, probe_ptr, result);
    }

    std::vector<OuterRecord> log;
    std::optional<SurrogateLinearPDE> surrogate;
    double last_accepted = std::numeric_limits<double>::infinity();
    long offset = oc.warmup_epochs;

    for (int k = 1; k <= oc.outer_iterations; ++k) {
        const Mat& jets = state_jets.forward(result.params);
        OuterRecord rec;
        rec.k = k;
        rec.residual = is_hjb ? hjb_mean_residual(jets, *spec.hjb, pts.interior)
                              : ma_mean_residual(jets, spec.source, pts.interior);
        if (rec.residual <= last_accepted) {
            try {
                SurrogateLinearPDE s = is_hjb ? hjb_linearize(jets, *spec.hjb, pts.interior)
                                              : ma_linearize(jets, spec.source, pts.interior, oc.guard);
                s.ma_iteration = is_hjb ? -1 : k;
                rec.clamped_fraction = s.clamped_fraction;
                surrogate = std::move(s);
                rec.accepted = true;
                last_accepted = rec.residual;
            } catch (const NonConvexityError& e) {
                if (!surrogate) throw NonConvexityError(std::string("outer step ") + std::to_string(k) + ": " + e.what());
            }
        }

        Objective inner = detail::surrogate_objective(*surrogate, spec.boundary, arch, cfg, pts, tc);
        fo.epochs = oc.inner_epochs;
        fo.epoch_offset = offset;
        fo.record_initial = false;
        fo.phase = "outer";
        fo.outer_k = k;
        fit(inner, result.params, adam, fo, probe_ptr, result);
        offset += oc.inner_epochs;

        rec.surrogate_residual = surrogate->mean_abs_residual(state_jets.forward(result.params));
        log.push_back(rec);
    }

    if (!log.empty()) {
        const Mat& jets = state_jets.forward(result.params);
        result.extra["final_residual"] = is_hjb ? hjb_mean_residual(jets, *spec.hjb, pts.interior)
                                                : ma_mean_residual(jets, spec.source, pts.interior);
    }
    result.extra["outer"] = to_json(log);
    result.extra["accepted_non_increasing"] = accepted_non_increasing(log);
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace cpinn
