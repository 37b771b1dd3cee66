#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "cpinn/nonlinear.hpp"

namespace cpinn {

using VectorField = std::function<Vec(const Vec&)>;

/// Transport of density mu on `source` to density nu on `target` by the
/// gradient of a convex potential.
struct TransportProblem {
    ScalarField mu;
    ScalarField nu;
    VectorField grad_nu;
    Domain source;
    Domain target;
    JetField analytic_potential;  // optional

    VectorField analytic_map() const {
        if (!analytic_potential) return {};
        return [p = analytic_potential](const Vec& x) { return p(x).grad; };
    }
};

/// Square-to-square benchmark with a uniform target.
inline TransportProblem example51_fields() {
    TransportProblem p;
    p.mu = ex51::density;
    p.nu = [](const Vec&) { return 1.0; };
    p.grad_nu = [](const Vec& y) { return Vec::Zero(y.size()); };
    p.source = Domain::rectangle(Vec::Constant(2, -0.5), Vec::Constant(2, 0.5));
    p.target = p.source;
    p.analytic_potential = ex51::potential;
    return p;
}

inline TransportProblem transport_problem(const ProblemSpec& spec) {
    if (spec.problem_class != ProblemClass::kTransport) throw ConfigError("'" + spec.name + "' is not a transport problem");
    TransportProblem p;
    p.mu = spec.source;
    p.nu = [](const Vec&) { return 1.0; };
    p.grad_nu = [](const Vec& y) { return Vec::Zero(y.size()); };
    p.source = spec.domain;
    p.target = spec.domain;
    p.analytic_potential = spec.exact;
    return p;
}

/// Monte Carlo integral of f over a box.
inline double box_integral(const ScalarField& f, const Domain& dom, Eigen::Index n, std::uint64_t seed) {
    if (!dom.is_box()) throw GeometryError("box_integral needs a box domain");
    const PointSet pts = sample_interior(dom, n, seed);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) acc += f(pts.col(i));
    return acc / static_cast<double>(n) * (dom.hi - dom.lo).prod();
}

/// Throws MassBalanceError when the two masses differ by more than `tol`
/// relative; returns the relative gap.
inline double check_mass_balance(const TransportProblem& p, Eigen::Index n = 200000, std::uint64_t seed = 7,
                                 double tol = 0.01) {
    const double m_src = box_integral(p.mu, p.source, n, seed);
    const double m_tgt = box_integral(p.nu, p.target, n, seed + 1);
    if (!(m_src > 0.0) || !(m_tgt > 0.0)) throw MassBalanceError("densities must have positive mass");
    const double gap = std::abs(m_src - m_tgt) / m_tgt;
    if (gap > tol) {
        throw MassBalanceError("source mass " + std::to_string(m_src) + " and target mass " + std::to_string(m_tgt) +
                               " differ by more than " + std::to_string(100 * tol) + "%");
    }
    return gap;
}

inline Vec clamp_to_box(const Vec& y, const Domain& box) { return y.cwiseMax(box.lo).cwiseMin(box.hi); }

/// Newton-Kantorovich linearization of nu(grad phi) det(D^2 phi) = mu:
///   A = nu cof(H), b = det(H) grad nu, c = 0,
///   f = mu - det(H) nu + A:H + b.grad phi.
/// Target densities are evaluated at the map clamped into the target box.
inline SurrogateLinearPDE ot_linearize(const Mat& jets, const TransportProblem& p, const PointSet& pts,
                                       const ConvexityGuard& guard = {}) {
    const int d = static_cast<int>(pts.rows());
    SurrogateLinearPDE s;
    s.points = pts;
    s.coefficients.reserve(static_cast<std::size_t>(pts.cols()));
    s.source.resize(pts.cols());
    Eigen::Index clamped = 0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const JetValue j = BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows()));
        Mat H = j.hess;
        if (clamp_hessian(H, guard.eigen_floor)) ++clamped;
        const Vec y = clamp_to_box(j.grad, p.target);
        const double nu = p.nu(y);
        const double det = H.determinant();
        CoefficientSample c;
        c.A = nu * cofactor(H);
        c.b = det * p.grad_nu(y);
        c.c = 0.0;
        s.source[i] = p.mu(pts.col(i)) - det * nu + c.A.cwiseProduct(H).sum() + c.b.dot(j.grad);
        s.coefficients.push_back(std::move(c));
    }
    s.clamped_fraction = static_cast<double>(clamped) / static_cast<double>(pts.cols());
    if (s.clamped_fraction > guard.max_clamped_fraction) {
        throw NonConvexityError("potential Hessian below the eigenvalue floor at " + std::to_string(clamped) + " of " +
                                std::to_string(pts.cols()) + " points");
    }
    return s;
}

/// mean |nu(grad phi) det(D^2 phi) - mu| over the points.
inline double ot_mean_residual(const Mat& jets, const TransportProblem& p, const PointSet& pts) {
    const int d = static_cast<int>(pts.rows());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < pts.cols(); ++i) {
        const JetValue j = BatchJetEvaluator::jet_from_column(jets.col(i), d, static_cast<int>(jets.rows()));
        acc += std::abs(p.nu(clamp_to_box(j.grad, p.target)) * j.hess.determinant() - p.mu(pts.col(i)));
    }
    return acc / static_cast<double>(pts.cols());
}

/// Trained potential and its normalization anchor.
struct PotentialState {
    NetworkArch arch;
    ParamVector params;
    Vec anchor;
    double anchor_value = 0.0;
    int k = 0;
};

/// T(x) = grad phi(x).
inline Vec transport_map(const PotentialState& s, const Vec& x) {
    Tape tape;
    const Jet2 j = jet2_eval(s.arch, s.params, x, tape);
    Vec out(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) out[k] = j.grad[static_cast<std::size_t>(k)].value();
    return out;
}

/// Maps of a whole point set, one column per point.
inline Mat transport_map(const PotentialState& s, const PointSet& pts) {
    const int d = s.arch.input_dim;
    Mat out(d, pts.cols());
    for (Eigen::Index b = 0; b < pts.cols(); b += 4096) {
        const Eigen::Index n = std::min<Eigen::Index>(4096, pts.cols() - b);
        const Mat jets = batch_jets(s.arch, s.params, pts.middleCols(b, n), JetOrder::kGradient);
        out.middleCols(b, n) = jets.middleRows(1, d);
    }
    return out;
}

/// Shifts the output bias so that phi(anchor) equals the anchor value.
/// Gradients and Hessians are unchanged.
inline void normalize_potential(PotentialState& s) {
    const double v = batch_values(s.arch, s.params, s.anchor)[0];
    const auto last = s.params.layout.size() - 1;
    s.params.biases(last)[0] += s.anchor_value - v;
}

/// Map error against a reference map on the evaluation grid: RMS and max of
/// the Euclidean distance between the two maps.
inline ErrorNorms map_error(const PotentialState& s, const VectorField& reference, const Domain& dom, int resolution) {
    if (!reference) throw ConfigError("no reference map");
    const PointSet grid = eval_grid(dom, resolution);
    const Mat T = transport_map(s, grid);
    Vec dist(grid.cols());
    for (Eigen::Index i = 0; i < grid.cols(); ++i) dist[i] = (T.col(i) - reference(grid.col(i))).norm();
    return errors_l2_linf(dist, Vec::Zero(dist.size()));
}

struct PushforwardReport {
    double tv = 0.0;
    double exit_fraction = 0.0;
    bool boundary_failure = false;
    Eigen::Index samples = 0;
    int bins = 0;
    Mat histogram;  // empirical mass per bin, bins x bins
};

inline constexpr double kMaxExitFraction = 0.01;

/// Samples x ~ mu by rejection, pushes them through T and compares the
/// binned pushforward with nu on the target box (total variation).
/// Samples leaving the target count as lost mass.
inline PushforwardReport pushforward_check(const PotentialState& s, const TransportProblem& p, Eigen::Index n_mc,
                                           std::uint64_t seed, int bins = 10) {
    if (!p.source.is_box() || !p.target.is_box() || p.source.dim != 2) {
        throw GeometryError("pushforward_check needs 2D box domains");
    }
    if (n_mc <= 0 || bins <= 0) throw ConfigError("pushforward_check needs positive sample and bin counts");

    // Envelope for rejection sampling from a fine grid.
    double mu_max = 0.0;
    const PointSet grid = eval_grid(p.source, 400);
    for (const auto& x : grid.colwise()) mu_max = std::max(mu_max, p.mu(x));
    mu_max *= 1.05;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    PointSet xs(2, n_mc);
    Eigen::Index got = 0;
    while (got < n_mc) {
        Vec x(2);
        for (int k = 0; k < 2; ++k) x[k] = p.source.lo[k] + (p.source.hi[k] - p.source.lo[k]) * u01(rng);
        if (u01(rng) * mu_max <= p.mu(x)) xs.col(got++) = x;
    }
    const Mat ys = transport_map(s, xs);

    PushforwardReport r;
    r.samples = n_mc;
    r.bins = bins;
    r.histogram = Mat::Zero(bins, bins);
    const Vec lo = p.target.lo, width = (p.target.hi - p.target.lo) / bins;
    Eigen::Index exits = 0;
    for (Eigen::Index i = 0; i < n_mc; ++i) {
        const Vec y = ys.col(i);
        if ((y.array() < lo.array()).any() || (y.array() > p.target.hi.array()).any()) {
            ++exits;
            continue;
        }
        const int a = std::min(bins - 1, static_cast<int>((y[0] - lo[0]) / width[0]));
        const int b = std::min(bins - 1, static_cast<int>((y[1] - lo[1]) / width[1]));
        r.histogram(a, b) += 1.0;
    }
    r.histogram /= static_cast<double>(n_mc);

    // Target bin masses by midpoint quadrature.
    constexpr int sub = 8;
    Mat target(bins, bins);
    for (int a = 0; a < bins; ++a) {
        for (int b = 0; b < bins; ++b) {
            double acc = 0.0;
            for (int i = 0; i < sub; ++i) {
                for (int j = 0; j < sub; ++j) {
                    Vec y(2);
                    y << lo[0] + (a + (i + 0.5) / sub) * width[0], lo[1] + (b + (j + 0.5) / sub) * width[1];
                    acc += p.nu(y);
                }
            }
            target(a, b) = acc;
        }
    }
    target /= target.sum();

    r.exit_fraction = static_cast<double>(exits) / static_cast<double>(n_mc);
    r.tv = 0.5 * ((r.histogram - target).cwiseAbs().sum() + r.exit_fraction);
    r.boundary_failure = r.exit_fraction > kMaxExitFraction;
    return r;
}

namespace detail {

/// weight / N * sum_i sum_k (J_ki - T_ki)^2 over the leading channels.
inline PointwiseLoss jet_regression_loss(std::shared_ptr<const Mat> target, double weight) {
    const double scale = weight / static_cast<double>(target->cols());
    return [target = std::move(target), scale](const Mat& jets, Eigen::Index offset, Mat& cot) {
        const Eigen::Index n = jets.cols(), c = target->rows();
        const Mat r = jets.topRows(c) - target->middleCols(offset, n);
        cot.topRows(c) = 2.0 * scale * r;
        return scale * r.squaredNorm();
    };
}

/// weight / N * sum_i dist(grad phi(x_i), box)^2.
inline PointwiseLoss second_boundary_loss(const Domain& box, Eigen::Index n_points, double weight) {
    const double scale = weight / static_cast<double>(n_points);
    return [lo = box.lo, hi = box.hi, scale](const Mat& jets, Eigen::Index, Mat& cot) {
        const Eigen::Index d = lo.size();
        const Mat g = jets.middleRows(1, d);
        const Mat over = (g.colwise() - hi).cwiseMax(0.0);
        const Mat under = (g.colwise() - lo).cwiseMin(0.0);
        const Mat r = over + under;
        cot.middleRows(1, d) = 2.0 * scale * r;
        return scale * r.squaredNorm();
    };
}

}  // namespace detail

struct TransportResult {
    PotentialState state;
    TrainResult train;
};

/// Newton-Kantorovich dual loop for the transport Monge-Ampere equation.
/// The warm-up fits the jets of phi = |x|^2 / 2 (the identity map); every phase adds the
/// second boundary penalty and the anchor pin.
inline TransportResult solve_transport(const TransportProblem& p, const NetworkArch& arch, const OuterConfig& oc,
                                       const LossConfig& cfg, const TrainConfig& tc) {
    if (arch.input_dim != p.source.dim) throw InvalidArchitecture("network input dimension does not match the problem");
    if (p.source.dim < 2 || p.source.dim > 3) throw ConfigError("transport supports d = 2 or 3");
    if (!p.target.is_box()) throw GeometryError("transport target must be a box");
    cfg.validate();
    oc.validate();
    check_mass_balance(p);
    const auto start = std::chrono::steady_clock::now();
    const int d = p.source.dim;

    TransportResult out;
    TrainResult& result = out.train;
    result.seed = tc.seed;
    result.config = describe(arch, cfg, tc);
    result.config["epochs"] = oc.total_epochs();
    result.config["outer"] = detail::outer_config_json(oc);
    result.params = init_network(arch, tc.seed);

    PotentialState& state = out.state;
    state.arch = arch;
    state.anchor = p.source.box_center();
    state.anchor_value = 0.5 * state.anchor.squaredNorm();

    const PointSet interior = sample_interior(p.source, cfg.n_interior, tc.seed * 2 + 1);
    const PointSet boundary = sample_boundary(p.source, cfg.n_boundary, tc.seed * 2 + 2);
    PointSet anchor_pt = state.anchor;

    auto add_constraints = [&](Objective& obj) {
        obj.add("second-boundary", true,
                std::make_unique<BatchJetEvaluator>(arch, boundary, JetOrder::kGradient, tc.chunk, tc.precision),
                detail::second_boundary_loss(p.target, boundary.cols(), cfg.w_bc));
        obj.add_rows("anchor", true, arch, anchor_pt, JetOrder::kValue,
                     dirichlet_rows([v = state.anchor_value](const Vec&) { return v; }, anchor_pt), cfg.w_bc,
                     tc.precision, tc.chunk);
    };

    std::optional<ErrorProbe> probe;
    if (p.analytic_potential) {
        PointSet grid = eval_grid(p.source, tc.eval_resolution);
        Vec ref(grid.cols());
        for (Eigen::Index i = 0; i < grid.cols(); ++i) ref[i] = p.analytic_potential(grid.col(i)).value;
        probe.emplace(arch, std::move(grid), std::move(ref));
    }
    ErrorProbe* probe_ptr = probe ? &*probe : nullptr;
    AdamState adam = AdamState::for_params(result.params, tc.lr);
    BatchJetEvaluator state_jets(arch, interior, JetOrder::kHessian, 2048);

    FitOptions fo;
    fo.eval_every = tc.eval_every;
    fo.timing = tc.timing;

    {
        auto target = std::make_shared<Mat>(num_channels(d, JetOrder::kHessian), interior.cols());
        target->row(0) = 0.5 * interior.colwise().squaredNorm();
        target->middleRows(1, d) = interior;
        target->bottomRows(target->rows() - 1 - d).setZero();
        for (int k = 0; k < d; ++k) target->row(hess_channel(d, k, k)).setOnes();
        Objective warm;
        warm.add("interior", false,
                 std::make_unique<BatchJetEvaluator>(arch, interior, JetOrder::kHessian, tc.chunk, tc.precision),
                 detail::jet_regression_loss(std::move(target), cfg.w_int));
        add_constraints(warm);
        fo.epochs = oc.warmup_epochs;
        fo.phase = "warmup";
        fit(warm, result.params, adam, fo, probe_ptr, result);
    }

    std::vector<OuterRecord> log;
    std::optional<SurrogateLinearPDE> surrogate;
    double last_accepted = std::numeric_limits<double>::infinity();
    long offset = oc.warmup_epochs;
    double min_lambda = std::numeric_limits<double>::infinity();

    for (int k = 1; k <= oc.outer_iterations; ++k) {
        const Mat& jets = state_jets.forward(result.params);
        OuterRecord rec;
        rec.k = k;
        rec.residual = ot_mean_residual(jets, p, interior);
        if (rec.residual <= last_accepted) {
            try {
                SurrogateLinearPDE s = ot_linearize(jets, p, interior, oc.guard);
                s.ma_iteration = k;
                for (const auto& c : s.coefficients) min_lambda = std::min(min_lambda, multiplier(c.A, cfg.delta));
                rec.clamped_fraction = s.clamped_fraction;
                surrogate = std::move(s);
                rec.accepted = true;
                last_accepted = rec.residual;
                state.k = k;
            } catch (const NonConvexityError& e) {
                if (!surrogate) throw NonConvexityError(std::string("outer step ") + std::to_string(k) + ": " + e.what());
            }
        }

        Objective inner;
        inner.add_rows("interior", false, arch, interior, JetOrder::kHessian, surrogate->rows(cfg.delta, cfg.mode),
                       cfg.w_int, tc.precision, tc.chunk);
        add_constraints(inner);
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

    state.params = result.params;
    normalize_potential(state);
    result.params = state.params;

    result.extra["final_residual"] = ot_mean_residual(state_jets.forward(result.params), p, interior);
    result.extra["outer"] = to_json(log);
    result.extra["accepted_non_increasing"] = accepted_non_increasing(log);
    if (std::isfinite(min_lambda)) result.extra["min_multiplier"] = min_lambda;
    result.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace cpinn
