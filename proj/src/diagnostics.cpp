#include "smoothalm/diagnostics.hpp"

#include "smoothalm/admm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace smoothalm {

GapReport stationary_gap(const Vector &x, const Vector &y, const ObjectiveOracle &obj,
                         const AffineConstraint &con, const FeasibleSet &set) {
    const Vector xs = snap_to_set(set, x);
    check_dim(y.size(), con.rows(), "stationary_gap multiplier");
    const Vector g = obj.grad(xs) + con.A().transpose() * y;
    GapReport out;
    out.v_norm = set.normal_cone_min_norm(xs, g).norm();
    out.feas = con.residual(xs).norm();
    out.gap = out.v_norm + out.feas;
    return out;
}

// ---------------------------------------------------------------------------
// Inner solvers

double inner_step(const ObjectiveOracle &obj, const AffineConstraint &con,
                  const AlgoParams &params) {
    return step_bound(params, obj.lipschitz, con.sigma_max());
}

double fixed_point_residual(const Vector &x, const Vector &y, const Vector &z,
                            const ObjectiveOracle &obj, const AffineConstraint &con,
                            const FeasibleSet &set, const AlgoParams &params) {
    const double step = inner_step(obj, con, params);
    const Vector next = set.project(x - step * grad_K(x, z, y, obj, con, params));
    return (x - next).norm() / step;
}

namespace {

void require_strong_convexity(const ObjectiveOracle &obj, const AlgoParams &params,
                              const char *who) {
    if (!(params.p > obj.lipschitz)) {
        std::ostringstream os;
        os << who << ": requires p > L_f (p = " << params.p << ", L_f = " << obj.lipschitz << ")";
        throw std::invalid_argument(os.str());
    }
}

}  // namespace

InnerSolveReport solve_x_of_yz(const Vector &y, const Vector &z, const ObjectiveOracle &obj,
                               const AffineConstraint &con, const FeasibleSet &set,
                               const AlgoParams &params, const InnerSolveOptions &opts) {
    require_strong_convexity(obj, params, "solve_x_of_yz");
    if (!(opts.tol > 0.0))
        throw std::invalid_argument("solve_x_of_yz: tol must be positive");
    const double step = inner_step(obj, con, params);

    Vector x = set.project(opts.warm_start ? *opts.warm_start : z);
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t k = 0; k <= opts.max_iters; ++k) {
        const Vector next = set.project(x - step * grad_K(x, z, y, obj, con, params));
        const double res = (x - next).norm() / step;
        best = std::min(best, res);
        if (res <= opts.tol) {
            InnerSolveReport out;
            out.certified_residual = res;
            out.iterations = k;
            out.value = eval_K(x, z, y, obj, con, params);
            out.solution = std::move(x);
            return out;
        }
        x = next;
    }
    std::ostringstream os;
    os << "solve_x_of_yz: no convergence within " << opts.max_iters
       << " iterations (best residual " << best << ")";
    throw InnerSolveError(os.str(), best);
}

InnerSolveReport solve_x_of_z(const Vector &z, const ObjectiveOracle &obj,
                              const AffineConstraint &con, const FeasibleSet &set,
                              const AlgoParams &params, const InnerSolveOptions &opts) {
    require_strong_convexity(obj, params, "solve_x_of_z");
    if (!(opts.tol > 0.0))
        throw std::invalid_argument("solve_x_of_z: tol must be positive");
    if (!(params.gamma > 0.0))
        throw std::invalid_argument("solve_x_of_z: requires gamma > 0 for the dual update");
    const double step = inner_step(obj, con, params);

    Vector y = opts.warm_multiplier ? *opts.warm_multiplier : Vector::Zero(con.rows());
    check_dim(y.size(), con.rows(), "solve_x_of_z multiplier");
    Vector x = set.project(opts.warm_start ? *opts.warm_start : z);

    InnerSolveOptions inner;
    inner.tol = 0.25 * opts.tol;
    std::int64_t used = 0;
    double best = std::numeric_limits<double>::infinity();
    while (used <= opts.max_iters) {
        inner.max_iters = opts.max_iters - used;
        inner.warm_start = x;
        InnerSolveReport sub;
        try {
            sub = solve_x_of_yz(y, z, obj, con, set, params, inner);
        } catch (const InnerSolveError &err) {
            throw InnerSolveError(std::string("solve_x_of_z: ") + err.what(),
                                  std::min(best, err.best_residual()));
        }
        used += sub.iterations + 1;

        // One more projected step puts the candidate where the normal-cone
        // residual is bounded by twice the fixed-point residual.
        const Vector gk = grad_K(sub.solution, z, y, obj, con, params);
        x = set.project(sub.solution - step * gk);
        const Vector r = con.residual(x);
        const Vector y_next = y + params.gamma * r;
        const double stat =
            set.normal_cone_min_norm(x, grad_K(x, z, y, obj, con, params)).norm();
        const double feas = r.norm();
        const double res = std::max(stat, feas);
        best = std::min(best, res);
        if (res <= opts.tol) {
            InnerSolveReport out;
            out.certified_residual = res;
            out.iterations = used;
            out.value = eval_K(x, z, y, obj, con, params);
            out.solution = std::move(x);
            out.multiplier = y_next;
            return out;
        }
        y = y_next;
    }
    std::ostringstream os;
    os << "solve_x_of_z: no convergence within " << opts.max_iters
       << " inner iterations (best residual " << best << ")";
    throw InnerSolveError(os.str(), best);
}

PotentialReport potential(const Vector &x, const Vector &y, const Vector &z,
                          const ObjectiveOracle &obj, const AffineConstraint &con,
                          const FeasibleSet &set, const AlgoParams &params, double tol) {
    InnerSolveOptions opts;
    opts.tol = tol;
    opts.warm_start = x;
    const auto xyz = solve_x_of_yz(y, z, obj, con, set, params, opts);
    opts.warm_multiplier = y;
    const auto xz = solve_x_of_z(z, obj, con, set, params, opts);

    PotentialReport out;
    out.K = eval_K(x, z, y, obj, con, params);
    out.d = xyz.value;
    out.P = xz.value;
    out.value = out.K - 2.0 * out.d + 2.0 * out.P;
    out.x_yz = xyz.solution;
    out.x_z = xz.solution;
    return out;
}

// ---------------------------------------------------------------------------
// Checks

ErrorBoundConstants ErrorBoundConstants::from(const AlgoParams &params, double lipschitz,
                                              double sigma_max_A) {
    ErrorBoundConstants k;
    const double gap = params.p - lipschitz;
    k.sigma1 = params.c * gap;
    k.sigma2 = k.sigma1 / (1.0 + k.sigma1);
    k.sigma3 = gap / sigma_max_A;
    k.sigma4 = gap / params.p;
    return k;
}

ErrorBoundConstants ErrorBoundConstants::for_blocks(double eta) const {
    ErrorBoundConstants k = *this;
    k.sigma1 = sigma1 / (1.0 + eta);
    k.sigma2 = k.sigma1 / (1.0 + k.sigma1);
    return k;
}

CheckResult make_check(std::string name, std::int64_t iteration, double lhs, double rhs,
                       double slack) {
    CheckResult c;
    c.name = std::move(name);
    c.iteration = iteration;
    c.lhs = lhs;
    c.rhs = rhs;
    c.margin = lhs - rhs;
    c.slack = slack;
    c.pass = std::isfinite(c.margin) && c.margin >= -slack;
    return c;
}

StepSolutions solve_step(const IterateState &s0, const IterateState &s1,
                         const ObjectiveOracle &obj, const AffineConstraint &con,
                         const FeasibleSet &set, const AlgoParams &params, double tol) {
    StepSolutions sol;
    InnerSolveOptions opts;
    opts.tol = tol;

    opts.warm_start = s0.x;
    const auto a = solve_x_of_yz(s0.y, s0.z, obj, con, set, params, opts);
    const auto b = solve_x_of_yz(s1.y, s0.z, obj, con, set, params, opts);
    opts.warm_start = s1.x;
    const auto c = solve_x_of_yz(s1.y, s1.z, obj, con, set, params, opts);

    opts.warm_start = s0.x;
    opts.warm_multiplier = s1.y;
    const auto p0 = solve_x_of_z(s0.z, obj, con, set, params, opts);
    opts.warm_start = p0.solution;
    opts.warm_multiplier = p0.multiplier;
    const auto p1 = solve_x_of_z(s1.z, obj, con, set, params, opts);

    sol.x_yt_zt = a.solution;
    sol.x_yt1_zt = b.solution;
    sol.x_yt1_zt1 = c.solution;
    sol.x_zt = p0.solution;
    sol.x_zt1 = p1.solution;
    sol.d_t = a.value;
    sol.d_t1 = c.value;
    sol.P_t = p0.value;
    sol.P_t1 = p1.value;
    sol.phi_t = eval_K(s0.x, s0.z, s0.y, obj, con, params) - 2.0 * sol.d_t + 2.0 * sol.P_t;
    sol.phi_t1 = eval_K(s1.x, s1.z, s1.y, obj, con, params) - 2.0 * sol.d_t1 + 2.0 * sol.P_t1;
    return sol;
}

CheckResult check_sufficient_decrease(const IterateState &s0, const IterateState &s1,
                                      const StepSolutions &sol, const AffineConstraint &con,
                                      const AlgoParams &params, double tol) {
    const double lhs = sol.phi_t - sol.phi_t1;
    const double rhs = (s0.x - s1.x).squaredNorm() / (8.0 * params.c) +
                       0.5 * params.alpha * con.residual(sol.x_yt1_zt).squaredNorm() +
                       params.p / (6.0 * params.beta) * (s0.z - s1.z).squaredNorm();
    return make_check("sufficient_decrease", s0.t, lhs, rhs, 6.0 * tol + 1e-8);
}

std::vector<CheckResult> check_primal_error_bounds(const IterateState &s0, const IterateState &s1,
                                                   const StepSolutions &sol,
                                                   const ErrorBoundConstants &k, double tol) {
    const double dx = (s1.x - s0.x).norm();
    const double dy = (s1.y - s0.y).norm();
    const double dz = (s0.z - s1.z).norm();
    auto slack = [tol](double sigma) { return (1.0 + 1.0 / sigma) * tol; };
    const auto t = s0.t;
    return {
        make_check("error_bound_x_step", t, dx, k.sigma1 * (s0.x - sol.x_yt1_zt).norm(),
                   slack(k.sigma1)),
        make_check("error_bound_x_next", t, dx, k.sigma2 * (s1.x - sol.x_yt1_zt).norm(),
                   slack(k.sigma2)),
        make_check("error_bound_dual_lipschitz", t, dy,
                   k.sigma3 * (sol.x_yt1_zt - sol.x_yt_zt).norm(), slack(k.sigma3)),
        make_check("error_bound_envelope_lipschitz", t, dz, k.sigma4 * (sol.x_zt - sol.x_zt1).norm(),
                   slack(k.sigma4)),
        make_check("error_bound_anchor_lipschitz", t, dz,
                   k.sigma4 * (sol.x_yt1_zt - sol.x_yt1_zt1).norm(), slack(k.sigma4)),
    };
}

CheckResult check_dual_ascent(const IterateState &s0, const IterateState &s1,
                              const StepSolutions &sol, const AffineConstraint &con,
                              const AlgoParams &params, double tol) {
    const Vector dz = s1.z - s0.z;
    const double lhs = sol.d_t1 - sol.d_t;
    const double rhs =
        params.alpha * con.residual(s0.x).dot(con.residual(sol.x_yt1_zt)) +
        0.5 * params.p * dz.dot(s1.z + s0.z - 2.0 * sol.x_yt1_zt1);
    return make_check("dual_ascent", s0.t, lhs, rhs, 4.0 * tol + 1e-8);
}

CheckResult check_proximal_descent(const IterateState &s0, const IterateState &s1,
                                   const StepSolutions &sol, const AlgoParams &params,
                                   double lipschitz, double tol) {
    const Vector dz = s1.z - s0.z;
    const double bound = params.p * dz.dot(s0.z - sol.x_zt) +
                         0.5 * params.p * (params.p / (params.p - lipschitz) + 1.0) *
                             dz.squaredNorm();
    return make_check("proximal_descent", s0.t, bound, sol.P_t1 - sol.P_t, 3.0 * tol + 1e-8);
}

std::optional<DualErrorRatios> dual_error_ratio(const StepSolutions &sol,
                                                const AffineConstraint &con, double tol) {
    const double res = con.residual(sol.x_yt1_zt).norm();
    if (!(res > 10.0 * tol))
        return std::nullopt;
    const double dist = (sol.x_yt1_zt - sol.x_zt).norm();
    DualErrorRatios r;
    r.residual = res;
    r.weak = dist * dist / res;
    r.strong = dist / res;
    return r;
}

// ---------------------------------------------------------------------------
// Verification suite

std::vector<std::int64_t> sample_steps(std::int64_t iterations, std::int64_t samples) {
    std::vector<std::int64_t> out;
    if (iterations <= 0 || samples <= 0)
        return out;
    if (samples >= iterations) {
        for (std::int64_t t = 0; t < iterations; ++t)
            out.push_back(t);
        return out;
    }
    if (samples == 1)
        return {0};
    for (std::int64_t k = 0; k < samples; ++k) {
        const auto t = (k * (iterations - 1)) / (samples - 1);
        if (out.empty() || out.back() != t)
            out.push_back(t);
    }
    return out;
}

std::vector<CheckSummary> VerificationReport::summarize() const {
    std::map<std::string, CheckSummary> by_name;
    std::vector<std::string> order;
    for (const auto &c : checks) {
        auto [it, fresh] = by_name.try_emplace(c.name);
        if (fresh) {
            order.push_back(c.name);
            it->second.name = c.name;
            it->second.worst_margin = std::numeric_limits<double>::infinity();
        }
        auto &s = it->second;
        ++s.total;
        if (c.pass)
            ++s.passed;
        s.worst_margin = std::min(s.worst_margin, c.margin + c.slack);
    }
    std::vector<CheckSummary> out;
    for (const auto &name : order)
        out.push_back(by_name.at(name));
    return out;
}

std::optional<CheckSummary> VerificationReport::summary(const std::string &name) const {
    for (auto &s : summarize())
        if (s.name == name)
            return s;
    return std::nullopt;
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, unsigned threads, Fn &&fn) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
    if (threads <= 1) {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++)
                fn(i);
        });
}

struct SampledPair {
    IterateState before;
    IterateState after;
};

struct SampleOutcome {
    std::vector<CheckResult> checks;
    std::optional<DualErrorRatios> ratios;
    std::string failure;
};

SampleOutcome check_sample(const SampledPair &pair, const ObjectiveOracle &obj,
                           const AffineConstraint &con, const FeasibleSet &set,
                           const AlgoParams &params, const ErrorBoundConstants &k, double tol,
                           double inner_tol) {
    SampleOutcome out;
    const auto &s0 = pair.before;
    const auto &s1 = pair.after;
    out.checks.push_back(make_check("primal_descent", s0.t,
                                    primal_descent_margin(s0, s1, obj, con, params), 0.0,
                                    kDescentSlack));
    try {
        const auto sol = solve_step(s0, s1, obj, con, set, params, inner_tol);
        out.checks.push_back(check_sufficient_decrease(s0, s1, sol, con, params, tol));
        for (auto &c : check_primal_error_bounds(s0, s1, sol, k, tol))
            out.checks.push_back(std::move(c));
        out.checks.push_back(check_dual_ascent(s0, s1, sol, con, params, tol));
        out.checks.push_back(check_proximal_descent(s0, s1, sol, params, obj.lipschitz, tol));
        out.ratios = dual_error_ratio(sol, con, tol);
    } catch (const std::exception &err) {
        std::ostringstream os;
        os << "iteration " << s0.t << ": " << err.what();
        out.failure = os.str();
    }
    return out;
}

std::vector<SampledPair> collect_pairs(const std::vector<std::int64_t> &steps,
                                       const std::function<RunResult(const StepObserver &)> &run,
                                       RunResult &result) {
    const std::set<std::int64_t> wanted(steps.begin(), steps.end());
    std::vector<SampledPair> pairs;
    pairs.reserve(steps.size());
    result = run([&](const IterateState &before, const IterateState &after) {
        if (wanted.count(before.t) != 0)
            pairs.push_back({before, after});
    });
    return pairs;
}

VerificationReport check_pairs(const std::vector<SampledPair> &pairs, const ObjectiveOracle &obj,
                               const AffineConstraint &con, const FeasibleSet &set,
                               const AlgoParams &params, const ErrorBoundConstants &k,
                               const VerifyOptions &opts) {
    const double inner_tol = opts.tol * std::min(1.0, params.p - obj.lipschitz);
    std::vector<SampleOutcome> outcomes(pairs.size());
    parallel_for(pairs.size(), opts.threads, [&](std::size_t i) {
        outcomes[i] = check_sample(pairs[i], obj, con, set, params, k, opts.tol, inner_tol);
    });
    VerificationReport report;
    report.iterations = opts.iterations;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto &o = outcomes[i];
        for (auto &c : o.checks)
            report.checks.push_back(std::move(c));
        if (!o.failure.empty())
            report.failures.push_back(o.failure);
        else
            report.ratios.push_back({pairs[i].before.t, o.ratios});
    }
    return report;
}

StopRule verification_stop(const VerifyOptions &opts) {
    StopRule stop;
    stop.max_iters = opts.iterations;
    stop.gap_tol = std::numeric_limits<double>::infinity();
    stop.record_every = std::max<std::int64_t>(1, opts.iterations);
    return stop;
}

}  // namespace

VerificationReport verify_alm(const ObjectiveOracle &obj, const AffineConstraint &con,
                              const FeasibleSet &set, const AlgoParams &params,
                              const IterateState &start, const VerifyOptions &opts) {
    const auto steps = sample_steps(opts.iterations, opts.samples);
    RunResult run;
    const auto pairs = collect_pairs(
        steps,
        [&](const StepObserver &observer) {
            return run_alm(obj, con, set, params, start.x, start.y, start.z,
                           verification_stop(opts), observer);
        },
        run);
    const auto k = ErrorBoundConstants::from(params, obj.lipschitz, con.sigma_max());
    VerificationReport report = check_pairs(pairs, obj, con, set, params, k, opts);
    report.descent_checks = run.descent_checks;
    report.descent_violations = run.descent_violations;
    return report;
}

VerificationReport verify_admm(const BlockProblem &prob, const AlgoParams &params,
                               const IterateState &start, const VerifyOptions &opts) {
    const auto steps = sample_steps(opts.iterations, opts.samples);
    std::vector<CheckResult> block_checks;
    auto step = [&](const IterateState &s) {
        AdmmStepDiagnostics diag;
        IterateState next = admm_step(s, prob, params, &diag);
        const double dx = (next.x - s.x).norm();
        block_checks.push_back(
            make_check("block_error_bound", s.t, diag.eta * dx, diag.block_error_norm, 1e-8));
        for (double m : diag.block_descent_margins)
            block_checks.push_back(make_check("block_descent", s.t, m, 0.0, 1e-8));
        return next;
    };
    RunResult run;
    const auto pairs = collect_pairs(
        steps,
        [&](const StepObserver &observer) {
            IterateState s0 = start;
            return run_iterations(step, prob.obj(), prob.con(), prob.set(), params,
                                  std::move(s0), verification_stop(opts), observer);
        },
        run);
    const double eta = block_error_constant(prob, params);
    const auto k =
        ErrorBoundConstants::from(params, prob.obj().lipschitz, prob.con().sigma_max())
            .for_blocks(eta);
    VerificationReport report =
        check_pairs(pairs, prob.obj(), prob.con(), prob.set(), params, k, opts);
    report.checks.insert(report.checks.begin(), block_checks.begin(), block_checks.end());
    report.descent_checks = run.descent_checks;
    report.descent_violations = run.descent_violations;
    return report;
}

nlohmann::json to_json(const VerificationReport &report) {
    nlohmann::json doc;
    doc["iterations"] = report.iterations;
    doc["descent_checks"] = report.descent_checks;
    doc["descent_violations"] = report.descent_violations;
    auto summaries = nlohmann::json::array();
    for (const auto &s : report.summarize()) {
        summaries.push_back({{"name", s.name},
                             {"total", s.total},
                             {"passed", s.passed},
                             {"pass_rate", s.pass_rate()},
                             {"worst_margin", s.worst_margin}});
    }
    doc["summary"] = std::move(summaries);
    auto checks = nlohmann::json::array();
    for (const auto &c : report.checks) {
        checks.push_back({{"name", c.name},
                          {"iteration", c.iteration},
                          {"lhs", c.lhs},
                          {"rhs", c.rhs},
                          {"margin", c.margin},
                          {"slack", c.slack},
                          {"pass", c.pass}});
    }
    doc["checks"] = std::move(checks);
    auto ratios = nlohmann::json::array();
    for (const auto &r : report.ratios) {
        nlohmann::json entry{{"iteration", r.iteration}};
        if (r.ratios) {
            entry["weak"] = r.ratios->weak;
            entry["strong"] = r.ratios->strong;
            entry["residual"] = r.ratios->residual;
        } else {
            entry["skipped"] = true;
        }
        ratios.push_back(std::move(entry));
    }
    doc["dual_error_ratios"] = std::move(ratios);
    doc["failures"] = report.failures;
    return doc;
}

}  // namespace smoothalm
