#include "smoothalm/alm.hpp"

#include "smoothalm/diagnostics.hpp"

#include <cmath>
#include <sstream>

namespace smoothalm {

IterateState initial_state(const FeasibleSet &set, Eigen::Index m) {
    IterateState s;
    s.x = set.project(Vector::Zero(set.dim()));
    s.z = s.x;
    s.y = Vector::Zero(m);
    return s;
}

double eval_K(const Vector &x, const Vector &z, const Vector &y, const ObjectiveOracle &obj,
              const AffineConstraint &con, const AlgoParams &params) {
    check_dim(z.size(), x.size(), "eval_K anchor");
    check_dim(y.size(), con.rows(), "eval_K multiplier");
    const Vector r = con.residual(x);
    return obj.eval(x) + y.dot(r) + 0.5 * params.gamma * r.squaredNorm() +
           0.5 * params.p * (x - z).squaredNorm();
}

Vector grad_K(const Vector &x, const Vector &z, const Vector &y, const ObjectiveOracle &obj,
              const AffineConstraint &con, const AlgoParams &params) {
    check_dim(z.size(), x.size(), "grad_K anchor");
    check_dim(y.size(), con.rows(), "grad_K multiplier");
    const Vector r = con.residual(x);
    const Vector w = y + params.gamma * r;
    return obj.grad(x) + con.A().transpose() * w + params.p * (x - z);
}

void guard_finite(const IterateState &state) {
    auto bad = [](const Vector &v) {
        return !v.allFinite() || v.norm() > kDivergenceNorm;
    };
    if (bad(state.x) || bad(state.y) || bad(state.z)) {
        std::ostringstream os;
        os << "iterate diverged or became non-finite at iteration " << state.t;
        throw DivergenceError(os.str(), state.t);
    }
}

IterateState alm_step(const IterateState &state, const ObjectiveOracle &obj,
                      const AffineConstraint &con, const FeasibleSet &set,
                      const AlgoParams &params) {
    check_dim(state.x.size(), set.dim(), "alm_step x");
    check_dim(state.z.size(), set.dim(), "alm_step z");
    IterateState next;
    next.t = state.t + 1;
    next.y = state.y + params.alpha * con.residual(state.x);
    const Vector g = grad_K(state.x, state.z, next.y, obj, con, params);
    next.x = set.project(state.x - params.c * g);
    next.z = (1.0 - params.beta) * state.z + params.beta * next.x;
    guard_finite(next);
    return next;
}

double primal_descent_margin(const IterateState &before, const IterateState &after,
                             const ObjectiveOracle &obj, const AffineConstraint &con,
                             const AlgoParams &params) {
    const double lhs = eval_K(before.x, before.z, before.y, obj, con, params) -
                       eval_K(after.x, after.z, after.y, obj, con, params);
    const double rhs = (after.x - before.x).squaredNorm() / (2.0 * params.c) +
                       params.p / (2.0 * params.beta) * (after.z - before.z).squaredNorm() -
                       params.alpha * con.residual(before.x).squaredNorm();
    return lhs - rhs;
}

RunResult run_iterations(const StepFunction &step, const ObjectiveOracle &obj,
                         const AffineConstraint &con, const FeasibleSet &set,
                         const AlgoParams &params, IterateState start, const StopRule &stop,
                         const StepObserver &observer) {
    if (stop.record_every < 1)
        throw std::invalid_argument("StopRule: record_every must be >= 1");
    if (stop.max_iters < 0)
        throw std::invalid_argument("StopRule: max_iters must be >= 0");

    start.x = snap_to_set(set, start.x);
    start.z = snap_to_set(set, start.z);
    check_dim(start.y.size(), con.rows(), "initial multiplier");
    guard_finite(start);

    const bool early_stop_enabled = std::isfinite(stop.gap_tol);
    RunResult out;

    auto make_record = [&](const IterateState &s, const GapReport &gap) {
        TraceRecord rec;
        rec.t = s.t;
        rec.gap = gap.gap;
        rec.vnorm = gap.v_norm;
        rec.feas = gap.feas;
        if (stop.compute_phi)
            rec.phi = potential(s.x, s.y, s.z, obj, con, set, params, stop.phi_tol).value;
        return rec;
    };

    IterateState cur = std::move(start);
    GapReport gap = stationary_gap(cur.x, cur.y, obj, con, set);
    out.trace.push_back(make_record(cur, gap));

    for (std::int64_t k = 0; k < stop.max_iters; ++k) {
        if (early_stop_enabled && gap.gap <= stop.gap_tol) {
            out.stopped_early = true;
            break;
        }
        IterateState next = step(cur);
        if (observer)
            observer(cur, next);

        const double margin = primal_descent_margin(cur, next, obj, con, params);
        ++out.descent_checks;
        if (margin < -kDescentSlack)
            ++out.descent_violations;
        out.worst_descent_margin = std::min(out.worst_descent_margin, margin);

        gap = stationary_gap(next.x, next.y, obj, con, set);
        const bool last = next.t == stop.max_iters;
        const bool hit = early_stop_enabled && gap.gap <= stop.gap_tol;
        if (next.t % stop.record_every == 0 || last || hit) {
            TraceRecord rec = make_record(next, gap);
            rec.dx = (next.x - cur.x).norm();
            rec.dz = (next.z - cur.z).norm();
            rec.descent_margin = margin;
            out.trace.push_back(std::move(rec));
        }
        cur = std::move(next);
    }
    if (early_stop_enabled && gap.gap <= stop.gap_tol)
        out.stopped_early = true;
    out.final_state = std::move(cur);
    return out;
}

RunResult run_alm(const ObjectiveOracle &obj, const AffineConstraint &con, const FeasibleSet &set,
                  const AlgoParams &params, const Vector &x0, const Vector &y0, const Vector &z0,
                  const StopRule &stop, const StepObserver &observer) {
    IterateState start{x0, y0, z0, 0};
    auto step = [&](const IterateState &s) { return alm_step(s, obj, con, set, params); };
    return run_iterations(step, obj, con, set, params, std::move(start), stop, observer);
}

}  // namespace smoothalm
