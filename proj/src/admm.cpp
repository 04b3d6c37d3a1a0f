#include "smoothalm/admm.hpp"

#include <cmath>

namespace smoothalm {

namespace {

BlockPartition checked_partition(const FeasibleSet &set, const BlockPartition &partition) {
    if (!set.is_product())
        throw std::invalid_argument("BlockProblem: feasible set must be a Product");
    const BlockPartition own = set.partition();
    if (own.sizes() != partition.sizes())
        throw DimensionError("BlockProblem: partition does not match the product blocks");
    return partition;
}

}  // namespace

BlockProblem::BlockProblem(ObjectiveOracle obj, AffineConstraint con, FeasibleSet set,
                           BlockPartition partition)
    : obj_(std::move(obj)), con_(std::move(con)), set_(std::move(set)),
      partition_(checked_partition(set_, partition)) {
    check_dim(con_.cols(), partition_.total(), "BlockProblem constraint columns");
    check_dim(obj_.dim, partition_.total(), "BlockProblem objective");
}

BlockProblem::BlockProblem(ObjectiveOracle obj, AffineConstraint con, FeasibleSet set)
    : BlockProblem(std::move(obj), std::move(con), set, set.partition()) {}

Vector mixed_point(const Vector &x_prev, const Vector &x_next, std::size_t i,
                   const BlockPartition &partition) {
    check_dim(x_prev.size(), partition.total(), "mixed_point x_prev");
    check_dim(x_next.size(), partition.total(), "mixed_point x_next");
    if (i >= partition.count())
        throw std::out_of_range("mixed_point: block index out of range");
    Vector out = x_prev;
    const Eigen::Index head = partition.offset(i);
    out.head(head) = x_next.head(head);
    return out;
}

double block_error_constant(const BlockProblem &prob, const AlgoParams &params) {
    const double s = prob.con().sigma_max();
    const double n_blocks = static_cast<double>(prob.blocks());
    return params.c * (prob.obj().lipschitz + params.p + params.gamma * s * s) *
           std::pow(n_blocks, 1.5);
}

IterateState admm_step(const IterateState &state, const BlockProblem &prob,
                       const AlgoParams &params, AdmmStepDiagnostics *diag) {
    const auto &obj = prob.obj();
    const auto &con = prob.con();
    const auto &part = prob.partition();
    check_dim(state.x.size(), part.total(), "admm_step x");
    check_dim(state.z.size(), part.total(), "admm_step z");

    IterateState next;
    next.t = state.t + 1;
    next.y = state.y + params.alpha * con.residual(state.x);

    // `x` holds the mixed point x^t(i) at the start of sweep i.
    Vector x = state.x;
    Vector full_grad;
    Vector error;
    if (diag != nullptr) {
        full_grad = grad_K(state.x, state.z, next.y, obj, con, params);
        error = Vector::Zero(x.size());
        diag->block_descent_margins.clear();
        diag->eta = block_error_constant(prob, params);
    }

    for (std::size_t i = 0; i < part.count(); ++i) {
        const Eigen::Index off = part.offset(i);
        const Eigen::Index len = part.size(i);
        const Vector g = grad_K(x, state.z, next.y, obj, con, params);
        const Vector trial = state.x.segment(off, len) - params.c * g.segment(off, len);
        const Vector block = prob.set().block(i).project(trial);
        if (diag != nullptr) {
            error.segment(off, len) = params.c * (g.segment(off, len) - full_grad.segment(off, len));
            const double before = eval_K(x, state.z, next.y, obj, con, params);
            Vector after_point = x;
            after_point.segment(off, len) = block;
            const double after = eval_K(after_point, state.z, next.y, obj, con, params);
            const double step2 = (block - state.x.segment(off, len)).squaredNorm();
            diag->block_descent_margins.push_back(before - after - step2 / (2.0 * params.c));
        }
        x.segment(off, len) = block;
    }
    next.x = std::move(x);
    next.z = (1.0 - params.beta) * state.z + params.beta * next.x;
    if (diag != nullptr)
        diag->block_error_norm = error.norm();
    guard_finite(next);
    return next;
}

RunResult run_admm(const BlockProblem &prob, const AlgoParams &params, const Vector &x0,
                   const Vector &y0, const Vector &z0, const StopRule &stop,
                   const StepObserver &observer) {
    IterateState start{x0, y0, z0, 0};
    auto step = [&](const IterateState &s) { return admm_step(s, prob, params); };
    return run_iterations(step, prob.obj(), prob.con(), prob.set(), params, std::move(start), stop,
                          observer);
}

}  // namespace smoothalm
