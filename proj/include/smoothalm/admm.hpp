#pragma once

// Smoothed proximal ADMM: the ALM step with the primal update split into
// N blocks swept in ascending order, each block taking a projected partial
// gradient step at the mixed point
//   x^t(i) = (x_1^{t+1}, ..., x_{i-1}^{t+1}, x_i^t, ..., x_N^t).

#include "smoothalm/alm.hpp"

namespace smoothalm {

class BlockProblem {
  public:
    /// `set` must be a Product whose factors match `partition` block by block.
    BlockProblem(ObjectiveOracle obj, AffineConstraint con, FeasibleSet set,
                 BlockPartition partition);
    /// Partition taken from the product structure of `set`.
    BlockProblem(ObjectiveOracle obj, AffineConstraint con, FeasibleSet set);

    const ObjectiveOracle &obj() const { return obj_; }
    const AffineConstraint &con() const { return con_; }
    const FeasibleSet &set() const { return set_; }
    const BlockPartition &partition() const { return partition_; }
    std::size_t blocks() const { return partition_.count(); }

  private:
    ObjectiveOracle obj_;
    AffineConstraint con_;
    FeasibleSet set_;
    BlockPartition partition_;
};

/// Blocks 0..i-1 (zero-based) from x_next, blocks i..N-1 from x_prev.
/// i ranges over 0..N-1; i = 0 returns x_prev.
Vector mixed_point(const Vector &x_prev, const Vector &x_next, std::size_t i,
                   const BlockPartition &partition);

/// Per-step quantities for the block-update analysis.
struct AdmmStepDiagnostics {
    /// ||E(t)||, E_j = c (grad_j K(x^t(j)) - grad_j K(x^t)).
    double block_error_norm = 0.0;
    /// eta = c (L_f + p + gamma sigma_max(A)^2) N^{3/2}.
    double eta = 0.0;
    /// K(x^t(j)) - K(x^t(j+1)) - ||x_j^t - x_j^{t+1}||^2 / (2c), per block,
    /// with K(., z^t; y^{t+1}).
    std::vector<double> block_descent_margins;
};

double block_error_constant(const BlockProblem &prob, const AlgoParams &params);

IterateState admm_step(const IterateState &state, const BlockProblem &prob,
                       const AlgoParams &params, AdmmStepDiagnostics *diag = nullptr);

RunResult run_admm(const BlockProblem &prob, const AlgoParams &params, const Vector &x0,
                   const Vector &y0, const Vector &z0, const StopRule &stop,
                   const StepObserver &observer = {});

}  // namespace smoothalm
