#pragma once

// Smoothed proximal ALM. One iteration:
//   y+ = y + alpha (A x - b)
//   x+ = P_X(x - c grad_x K(x, z; y+))
//   z+ = z + beta (x+ - z)
// where K(x, z; y) = f(x) + y^T(Ax - b) + gamma/2 ||Ax - b||^2 + p/2 ||x - z||^2.

#include "smoothalm/params.hpp"
#include "smoothalm/problem.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace smoothalm {

/// Iterates leaving this norm bound (or becoming non-finite) abort the run.
inline constexpr double kDivergenceNorm = 1e12;
/// Absolute slack for the in-core primal descent inequality.
inline constexpr double kDescentSlack = 1e-8;

class DivergenceError : public std::runtime_error {
  public:
    DivergenceError(const std::string &what, std::int64_t iteration)
        : std::runtime_error(what), iteration_(iteration) {}
    std::int64_t iteration() const { return iteration_; }

  private:
    std::int64_t iteration_;
};

struct IterateState {
    Vector x;
    Vector y;
    Vector z;
    std::int64_t t = 0;
};

/// x0 = z0 = P_X(0), y0 = 0.
IterateState initial_state(const FeasibleSet &set, Eigen::Index m);

struct TraceRecord {
    std::int64_t t = 0;
    double gap = 0.0;    ///< vnorm + feas
    double vnorm = 0.0;  ///< min-norm element of grad f + A^T y + N_X(x)
    double feas = 0.0;   ///< ||A x - b||
    double dx = 0.0;     ///< ||x^{t-1} - x^t||, 0 at t = 0
    double dz = 0.0;     ///< ||z^{t-1} - z^t||, 0 at t = 0
    std::optional<double> phi;
    /// Margin of the primal descent inequality on the step into t.
    std::optional<double> descent_margin;
};

struct StopRule {
    std::int64_t max_iters = 20000;
    /// Stop once gap <= gap_tol. A non-finite value disables early stopping.
    double gap_tol = 1e-6;
    std::int64_t record_every = 1;
    bool compute_phi = false;
    double phi_tol = 1e-8;
};

struct RunResult {
    std::vector<TraceRecord> trace;
    IterateState final_state;
    bool stopped_early = false;
    std::int64_t descent_checks = 0;
    std::int64_t descent_violations = 0;
    double worst_descent_margin = std::numeric_limits<double>::infinity();
};

/// Called after every step with the states before and after it.
using StepObserver = std::function<void(const IterateState &, const IterateState &)>;

double eval_K(const Vector &x, const Vector &z, const Vector &y, const ObjectiveOracle &obj,
              const AffineConstraint &con, const AlgoParams &params);

/// grad f(x) + A^T y + gamma A^T (A x - b) + p (x - z).
Vector grad_K(const Vector &x, const Vector &z, const Vector &y, const ObjectiveOracle &obj,
              const AffineConstraint &con, const AlgoParams &params);

IterateState alm_step(const IterateState &state, const ObjectiveOracle &obj,
                      const AffineConstraint &con, const FeasibleSet &set,
                      const AlgoParams &params);

/// Margin of K(x^t,z^t;y^t) - K(x^{t+1},z^{t+1};y^{t+1})
///   >= 1/(2c) ||dx||^2 + p/(2 beta) ||dz||^2 - alpha ||A x^t - b||^2,
/// i.e. lhs minus rhs. Nonnegative up to kDescentSlack in the admissible regime.
double primal_descent_margin(const IterateState &before, const IterateState &after,
                             const ObjectiveOracle &obj, const AffineConstraint &con,
                             const AlgoParams &params);

/// Throws DivergenceError if any component is non-finite or exceeds kDivergenceNorm.
void guard_finite(const IterateState &state);

using StepFunction = std::function<IterateState(const IterateState &)>;

/// Shared driver for ALM and ADMM runs: records the trace, applies the stop
/// rule and the in-core primal descent check.
RunResult run_iterations(const StepFunction &step, const ObjectiveOracle &obj,
                         const AffineConstraint &con, const FeasibleSet &set,
                         const AlgoParams &params, IterateState start, const StopRule &stop,
                         const StepObserver &observer = {});

RunResult run_alm(const ObjectiveOracle &obj, const AffineConstraint &con, const FeasibleSet &set,
                  const AlgoParams &params, const Vector &x0, const Vector &y0, const Vector &z0,
                  const StopRule &stop, const StepObserver &observer = {});

}  // namespace smoothalm
