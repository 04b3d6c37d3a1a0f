#pragma once

// Stationarity measures, the auxiliary subproblems
//   x(y, z) = argmin_{x in X} K(x, z; y),          d(y, z) = its value,
//   x(z)    = argmin_{x in X, Ax = b} f(x) + p/2 ||x - z||^2,  P(z) = its value,
// the potential phi = K(x, z; y) - 2 d(y, z) + 2 P(z), and numerical checks of
// the descent and error-bound inequalities that drive the convergence rate.

#include "smoothalm/alm.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace smoothalm {

class InnerSolveError : public std::runtime_error {
  public:
    InnerSolveError(const std::string &what, double best_residual)
        : std::runtime_error(what), best_residual_(best_residual) {}
    double best_residual() const { return best_residual_; }

  private:
    double best_residual_;
};

struct GapReport {
    double gap = 0.0;
    double v_norm = 0.0;
    double feas = 0.0;
};

/// ||v|| + ||Ax - b|| with v the min-norm element of grad f(x) + A^T y + N_X(x).
GapReport stationary_gap(const Vector &x, const Vector &y, const ObjectiveOracle &obj,
                         const AffineConstraint &con, const FeasibleSet &set);

struct InnerSolveReport {
    Vector solution;
    /// x(y,z): projected-gradient fixed-point residual ||x - P(x - s grad)|| / s.
    /// x(z): max(stationarity, feasibility) of the KKT system.
    double certified_residual = 0.0;
    std::int64_t iterations = 0;
    /// Optimal value estimate: K(x, z; y) for x(y,z); for x(z) the augmented
    /// Lagrangian value at the final multiplier, which approximates P(z) to
    /// second order in the feasibility residual.
    double value = 0.0;
    /// x(z) only: the multiplier certifying the KKT residual.
    Vector multiplier;
};

struct InnerSolveOptions {
    double tol = 1e-8;
    std::int64_t max_iters = 1000000;
    std::optional<Vector> warm_start;
    std::optional<Vector> warm_multiplier;  ///< x(z) only
};

/// Step size used by the x(y, z) projected-gradient solver: 1/(L_f + gamma sA^2 + p).
double inner_step(const ObjectiveOracle &obj, const AffineConstraint &con,
                  const AlgoParams &params);

/// Recomputes ||x - P(x - s grad K)|| / s independently of any solver state.
double fixed_point_residual(const Vector &x, const Vector &y, const Vector &z,
                            const ObjectiveOracle &obj, const AffineConstraint &con,
                            const FeasibleSet &set, const AlgoParams &params);

InnerSolveReport solve_x_of_yz(const Vector &y, const Vector &z, const ObjectiveOracle &obj,
                               const AffineConstraint &con, const FeasibleSet &set,
                               const AlgoParams &params, const InnerSolveOptions &opts = {});

/// Nested ALM on the strongly convex proximal problem: y <- y + gamma (A x(y,z) - b)
/// until stationarity and feasibility are both below tol.
InnerSolveReport solve_x_of_z(const Vector &z, const ObjectiveOracle &obj,
                              const AffineConstraint &con, const FeasibleSet &set,
                              const AlgoParams &params, const InnerSolveOptions &opts = {});

struct PotentialReport {
    double value = 0.0;  ///< phi
    double K = 0.0;      ///< K(x, z; y)
    double d = 0.0;      ///< d(y, z)
    double P = 0.0;      ///< P(z)
    Vector x_yz;
    Vector x_z;
};

PotentialReport potential(const Vector &x, const Vector &y, const Vector &z,
                          const ObjectiveOracle &obj, const AffineConstraint &con,
                          const FeasibleSet &set, const AlgoParams &params, double tol);

struct ErrorBoundConstants {
    double sigma1 = 0.0;  ///< c (p - L_f)
    double sigma2 = 0.0;  ///< sigma1 / (1 + sigma1)
    double sigma3 = 0.0;  ///< (p - L_f) / sigma_max(A)
    double sigma4 = 0.0;  ///< (p - L_f) / p

    static ErrorBoundConstants from(const AlgoParams &params, double lipschitz, double sigma_max_A);
    /// Block variant: sigma1 replaced by sigma1 / (1 + eta), sigma2 recomputed.
    ErrorBoundConstants for_blocks(double eta) const;
};

struct CheckResult {
    std::string name;
    std::int64_t iteration = 0;
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;  ///< lhs - rhs
    double slack = 0.0;
    bool pass = true;     ///< margin >= -slack
};

CheckResult make_check(std::string name, std::int64_t iteration, double lhs, double rhs,
                       double slack);

/// Inner solutions needed to check the step t -> t+1.
struct StepSolutions {
    Vector x_yt_zt;    ///< x(y^t, z^t)
    Vector x_yt1_zt;   ///< x(y^{t+1}, z^t)
    Vector x_yt1_zt1;  ///< x(y^{t+1}, z^{t+1})
    Vector x_zt;       ///< x(z^t)
    Vector x_zt1;      ///< x(z^{t+1})
    double phi_t = 0.0;
    double phi_t1 = 0.0;
    double d_t = 0.0;   ///< d(y^t, z^t)
    double d_t1 = 0.0;  ///< d(y^{t+1}, z^{t+1})
    double P_t = 0.0;
    double P_t1 = 0.0;
};

/// Runs the five inner solves for a consecutive pair of states.
StepSolutions solve_step(const IterateState &s0, const IterateState &s1,
                         const ObjectiveOracle &obj, const AffineConstraint &con,
                         const FeasibleSet &set, const AlgoParams &params, double tol);

/// phi^t - phi^{t+1} >= ||dx||^2/(8c) + alpha/2 ||A x(y^{t+1},z^t) - b||^2
///                      + p/(6 beta) ||dz||^2, slack 6 tol + 1e-8.
CheckResult check_sufficient_decrease(const IterateState &s0, const IterateState &s1,
                                      const StepSolutions &sol, const AffineConstraint &con,
                                      const AlgoParams &params, double tol);

/// The five primal error bounds, each with slack (1 + 1/sigma_i) tol.
std::vector<CheckResult> check_primal_error_bounds(const IterateState &s0, const IterateState &s1,
                                                   const StepSolutions &sol,
                                                   const ErrorBoundConstants &k, double tol);

/// d(y^{t+1},z^{t+1}) - d(y^t,z^t) >= alpha (Ax^t - b)^T (A x(y^{t+1},z^t) - b)
///   + p/2 (z^{t+1} - z^t)^T (z^{t+1} + z^t - 2 x(y^{t+1},z^{t+1})).
CheckResult check_dual_ascent(const IterateState &s0, const IterateState &s1,
                              const StepSolutions &sol, const AffineConstraint &con,
                              const AlgoParams &params, double tol);

/// P(z^{t+1}) - P(z^t) <= p (z^{t+1} - z^t)^T (z^t - x(z^t))
///   + p/2 (p/(p - L_f) + 1) ||z^t - z^{t+1}||^2.
CheckResult check_proximal_descent(const IterateState &s0, const IterateState &s1,
                                   const StepSolutions &sol, const AlgoParams &params,
                                   double lipschitz, double tol);

struct DualErrorRatios {
    double weak = 0.0;    ///< ||x(y^{t+1},z^t) - x(z^t)||^2 / ||A x(y^{t+1},z^t) - b||
    double strong = 0.0;  ///< ||x(y^{t+1},z^t) - x(z^t)|| / ||A x(y^{t+1},z^t) - b||
    double residual = 0.0;
};

/// std::nullopt when ||A x(y^{t+1},z^t) - b|| <= 10 tol (below inner noise).
std::optional<DualErrorRatios> dual_error_ratio(const StepSolutions &sol,
                                                const AffineConstraint &con, double tol);

// ---------------------------------------------------------------------------
// Verification suite

struct CheckSummary {
    std::string name;
    std::int64_t total = 0;
    std::int64_t passed = 0;
    double worst_margin = 0.0;  ///< min over checks of margin + slack
    double pass_rate() const { return total == 0 ? 1.0 : static_cast<double>(passed) / total; }
};

struct RatioSample {
    std::int64_t iteration = 0;
    std::optional<DualErrorRatios> ratios;
};

struct VerificationReport {
    std::vector<CheckResult> checks;
    std::vector<RatioSample> ratios;
    std::vector<std::string> failures;  ///< inner-solve errors, not fatal
    std::int64_t iterations = 0;
    /// In-core primal descent over every step of the underlying run.
    std::int64_t descent_checks = 0;
    std::int64_t descent_violations = 0;

    std::vector<CheckSummary> summarize() const;
    std::optional<CheckSummary> summary(const std::string &name) const;
};

struct VerifyOptions {
    std::int64_t iterations = 1000;  ///< length of the run whose steps are sampled
    std::int64_t samples = 100;      ///< evenly spaced steps t -> t+1
    double tol = 1e-8;
    unsigned threads = 1;
};

/// Evenly spaced step indices in [0, iterations - 1].
std::vector<std::int64_t> sample_steps(std::int64_t iterations, std::int64_t samples);

/// Re-runs the ALM from `start` and checks the sampled steps. Inner solves
/// are driven to tol * min(1, p - L_f) so solution errors stay below tol.
VerificationReport verify_alm(const ObjectiveOracle &obj, const AffineConstraint &con,
                              const FeasibleSet &set, const AlgoParams &params,
                              const IterateState &start, const VerifyOptions &opts);

class BlockProblem;

/// ADMM counterpart: block error bound and per-block descent on every step,
/// inner-solve checks on the sampled ones with the block constants.
VerificationReport verify_admm(const BlockProblem &prob, const AlgoParams &params,
                               const IterateState &start, const VerifyOptions &opts);

nlohmann::json to_json(const VerificationReport &report);

}  // namespace smoothalm
