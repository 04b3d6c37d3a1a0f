#pragma once

#include <string>
#include <vector>

namespace smoothalm {

/// Step sizes and smoothing weights of the smoothed proximal ALM / ADMM.
///   p     proximal weight on ||x - z||^2
///   gamma penalty weight on ||Ax - b||^2
///   c     primal step size
///   alpha dual step size
///   beta  anchor averaging weight, z+ = z + beta (x+ - z)
struct AlgoParams {
    double p = 0.0;
    double gamma = 0.0;
    double c = 0.0;
    double alpha = 0.0;
    double beta = 0.2;
};

struct Admissibility {
    bool ok = true;
    std::vector<std::string> violations;
};

/// Checks the parameter regime under which the convergence guarantees hold:
///   p >= 3 L_f, gamma >= 0, c < 1/(L_f + gamma s^2 + p),
///   alpha <= c (p - L_f)^2 / (4 s^2), 0 < beta <= 1,
/// with s = sigma_max(A). The alpha bound is accepted with equality up to a
/// relative rounding allowance of 1e-12, since the QP defaults sit on it.
Admissibility validate(const AlgoParams &params, double lipschitz, double sigma_max_A);

/// Upper bound on c: 1/(L_f + gamma sigma_max(A)^2 + p).
double step_bound(const AlgoParams &params, double lipschitz, double sigma_max_A);

/// Parameters for an arbitrary oracle, mirroring the QP rule: p = 3 L_f
/// (p = 1 when L_f = 0), gamma = (10/3) p / sigma_max(A)^2, and c, alpha at
/// 0.999 of their upper bounds.
AlgoParams derive_params(double lipschitz, double sigma_max_A, double beta);

}  // namespace smoothalm
