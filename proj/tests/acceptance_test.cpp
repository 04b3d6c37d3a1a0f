// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include "smoothalm/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <unistd.h>

using namespace smoothalm;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lines are collected and printed in criterion order at the end.
struct Outcome {
    int failed = 0;
    std::map<int, std::string> lines;
    void report(int id, const std::string &name, bool pass, const std::string &detail) {
        lines[id] = std::string(pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) +
                    " (" + name + "): " + detail;
        if (!pass)
            ++failed;
    }
    void print() const {
        for (const auto &[id, line] : lines)
            std::printf("%s\n", line.c_str());
    }
};

// Running tally of the in-core primal descent check across every run.
struct DescentTally {
    std::int64_t checks = 0;
    std::int64_t violations = 0;
    void add(std::int64_t c, std::int64_t v) {
        checks += c;
        violations += v;
    }
};

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

nlohmann::json read_json(const fs::path &p) { return nlohmann::json::parse(slurp(p)); }

Vector json_vec(const nlohmann::json &a) {
    Vector v(static_cast<Eigen::Index>(a.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = a.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

std::string fmt(const char *f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

ExperimentConfig protocol(const fs::path &out) {
    ExperimentConfig cfg;
    cfg.n = 50;
    cfg.m = 20;
    cfg.trials = 20;
    cfg.seed = 1;
    cfg.betas = {0.2};
    cfg.max_iters = 20000;
    cfg.gap_tol = 1e-6;
    cfg.record_every = 10;
    cfg.output = out.string();
    return cfg;
}

// Reads every final state written by cmd_run, folds its descent counts into
// the tally and recomputes stationarity for the runs that stopped early.
struct FinalsAudit {
    std::int64_t early = 0;
    std::int64_t stationary = 0;
    double worst_v = 0.0;
    double worst_feas = 0.0;
};

FinalsAudit audit_finals(const ExperimentConfig &cfg, DescentTally &tally) {
    FinalsAudit audit;
    for (std::int64_t trial = 0; trial < cfg.trials; ++trial) {
        const auto inst = qp_from_json(read_json(instance_path(cfg, trial)));
        const auto obj = qp_objective(inst);
        const auto con = inst.constraint();
        const auto set = harness_set(inst, cfg);
        for (double beta : cfg.betas) {
            const auto fin = read_json(final_path(cfg, trial, beta));
            tally.add(fin.at("descent_checks").get<std::int64_t>(),
                      fin.at("descent_violations").get<std::int64_t>());
            if (!fin.at("stopped_early").get<bool>())
                continue;
            ++audit.early;
            const auto gap = stationary_gap(json_vec(fin.at("x")), json_vec(fin.at("y")), obj,
                                            con, set);
            audit.worst_v = std::max(audit.worst_v, gap.v_norm);
            audit.worst_feas = std::max(audit.worst_feas, gap.feas);
            if (gap.v_norm <= cfg.gap_tol && gap.feas <= cfg.gap_tol)
                ++audit.stationary;
        }
    }
    return audit;
}

// 2-d instance on the unit disk used by the inner-solver oracle comparisons.
struct DiskInstance {
    Matrix Q = (Matrix(2, 2) << 1.0, 0.3, 0.3, -0.8).finished();
    Vector r = (Vector(2) << 0.2, -0.4).finished();
    Matrix A = (Matrix(1, 2) << 1.0, 2.0).finished();
    double b = 0.2;
};

}  // namespace

int main() {
    const auto t_start = std::chrono::steady_clock::now();
    Outcome out;
    DescentTally tally;
    const fs::path root = fs::temp_directory_path() /
                          ("smoothalm_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);

    // 1. Rate of the median running-min gap on the 20-instance QP protocol.
    const auto cfg1 = protocol(root / "protocol_a");
    cmd_gen(cfg1);
    cmd_run(cfg1);
    const auto summary = cmd_summarize(fs::path(cfg1.output) / "traces", 1e2, 1e4, 1e-2,
                                       cfg1.output);
    {
        const auto &fit = summary.slopes.at(0);
        out.report(1, "rate slope", fit.points >= 2 && fit.slope <= -0.40,
                   "slope " + fmt("%.3f", fit.slope) + " over " + std::to_string(fit.points) +
                       " checkpoints, need <= -0.40");
    }

    // 2. Hitting times to gap <= 1e-2 across the beta sweep, exact per step.
    auto cfg2 = protocol(root / "beta_sweep");
    cfg2.betas = {0.05, 0.2, 0.5};
    cfg2.gap_tol = 1e-2;
    cfg2.record_every = 20000;
    cmd_gen(cfg2);
    cmd_run(cfg2);
    {
        int monotone = 0;
        std::vector<std::vector<double>> hits(3);
        for (std::int64_t trial = 0; trial < cfg2.trials; ++trial) {
            double h[3];
            for (int k = 0; k < 3; ++k) {
                const auto fin = read_json(final_path(cfg2, trial, cfg2.betas[k]));
                h[k] = fin.at("stopped_early").get<bool>()
                           ? static_cast<double>(fin.at("t").get<std::int64_t>())
                           : kInf;
                hits[k].push_back(h[k]);
            }
            if (h[0] >= h[1] && h[1] >= h[2])
                ++monotone;
        }
        std::string medians;
        for (int k = 0; k < 3; ++k)
            medians += (k ? "/" : "") + fmt("%.0f", nearest_rank(hits[k], 0.5));
        out.report(2, "beta ordering", monotone >= 15,
                   std::to_string(monotone) + "/20 trials nonincreasing in beta, need >= 15; "
                   "median hitting times for beta 0.05/0.2/0.5: " + medians);
    }

    // 3 and 4. Inequality checks on the n = 10 instance.
    {
        const auto inst = generate_qp(10, 4, 1);
        const auto obj = qp_objective(inst);
        const auto con = inst.constraint();
        const auto set = inst.feasible_set();
        const auto params = default_params(inst, 0.05);
        VerifyOptions opts;
        opts.iterations = 1000;
        opts.samples = 500;
        opts.tol = 1e-8;
        opts.threads = harness_threads();
        const auto start = initial_state(set, con.rows());
        const auto rep500 = verify_alm(obj, con, set, params, start, opts);
        tally.add(rep500.descent_checks, rep500.descent_violations);
        const auto sd = rep500.summary("sufficient_decrease").value_or(CheckSummary{});
        out.report(3, "sufficient decrease", sd.total == 500 && sd.pass_rate() >= 0.99,
                   std::to_string(sd.passed) + "/" + std::to_string(sd.total) +
                       " pairs, worst margin+slack " + fmt("%.3g", sd.worst_margin) +
                       ", inner failures " + std::to_string(rep500.failures.size()));

        opts.samples = 100;
        const auto rep100 = verify_alm(obj, con, set, params, start, opts);
        tally.add(rep100.descent_checks, rep100.descent_violations);
        bool all = rep100.failures.empty();
        std::string detail;
        for (const char *name :
             {"error_bound_x_step", "error_bound_x_next", "error_bound_dual_lipschitz",
              "error_bound_envelope_lipschitz", "error_bound_anchor_lipschitz"}) {
            const auto s = rep100.summary(name).value_or(CheckSummary{});
            all = all && s.total == 100 && s.passed == s.total;
            detail += std::string(detail.empty() ? "" : ", ") + std::to_string(s.passed) + "/" +
                      std::to_string(s.total);
        }
        out.report(4, "primal error bounds", all, detail + " across the five bounds");
    }

    // 6. Single-block ADMM reproduces the ALM iterates exactly.
    {
        const auto inst = generate_qp(20, 8, 1);
        const auto obj = qp_objective(inst);
        const auto ball = inst.feasible_set();
        const BlockProblem prob(obj, inst.constraint(), FeasibleSet::product({ball}));
        const auto params = default_params(inst, 0.2);
        IterateState a = initial_state(ball, 8);
        IterateState b = a;
        int identical = 0;
        std::int64_t violations = 0;
        for (int k = 0; k < 1000; ++k) {
            const auto na = alm_step(a, obj, prob.con(), ball, params);
            const auto nb = admm_step(b, prob, params);
            if (primal_descent_margin(a, na, obj, prob.con(), params) < -kDescentSlack)
                ++violations;
            if (na.x == nb.x && na.y == nb.y && na.z == nb.z)
                ++identical;
            a = na;
            b = nb;
        }
        tally.add(1000, violations);
        out.report(6, "single-block reduction", identical == 1000,
                   std::to_string(identical) + "/1000 steps bit-identical");
    }

    // 7. Block error bound on a two-block run.
    {
        const auto inst = generate_qp(20, 8, 1);
        ExperimentConfig cfg;
        cfg.algo = "admm";
        cfg.blocks = 2;
        cfg.n = 20;
        cfg.m = 8;
        const auto set = harness_set(inst, cfg);
        const BlockProblem prob(qp_objective(inst), inst.constraint(), set);
        const auto params = default_params(inst, 0.2);
        IterateState s = initial_state(set, 8);
        int ok = 0;
        double worst = kInf;
        std::int64_t violations = 0;
        const int steps = 2000;
        for (int k = 0; k < steps; ++k) {
            AdmmStepDiagnostics diag;
            const auto next = admm_step(s, prob, params, &diag);
            const double rhs = diag.eta * (s.x - next.x).norm() + 1e-8;
            worst = std::min(worst, rhs - diag.block_error_norm);
            if (diag.block_error_norm <= rhs)
                ++ok;
            if (primal_descent_margin(s, next, prob.obj(), prob.con(), params) < -kDescentSlack)
                ++violations;
            s = next;
        }
        tally.add(steps, violations);
        out.report(7, "block error bound", ok == steps,
                   std::to_string(ok) + "/" + std::to_string(steps) + " steps, min slack " +
                       fmt("%.3g", worst));
    }

    // 8. Inner solvers against grid search on the unit disk.
    {
        const DiskInstance d;
        const auto obj = qp_objective(d.Q, d.r);
        const AffineConstraint con(d.A, Vector::Constant(1, d.b));
        const auto set = FeasibleSet::ball(2, 1.0);
        const auto params = derive_params(obj.lipschitz, con.sigma_max(), 0.2);
        const Vector y = Vector::Constant(1, 0.7);
        const Vector z = (Vector(2) << -0.4, 0.6).finished();

        InnerSolveOptions iopts;
        iopts.tol = 1e-10;
        const auto xyz = solve_x_of_yz(y, z, obj, con, set, params, iopts);
        const double h = 1e-4;
        const int steps = static_cast<int>(std::lround(2.0 / h));
        double best = kInf, ga = 0.0, gb = 0.0;
        for (int i = 0; i <= steps; ++i) {
            const double a = -1.0 + i * h;
            for (int j = 0; j <= steps; ++j) {
                const double b = -1.0 + j * h;
                if (a * a + b * b > 1.0)
                    continue;
                const double res = a * d.A(0, 0) + b * d.A(0, 1) - d.b;
                const double K = 0.5 * (d.Q(0, 0) * a * a + 2.0 * d.Q(0, 1) * a * b +
                                        d.Q(1, 1) * b * b) +
                                 d.r[0] * a + d.r[1] * b + y[0] * res +
                                 0.5 * params.gamma * res * res +
                                 0.5 * params.p * ((a - z[0]) * (a - z[0]) + (b - z[1]) * (b - z[1]));
                if (K < best) {
                    best = K;
                    ga = a;
                    gb = b;
                }
            }
        }
        const double err_yz = std::hypot(xyz.solution[0] - ga, xyz.solution[1] - gb);

        // Feasible slice: x0 + s u, u orthogonal to the constraint row.
        const Vector arow = d.A.row(0).transpose();
        const Vector x0 = arow * (d.b / arow.squaredNorm());
        const Vector u = (Vector(2) << -arow[1], arow[0]).finished().normalized();
        const double half = std::sqrt(1.0 - x0.squaredNorm());
        const auto xz = solve_x_of_z(z, obj, con, set, params, iopts);
        double best_s = 0.0, best_v = kInf;
        for (double s = -half; s <= half; s += 1e-6) {
            const Vector x = x0 + s * u;
            const double v = obj.eval(x) + 0.5 * params.p * (x - z).squaredNorm();
            if (v < best_v) {
                best_v = v;
                best_s = s;
            }
        }
        const double err_z = (xz.solution - (x0 + best_s * u)).norm();
        out.report(8, "inner-solver oracles", err_yz <= 2e-4 && err_z <= 1e-4,
                   "x(y,z) off grid by " + fmt("%.2e", err_yz) + " (<= 2e-4), x(z) off slice by " +
                       fmt("%.2e", err_z) + " (<= 1e-4)");
    }

    // 10. Determinism of the criterion 1 pipeline.
    const auto cfg10 = protocol(root / "protocol_b");
    cmd_gen(cfg10);
    cmd_run(cfg10);
    {
        int same = 0;
        for (std::int64_t trial = 0; trial < cfg1.trials; ++trial) {
            const auto a = slurp(trace_path(cfg1, trial, 0.2));
            const auto b = slurp(trace_path(cfg10, trial, 0.2));
            if (!a.empty() && a == b)
                ++same;
        }
        out.report(10, "determinism", same == cfg1.trials,
                   std::to_string(same) + "/" + std::to_string(cfg1.trials) +
                       " trace files byte-identical");
    }

    // 9 and 5 read the stored final states of every harness run above.
    {
        const auto a1 = audit_finals(cfg1, tally);
        const auto a2 = audit_finals(cfg2, tally);
        const auto a10 = audit_finals(cfg10, tally);
        const auto early = a1.early + a2.early + a10.early;
        const auto ok = a1.stationary + a2.stationary + a10.stationary;
        out.report(9, "stationarity at early stop", early > 0 && ok == early,
                   std::to_string(ok) + "/" + std::to_string(early) +
                       " early-stopped runs within gap_tol; worst |v| " +
                       fmt("%.2e", std::max({a1.worst_v, a2.worst_v, a10.worst_v})) +
                       ", worst |Ax-b| " +
                       fmt("%.2e", std::max({a1.worst_feas, a2.worst_feas, a10.worst_feas})));
    }
    out.report(5, "primal descent", tally.checks > 0 && tally.violations == 0,
               std::to_string(tally.checks - tally.violations) + "/" +
                   std::to_string(tally.checks) + " steps across all runs");

    fs::remove_all(root);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    out.print();
    std::printf("%d criteria failed, %.1f s\n", out.failed, secs);
    return out.failed == 0 ? 0 : 1;
}
