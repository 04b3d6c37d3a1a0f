#include "oracles.hpp"
#include "smoothalm/alm.hpp"
#include "smoothalm/qp_bench.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace smoothalm;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ObjectiveOracle scalar_quadratic(double q) {
    ObjectiveOracle o;
    o.dim = 1;
    o.eval = [q](const Vector &x) { return 0.5 * q * x[0] * x[0]; };
    o.grad = [q](const Vector &x) { return Vector::Constant(1, q * x[0]); };
    o.lipschitz = std::abs(q);
    return o;
}

Vector one(double v) { return Vector::Constant(1, v); }

struct Fixture {
    QpInstance inst;
    ObjectiveOracle obj;
    AffineConstraint con;
    FeasibleSet set;
    AlgoParams params;

    explicit Fixture(std::uint64_t seed, double beta = 0.2, Eigen::Index n = 10,
                     Eigen::Index m = 4)
        : inst(generate_qp(n, m, seed)),
          obj(qp_objective(inst)),
          con(inst.constraint()),
          set(inst.feasible_set()),
          params(default_params(inst, beta)) {}
};

}  // namespace

TEST(AugmentedLagrangian, ValueOnHandExample) {
    const auto obj = scalar_quadratic(2.0);
    Matrix A(1, 1);
    A << 3.0;
    const AffineConstraint con(A, one(1.0));
    const AlgoParams params{4.0, 5.0, 0.01, 0.01, 0.5};
    // f = 1, r = 2, y r = -2, gamma/2 r^2 = 10, p/2 (x - z)^2 = 2.
    EXPECT_DOUBLE_EQ(eval_K(one(1.0), one(0.0), one(-1.0), obj, con, params), 11.0);
    // grad = 2 + 3 (-1 + 10) + 4 = 33.
    EXPECT_DOUBLE_EQ(grad_K(one(1.0), one(0.0), one(-1.0), obj, con, params)[0], 33.0);
}

TEST(AugmentedLagrangian, GradientMatchesFiniteDifferences) {
    Fixture fx(3);
    std::mt19937_64 rng(3);
    for (int k = 0; k < 20; ++k) {
        const Vector x = oracle::random_vector(rng, 10);
        const Vector z = oracle::random_vector(rng, 10);
        const Vector y = oracle::random_vector(rng, 4);
        auto K = [&](const Vector &v) { return eval_K(v, z, y, fx.obj, fx.con, fx.params); };
        const Vector fd = oracle::central_difference(K, x);
        EXPECT_LE((grad_K(x, z, y, fx.obj, fx.con, fx.params) - fd).norm(),
                  1e-5 * (1.0 + fd.norm()));
    }
}

TEST(AlmStep, OneDimensionalHandComputation) {
    const auto obj = scalar_quadratic(1.0);
    Matrix A(1, 1);
    A << 1.0;
    const AffineConstraint con(A, one(0.5));
    const auto set = FeasibleSet::ball(1, 2.0);
    const AlgoParams params{3.0, 10.0, 1.0 / 28.0, 1.0 / 28.0, 0.2};
    const IterateState s{one(0.0), one(0.0), one(0.0), 0};
    const auto next = alm_step(s, obj, con, set, params);
    EXPECT_EQ(next.t, 1);
    EXPECT_NEAR(next.y[0], -1.0 / 56.0, 1e-15);
    EXPECT_NEAR(next.x[0], 281.0 / 1568.0, 1e-15);
    EXPECT_NEAR(next.z[0], 281.0 / 7840.0, 1e-15);
}

TEST(AlmStep, ProjectionActiveOnHandExample) {
    const auto obj = scalar_quadratic(-1.0);
    Matrix A(1, 1);
    A << 0.0;
    const AffineConstraint con(A, one(0.0));
    const auto set = FeasibleSet::ball(1, 1.0);
    const AlgoParams params{3.0, 0.0, 0.2, 0.0, 1.0};
    // grad at x = 0.9, z = 0.9 is -0.9, so x - c g = 1.08 -> clipped to 1.
    const auto next = alm_step({one(0.9), one(0.0), one(0.9), 0}, obj, con, set, params);
    EXPECT_DOUBLE_EQ(next.x[0], 1.0);
    EXPECT_DOUBLE_EQ(next.z[0], 1.0);
}

TEST(AlmStep, UpdateIdentitiesHoldAlongARun) {
    Fixture fx(4);
    IterateState s = initial_state(fx.set, 4);
    for (int k = 0; k < 200; ++k) {
        const auto next = alm_step(s, fx.obj, fx.con, fx.set, fx.params);
        EXPECT_LE((next.y - s.y - fx.params.alpha * (fx.inst.A * s.x - fx.inst.b)).norm(),
                  1e-12 * (1.0 + next.y.norm()));
        EXPECT_LE((next.z - s.z - fx.params.beta * (next.x - s.z)).norm(), 1e-12);
        EXPECT_TRUE(fx.set.contains(next.x));
        EXPECT_TRUE(fx.set.contains(next.z));
        s = next;
    }
}

TEST(AlmStep, BetaOneCopiesPrimalIntoAnchor) {
    Fixture fx(5, 1.0);
    IterateState s = initial_state(fx.set, 4);
    for (int k = 0; k < 10; ++k) {
        s = alm_step(s, fx.obj, fx.con, fx.set, fx.params);
        EXPECT_EQ(s.z, s.x);
    }
}

TEST(AlmStep, KktPointIsFixed) {
    // f = 0.5 ||x||^2, constraint x1 + x2 = 1: x* = (0.5, 0.5), y* = -0.5, z* = x*.
    ObjectiveOracle obj;
    obj.dim = 2;
    obj.eval = [](const Vector &x) { return 0.5 * x.squaredNorm(); };
    obj.grad = [](const Vector &x) { return x; };
    obj.lipschitz = 1.0;
    Matrix A(1, 2);
    A << 1.0, 1.0;
    const AffineConstraint con(A, one(1.0));
    const auto set = FeasibleSet::ball(2, 5.0);
    const auto params = derive_params(1.0, std::sqrt(2.0), 0.3);
    const IterateState s{Vector::Constant(2, 0.5), one(-0.5), Vector::Constant(2, 0.5), 0};
    const auto next = alm_step(s, obj, con, set, params);
    EXPECT_LE((next.x - s.x).norm(), 1e-15);
    EXPECT_LE((next.y - s.y).norm(), 1e-15);
    EXPECT_LE((next.z - s.z).norm(), 1e-15);
}

TEST(RunAlm, ConvexQpConvergesToKktSolution) {
    std::mt19937_64 rng(6);
    const Matrix M = oracle::random_matrix(rng, 6, 6);
    const Matrix Q = M.transpose() * M / 6.0;
    const Vector r = oracle::random_vector(rng, 6);
    const Matrix A = oracle::random_matrix(rng, 2, 6);
    const Vector b = oracle::random_vector(rng, 2);
    // Independent solve of the KKT system [Q A^T; A 0][x; y] = [-r; b].
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(8, 8);
    kkt.topLeftCorner(6, 6) = Q;
    kkt.topRightCorner(6, 2) = A.transpose();
    kkt.bottomLeftCorner(2, 6) = A;
    Eigen::VectorXd rhs(8);
    rhs << -r, b;
    const Eigen::VectorXd sol = kkt.fullPivLu().solve(rhs);
    const Vector x_star = sol.head(6);
    ASSERT_LT(x_star.norm(), 50.0);

    const auto obj = qp_objective(Q, r);
    const AffineConstraint con(A, b);
    const auto set = FeasibleSet::ball(6, 100.0);
    const auto params = derive_params(obj.lipschitz, con.sigma_max(), 0.5);
    StopRule stop;
    stop.max_iters = 500000;
    stop.gap_tol = 1e-9;
    stop.record_every = 1000;
    const auto start = initial_state(set, 2);
    const auto res = run_alm(obj, con, set, params, start.x, start.y, start.z, stop);
    ASSERT_TRUE(res.stopped_early);
    EXPECT_LE((res.final_state.x - x_star).norm(), 1e-6);
    EXPECT_LE((res.final_state.y - sol.tail(2)).norm(), 1e-6);
    EXPECT_EQ(res.descent_violations, 0);
}

TEST(RunAlm, RecordCadenceIncludesStartAndEnd) {
    Fixture fx(7);
    const auto s = initial_state(fx.set, 4);
    StopRule stop;
    stop.max_iters = 100;
    stop.gap_tol = kInf;
    stop.record_every = 10;
    auto res = run_alm(fx.obj, fx.con, fx.set, fx.params, s.x, s.y, s.z, stop);
    ASSERT_EQ(res.trace.size(), 11u);
    for (std::size_t i = 0; i < res.trace.size(); ++i)
        EXPECT_EQ(res.trace[i].t, static_cast<std::int64_t>(10 * i));
    EXPECT_EQ(res.trace.front().dx, 0.0);
    EXPECT_FALSE(res.stopped_early);

    stop.max_iters = 57;
    stop.record_every = 1;
    res = run_alm(fx.obj, fx.con, fx.set, fx.params, s.x, s.y, s.z, stop);
    EXPECT_EQ(res.trace.size(), 58u);
    EXPECT_EQ(res.final_state.t, 57);
    EXPECT_EQ(res.descent_checks, 57);

    stop.max_iters = 0;
    res = run_alm(fx.obj, fx.con, fx.set, fx.params, s.x, s.y, s.z, stop);
    EXPECT_EQ(res.trace.size(), 1u);
}

TEST(RunAlm, TraceGapIsVnormPlusFeas) {
    Fixture fx(8);
    const auto s = initial_state(fx.set, 4);
    StopRule stop;
    stop.max_iters = 300;
    stop.gap_tol = kInf;
    const auto res = run_alm(fx.obj, fx.con, fx.set, fx.params, s.x, s.y, s.z, stop);
    for (const auto &rec : res.trace) {
        EXPECT_DOUBLE_EQ(rec.gap, rec.vnorm + rec.feas);
        EXPECT_GE(rec.vnorm, 0.0);
    }
}

TEST(RunAlm, EarlyStopRecordsTheHit) {
    Fixture fx(9);
    const auto s = initial_state(fx.set, 4);
    StopRule stop;
    stop.max_iters = 20000;
    stop.gap_tol = 1e-2;
    stop.record_every = 1000;
    const auto res = run_alm(fx.obj, fx.con, fx.set, fx.params, s.x, s.y, s.z, stop);
    ASSERT_TRUE(res.stopped_early);
    EXPECT_LE(res.trace.back().gap, 1e-2);
    EXPECT_EQ(res.trace.back().t, res.final_state.t);
    EXPECT_GT(res.trace[res.trace.size() - 2].gap, 1e-2);
}

TEST(RunAlm, PrimalDescentHoldsInAdmissibleRegime) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        for (double beta : {0.05, 0.5, 1.0}) {
            Fixture fx(seed, beta);
            const auto s = initial_state(fx.set, 4);
            StopRule stop;
            stop.max_iters = 2000;
            stop.gap_tol = kInf;
            stop.record_every = 2000;
            const auto res = run_alm(fx.obj, fx.con, fx.set, fx.params, s.x, s.y, s.z, stop);
            EXPECT_EQ(res.descent_checks, 2000);
            EXPECT_EQ(res.descent_violations, 0)
                << "seed " << seed << " beta " << beta << " worst "
                << res.worst_descent_margin;
        }
    }
}

TEST(RunAlm, DivergenceIsReportedWithIteration) {
    Fixture fx(10);
    const auto set = FeasibleSet::box(Vector::Constant(10, -kInf), Vector::Constant(10, kInf));
    AlgoParams bad = fx.params;
    bad.c = 10.0;
    const auto s = initial_state(set, 4);
    StopRule stop;
    stop.max_iters = 10000;
    stop.gap_tol = kInf;
    try {
        run_alm(fx.obj, fx.con, set, bad, s.x, s.y, s.z, stop);
        FAIL() << "expected divergence";
    } catch (const DivergenceError &err) {
        EXPECT_GT(err.iteration(), 0);
        EXPECT_LT(err.iteration(), 10000);
    }
}

TEST(RunAlm, InfeasibleStartRejected) {
    Fixture fx(11);
    const Vector far = Vector::Constant(10, 100.0);
    StopRule stop;
    EXPECT_THROW(run_alm(fx.obj, fx.con, fx.set, fx.params, far, Vector::Zero(4), far, stop),
                 InfeasiblePointError);
    EXPECT_THROW(run_alm(fx.obj, fx.con, fx.set, fx.params, Vector::Zero(10), Vector::Zero(3),
                         Vector::Zero(10), stop),
                 DimensionError);
}
