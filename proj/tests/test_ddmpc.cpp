#include <gtest/gtest.h>

#include "support.hpp"

using namespace ddrmpc;
using ddrmpc::testing::CaptureWarnings;
using ddrmpc::testing::fixture_data;
using ddrmpc::testing::fixture_mpc;

namespace {

struct Window {
    Sequence u, y;
    Vector x; ///< state right after the window
};

Window past_window(const SystemModel& m, const Vector& x0, Rng& rng, int eta, double u_bound)
{
    Window w;
    Vector x = x0;
    for (int i = 0; i < eta; ++i) {
        const Vector u = rng.uniform_vector(m.nu(), u_bound);
        w.u.push_back(u);
        w.y.push_back(m.C * x);
        x = m.A * x + m.B * u;
    }
    w.x = x;
    return w;
}

/// Model-based counterpart with inactive input box: equality-constrained least squares in U.
Sequence model_based_plan(const SystemModel& m, const Vector& x, const MpcConfig& c)
{
    const int L = c.L, eta = c.eta;
    const Eigen::Index nu = m.nu(), ny = m.ny();
    Matrix Theta(L * ny, m.nx());
    Matrix Gamma = Matrix::Zero(L * ny, L * nu);
    Matrix Ak = Matrix::Identity(m.nx(), m.nx());
    for (int i = 0; i < L; ++i) {
        Theta.middleRows(i * ny, ny) = m.C * Ak;
        Ak = m.A * Ak;
    }
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < i; ++j) {
            Matrix Apow = Matrix::Identity(m.nx(), m.nx());
            for (int k = 0; k < i - 1 - j; ++k) Apow = m.A * Apow;
            Gamma.block(i * ny, j * nu, ny, nu) = m.C * Apow * m.B;
        }
    Matrix R1b = Matrix::Zero(L * nu, L * nu), R2b = Matrix::Zero(L * ny, L * ny);
    for (int i = 0; i < L; ++i) {
        R1b.block(i * nu, i * nu, nu, nu) = c.R1;
        R2b.block(i * ny, i * ny, ny, ny) = c.R2;
    }
    const Matrix H = 2.0 * (R1b + Gamma.transpose() * R2b * Gamma);
    const Vector f = 2.0 * Gamma.transpose() * R2b * Theta * x;
    // terminal: u_i = 0 and y_i = 0 for the last eta steps
    Matrix E = Matrix::Zero(eta * (nu + ny), L * nu);
    Vector e = Vector::Zero(E.rows());
    for (int k = 0; k < eta; ++k) {
        const int i = L - eta + k;
        E.block(k * nu, i * nu, nu, nu).setIdentity();
        E.middleRows(eta * nu + k * ny, ny) = Gamma.middleRows(i * ny, ny);
        e.segment(eta * nu + k * ny, ny) = -Theta.middleRows(i * ny, ny) * x;
    }
    const Eigen::Index n = L * nu, r = E.rows();
    Matrix K = Matrix::Zero(n + r, n + r);
    K.topLeftCorner(n, n) = H;
    K.topRightCorner(n, r) = E.transpose();
    K.bottomLeftCorner(r, n) = E;
    Vector rhs(n + r);
    rhs << -f, e;
    const Vector U = K.fullPivLu().solve(rhs).head(n);
    return unstack(U, nu);
}

std::shared_ptr<const HankelPair> fixture_pair(double v_bar)
{
    return std::make_shared<const HankelPair>(HankelPair::from(fixture_data(v_bar), 12));
}

} // namespace

TEST(Assemble, LayoutAndCost)
{
    auto data = fixture_pair(0.0);
    MpcConfig c = fixture_mpc(1e-3);
    MpcProblem p{data, Sequence(2, Vector::Zero(2)), Sequence(2, Vector::Zero(2)), c};
    const AssembledMpc a = assemble(p);
    EXPECT_EQ(a.map.ng, 89);
    EXPECT_EQ(a.map.nh, 24);
    EXPECT_EQ(a.map.size(), 89 + 24 + 24 + 24);
    EXPECT_EQ(a.qp.Aeq.rows(), 48 + 8 + 8);

    Rng rng(4);
    const Vector z = rng.uniform_vector(a.map.size(), 1.0);
    double ridge = 0.0;
    for (int i = -2; i < 0; ++i)
        ridge += z.segment(a.map.u_at(i), 2).squaredNorm() + z.segment(a.map.y_at(i), 2).squaredNorm();
    const double quad = 0.5 * z.dot(a.qp.P * z) - 0.5 * kHessianRidge * ridge;
    EXPECT_NEAR(mpc_cost(c, a.map, z), quad, 1e-9 * quad);
    // boxes only on predicted inputs 0..L-1
    for (Eigen::Index i = 0; i < a.map.size(); ++i) {
        const bool boxed = i >= a.map.u_at(0) && i < a.map.u_at(10);
        EXPECT_EQ(std::isfinite(a.qp.ub(i)), boxed) << i;
    }
}

TEST(Assemble, PreconditionsReported)
{
    auto data = fixture_pair(0.0);
    MpcConfig c = fixture_mpc(1e-3);
    EXPECT_THROW(assemble({data, Sequence(1, Vector::Zero(2)), Sequence(2, Vector::Zero(2)), c}), DimensionError);
    MpcConfig wrong = c;
    wrong.L = 11;
    EXPECT_THROW(assemble({data, Sequence(2, Vector::Zero(2)), Sequence(2, Vector::Zero(2)), wrong}), DimensionError);
    HankelPair uncertified = *data;
    uncertified.pe.reset();
    EXPECT_THROW(assemble({std::make_shared<const HankelPair>(uncertified), Sequence(2, Vector::Zero(2)),
                           Sequence(2, Vector::Zero(2)), c}),
                 PreconditionError);
    MpcConfig bad = c;
    bad.lambda_g = 0.0;
    EXPECT_THROW(assemble({data, Sequence(2, Vector::Zero(2)), Sequence(2, Vector::Zero(2)), bad}), ConfigError);
}

TEST(Assemble, ZeroNoiseBoundIsClamped)
{
    MpcConfig c = fixture_mpc(0.0);
    EXPECT_DOUBLE_EQ(c.effective_noise_bound(), kMinNoiseBound);
}

TEST(SolveMpc, NoiseFreeDataReproducesModelBasedPlan)
{
    CaptureWarnings quiet;
    const SystemModel m = batch_reactor();
    auto data = fixture_pair(0.0);
    const MpcConfig c = fixture_mpc(0.0);
    Rng rng(11);
    for (int k = 0; k < 5; ++k) {
        const Window w = past_window(m, rng.uniform_vector(4, 0.05), rng, 2, 0.05);
        const MpcSolution s = solve_mpc({data, w.u, w.y, c});
        const Sequence ref = model_based_plan(m, w.x, c);
        ASSERT_LT(stack(ref).cwiseAbs().maxCoeff(), 1.0) << "box must be inactive for the oracle";
        EXPECT_LE((stack(s.u_pred) - stack(ref)).cwiseAbs().maxCoeff(), 1e-5) << k;
    }
}

TEST(SolveMpc, PredictionIsAPlantTrajectory)
{
    CaptureWarnings quiet;
    const SystemModel m = batch_reactor();
    auto data = fixture_pair(0.0);
    const MpcConfig c = fixture_mpc(0.0);
    Rng rng(12);
    const Window w = past_window(m, rng.uniform_vector(4, 0.3), rng, 2, 0.3);
    const MpcSolution s = solve_mpc({data, w.u, w.y, c});
    // |H||g| reaches 5e9 on open-loop data, so rounding alone leaves residuals near 1e-6
    Vector x = w.x;
    for (int i = 0; i < c.L; ++i) {
        EXPECT_LE((m.C * x - s.y_pred[static_cast<std::size_t>(i)]).cwiseAbs().maxCoeff(), 1e-5) << i;
        EXPECT_LE(s.u_pred[static_cast<std::size_t>(i)].cwiseAbs().maxCoeff(), c.u_max);
        x = m.A * x + m.B * s.u_pred[static_cast<std::size_t>(i)];
    }
    EXPECT_LE(s.u_pred.back().cwiseAbs().maxCoeff(), kTerminalTol);
    EXPECT_LE(s.y_pred.back().cwiseAbs().maxCoeff(), kTerminalTol);
}

TEST(SolveMpc, CostBoundsOnSlackAndCoefficients)
{
    const SystemModel m = batch_reactor();
    auto data = fixture_pair(1e-4);
    const MpcConfig c = fixture_mpc(1e-4);
    Rng rng(13);
    const Window w = past_window(m, rng.uniform_vector(4, 0.5), rng, 2, 1.0);
    Sequence zeta = w.y;
    for (auto& y : zeta) y += rng.uniform_vector(2, 1e-4);
    const MpcSolution s = solve_mpc({data, w.u, zeta, c});
    EXPECT_LE(s.h.norm(), std::sqrt(s.cost * c.v_bar / c.lambda_h));
    EXPECT_LE(s.g.norm(), std::sqrt(s.cost / (c.v_bar * c.lambda_g)));
    EXPECT_GT(s.h.norm(), 0.0);
}

TEST(SolveMpc, ObjectiveScalingLeavesOptimizerUnchanged)
{
    const SystemModel m = batch_reactor();
    auto data = fixture_pair(1e-4);
    MpcConfig c = fixture_mpc(1e-4);
    Rng rng(14);
    const Window w = past_window(m, rng.uniform_vector(4, 0.5), rng, 2, 1.0);
    const MpcSolution a = solve_mpc({data, w.u, w.y, c});
    c.R1 *= 2.0;
    c.R2 *= 2.0;
    c.lambda_g *= 2.0;
    c.lambda_h *= 2.0;
    const MpcSolution b = solve_mpc({data, w.u, w.y, c});
    EXPECT_NEAR(b.cost, 2.0 * a.cost, 1e-6 * a.cost);
    EXPECT_LE((stack(a.u_pred) - stack(b.u_pred)).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(SolveMpc, WarmStartGivesSameSolution)
{
    const SystemModel m = batch_reactor();
    auto data = fixture_pair(1e-4);
    const MpcConfig c = fixture_mpc(1e-4);
    Rng rng(15);
    const Window w = past_window(m, rng.uniform_vector(4, 0.5), rng, 2, 1.0);
    const MpcSolution cold = solve_mpc({data, w.u, w.y, c});
    const MpcSolution warm = solve_mpc({data, w.u, w.y, c}, &cold);
    EXPECT_LE((stack(cold.u_pred) - stack(warm.u_pred)).cwiseAbs().maxCoeff(), 1e-6);
    EXPECT_LE(warm.qp.iterations, cold.qp.iterations);
}

TEST(SolveMpc, PredictedInputRange)
{
    MpcSolution s;
    s.u_pred = Sequence(3, Vector::Ones(2));
    EXPECT_EQ(predicted_input_at(s, 2), Vector::Ones(2));
    EXPECT_THROW(predicted_input_at(s, 3), PreconditionError);
    EXPECT_THROW(predicted_input_at(s, -1), PreconditionError);
}
