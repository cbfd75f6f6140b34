#pragma once

#include <atomic>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>

#include "ddrmpc/common.hpp"
#include "ddrmpc/hankel.hpp"
#include "ddrmpc/qp.hpp"

namespace ddrmpc {

/// Smallest noise bound used in the cost weights; v_bar = 0 would divide by zero.
inline constexpr double kMinNoiseBound = 1e-9;
/// Hessian entry of the past-window variables, which carry no cost of their own.
inline constexpr double kHessianRidge = 1e-8;

struct MpcConfig {
    int L = 10;               ///< prediction horizon
    int eta = 2;              ///< observability index, length of the initialization window
    double lambda_g = 0.1;    ///< weight of ||g||^2, scaled by v_bar
    double lambda_h = 100.0;  ///< weight of ||h||^2, scaled by 1 / v_bar
    double v_bar = 1e-3;      ///< noise bound
    Matrix R1;                ///< input weight (n_u x n_u, positive definite)
    Matrix R2;                ///< output weight (n_y x n_y, positive definite)
    double u_max = 1.0;       ///< inputs restricted to [-u_max, u_max] per coordinate

    double effective_noise_bound() const { return std::max(v_bar, kMinNoiseBound); }

    /// Throws ConfigError on violated preconditions. n_x < 0 skips the horizon check.
    void validate(Eigen::Index nx = -1) const
    {
        std::string errors;
        auto fail = [&](const std::string& e) { errors += (errors.empty() ? "" : "; ") + e; };
        if (eta < 1) fail("eta must be >= 1");
        if (L < 1) fail("L must be >= 1");
        if (nx >= 0 && L < eta + nx)
            fail("horizon: L = " + std::to_string(L) + " < eta + n_x = " + std::to_string(eta + nx));
        if (!(lambda_g > 0.0)) fail("lambda_g must be positive");
        if (!(lambda_h > 0.0)) fail("lambda_h must be positive");
        if (v_bar < 0.0) fail("v_bar must be nonnegative");
        if (!(u_max > 0.0)) fail("u_max must be positive");
        auto spd = [](const Matrix& R) {
            if (R.rows() == 0 || R.rows() != R.cols()) return false;
            if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, R.cwiseAbs().maxCoeff()))
                return false;
            return R.llt().info() == Eigen::Success;
        };
        if (!spd(R1)) fail("R1 must be symmetric positive definite");
        if (!spd(R2)) fail("R2 must be symmetric positive definite");
        if (!errors.empty()) throw ConfigError("MpcConfig: " + errors);
        if (nx >= 0 && L < static_cast<int>(nx) + 2 * eta)
            warn("MpcConfig: L = " + std::to_string(L) + " < n_x + 2 eta = " + std::to_string(nx + 2 * eta));
    }
};

/// One instance of the data-driven predictive control problem.
struct MpcProblem {
    std::shared_ptr<const HankelPair> data; ///< Hankel matrices of depth L + eta
    Sequence init_u;                        ///< u_{t-eta} .. u_{t-1}
    Sequence init_zeta;                     ///< received noisy outputs for the same steps
    MpcConfig config;
};

/// Layout of the decision vector z = (g, h, u_bar, y_bar).
///
/// u_bar and y_bar cover prediction steps -eta .. L-1; h covers the same L + eta output
/// rows. Offsets are stable so dumps and warm starts stay meaningful.
struct VariableMap {
    Eigen::Index g = 0, h = 0, u = 0, y = 0; ///< block offsets
    Eigen::Index ng = 0, nh = 0, nu_total = 0, ny_total = 0;
    Eigen::Index nu = 0, ny = 0;
    int eta = 0, L = 0;

    Eigen::Index size() const { return ng + nh + nu_total + ny_total; }
    /// Offset of u_bar_i for prediction step i in [-eta, L-1].
    Eigen::Index u_at(int i) const { return u + (i + eta) * nu; }
    Eigen::Index y_at(int i) const { return y + (i + eta) * ny; }
    Eigen::Index h_at(int i) const { return h + (i + eta) * ny; }
};

struct AssembledMpc {
    QpProblem qp;
    VariableMap map;
};

struct MpcSolution {
    Sequence u_pred; ///< u_bar_0 .. u_bar_{L-1}
    Sequence y_pred; ///< y_bar_0 .. y_bar_{L-1}
    Vector g;
    Vector h;        ///< slack over all L + eta output rows
    double cost = 0; ///< optimal value, without the numerical ridge
    QpSolution qp;   ///< raw solver output, reused for warm starts
};

inline void validate(const MpcProblem& p)
{
    if (!p.data) throw PreconditionError("MpcProblem: no data");
    const HankelPair& d = *p.data;
    const MpcConfig& c = p.config;
    c.validate();
    detail::require(d.depth == c.L + c.eta, "MpcProblem: Hankel depth " + std::to_string(d.depth) +
                                                " differs from L + eta = " + std::to_string(c.L + c.eta));
    detail::require(static_cast<int>(p.init_u.size()) == c.eta && static_cast<int>(p.init_zeta.size()) == c.eta,
                    "MpcProblem: initialization windows must have length eta");
    for (const auto& u : p.init_u) detail::require(u.size() == d.nu, "MpcProblem: init_u entry has wrong size");
    for (const auto& y : p.init_zeta) detail::require(y.size() == d.ny, "MpcProblem: init_zeta entry has wrong size");
    detail::require(c.R1.rows() == d.nu && c.R2.rows() == d.ny, "MpcProblem: weight dimensions differ from data");
    if (!d.pe || !d.pe->exciting)
        throw PreconditionError("MpcProblem: offline data carries no persistency-of-excitation certificate");
    if (d.pe->order < d.depth)
        throw PreconditionError("MpcProblem: data certified to order " + std::to_string(d.pe->order) +
                                " < Hankel depth " + std::to_string(d.depth));
}

namespace detail {
inline std::string io_format(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}
} // namespace detail

/// Builds the QP: stage cost on steps 0..L-1, lambda_g v_bar ||g||^2 + lambda_h / v_bar ||h||^2,
/// Hankel representation with output slack, initialization pinning, terminal equilibrium
/// over the last eta steps and the input box on steps 0..L-1.
inline AssembledMpc assemble(const MpcProblem& problem)
{
    validate(problem);
    const HankelPair& d = *problem.data;
    const MpcConfig& c = problem.config;
    const int L = c.L, eta = c.eta, depth = L + eta;
    const Eigen::Index nu = d.nu, ny = d.ny;

    VariableMap map;
    map.nu = nu;
    map.ny = ny;
    map.eta = eta;
    map.L = L;
    map.ng = d.columns();
    map.nh = depth * ny;
    map.nu_total = depth * nu;
    map.ny_total = depth * ny;
    map.g = 0;
    map.h = map.ng;
    map.u = map.h + map.nh;
    map.y = map.u + map.nu_total;
    const Eigen::Index n = map.size();

    static std::atomic<bool> warned{false};
    if (c.v_bar < kMinNoiseBound && !warned.exchange(true))
        warn("assemble: v_bar below " + detail::io_format(kMinNoiseBound) + " is raised to it in the cost weights");
    const double v = c.effective_noise_bound();

    AssembledMpc out;
    out.map = map;
    QpProblem& qp = out.qp;

    // 1/2 z'Pz equals the cost, so every weight enters doubled.
    qp.P = Matrix::Zero(n, n);
    qp.P.diagonal().segment(map.g, map.ng).setConstant(2.0 * c.lambda_g * v);
    qp.P.diagonal().segment(map.h, map.nh).setConstant(2.0 * c.lambda_h / v);
    for (int i = 0; i < L; ++i) {
        qp.P.block(map.u_at(i), map.u_at(i), nu, nu) = 2.0 * c.R1;
        qp.P.block(map.y_at(i), map.y_at(i), ny, ny) = 2.0 * c.R2;
    }
    for (int i = -eta; i < 0; ++i) {
        qp.P.diagonal().segment(map.u_at(i), nu).setConstant(kHessianRidge);
        qp.P.diagonal().segment(map.y_at(i), ny).setConstant(kHessianRidge);
    }
    qp.q = Vector::Zero(n);

    const Eigen::Index rows_repr = depth * (nu + ny);
    const Eigen::Index rows_init = eta * (nu + ny);
    const Eigen::Index rows_term = eta * (nu + ny);
    qp.Aeq = Matrix::Zero(rows_repr + rows_init + rows_term, n);
    qp.beq = Vector::Zero(qp.Aeq.rows());

    // u_bar = Hu g,  y_bar + h = Hy g
    qp.Aeq.block(0, map.u, depth * nu, depth * nu).setIdentity();
    qp.Aeq.block(0, map.g, depth * nu, map.ng) = -d.Hu;
    const Eigen::Index ry = depth * nu;
    qp.Aeq.block(ry, map.y, depth * ny, depth * ny).setIdentity();
    qp.Aeq.block(ry, map.h, depth * ny, depth * ny).setIdentity();
    qp.Aeq.block(ry, map.g, depth * ny, map.ng) = -d.Hy;

    // Past window pinned to the measured inputs and received outputs.
    Eigen::Index r = rows_repr;
    for (int i = -eta; i < 0; ++i) {
        const auto k = static_cast<std::size_t>(i + eta);
        qp.Aeq.block(r, map.u_at(i), nu, nu).setIdentity();
        qp.beq.segment(r, nu) = problem.init_u[k];
        r += nu;
        qp.Aeq.block(r, map.y_at(i), ny, ny).setIdentity();
        qp.beq.segment(r, ny) = problem.init_zeta[k];
        r += ny;
    }
    // Last eta predicted steps at the origin.
    for (int i = L - eta; i < L; ++i) {
        qp.Aeq.block(r, map.u_at(i), nu, nu).setIdentity();
        r += nu;
        qp.Aeq.block(r, map.y_at(i), ny, ny).setIdentity();
        r += ny;
    }

    qp.lb = Vector::Constant(n, -kInf);
    qp.ub = Vector::Constant(n, kInf);
    for (int i = 0; i < L; ++i) {
        qp.lb.segment(map.u_at(i), nu).setConstant(-c.u_max);
        qp.ub.segment(map.u_at(i), nu).setConstant(c.u_max);
    }
    return out;
}

/// Exact objective of a candidate decision vector (no ridge).
inline double mpc_cost(const MpcConfig& c, const VariableMap& map, const Vector& z)
{
    const double v = c.effective_noise_bound();
    double J = c.lambda_g * v * z.segment(map.g, map.ng).squaredNorm() +
               c.lambda_h / v * z.segment(map.h, map.nh).squaredNorm();
    for (int i = 0; i < c.L; ++i) {
        const Vector u = z.segment(map.u_at(i), map.nu);
        const Vector y = z.segment(map.y_at(i), map.ny);
        J += u.dot(c.R1 * u) + y.dot(c.R2 * y);
    }
    return J;
}

inline constexpr double kTerminalTol = 1e-6;
inline constexpr double kBoxTol = 1e-8;

/// Solves one instance and extracts the predicted trajectory.
///
/// Throws SolverError when the solver does not reach optimality or the solution breaks
/// the terminal or input-box constraints beyond tolerance.
inline MpcSolution solve_mpc(const MpcProblem& problem, const MpcSolution* warm = nullptr,
                             const QpSettings& settings = {})
{
    const AssembledMpc a = assemble(problem);
    const MpcConfig& c = problem.config;
    const VariableMap& map = a.map;

    QpWarmStart ws;
    const QpWarmStart* wsp = nullptr;
    if (warm != nullptr && warm->qp.z.size() == map.size()) {
        ws = QpWarmStart{warm->qp.z, warm->qp.y, warm->qp.mu};
        wsp = &ws;
    }
    QpSolver solver(settings);
    MpcSolution s;
    s.qp = solver.solve(a.qp, wsp);
    if (s.qp.status != QpStatus::optimal)
        throw SolverError(std::string("solve_mpc: solver status ") + to_string(s.qp.status) + " after " +
                          std::to_string(s.qp.iterations) + " iterations (primal " +
                          std::to_string(s.qp.primal_residual) + ", dual " + std::to_string(s.qp.dual_residual) +
                          ")");
    const Vector& z = s.qp.z;
    s.g = z.segment(map.g, map.ng);
    s.h = z.segment(map.h, map.nh);
    for (int i = 0; i < c.L; ++i) {
        Vector u = z.segment(map.u_at(i), map.nu);
        if ((u.cwiseAbs().array() > c.u_max + kBoxTol).any())
            throw SolverError("solve_mpc: predicted input " + std::to_string(i) + " leaves the input box");
        s.u_pred.push_back(u.cwiseMax(-c.u_max).cwiseMin(c.u_max));
        s.y_pred.emplace_back(z.segment(map.y_at(i), map.ny));
    }
    for (int i = c.L - c.eta; i < c.L; ++i) {
        const auto k = static_cast<std::size_t>(i);
        if (s.u_pred[k].cwiseAbs().maxCoeff() > kTerminalTol || s.y_pred[k].cwiseAbs().maxCoeff() > kTerminalTol)
            throw SolverError("solve_mpc: terminal constraint violated at step " + std::to_string(i));
    }
    s.cost = mpc_cost(c, map, z);
    return s;
}

/// u_bar_offset of a cached solution.
inline const Vector& predicted_input_at(const MpcSolution& sol, int offset)
{
    if (offset < 0 || offset >= static_cast<int>(sol.u_pred.size()))
        throw PreconditionError("predicted_input_at: offset " + std::to_string(offset) + " outside [0, " +
                                std::to_string(sol.u_pred.size()) + ")");
    return sol.u_pred[static_cast<std::size_t>(offset)];
}

} // namespace ddrmpc
