#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "ddrmpc/common.hpp"

namespace ddrmpc {

/// x_{t+1} = A x_t + B u_t + w_t,  y_t = C x_t + D u_t.
///
/// The matrices are ground truth: they drive the simulated plant, the model-based
/// baseline and the test oracles, and are never read by the data-driven controller.
struct SystemModel {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix D;
    double dt = 0.0; ///< sampling period in seconds, metadata only

    Eigen::Index nx() const { return A.rows(); }
    Eigen::Index nu() const { return B.cols(); }
    Eigen::Index ny() const { return C.rows(); }

    /// Throws DimensionError unless A, B, C, D are mutually consistent.
    void validate() const
    {
        using detail::dims;
        using detail::require;
        require(A.rows() == A.cols(), "SystemModel: A must be square, got " + dims(A));
        require(A.rows() > 0, "SystemModel: empty state");
        require(B.rows() == A.rows(), "SystemModel: B has " + dims(B) + ", A has " + dims(A));
        require(C.cols() == A.rows(), "SystemModel: C has " + dims(C) + ", A has " + dims(A));
        require(D.rows() == C.rows() && D.cols() == B.cols(),
                "SystemModel: D has " + dims(D) + ", expected " + std::to_string(C.rows()) + "x" +
                    std::to_string(B.cols()));
    }

    /// Builds a model with D = 0.
    static SystemModel make(Matrix A, Matrix B, Matrix C, double dt = 0.0)
    {
        SystemModel m{std::move(A), std::move(B), std::move(C), Matrix(), dt};
        m.D = Matrix::Zero(m.C.rows(), m.B.cols());
        m.validate();
        return m;
    }
};

/// Continuous-time unstable batch reactor (4 states, 2 inputs, 2 outputs).
inline SystemModel batch_reactor_continuous()
{
    Matrix A(4, 4);
    A << 1.38, -0.2077, 6.715, -5.676,
        -0.5814, -4.29, 0, 0.675,
        1.067, 4.273, -6.654, 5.893,
        0.048, 4.273, 1.343, -2.104;
    Matrix B(4, 2);
    B << 0, 0,
        5.679, 0,
        1.136, -3.146,
        1.136, 0;
    Matrix C(2, 4);
    C << 1, 0, 1, -1,
        0, 1, 0, 0;
    return SystemModel::make(A, B, C);
}

// ---------------------------------------------------------------------------
// Discretization

namespace detail {

/// exp(M) by scaling and squaring of a truncated Taylor series.
inline Matrix expm_series(const Matrix& M)
{
    const double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Matrix S = M / std::ldexp(1.0, squarings);

    // ||S|| <= 0.5: 24 terms leave a remainder below 0.5^24 / 24! ~ 1e-31.
    Matrix result = Matrix::Identity(M.rows(), M.cols());
    Matrix term = Matrix::Identity(M.rows(), M.cols());
    for (int k = 1; k <= 24; ++k) {
        term = term * S / static_cast<double>(k);
        result += term;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

} // namespace detail

/// Zero-order-hold discretization of a continuous-time (A, B); C and D are copied.
inline SystemModel discretize(const SystemModel& continuous, double dt)
{
    continuous.validate();
    if (!(dt > 0.0)) throw PreconditionError("discretize: dt must be positive");
    const Eigen::Index n = continuous.nx();
    const Eigen::Index m = continuous.nu();

    // exp([A B; 0 0] dt) = [A_d B_d; 0 I]
    Matrix M = Matrix::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = continuous.A * dt;
    M.topRightCorner(n, m) = continuous.B * dt;
    const Matrix phi = detail::expm_series(M);

    SystemModel out;
    out.A = phi.topLeftCorner(n, n);
    out.B = phi.topRightCorner(n, m);
    out.C = continuous.C;
    out.D = continuous.D;
    out.dt = dt;
    return out;
}

/// Discrete-time batch reactor at the given sampling period (default 0.1 s).
inline SystemModel batch_reactor(double dt = 0.1)
{
    return discretize(batch_reactor_continuous(), dt);
}

// ---------------------------------------------------------------------------
// Simulation

/// Result of an open-loop simulation.
struct SimulationResult {
    Sequence states;  ///< x_0 .. x_T
    Sequence outputs; ///< y_0 .. y_{T-1}
};

/// Exact recursion of the plant. Outputs carry no measurement noise.
inline SimulationResult simulate(const SystemModel& model, const Vector& x0, const Sequence& inputs,
                                 const Sequence& process_noise)
{
    model.validate();
    detail::require(x0.size() == model.nx(), "simulate: x0 has wrong length");
    detail::require(inputs.size() == process_noise.size(),
                    "simulate: inputs and process_noise lengths differ (" + std::to_string(inputs.size()) +
                        " vs " + std::to_string(process_noise.size()) + ")");
    SimulationResult r;
    r.states.reserve(inputs.size() + 1);
    r.outputs.reserve(inputs.size());
    r.states.push_back(x0);
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        detail::require(inputs[t].size() == model.nu(), "simulate: input " + std::to_string(t) + " wrong size");
        detail::require(process_noise[t].size() == model.nx(),
                        "simulate: noise " + std::to_string(t) + " wrong size");
        const Vector& x = r.states.back();
        r.outputs.push_back(model.C * x + model.D * inputs[t]);
        r.states.push_back(model.A * x + model.B * inputs[t] + process_noise[t]);
    }
    return r;
}

inline SimulationResult simulate(const SystemModel& model, const Vector& x0, const Sequence& inputs)
{
    return simulate(model, x0, inputs, Sequence(inputs.size(), Vector::Zero(model.nx())));
}

// ---------------------------------------------------------------------------
// Structure

inline constexpr double kObservabilityRankTol = 1e-12;

/// [C; CA; ...; CA^{n-1}]
inline Matrix observability_matrix(const SystemModel& model, Eigen::Index blocks)
{
    const Eigen::Index ny = model.ny();
    Matrix O(blocks * ny, model.nx());
    Matrix CAi = model.C;
    for (Eigen::Index i = 0; i < blocks; ++i) {
        O.middleRows(i * ny, ny) = CAi;
        CAi = CAi * model.A;
    }
    return O;
}

/// Smallest eta >= 1 with rank [C; CA; ...; CA^{eta-1}] = n_x.
inline int observability_index(const SystemModel& model)
{
    model.validate();
    for (Eigen::Index i = 1; i <= model.nx(); ++i) {
        if (numerical_rank(observability_matrix(model, i), kObservabilityRankTol) == model.nx())
            return static_cast<int>(i);
    }
    throw StructuralError("observability_index: (C, A) is not observable");
}

/// Stabilizability of (A, B) through the PBH test on every eigenvalue with |lambda| >= 1.
inline bool is_stabilizable(const SystemModel& model)
{
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(model.A.cast<std::complex<double>>());
    const Eigen::Index n = model.nx();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto lambda = es.eigenvalues()(i);
        if (std::abs(lambda) < 1.0) continue;
        Eigen::MatrixXcd pbh(n, n + model.nu());
        pbh.leftCols(n) = lambda * Eigen::MatrixXcd::Identity(n, n) - model.A.cast<std::complex<double>>();
        pbh.rightCols(model.nu()) = model.B.cast<std::complex<double>>();
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
        const auto& s = svd.singularValues();
        const double tol = s(0) * static_cast<double>(pbh.cols()) * kObservabilityRankTol;
        Eigen::Index rank = 0;
        for (Eigen::Index k = 0; k < s.size(); ++k)
            if (s(k) > tol) ++rank;
        if (rank < n) return false;
    }
    return true;
}

/// Certifies stabilizability of (A, B) and observability of (C, A); throws StructuralError otherwise.
inline void check_structure(const SystemModel& model)
{
    model.validate();
    if (!is_stabilizable(model)) throw StructuralError("check_structure: (A, B) is not stabilizable");
    (void)observability_index(model);
}

/// Stacked input/output maps of depth n.
///
/// With u, y, w windows of length n starting at time k,
///   [u; y] = psi * [u; x_k] + [0; upsilon_I] * w.
struct StructuralMatrices {
    Matrix theta_n;   ///< [C; CA; ...; CA^{n-1}]
    Matrix upsilon_I; ///< strictly block-lower-triangular, block (i, j) = C A^{i-j-1}
    Matrix upsilon_B; ///< strictly block-lower-triangular, block (i, j) = C A^{i-j-1} B
    Matrix psi;       ///< [I 0; upsilon_B theta_n]
    int n = 0;
};

/// The identity above holds for D = 0, the case these matrices describe.
inline StructuralMatrices structural_matrices(const SystemModel& model, int n)
{
    model.validate();
    if (n < 1) throw PreconditionError("structural_matrices: depth must be >= 1");
    const Eigen::Index nx = model.nx(), nu = model.nu(), ny = model.ny();

    StructuralMatrices s;
    s.n = n;
    s.theta_n = observability_matrix(model, n);
    s.upsilon_I = Matrix::Zero(n * ny, n * nx);
    s.upsilon_B = Matrix::Zero(n * ny, n * nu);

    // CA^k for k = 0 .. n-2 are exactly the first n-1 blocks of theta_n.
    for (int i = 1; i < n; ++i) {
        for (int j = 0; j < i; ++j) {
            const Matrix CAk = s.theta_n.middleRows((i - j - 1) * ny, ny);
            s.upsilon_I.block(i * ny, j * nx, ny, nx) = CAk;
            s.upsilon_B.block(i * ny, j * nu, ny, nu) = CAk * model.B;
        }
    }

    s.psi = Matrix::Zero(n * (nu + ny), n * nu + nx);
    s.psi.topLeftCorner(n * nu, n * nu).setIdentity();
    s.psi.bottomLeftCorner(n * ny, n * nu) = s.upsilon_B;
    s.psi.bottomRightCorner(n * ny, nx) = s.theta_n;
    return s;
}

// ---------------------------------------------------------------------------
// Gain synthesis

struct GainSet {
    Matrix K;     ///< state feedback, u = K x, A + B K Schur
    Matrix L_obs; ///< deadbeat observer gain, (A - L_obs C)^eta = 0
    int eta = 0;
};

inline constexpr double kNilpotencyTol = 1e-8;

namespace detail {

/// Gain K with A + B K Schur stable from the discrete-time Riccati fixed point.
inline Matrix riccati_gain(const Matrix& A, const Matrix& B, double q_weight, double r_weight)
{
    const Eigen::Index n = A.rows(), m = B.cols();
    const Matrix Q = q_weight * Matrix::Identity(n, n);
    const Matrix R = r_weight * Matrix::Identity(m, m);
    Matrix P = Q;
    for (int it = 0; it < 10'000; ++it) {
        const Matrix BtP = B.transpose() * P;
        const Matrix S = R + BtP * B;
        const Matrix gain = S.ldlt().solve(BtP * A);
        Matrix next = Q + A.transpose() * P * A - (BtP * A).transpose() * gain;
        next = 0.5 * (next + next.transpose());
        if (!next.allFinite()) throw SynthesisError("synthesize_gains: Riccati iteration diverged");
        const double change = (next - P).norm() / std::max(1.0, next.norm());
        P = std::move(next);
        if (change <= 1e-12) {
            const Matrix BtPf = B.transpose() * P;
            return -(R + BtPf * B).ldlt().solve(BtPf * A);
        }
    }
    throw SynthesisError("synthesize_gains: Riccati iteration did not converge in 10000 iterations");
}

/// Deadbeat feedback for a controllable pair (F, G): (F + G K)^mu = 0 with mu the
/// controllability index.
///
/// Chains g_j, F g_j, ... are selected in crate order. Writing F^{mu_j} g_j in that
/// basis gives vectors q_{j,k} with F q_{j,k} - q_{j,k+1} and F q_{j,mu_j} in range(G),
/// so K can shift every chain up by one and annihilate its top.
inline Matrix deadbeat_feedback(const Matrix& F, const Matrix& G)
{
    const Eigen::Index n = F.rows(), m = G.cols();
    const double tol = kObservabilityRankTol;

    std::vector<int> chain_len(static_cast<std::size_t>(m), 0);
    std::vector<bool> open(static_cast<std::size_t>(m), true);
    Matrix basis(n, 0);
    std::vector<std::pair<Eigen::Index, int>> labels; // (input j, power k) per basis column

    std::vector<Matrix> powers{G}; // powers[k] = F^k G, k = 0 .. n
    for (Eigen::Index k = 1; k <= n; ++k) powers.push_back(F * powers.back());
    for (int k = 0; basis.cols() < n && k < n; ++k) {
        bool any = false;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (!open[static_cast<std::size_t>(j)]) continue;
            Matrix trial(n, basis.cols() + 1);
            trial << basis, powers[static_cast<std::size_t>(k)].col(j);
            if (numerical_rank(trial, tol) == trial.cols()) {
                basis = std::move(trial);
                labels.emplace_back(j, k);
                chain_len[static_cast<std::size_t>(j)] = k + 1;
                any = true;
            } else {
                open[static_cast<std::size_t>(j)] = false;
            }
        }
        if (!any) break;
    }
    if (basis.cols() < n) throw SynthesisError("deadbeat_feedback: pair is not controllable");

    auto column_of = [&](Eigen::Index j, int k) -> Vector { return powers[static_cast<std::size_t>(k)].col(j); };
    auto index_of = [&](Eigen::Index j, int k) {
        for (std::size_t c = 0; c < labels.size(); ++c)
            if (labels[c].first == j && labels[c].second == k) return static_cast<Eigen::Index>(c);
        return Eigen::Index{-1};
    };

    const auto qr = basis.colPivHouseholderQr();
    Matrix Q(n, n), Qnext = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < m; ++j) {
        const int mu = chain_len[static_cast<std::size_t>(j)];
        if (mu == 0) continue;
        const Vector alpha = qr.solve(Vector(column_of(j, mu))); // F^{mu} g_j = basis * alpha
        for (int k = 1; k <= mu; ++k) {
            Vector q = column_of(j, k - 1);
            for (std::size_t c = 0; c < labels.size(); ++c) {
                const auto [i, l] = labels[c];
                const int e = l - (mu - k + 1);
                if (e >= 0) q -= alpha(static_cast<Eigen::Index>(c)) * column_of(i, e);
            }
            Q.col(index_of(j, k - 1)) = q;
        }
        for (int k = 1; k < mu; ++k) Qnext.col(index_of(j, k - 1)) = Q.col(index_of(j, k));
    }
    // (F + G K) Q = Qnext
    const Matrix rhs = (Qnext - F * Q) * Q.inverse();
    return G.completeOrthogonalDecomposition().solve(rhs);
}

} // namespace detail

/// Riccati state feedback (Q = q I, R = r I) and deadbeat observer gain, both post-verified.
inline GainSet synthesize_gains(const SystemModel& model, double q_weight = 1.0, double r_weight = 1.0)
{
    check_structure(model);
    if (!(q_weight > 0.0) || !(r_weight > 0.0))
        throw PreconditionError("synthesize_gains: weights must be positive");

    GainSet g;
    g.eta = observability_index(model);
    g.K = detail::riccati_gain(model.A, model.B, q_weight, r_weight);
    const double rho = spectral_radius(model.A + model.B * g.K);
    if (!(rho < 1.0))
        throw SynthesisError("synthesize_gains: closed loop not Schur, spectral radius " + std::to_string(rho));

    // Observer design on the dual pair (A^T, C^T).
    g.L_obs = -detail::deadbeat_feedback(model.A.transpose(), model.C.transpose()).transpose();
    Matrix err = Matrix::Identity(model.nx(), model.nx());
    const Matrix Aobs = model.A - g.L_obs * model.C;
    for (int i = 0; i < g.eta; ++i) err = err * Aobs;
    const double achieved = err.norm();
    if (!(achieved <= kNilpotencyTol))
        throw SynthesisError("synthesize_gains: deadbeat check failed, ||(A - L C)^eta|| = " +
                             std::to_string(achieved));
    return g;
}

} // namespace ddrmpc
