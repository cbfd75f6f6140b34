#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>

#include "ddrmpc/common.hpp"
#include "ddrmpc/lti.hpp"
#include "ddrmpc/random.hpp"

namespace ddrmpc {

inline constexpr double kPeRankTol = 1e-10;

/// Outcome of a persistency-of-excitation check.
struct PeReport {
    bool exciting = false;
    int order = 0;
    Eigen::Index rank = 0;
    Eigen::Index required_rank = 0; ///< n_u * order
    double margin = 0.0;            ///< smallest singular value of H_order(u)
};

/// Input/output record. States and noises are kept for oracles only.
struct Trajectory {
    Sequence inputs;
    Sequence outputs;
    std::optional<Sequence> states; ///< x_0 .. x_{N-1}
    std::optional<Sequence> noises; ///< w_0 .. w_{N-1}
    std::uint64_t seed = 0;
    double v_bar = 0.0;
    std::optional<PeReport> pe; ///< certificate attached by collect_offline

    std::size_t size() const { return inputs.size(); }

    void validate() const
    {
        detail::require(inputs.size() == outputs.size(), "Trajectory: inputs and outputs differ in length");
        if (states) detail::require(states->size() == inputs.size(), "Trajectory: states length mismatch");
        if (noises) detail::require(noises->size() == inputs.size(), "Trajectory: noises length mismatch");
    }
};

/// Block Hankel matrix with depth rows of blocks: block (i, j) = seq[i + j].
inline Matrix build_hankel(const Sequence& seq, int depth)
{
    if (depth < 1) throw PreconditionError("build_hankel: depth must be >= 1");
    const auto N = static_cast<Eigen::Index>(seq.size());
    if (N < depth)
        throw PreconditionError("build_hankel: sequence of length " + std::to_string(N) + " shorter than depth " +
                                std::to_string(depth));
    const Eigen::Index d = seq.front().size();
    const Eigen::Index cols = N - depth + 1;
    Matrix H(depth * d, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < depth; ++i) {
            detail::require(seq[static_cast<std::size_t>(i + j)].size() == d, "build_hankel: ragged sequence");
            H.block(i * d, j, d, 1) = seq[static_cast<std::size_t>(i + j)];
        }
    return H;
}

/// rank(H_order(u)) == n_u * order, rank tolerance sigma_max * max(dim) * 1e-10.
inline PeReport is_persistently_exciting(const Sequence& inputs, int order)
{
    PeReport r;
    r.order = order;
    if (inputs.empty() || order < 1) return r;
    const Eigen::Index nu = inputs.front().size();
    r.required_rank = nu * order;
    const auto N = static_cast<Eigen::Index>(inputs.size());
    if (N < order) return r;

    const Matrix H = build_hankel(inputs, order);
    Eigen::JacobiSVD<Matrix> svd(H);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return r;
    const double tol = s(0) * static_cast<double>(std::max(H.rows(), H.cols())) * kPeRankTol;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++r.rank;
    // Fewer columns than rows: the smallest of the n_u*order singular values is zero.
    r.margin = s.size() >= r.required_rank ? s(r.required_rank - 1) : 0.0;
    r.exciting = r.rank == r.required_rank;
    return r;
}

/// Required excitation order: both L + n_x + eta and L + 2 eta are honoured.
inline int required_pe_order(int L, Eigen::Index nx, int eta)
{
    return std::max(L + static_cast<int>(nx) + eta, L + 2 * eta);
}

/// Offline experiment settings.
struct CollectionSettings {
    int N = 100;
    int pe_order = 0;     ///< excitation order to certify
    double u_max = 1.0;   ///< inputs i.i.d. uniform on [-u_max, u_max]
    double v_bar = 0.0;   ///< process noise i.i.d. uniform on [-v_bar, v_bar]
    std::uint64_t seed = 0;
    Vector x0;            ///< initial state, zero when empty
    int max_redraws = 8;
};

/// Simulates the plant under random excitation and certifies persistency of excitation.
///
/// Outputs are recorded without measurement noise. A failed certificate triggers a
/// redraw with a derived seed, up to max_redraws times.
inline Trajectory collect_offline(const SystemModel& model, const CollectionSettings& s)
{
    model.validate();
    if (s.pe_order < 1) throw PreconditionError("collect_offline: pe_order must be >= 1");
    const Eigen::Index nu = model.nu();
    if (static_cast<Eigen::Index>(s.N) < nu * s.pe_order)
        throw PreconditionError("collect_offline: N = " + std::to_string(s.N) + " < n_u * order = " +
                                std::to_string(nu * s.pe_order));
    if (!(s.u_max > 0.0)) throw PreconditionError("collect_offline: u_max must be positive");
    if (s.v_bar < 0.0) throw PreconditionError("collect_offline: v_bar must be nonnegative");

    const Vector x0 = s.x0.size() == 0 ? Vector::Zero(model.nx()) : s.x0;
    PeReport last;
    for (int attempt = 0; attempt <= s.max_redraws; ++attempt) {
        const std::uint64_t seed = attempt == 0 ? s.seed : derive_seed(s.seed, static_cast<std::uint64_t>(attempt));
        Rng rng(seed);
        Sequence u, w;
        u.reserve(static_cast<std::size_t>(s.N));
        w.reserve(static_cast<std::size_t>(s.N));
        for (int t = 0; t < s.N; ++t) {
            u.push_back(rng.uniform_vector(nu, s.u_max));
            w.push_back(rng.uniform_vector(model.nx(), s.v_bar));
        }
        last = is_persistently_exciting(u, s.pe_order);
        if (!last.exciting) continue;

        auto sim = simulate(model, x0, u, w);
        sim.states.pop_back();
        Trajectory traj;
        traj.inputs = std::move(u);
        traj.outputs = std::move(sim.outputs);
        traj.states = std::move(sim.states);
        traj.noises = std::move(w);
        traj.seed = seed;
        traj.v_bar = s.v_bar;
        traj.pe = last;
        return traj;
    }
    throw StructuralError("collect_offline: inputs not persistently exciting of order " +
                          std::to_string(s.pe_order) + " after " + std::to_string(s.max_redraws) +
                          " redraws (rank " + std::to_string(last.rank) + " of " +
                          std::to_string(last.required_rank) + ")");
}

/// Stacked input and output Hankel matrices of one trajectory.
struct HankelPair {
    Matrix Hu;
    Matrix Hy;
    int depth = 0;
    Eigen::Index nu = 0;
    Eigen::Index ny = 0;
    std::optional<PeReport> pe; ///< copied from the source trajectory

    Eigen::Index columns() const { return Hu.cols(); }

    static HankelPair from(const Trajectory& data, int depth)
    {
        data.validate();
        HankelPair p;
        p.Hu = build_hankel(data.inputs, depth);
        p.Hy = build_hankel(data.outputs, depth);
        p.depth = depth;
        p.nu = data.inputs.front().size();
        p.ny = data.outputs.front().size();
        p.pe = data.pe;
        return p;
    }
};

/// min_g || [H_L(u); H_L(y)] g - [u_test; y_test] || by least squares, L = window length.
inline double fundamental_lemma_residual(const Trajectory& data, const Sequence& test_u, const Sequence& test_y)
{
    data.validate();
    detail::require(!test_u.empty() && test_u.size() == test_y.size(),
                    "fundamental_lemma_residual: test windows must be nonempty and of equal length");
    detail::require(test_u.front().size() == data.inputs.front().size() &&
                        test_y.front().size() == data.outputs.front().size(),
                    "fundamental_lemma_residual: test window dimensions differ from data");
    const int L = static_cast<int>(test_u.size());
    const Matrix Hu = build_hankel(data.inputs, L);
    const Matrix Hy = build_hankel(data.outputs, L);
    Matrix H(Hu.rows() + Hy.rows(), Hu.cols());
    H << Hu, Hy;
    Vector rhs(H.rows());
    rhs << stack(test_u), stack(test_y);

    // Open-loop data of an unstable plant spans many orders of magnitude across
    // columns; equilibrate columns and refine once.
    Vector scale = H.colwise().norm().transpose();
    for (Eigen::Index j = 0; j < scale.size(); ++j)
        if (scale(j) == 0.0) scale(j) = 1.0;
    const Matrix Hs = H * scale.cwiseInverse().asDiagonal();
    const auto cod = Hs.completeOrthogonalDecomposition();
    Vector g = cod.solve(rhs);
    g += cod.solve(Vector(rhs - Hs * g));
    return (Hs * g - rhs).norm();
}

} // namespace ddrmpc
