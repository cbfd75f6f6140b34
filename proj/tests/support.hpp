#pragma once

#include <Eigen/Dense>

#include "ddrmpc/ddrmpc.hpp"

namespace ddrmpc::testing {

/// exp([A B; 0 0] dt) by 60 raw Taylor terms in long double, no scaling.
inline std::pair<Matrix, Matrix> zoh_taylor(const Matrix& A, const Matrix& B, double dt)
{
    using LMat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const Eigen::Index n = A.rows(), m = B.cols();
    LMat M = LMat::Zero(n + m, n + m);
    M.topLeftCorner(n, n) = A.cast<long double>() * static_cast<long double>(dt);
    M.topRightCorner(n, m) = B.cast<long double>() * static_cast<long double>(dt);
    LMat term = LMat::Identity(n + m, n + m), sum = term;
    for (int k = 1; k <= 60; ++k) {
        term = term * M / static_cast<long double>(k);
        sum += term;
    }
    return {sum.topLeftCorner(n, n).cast<double>(), sum.topRightCorner(n, m).cast<double>()};
}

inline Sequence random_sequence(Rng& rng, std::size_t len, Eigen::Index dim, double bound)
{
    Sequence s;
    for (std::size_t i = 0; i < len; ++i) s.push_back(rng.uniform_vector(dim, bound));
    return s;
}

/// Seeded offline record of the batch reactor for a given noise level.
inline Trajectory fixture_data(double v_bar = 0.0, int N = 100, std::uint64_t seed = 7, int order = 16)
{
    CollectionSettings cs;
    cs.N = N;
    cs.pe_order = order;
    cs.v_bar = v_bar;
    cs.seed = seed;
    return collect_offline(batch_reactor(), cs);
}

inline MpcConfig fixture_mpc(double v_bar)
{
    MpcConfig c;
    c.L = 10;
    c.eta = 2;
    c.v_bar = v_bar;
    c.R1 = 1e-4 * Matrix::Identity(2, 2);
    c.R2 = 3.0 * Matrix::Identity(2, 2);
    return c;
}

/// Silences warnings for the lifetime of the object and counts them.
class CaptureWarnings {
public:
    CaptureWarnings() : saved_(warning_sink())
    {
        warning_sink() = [this](const std::string& m) { messages.push_back(m); };
    }
    ~CaptureWarnings() { warning_sink() = saved_; }
    std::vector<std::string> messages;

private:
    std::function<void(const std::string&)> saved_;
};

} // namespace ddrmpc::testing
