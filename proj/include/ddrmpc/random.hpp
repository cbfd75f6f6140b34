#pragma once

#include <cstdint>
#include <random>

#include "ddrmpc/common.hpp"

namespace ddrmpc {

/// SplitMix64 finalizer; used to derive independent child seeds from a root seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream)
{
    std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Seeded generator with platform-independent output.
///
/// std::mt19937_64 has a fully specified output sequence; the conversion to doubles is
/// done by hand because the standard distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on [0, 1).
    double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi].
    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    Vector uniform_vector(Eigen::Index n, double bound)
    {
        Vector v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(-bound, bound);
        return v;
    }

    bool bernoulli(double p) { return unit() < p; }

    /// Number of trials up to and including the first success, success probability p.
    int geometric(double p)
    {
        int k = 1;
        while (!bernoulli(p) && k < 1'000'000) ++k;
        return k;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace ddrmpc
