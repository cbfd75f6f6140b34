#pragma once

#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ddrmpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Time-indexed sequence of equally sized vectors.
using Sequence = std::vector<Vector>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

/// Violated structural property (observability, stabilizability, rank).
class StructuralError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class SynthesisError : public Error {
public:
    using Error::Error;
};

/// 1/nu_f + 1/nu_d >= 1: no controller can guarantee stabilization.
class ResilienceError : public Error {
public:
    using Error::Error;
};

class SolverError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Receives non-fatal diagnostics; writes to stderr unless replaced.
inline std::function<void(const std::string&)>& warning_sink()
{
    static std::function<void(const std::string&)> sink = [](const std::string& msg) {
        std::cerr << "warning: " << msg << '\n';
    };
    return sink;
}

inline void warn(const std::string& msg)
{
    if (warning_sink()) warning_sink()(msg);
}

namespace detail {

inline std::string dims(const Matrix& m)
{
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require(bool cond, const std::string& what)
{
    if (!cond) throw DimensionError(what);
}

} // namespace detail

/// Numerical rank from singular values with tolerance sigma_max * max(rows, cols) * rel_tol.
inline Eigen::Index numerical_rank(const Matrix& m, double rel_tol)
{
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    const double tol = s(0) * static_cast<double>(std::max(m.rows(), m.cols())) * rel_tol;
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i)
        if (s(i) > tol) ++r;
    return r;
}

/// Spectral radius via the eigenvalues of a general square matrix.
inline double spectral_radius(const Matrix& m)
{
    if (m.size() == 0) return 0.0;
    Eigen::EigenSolver<Matrix> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Stacks a sequence into one tall vector, sample after sample.
inline Vector stack(const Sequence& seq, std::size_t first, std::size_t count)
{
    if (count == 0) return Vector(0);
    const Eigen::Index d = seq.at(first).size();
    Vector out(d * static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i)
        out.segment(static_cast<Eigen::Index>(i) * d, d) = seq.at(first + i);
    return out;
}

inline Vector stack(const Sequence& seq)
{
    return stack(seq, 0, seq.size());
}

/// Inverse of stack(): splits a tall vector into blocks of size dim.
inline Sequence unstack(const Vector& v, Eigen::Index dim)
{
    if (dim <= 0 || v.size() % dim != 0)
        throw DimensionError("unstack: length " + std::to_string(v.size()) + " not a multiple of " +
                             std::to_string(dim));
    Sequence out;
    out.reserve(static_cast<std::size_t>(v.size() / dim));
    for (Eigen::Index i = 0; i < v.size(); i += dim) out.emplace_back(v.segment(i, dim));
    return out;
}

} // namespace ddrmpc
