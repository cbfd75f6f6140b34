#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "ddrmpc/common.hpp"

namespace ddrmpc {

/// min 1/2 z'Pz + q'z  s.t.  Aeq z = beq,  lb <= z <= ub.
struct QpProblem {
    Matrix P;
    Vector q;
    Matrix Aeq;
    Vector beq;
    Vector lb; ///< -inf for unbounded below
    Vector ub; ///< +inf for unbounded above

    Eigen::Index n() const { return q.size(); }
    Eigen::Index m() const { return beq.size(); }

    /// Free variables with no equality constraints.
    static QpProblem unconstrained(Matrix P, Vector q)
    {
        const Eigen::Index n = q.size();
        return QpProblem{std::move(P), std::move(q), Matrix(0, n), Vector(0), Vector::Constant(n, -kInf),
                         Vector::Constant(n, kInf)};
    }

    void validate() const
    {
        using detail::require;
        const Eigen::Index n = q.size();
        require(P.rows() == n && P.cols() == n, "QpProblem: P is " + detail::dims(P) + ", q has " + std::to_string(n));
        require(Aeq.cols() == n && Aeq.rows() == beq.size(), "QpProblem: Aeq/beq dimensions inconsistent");
        require(lb.size() == n && ub.size() == n, "QpProblem: bound vectors must have length n");
        if (!P.allFinite() || !q.allFinite() || !Aeq.allFinite() || !beq.allFinite())
            throw PreconditionError("QpProblem: non-finite problem data");
        if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, P.cwiseAbs().maxCoeff()))
            throw PreconditionError("QpProblem: P is not symmetric");
        for (Eigen::Index i = 0; i < n; ++i)
            if (!(lb(i) <= ub(i))) throw PreconditionError("QpProblem: lb > ub at index " + std::to_string(i));
    }
};

enum class QpStatus { optimal, max_iter, infeasible };

inline const char* to_string(QpStatus s)
{
    switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iter: return "max_iter";
    case QpStatus::infeasible: return "infeasible";
    }
    return "unknown";
}

struct QpSettings {
    double eps_abs = 1e-8;
    double eps_rel = 1e-8;
    int max_iter = 50'000;
    double rho = 0.1;
    double sigma = 1e-6;
    double alpha = 1.6;   ///< over-relaxation
    int scaling_iters = 10;
    int check_interval = 25;
    bool adaptive_rho = true;
    bool polish = true;
    double eps_infeasible = 1e-6;
};

/// Multipliers follow the sign convention P z + q + Aeq' y + mu = 0, with mu > 0 on
/// active upper bounds and mu < 0 on active lower bounds.
struct QpSolution {
    Vector z;
    Vector y;  ///< equality multipliers
    Vector mu; ///< bound multipliers
    double objective = 0.0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double primal_scale = 0.0; ///< see KktResiduals
    double dual_scale = 0.0;
    int iterations = 0;
    QpStatus status = QpStatus::max_iter;
    bool polished = false;
};

struct QpWarmStart {
    Vector z;
    Vector y;
    Vector mu;
};

struct KktResiduals {
    double primal = 0.0;          ///< max of ||Aeq z - beq||_inf and bound violation
    double dual = 0.0;            ///< ||P z + q + Aeq' y + mu||_inf
    double complementarity = 0.0; ///< max_i of multiplier times distance to its bound
    /// Magnitudes of the summed terms, max_i sum_j |A_ij z_j| and the like; the floor
    /// below which rounding hides the residuals.
    double primal_scale = 0.0;
    double dual_scale = 0.0;

    bool within(double eps_abs, double eps_rel) const
    {
        return primal <= eps_abs + eps_rel * primal_scale && dual <= eps_abs + eps_rel * dual_scale &&
               complementarity <= eps_abs + eps_rel * std::max(1.0, dual_scale);
    }
};

/// Residuals of the optimality conditions at (z, y, mu). Empty y or mu count as zero.
inline KktResiduals kkt_residuals(const QpProblem& p, const Vector& z, const Vector& y = Vector(),
                                  const Vector& mu = Vector())
{
    p.validate();
    const Eigen::Index n = p.n(), m = p.m();
    detail::require(z.size() == n, "kkt_residuals: z has wrong length");
    const Vector yy = y.size() == 0 ? Vector::Zero(m) : y;
    const Vector mm = mu.size() == 0 ? Vector::Zero(n) : mu;
    detail::require(yy.size() == m && mm.size() == n, "kkt_residuals: multiplier lengths inconsistent");

    KktResiduals r;
    if (m > 0) r.primal = (p.Aeq * z - p.beq).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < n; ++i) {
        r.primal = std::max({r.primal, p.lb(i) - z(i), z(i) - p.ub(i)});
        const double gap_up = mm(i) > 0.0 ? mm(i) * (p.ub(i) - z(i)) : 0.0;
        const double gap_lo = mm(i) < 0.0 ? -mm(i) * (z(i) - p.lb(i)) : 0.0;
        r.complementarity = std::max({r.complementarity, std::abs(gap_up), std::abs(gap_lo)});
    }
    Vector grad = p.P * z + p.q + mm;
    if (m > 0) grad += p.Aeq.transpose() * yy;
    r.dual = n > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;

    const Vector az = z.cwiseAbs();
    if (n > 0) {
        r.primal_scale = az.maxCoeff();
        Vector terms = p.P.cwiseAbs() * az + p.q.cwiseAbs() + mm.cwiseAbs();
        if (m > 0) terms += p.Aeq.cwiseAbs().transpose() * yy.cwiseAbs();
        r.dual_scale = terms.maxCoeff();
    }
    if (m > 0)
        r.primal_scale = std::max(r.primal_scale, (p.Aeq.cwiseAbs() * az + p.beq.cwiseAbs()).maxCoeff());
    return r;
}

inline double objective_value(const QpProblem& p, const Vector& z)
{
    return 0.5 * z.dot(p.P * z) + p.q.dot(z);
}

/// Upper limit on active-set corrections per polishing attempt.
inline constexpr int kMaxPolishRounds = 30;

/// Operator-splitting (ADMM) solver for dense convex QPs.
///
/// Constraints are handled as l <= Abar z <= u with Abar = [Aeq; I_box], where I_box
/// holds the rows of variables with at least one finite bound. Each iteration solves
/// one regularized equality-constrained step (cached Cholesky factor) and projects
/// onto the bounds. The problem is Ruiz-equilibrated first; the penalty adapts to the
/// residual ratio. Near convergence the active set is guessed from the iterate and the
/// reduced KKT system solved directly (polishing); the polished point is kept only if
/// it passes the full optimality check.
///
/// One solve at a time per instance.
class QpSolver {
public:
    explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

    const QpSettings& settings() const { return settings_; }

    QpSolution solve(const QpProblem& problem, const QpWarmStart* warm = nullptr)
    {
        problem.validate();
        setup(problem);
        initialize(warm);
        return iterate();
    }

private:
    struct Residuals {
        double prim = 0, dual = 0, prim_scale = 0, dual_scale = 0;
    };

    void setup(const QpProblem& problem)
    {
        prob_ = &problem;
        n_ = problem.n();
        m_eq_ = problem.m();
        box_idx_.clear();
        for (Eigen::Index i = 0; i < n_; ++i)
            if (std::isfinite(problem.lb(i)) || std::isfinite(problem.ub(i))) box_idx_.push_back(i);
        m_ = m_eq_ + static_cast<Eigen::Index>(box_idx_.size());

        A_ = Matrix::Zero(m_, n_);
        l_.resize(m_);
        u_.resize(m_);
        if (m_eq_ > 0) {
            A_.topRows(m_eq_) = problem.Aeq;
            l_.head(m_eq_) = problem.beq;
            u_.head(m_eq_) = problem.beq;
        }
        for (std::size_t k = 0; k < box_idx_.size(); ++k) {
            const Eigen::Index r = m_eq_ + static_cast<Eigen::Index>(k);
            A_(r, box_idx_[k]) = 1.0;
            l_(r) = problem.lb(box_idx_[k]);
            u_(r) = problem.ub(box_idx_[k]);
        }
        P_ = 0.5 * (problem.P + problem.P.transpose());
        q_ = problem.q;
        equilibrate();
    }

    /// Ruiz equilibration of [P A'; A 0] followed by cost scaling.
    void equilibrate()
    {
        D_ = Vector::Ones(n_);
        E_ = Vector::Ones(m_);
        c_ = 1.0;
        auto clamp_norm = [](double v) { return std::clamp(v, 1e-4, 1e4); };
        for (int it = 0; it < settings_.scaling_iters; ++it) {
            Vector dcol(n_), erow(m_);
            for (Eigen::Index j = 0; j < n_; ++j) {
                double v = P_.col(j).cwiseAbs().maxCoeff();
                if (m_ > 0) v = std::max(v, A_.col(j).cwiseAbs().maxCoeff());
                dcol(j) = 1.0 / std::sqrt(clamp_norm(v == 0.0 ? 1.0 : v));
            }
            for (Eigen::Index i = 0; i < m_; ++i) {
                const double v = A_.row(i).cwiseAbs().maxCoeff();
                erow(i) = 1.0 / std::sqrt(clamp_norm(v == 0.0 ? 1.0 : v));
            }
            P_ = dcol.asDiagonal() * P_ * dcol.asDiagonal();
            A_ = erow.asDiagonal() * A_ * dcol.asDiagonal();
            q_ = dcol.cwiseProduct(q_);
            D_ = D_.cwiseProduct(dcol);
            E_ = E_.cwiseProduct(erow);
        }
        for (Eigen::Index i = 0; i < m_; ++i) {
            l_(i) = std::isfinite(l_(i)) ? l_(i) * E_(i) : l_(i);
            u_(i) = std::isfinite(u_(i)) ? u_(i) * E_(i) : u_(i);
        }
        double pnorm = 0.0;
        if (n_ > 0) pnorm = P_.cwiseAbs().colwise().maxCoeff().mean();
        const double qnorm = n_ > 0 ? q_.cwiseAbs().maxCoeff() : 0.0;
        double cost = std::max(pnorm, qnorm);
        cost = clamp_norm(cost == 0.0 ? 1.0 : cost);
        c_ = 1.0 / cost;
        P_ *= c_;
        q_ *= c_;
    }

    void initialize(const QpWarmStart* warm)
    {
        x_ = Vector::Zero(n_);
        z_ = Vector::Zero(m_);
        y_ = Vector::Zero(m_);
        if (warm != nullptr) {
            if (warm->z.size() == n_) x_ = D_.cwiseInverse().cwiseProduct(warm->z);
            if (warm->y.size() == m_eq_ && m_eq_ > 0)
                y_.head(m_eq_) = c_ * E_.head(m_eq_).cwiseInverse().cwiseProduct(warm->y);
            if (warm->mu.size() == n_)
                for (std::size_t k = 0; k < box_idx_.size(); ++k) {
                    const Eigen::Index r = m_eq_ + static_cast<Eigen::Index>(k);
                    y_(r) = c_ * warm->mu(box_idx_[k]) / E_(r);
                }
        }
        z_ = project(A_ * x_);
        rho_ = settings_.rho;
        factorize();
    }

    Vector project(const Vector& v) const { return v.cwiseMax(l_).cwiseMin(u_); }

    void factorize()
    {
        rho_vec_.resize(m_);
        for (Eigen::Index i = 0; i < m_; ++i) rho_vec_(i) = (l_(i) == u_(i)) ? 1e3 * rho_ : rho_;
        // Quasi-definite step system [P + sigma I, A'; A, -diag(1/rho)].
        Matrix K = Matrix::Zero(n_ + m_, n_ + m_);
        K.topLeftCorner(n_, n_) = P_;
        K.topLeftCorner(n_, n_).diagonal().array() += settings_.sigma;
        K.topRightCorner(n_, m_) = A_.transpose();
        K.bottomLeftCorner(m_, n_) = A_;
        K.bottomRightCorner(m_, m_).diagonal() = -rho_vec_.cwiseInverse();
        step_.compute(K);
    }

    Residuals residuals() const
    {
        Residuals r;
        const Vector Dinv = D_.cwiseInverse();
        if (m_ > 0) {
            const Vector Ax = E_.cwiseInverse().cwiseProduct(A_ * x_);
            const Vector zz = E_.cwiseInverse().cwiseProduct(z_);
            r.prim = (Ax - zz).cwiseAbs().maxCoeff();
            r.prim_scale = std::max(Ax.cwiseAbs().maxCoeff(), zz.cwiseAbs().maxCoeff());
        }
        if (n_ > 0) {
            const Vector Px = Dinv.cwiseProduct(P_ * x_) / c_;
            const Vector Aty = m_ > 0 ? Vector(Dinv.cwiseProduct(A_.transpose() * y_) / c_) : Vector::Zero(n_);
            const Vector qq = Dinv.cwiseProduct(q_) / c_;
            r.dual = (Px + Aty + qq).cwiseAbs().maxCoeff();
            r.dual_scale = std::max({Px.cwiseAbs().maxCoeff(), Aty.cwiseAbs().maxCoeff(), qq.cwiseAbs().maxCoeff()});
        }
        return r;
    }

    bool converged(const Residuals& r) const
    {
        return r.prim <= settings_.eps_abs + settings_.eps_rel * r.prim_scale &&
               r.dual <= settings_.eps_abs + settings_.eps_rel * r.dual_scale;
    }

    bool primal_infeasible(const Vector& dy) const
    {
        if (m_ == 0) return false;
        const Vector Edy = E_.cwiseProduct(dy);
        const double norm = Edy.cwiseAbs().maxCoeff();
        if (norm < 1e-12) return false;
        const Vector Atdy = D_.cwiseInverse().cwiseProduct(A_.transpose() * dy);
        if (Atdy.cwiseAbs().maxCoeff() > settings_.eps_infeasible * norm) return false;
        double support = 0.0;
        for (Eigen::Index i = 0; i < m_; ++i) {
            if (dy(i) > 0.0) {
                if (!std::isfinite(u_(i))) return false;
                support += u_(i) * dy(i);
            } else if (dy(i) < 0.0) {
                if (!std::isfinite(l_(i))) return false;
                support += l_(i) * dy(i);
            }
        }
        return support < -settings_.eps_infeasible * norm;
    }

    /// Candidate in original coordinates from the current iterate.
    QpSolution unscale() const
    {
        QpSolution s;
        s.z = D_.cwiseProduct(x_);
        const Vector y = E_.cwiseProduct(y_) / c_;
        s.y = y.head(m_eq_);
        s.mu = Vector::Zero(n_);
        for (std::size_t k = 0; k < box_idx_.size(); ++k)
            s.mu(box_idx_[k]) = y(m_eq_ + static_cast<Eigen::Index>(k));
        return s;
    }

    bool acceptable(const QpProblem& p, const QpSolution& s) const
    {
        return kkt_residuals(p, s.z, s.y, s.mu).within(settings_.eps_abs, settings_.eps_rel);
    }

    /// Solution of the equality-constrained problem with the given bounds held active.
    /// mu carries the raw multipliers; z is not clipped.
    std::optional<QpSolution> solve_active(const std::vector<int>& side) const
    {
        const QpProblem& p = *prob_;
        std::vector<Eigen::Index> act;
        for (Eigen::Index i = 0; i < n_; ++i)
            if (side[static_cast<std::size_t>(i)] != 0) act.push_back(i);
        const auto na = static_cast<Eigen::Index>(act.size());
        const Eigen::Index dim = n_ + m_eq_ + na;
        Matrix K = Matrix::Zero(dim, dim);
        Vector rhs(dim);
        K.topLeftCorner(n_, n_) = p.P;
        rhs.head(n_) = -p.q;
        if (m_eq_ > 0) {
            K.block(n_, 0, m_eq_, n_) = p.Aeq;
            K.block(0, n_, n_, m_eq_) = p.Aeq.transpose();
            rhs.segment(n_, m_eq_) = p.beq;
        }
        for (Eigen::Index k = 0; k < na; ++k) {
            const Eigen::Index i = act[static_cast<std::size_t>(k)], r = n_ + m_eq_ + k;
            K(r, i) = K(i, r) = 1.0;
            rhs(r) = side[static_cast<std::size_t>(i)] < 0 ? p.lb(i) : p.ub(i);
        }
        // Symmetric equilibration: Hankel blocks of unstable-plant data span many decades.
        Vector S = Vector::Ones(dim);
        for (int it = 0; it < 20; ++it) {
            const Vector rowmax = (S.asDiagonal() * K.cwiseAbs() * S.asDiagonal()).rowwise().maxCoeff();
            for (Eigen::Index i = 0; i < dim; ++i)
                if (rowmax(i) > 0.0) S(i) /= std::sqrt(rowmax(i));
        }
        const Matrix Ks = S.asDiagonal() * K * S.asDiagonal();
        const Eigen::PartialPivLU<Matrix> lu(Ks);
        const Vector rs = S.cwiseProduct(rhs);
        Vector w = lu.solve(rs);
        Vector sol = S.cwiseProduct(w);
        double best = (rhs - K * sol).cwiseAbs().maxCoeff();
        for (int it = 0; it < 10 && best > 0.0; ++it) {
            w += lu.solve(Vector(rs - Ks * w));
            const Vector cand = S.cwiseProduct(w);
            const double res = (rhs - K * cand).cwiseAbs().maxCoeff();
            if (res < best) {
                best = res;
                sol = cand;
            }
        }
        if (!sol.allFinite()) return std::nullopt;

        QpSolution s;
        s.z = sol.head(n_);
        s.y = sol.segment(n_, m_eq_);
        s.mu = Vector::Zero(n_);
        for (Eigen::Index k = 0; k < na; ++k) s.mu(act[static_cast<std::size_t>(k)]) = sol(n_ + m_eq_ + k);
        return s;
    }

    /// Active-set refinement of an iterate: the bounds guessed active from (z, mu) are
    /// held as equalities, then bounds with wrong-signed multipliers are released and
    /// violated ones added until the set settles. Empty optional when that fails.
    std::optional<QpSolution> polish(const QpSolution& guess) const
    {
        const QpProblem& p = *prob_;
        std::vector<int> side(static_cast<std::size_t>(n_), 0); // -1 lower, +1 upper
        for (Eigen::Index i = 0; i < n_; ++i) {
            if (std::isfinite(p.lb(i)) && guess.z(i) - p.lb(i) < -guess.mu(i)) side[static_cast<std::size_t>(i)] = -1;
            else if (std::isfinite(p.ub(i)) && p.ub(i) - guess.z(i) < guess.mu(i)) side[static_cast<std::size_t>(i)] = 1;
        }
        const double tol = settings_.eps_abs;
        for (int round = 0; round < kMaxPolishRounds; ++round) {
            auto s = solve_active(side);
            if (!s) return std::nullopt;
            bool changed = false;
            for (Eigen::Index i = 0; i < n_; ++i) {
                int& a = side[static_cast<std::size_t>(i)];
                const double zi = s->z(i), mi = s->mu(i);
                if ((a < 0 && mi > 0.0) || (a > 0 && mi < 0.0)) {
                    a = 0;
                    changed = true;
                } else if (a == 0 && std::isfinite(p.lb(i)) && zi < p.lb(i) - tol) {
                    a = -1;
                    changed = true;
                } else if (a == 0 && std::isfinite(p.ub(i)) && zi > p.ub(i) + tol) {
                    a = 1;
                    changed = true;
                }
            }
            if (changed) continue;
            for (Eigen::Index i = 0; i < n_; ++i) {
                const int a = side[static_cast<std::size_t>(i)];
                if (a < 0) s->z(i) = p.lb(i);
                if (a > 0) s->z(i) = p.ub(i);
            }
            if (!acceptable(p, *s)) return std::nullopt;
            s->polished = true;
            return s;
        }
        return std::nullopt;
    }

    QpSolution finish(QpSolution s, QpStatus status, int iterations) const
    {
        const KktResiduals r = kkt_residuals(*prob_, s.z, s.y, s.mu);
        s.primal_residual = r.primal;
        s.dual_residual = r.dual;
        s.primal_scale = r.primal_scale;
        s.dual_scale = r.dual_scale;
        s.objective = objective_value(*prob_, s.z);
        s.iterations = iterations;
        s.status = status;
        return s;
    }

    QpSolution iterate()
    {
        const double alpha = settings_.alpha;
        const double sigma = settings_.sigma;
        std::vector<Eigen::Index> last_active;
        bool have_last_active = false;
        QpSolution best = unscale();
        double best_merit = kInf;

        for (int k = 1; k <= settings_.max_iter; ++k) {
            const Vector y_prev = y_;
            Vector rhs(n_ + m_);
            rhs.head(n_) = sigma * x_ - q_;
            rhs.tail(m_) = z_ - y_.cwiseQuotient(rho_vec_);
            const Vector sol = step_.solve(rhs);
            const Vector xt = sol.head(n_);
            const Vector zt = z_ + (sol.tail(m_) - y_).cwiseQuotient(rho_vec_);
            x_ = alpha * xt + (1.0 - alpha) * x_;
            const Vector zr = alpha * zt + (1.0 - alpha) * z_;
            z_ = project(zr + y_.cwiseQuotient(rho_vec_));
            y_ += rho_vec_.cwiseProduct(zr - z_);

            if (k % settings_.check_interval != 0 && k != settings_.max_iter) continue;

            const Residuals res = residuals();
            QpSolution cand = unscale();
            const double merit = std::max(res.prim / (settings_.eps_abs + settings_.eps_rel * res.prim_scale),
                                          res.dual / (settings_.eps_abs + settings_.eps_rel * res.dual_scale));
            if (merit < best_merit) {
                best_merit = merit;
                best = cand;
            }
            if (converged(res)) {
                if (settings_.polish)
                    if (auto pol = polish(cand)) return finish(*pol, QpStatus::optimal, k);
                return finish(cand, QpStatus::optimal, k);
            }
            if (settings_.polish) {
                // Retry polishing only when the active-set guess changes.
                std::vector<Eigen::Index> active;
                for (Eigen::Index i = 0; i < n_; ++i)
                    if (cand.mu(i) != 0.0 &&
                        ((std::isfinite(prob_->lb(i)) && cand.z(i) - prob_->lb(i) < -cand.mu(i)) ||
                         (std::isfinite(prob_->ub(i)) && prob_->ub(i) - cand.z(i) < cand.mu(i))))
                        active.push_back(i);
                if (!have_last_active || active != last_active) {
                    have_last_active = true;
                    last_active = active;
                    if (auto pol = polish(cand)) return finish(*pol, QpStatus::optimal, k);
                }
            }
            if (primal_infeasible(y_ - y_prev)) return finish(cand, QpStatus::infeasible, k);

            if (settings_.adaptive_rho && res.prim_scale > 0.0 && res.dual_scale > 0.0 && res.dual > 0.0) {
                const double ratio = (res.prim / res.prim_scale) / (res.dual / res.dual_scale);
                const double next = std::clamp(rho_ * std::sqrt(ratio), 1e-6, 1e6);
                if (next > 5.0 * rho_ || next < 0.2 * rho_) {
                    rho_ = next;
                    factorize();
                }
            }
        }
        return finish(best, QpStatus::max_iter, settings_.max_iter);
    }

    QpSettings settings_;
    const QpProblem* prob_ = nullptr;
    Eigen::Index n_ = 0, m_eq_ = 0, m_ = 0;
    std::vector<Eigen::Index> box_idx_;
    Matrix P_, A_;
    Vector q_, l_, u_;
    Vector D_, E_;
    double c_ = 1.0;
    Vector x_, z_, y_;
    double rho_ = 0.1;
    Vector rho_vec_;
    Eigen::PartialPivLU<Matrix> step_;
};

inline QpSolution solve(const QpProblem& problem, const QpSettings& settings = {},
                        const QpWarmStart* warm = nullptr)
{
    QpSolver solver(settings);
    return solver.solve(problem, warm);
}

} // namespace ddrmpc
