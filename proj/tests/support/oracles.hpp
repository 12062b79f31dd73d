#pragma once

// Independent reference solvers used only by tests. These deliberately take
// different algorithmic routes from the library: exhaustive vertex
// enumeration for LPs, first-order methods for QPs.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "eva/optimize.hpp"

namespace oracle {

// Enumerates all basic solutions of an LP in bounded-variable form: pick
// n - m_eq active constraints among inequality rows and variable bounds,
// solve the square system, keep feasible points, return the best objective.
inline std::optional<double> vertex_enum_lp(const eva::opt::LinearProgram& lp) {
    const int n = lp.n();
    const int me = static_cast<int>(lp.A_eq.rows());
    const int mi = static_cast<int>(lp.A_in.rows());
    struct Cand {
        Eigen::RowVectorXd a;
        double b;
    };
    std::vector<Cand> cands;
    for (int i = 0; i < mi; ++i) cands.push_back({lp.A_in.row(i), lp.b_in[i]});
    for (int j = 0; j < n; ++j) {
        Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
        e[j] = 1.0;
        if (std::isfinite(lp.lower[j])) cands.push_back({e, lp.lower[j]});
        if (std::isfinite(lp.upper[j])) cands.push_back({e, lp.upper[j]});
    }
    const int k = n - me;
    if (k < 0) return std::nullopt;
    std::vector<int> pick(k);
    std::optional<double> best;
    std::vector<int> stack;
    // iterative combination enumeration
    std::function<void(int, int)> rec = [&](int start, int depth) {
        if (depth == k) {
            Eigen::MatrixXd M(n, n);
            Eigen::VectorXd rhs(n);
            for (int i = 0; i < me; ++i) {
                M.row(i) = lp.A_eq.row(i);
                rhs[i] = lp.b_eq[i];
            }
            for (int i = 0; i < k; ++i) {
                M.row(me + i) = cands[pick[i]].a;
                rhs[me + i] = cands[pick[i]].b;
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
            if (!lu.isInvertible()) return;
            Eigen::VectorXd x = lu.solve(rhs);
            for (int j = 0; j < n; ++j)
                if (x[j] < lp.lower[j] - 1e-9 || x[j] > lp.upper[j] + 1e-9) return;
            if (mi > 0) {
                Eigen::VectorXd s = lp.b_in - lp.A_in * x;
                if (s.minCoeff() < -1e-9) return;
            }
            if (me > 0 && (lp.A_eq * x - lp.b_eq).cwiseAbs().maxCoeff() > 1e-9) return;
            double v = lp.c.dot(x);
            if (!best || v < *best) best = v;
            return;
        }
        for (int i = start; i <= static_cast<int>(cands.size()) - (k - depth); ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return best;
}

// FISTA projected gradient for box-constrained QPs, run to a tight fixed
// point. Returns the objective value.
inline double projected_gradient_qp(const Eigen::MatrixXd& Q, const Eigen::VectorXd& c,
                                    const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                                    double tol = 1e-12, int max_iter = 2000000) {
    const int n = static_cast<int>(c.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Q, Eigen::EigenvaluesOnly);
    double L = std::max(es.eigenvalues().maxCoeff(), 1e-12);
    double step = 1.0 / L;
    auto clamp = [&](Eigen::VectorXd v) {
        for (int j = 0; j < n; ++j) v[j] = std::clamp(v[j], lo[j], hi[j]);
        return v;
    };
    Eigen::VectorXd x = clamp(Eigen::VectorXd::Zero(n));
    Eigen::VectorXd z = x;
    double tk = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        Eigen::VectorXd grad = Q * z + c;
        Eigen::VectorXd xn = clamp(z - step * grad);
        double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
        z = xn + ((tk - 1.0) / tn) * (xn - x);
        double delta = (xn - x).cwiseAbs().maxCoeff();
        x = xn;
        tk = tn;
        if (delta < tol) break;
    }
    return 0.5 * x.dot(Q * x) + c.dot(x);
}

// OSQP-style ADMM for general QPs: min 0.5 x'Px + q'x s.t. lb <= Ax <= ub.
// First-order; Ruiz equilibration plus per-row penalties keep the iteration
// usable on badly scaled data. The KKT factorization depends only on
// (P, A, rho, sigma), so bound changes between solves reuse it.
class AdmmQp {
public:
    AdmmQp(const Eigen::SparseMatrix<double>& P, const Eigen::VectorXd& q,
           const Eigen::SparseMatrix<double>& A, const std::vector<bool>& eq_row,
           double rho = 1.0, double sigma = 1e-6)
        : P0_(P), q0_(q), A0_(A), sigma_(sigma) {
        n_ = static_cast<int>(P.rows());
        m_ = static_cast<int>(A.rows());
        D_ = Eigen::VectorXd::Ones(n_);
        E_ = Eigen::VectorXd::Ones(m_);
        // Ruiz equilibration on the stacked [[P, A'], [A, 0]]
        Eigen::SparseMatrix<double> Ps = P, As = A;
        for (int pass = 0; pass < 15; ++pass) {
            Eigen::VectorXd cn = Eigen::VectorXd::Zero(n_), rn = Eigen::VectorXd::Zero(m_);
            for (int k = 0; k < Ps.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(Ps, k); it; ++it) {
                    cn[it.col()] = std::max(cn[it.col()], std::abs(it.value()));
                }
            for (int k = 0; k < As.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator it(As, k); it; ++it) {
                    cn[it.col()] = std::max(cn[it.col()], std::abs(it.value()));
                    rn[it.row()] = std::max(rn[it.row()], std::abs(it.value()));
                }
            for (int j = 0; j < n_; ++j) {
                double s = cn[j] > 1e-12 ? 1.0 / std::sqrt(cn[j]) : 1.0;
                D_[j] *= s;
            }
            for (int i = 0; i < m_; ++i) {
                double s = rn[i] > 1e-12 ? 1.0 / std::sqrt(rn[i]) : 1.0;
                E_[i] *= s;
            }
            Ps = D_.asDiagonal() * P * D_.asDiagonal();
            As = E_.asDiagonal() * A * D_.asDiagonal();
        }
        P_ = Ps;
        A_ = As;
        q_ = D_.asDiagonal() * q;
        rho_ = Eigen::VectorXd::Constant(m_, rho);
        for (int i = 0; i < m_; ++i)
            if (eq_row[i]) rho_[i] = rho * 1e3;
        Eigen::SparseMatrix<double> K(n_ + m_, n_ + m_);
        std::vector<Eigen::Triplet<double>> t;
        for (int k = 0; k < P_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(P_, k); it; ++it)
                t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int j = 0; j < n_; ++j) t.emplace_back(j, j, sigma_);
        for (int k = 0; k < A_.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(A_, k); it; ++it) {
                t.emplace_back(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
                t.emplace_back(static_cast<int>(it.col()), n_ + static_cast<int>(it.row()), it.value());
            }
        for (int i = 0; i < m_; ++i) t.emplace_back(n_ + i, n_ + i, -1.0 / rho_[i]);
        K.setFromTriplets(t.begin(), t.end());
        ldlt_.compute(K);
    }

    bool ok() const { return ldlt_.info() == Eigen::Success; }

    // returns objective; converged flag out-param; residuals measured in the
    // original (unscaled) problem
    double solve(const Eigen::VectorXd& lb0, const Eigen::VectorXd& ub0, bool& converged,
                 double eps = 1e-10, int max_iter = 400000) const {
        Eigen::VectorXd lb(m_), ub(m_);
        for (int i = 0; i < m_; ++i) {
            lb[i] = std::isfinite(lb0[i]) ? lb0[i] * E_[i] : lb0[i];
            ub[i] = std::isfinite(ub0[i]) ? ub0[i] * E_[i] : ub0[i];
        }
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(m_);
        for (int i = 0; i < m_; ++i) z[i] = std::clamp(0.0, lb[i], ub[i]);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(m_);
        const double alpha = 1.6;
        Eigen::VectorXd rhs(n_ + m_);
        converged = false;
        for (int it = 0; it < max_iter; ++it) {
            rhs.head(n_) = sigma_ * x - q_;
            rhs.tail(m_) = z - y.cwiseQuotient(rho_);
            Eigen::VectorXd w = ldlt_.solve(rhs);
            Eigen::VectorXd xt = w.head(n_);
            Eigen::VectorXd zt = z + (w.tail(m_) - y).cwiseQuotient(rho_);
            Eigen::VectorXd x_next = alpha * xt + (1 - alpha) * x;
            Eigen::VectorXd z_pre =
                alpha * zt + (1 - alpha) * z + y.cwiseQuotient(rho_);
            Eigen::VectorXd z_next = z_pre.cwiseMax(lb).cwiseMin(ub);
            // z_pre already carries y/rho, so the scaled residual IS the new dual
            y = rho_.cwiseProduct(z_pre - z_next);
            x = x_next;
            z = z_next;
            if (it % 50 == 49) {
                // unscale and measure against the true problem
                Eigen::VectorXd xu = D_.asDiagonal() * x;
                Eigen::VectorXd yu = E_.asDiagonal() * y;
                Eigen::VectorXd Ax = A0_ * xu;
                Eigen::VectorXd Axc = Ax;
                for (int i = 0; i < m_; ++i)
                    Axc[i] = std::clamp(Axc[i], lb0[i], ub0[i]);
                double rp = m_ > 0 ? (Ax - Axc).cwiseAbs().maxCoeff() : 0.0;
                double rd = (P0_ * xu + q0_ + A0_.transpose() * yu).cwiseAbs().maxCoeff();
                if (rp < eps && rd < eps) {
                    converged = true;
                    break;
                }
            }
        }
        Eigen::VectorXd xu = D_.asDiagonal() * x;
        return 0.5 * xu.dot(P0_ * xu) + q0_.dot(xu);
    }

private:
    Eigen::SparseMatrix<double> P0_, P_;
    Eigen::VectorXd q0_, q_;
    Eigen::SparseMatrix<double> A0_, A_;
    Eigen::VectorXd D_, E_, rho_;
    double sigma_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
    int n_ = 0, m_ = 0;
};

// Stacks a QuadraticProgram into the two-sided ADMM form, with bound rows as
// an identity block. Binary fixings can then be applied as bound updates
// without refactorizing.
struct AdmmForm {
    Eigen::SparseMatrix<double> P, A;
    Eigen::VectorXd q, lb, ub;
    std::vector<bool> eq_row;
    int n = 0;

    explicit AdmmForm(const eva::opt::QuadraticProgram& qp) {
        n = qp.n();
        const int me = static_cast<int>(qp.A_eq.rows());
        const int mi = static_cast<int>(qp.A_in.rows());
        const int m = me + mi + n;
        P = qp.Q;
        q = qp.c;
        std::vector<Eigen::Triplet<double>> t;
        for (int k = 0; k < qp.A_eq.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A_eq, k); it; ++it)
                t.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int k = 0; k < qp.A_in.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A_in, k); it; ++it)
                t.emplace_back(me + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        for (int j = 0; j < n; ++j) t.emplace_back(me + mi + j, j, 1.0);
        A.resize(m, n);
        A.setFromTriplets(t.begin(), t.end());
        lb.resize(m);
        ub.resize(m);
        eq_row.assign(m, false);
        for (int i = 0; i < me; ++i) {
            lb[i] = qp.b_eq[i];
            ub[i] = qp.b_eq[i];
            eq_row[i] = true;
        }
        for (int i = 0; i < mi; ++i) {
            lb[me + i] = -eva::kInf;
            ub[me + i] = qp.b_in[i];
        }
        for (int j = 0; j < n; ++j) {
            lb[me + mi + j] = qp.lower[j];
            ub[me + mi + j] = qp.upper[j];
        }
    }

    // bound rows for variable j
    int bound_row(int j) const {
        return static_cast<int>(A.rows()) - n + j;
    }
};

}  // namespace oracle
