#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <vector>

#include "eva/optimize.hpp"

namespace eva::opt {

void QuadraticProgram::validate() const {
    const int nv = n();
    if (Q.rows() != nv || Q.cols() != nv) throw ValidationError("QP: Q dimension mismatch");
    if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != nv))
        throw ValidationError("QP: equality block mismatch");
    if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != nv))
        throw ValidationError("QP: inequality block mismatch");
    if (lower.size() != nv || upper.size() != nv) throw ValidationError("QP: bound length mismatch");
    for (int j = 0; j < nv; ++j)
        if (lower[j] > upper[j]) throw ValidationError("QP: crossing bounds at variable " + std::to_string(j));
    // symmetry
    Eigen::SparseMatrix<double> D = Eigen::SparseMatrix<double>(Q.transpose()) - Q;
    for (int k = 0; k < D.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(D, k); it; ++it)
            if (std::abs(it.value()) > 1e-10)
                throw ValidationError("QP: Q must be symmetric");
    // PSD: diagonal dominance shortcut, else dense eigenvalue floor
    bool dom = true;
    Eigen::VectorXd offsum = Eigen::VectorXd::Zero(nv);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(nv);
    for (int k = 0; k < Q.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(Q, k); it; ++it) {
            if (it.row() == it.col()) diag[it.row()] = it.value();
            else offsum[it.row()] += std::abs(it.value());
        }
    for (int j = 0; j < nv; ++j)
        if (diag[j] + 1e-12 < offsum[j]) { dom = false; break; }
    for (int j = 0; j < nv && dom; ++j)
        if (diag[j] < -1e-10) dom = false;
    if (!dom) {
        if (nv > 2000) throw ValidationError("QP: PSD check too large without diagonal dominance");
        Eigen::MatrixXd Qd(Q);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Qd, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().minCoeff() < -1e-10)
            throw ValidationError("QP: Q is not positive semidefinite");
    }
}

QuadraticProgram lp_as_qp(const LinearProgram& lp) {
    QuadraticProgram qp;
    qp.Q.resize(lp.n(), lp.n());
    qp.c = lp.c;
    qp.A_eq = lp.A_eq.sparseView();
    qp.b_eq = lp.b_eq;
    qp.A_in = lp.A_in.sparseView();
    qp.b_in = lp.b_in;
    qp.lower = lp.lower;
    qp.upper = lp.upper;
    return qp;
}

KktResiduals kkt_residuals(const QuadraticProgram& qp, const Solution& sol) {
    KktResiduals r;
    const auto& x = sol.x;
    if (qp.A_eq.rows() > 0)
        r.primal = std::max(r.primal, (qp.A_eq * x - qp.b_eq).cwiseAbs().maxCoeff());
    if (qp.A_in.rows() > 0) {
        Eigen::VectorXd s = qp.b_in - qp.A_in * x;
        r.primal = std::max(r.primal, std::max(0.0, -s.minCoeff()));
        for (int i = 0; i < s.size(); ++i)
            r.complementarity = std::max(r.complementarity, std::abs(sol.dual_in[i] * s[i]));
    }
    Eigen::VectorXd rd = qp.Q * x + qp.c;
    if (qp.A_eq.rows() > 0) rd += qp.A_eq.transpose() * sol.dual_eq;
    if (qp.A_in.rows() > 0) rd += qp.A_in.transpose() * sol.dual_in;
    rd -= sol.z_lower;
    rd += sol.z_upper;
    r.stationarity = rd.size() > 0 ? rd.cwiseAbs().maxCoeff() : 0.0;
    for (int j = 0; j < x.size(); ++j) {
        if (std::isfinite(qp.lower[j])) {
            r.primal = std::max(r.primal, qp.lower[j] - x[j]);
            r.complementarity = std::max(r.complementarity, std::abs(sol.z_lower[j] * (x[j] - qp.lower[j])));
        }
        if (std::isfinite(qp.upper[j])) {
            r.primal = std::max(r.primal, x[j] - qp.upper[j]);
            r.complementarity = std::max(r.complementarity, std::abs(sol.z_upper[j] * (qp.upper[j] - x[j])));
        }
    }
    return r;
}

namespace {

// Presolve for interior-point consumption: variables pinned by their bounds
// (typical for branch-and-bound fixings) are substituted out, and rows left
// with a single free variable become bound updates and are dropped. Without
// this step an indicator fixing leaves implicit equalities (e.g. a charge
// rate squeezed to exactly zero), whose empty interior breaks the barrier.
struct Presolve {
    bool infeasible = false;
    std::vector<int> keep;        // reduced var -> original var
    std::vector<int> to_reduced;  // original var -> reduced var or -1
    Eigen::VectorXd value;        // original-sized; fixed values, 0 otherwise
    Eigen::VectorXd lower, upper; // tightened original-space bounds
    std::vector<int> eq_rows, in_rows;      // kept rows
    std::vector<int> fixed_by;    // var -> eq row that pinned it, or -1
    struct Moved {
        int row;      // original inequality row
        int var;      // variable whose bound absorbed it
        double coef;
    };
    std::vector<Moved> moved;
    double obj_const = 0.0;
    QuadraticProgram red;
};

Presolve presolve_qp(const QuadraticProgram& qp) {
    constexpr double kTol = 1e-9;
    const int n = qp.n();
    const int me = static_cast<int>(qp.A_eq.rows());
    const int mi = static_cast<int>(qp.A_in.rows());
    Presolve P;
    P.lower = qp.lower;
    P.upper = qp.upper;
    P.value = Eigen::VectorXd::Zero(n);
    P.fixed_by.assign(n, -1);
    std::vector<bool> fixed(n, false), eq_done(me, false), in_done(mi, false);
    std::vector<int> in_moved_to(mi, -1);
    for (int j = 0; j < n; ++j)
        if (P.lower[j] == P.upper[j]) {
            fixed[j] = true;
            P.value[j] = P.lower[j];
        }

    // row-major copies for the propagation passes
    Eigen::SparseMatrix<double, Eigen::RowMajor> Aeq(qp.A_eq), Ain(qp.A_in);
    auto pin = [&](int j, double v, int eq_row) {
        fixed[j] = true;
        P.value[j] = v;
        P.lower[j] = P.upper[j] = v;
        if (eq_row >= 0) P.fixed_by[j] = eq_row;
    };
    bool changed = true;
    for (int pass = 0; pass < 2 * n + 4 && changed; ++pass) {
        changed = false;
        for (int r = 0; r < me; ++r) {
            if (eq_done[r]) continue;
            double cnst = 0.0;
            int free_var = -1, free_count = 0;
            double free_coef = 0.0;
            double act_min = 0.0, act_max = 0.0;  // over unfixed entries
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Aeq, r); it; ++it) {
                int j = static_cast<int>(it.col());
                if (fixed[j]) {
                    cnst += it.value() * P.value[j];
                } else {
                    ++free_count;
                    free_var = j;
                    free_coef = it.value();
                    double a = it.value();
                    act_min += a > 0 ? a * P.lower[j] : a * P.upper[j];
                    act_max += a > 0 ? a * P.upper[j] : a * P.lower[j];
                }
            }
            double rhs = qp.b_eq[r] - cnst;
            if (free_count == 0) {
                if (std::abs(rhs) > kTol * (1.0 + std::abs(qp.b_eq[r]))) {
                    P.infeasible = true;
                    return P;
                }
                eq_done[r] = true;
                changed = true;
                continue;
            }
            if (free_count == 1) {
                double v = rhs / free_coef;
                if (v < P.lower[free_var] - kTol || v > P.upper[free_var] + kTol) {
                    P.infeasible = true;
                    return P;
                }
                pin(free_var, std::clamp(v, P.lower[free_var], P.upper[free_var]), r);
                eq_done[r] = true;
                changed = true;
                continue;
            }
            // forcing rows: the rhs is only reachable at one activity extreme
            if (std::isfinite(act_min) && act_min > rhs + kTol) { P.infeasible = true; return P; }
            if (std::isfinite(act_max) && act_max < rhs - kTol) { P.infeasible = true; return P; }
            bool force_min = std::isfinite(act_min) && std::abs(act_min - rhs) <= 1e-12 * (1.0 + std::abs(rhs));
            bool force_max = std::isfinite(act_max) && std::abs(act_max - rhs) <= 1e-12 * (1.0 + std::abs(rhs));
            if (force_min || force_max) {
                for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Aeq, r); it; ++it) {
                    int j = static_cast<int>(it.col());
                    if (fixed[j]) continue;
                    bool at_lower = (it.value() > 0) == force_min;
                    pin(j, at_lower ? P.lower[j] : P.upper[j], -1);
                }
                eq_done[r] = true;
                changed = true;
            }
        }
        for (int r = 0; r < mi; ++r) {
            if (in_done[r]) continue;
            double cnst = 0.0;
            int free_var = -1, free_count = 0;
            double free_coef = 0.0;
            double act_min = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ain, r); it; ++it) {
                int j = static_cast<int>(it.col());
                if (fixed[j]) {
                    cnst += it.value() * P.value[j];
                } else {
                    ++free_count;
                    free_var = j;
                    free_coef = it.value();
                    double a = it.value();
                    act_min += a > 0 ? a * P.lower[j] : a * P.upper[j];
                }
            }
            double rhs = qp.b_in[r] - cnst;
            if (free_count == 0) {
                if (rhs < -kTol * (1.0 + std::abs(qp.b_in[r]))) {
                    P.infeasible = true;
                    return P;
                }
                in_done[r] = true;
                changed = true;
                continue;
            }
            if (free_count == 1) {
                double bnd = rhs / free_coef;
                if (free_coef > 0) {
                    if (bnd < P.upper[free_var] - 1e-12) {
                        P.upper[free_var] = bnd;
                        in_moved_to[r] = free_var;
                    }
                } else {
                    if (bnd > P.lower[free_var] + 1e-12) {
                        P.lower[free_var] = bnd;
                        in_moved_to[r] = free_var;
                    }
                }
                if (P.lower[free_var] > P.upper[free_var] + kTol) {
                    P.infeasible = true;
                    return P;
                }
                if (P.upper[free_var] - P.lower[free_var] <= 1e-12)
                    pin(free_var, 0.5 * (P.lower[free_var] + P.upper[free_var]), -1);
                in_done[r] = true;
                changed = true;
                continue;
            }
            if (std::isfinite(act_min)) {
                if (act_min > rhs + kTol) { P.infeasible = true; return P; }
                // forcing: the row can only hold with every term at its
                // minimum; all entries become implied fixings
                if (std::abs(act_min - rhs) <= 1e-12 * (1.0 + std::abs(rhs))) {
                    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ain, r);
                         it; ++it) {
                        int j = static_cast<int>(it.col());
                        if (fixed[j]) continue;
                        pin(j, it.value() > 0 ? P.lower[j] : P.upper[j], -1);
                    }
                    in_done[r] = true;
                    changed = true;
                }
            }
        }
    }
    for (int r = 0; r < mi; ++r)
        if (in_done[r] && in_moved_to[r] >= 0)
            P.moved.push_back({r, in_moved_to[r], Ain.coeff(r, in_moved_to[r])});

    P.to_reduced.assign(n, -1);
    for (int j = 0; j < n; ++j)
        if (!fixed[j]) {
            P.to_reduced[j] = static_cast<int>(P.keep.size());
            P.keep.push_back(j);
        }
    for (int r = 0; r < me; ++r)
        if (!eq_done[r]) P.eq_rows.push_back(r);
    for (int r = 0; r < mi; ++r)
        if (!in_done[r]) P.in_rows.push_back(r);

    const int nr = static_cast<int>(P.keep.size());
    const Eigen::VectorXd& v = P.value;
    P.obj_const = 0.5 * v.dot(qp.Q * v) + qp.c.dot(v);
    Eigen::VectorXd c_full = qp.c + qp.Q * v;
    P.red.c.resize(nr);
    P.red.lower.resize(nr);
    P.red.upper.resize(nr);
    for (int j = 0; j < nr; ++j) {
        P.red.c[j] = c_full[P.keep[j]];
        P.red.lower[j] = P.lower[P.keep[j]];
        P.red.upper[j] = P.upper[P.keep[j]];
    }
    std::vector<Eigen::Triplet<double>> tq;
    for (int k = 0; k < qp.Q.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(qp.Q, k); it; ++it) {
            int ri = P.to_reduced[static_cast<int>(it.row())];
            int rj = P.to_reduced[static_cast<int>(it.col())];
            if (ri >= 0 && rj >= 0) tq.emplace_back(ri, rj, it.value());
        }
    P.red.Q.resize(nr, nr);
    P.red.Q.setFromTriplets(tq.begin(), tq.end());
    auto take_rows = [&](const Eigen::SparseMatrix<double, Eigen::RowMajor>& A,
                         const Eigen::VectorXd& b, const std::vector<int>& rows,
                         Eigen::SparseMatrix<double>& Ar, Eigen::VectorXd& br) {
        std::vector<Eigen::Triplet<double>> ta;
        br.resize(static_cast<int>(rows.size()));
        for (size_t rr = 0; rr < rows.size(); ++rr) {
            int r = rows[rr];
            double shift = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(A, r); it; ++it) {
                int j = static_cast<int>(it.col());
                if (P.to_reduced[j] >= 0)
                    ta.emplace_back(static_cast<int>(rr), P.to_reduced[j], it.value());
                else shift += it.value() * v[j];
            }
            br[static_cast<int>(rr)] = b[r] - shift;
        }
        Ar.resize(static_cast<int>(rows.size()), nr);
        Ar.setFromTriplets(ta.begin(), ta.end());
    };
    take_rows(Aeq, qp.b_eq, P.eq_rows, P.red.A_eq, P.red.b_eq);
    take_rows(Ain, qp.b_in, P.in_rows, P.red.A_in, P.red.b_in);
    return P;
}

// Ruiz equilibration of the constraint/objective data; x = D x_scaled,
// y = E y_scaled, z = z_scaled / D. Essential here: supply-curve slopes and
// their squared objective terms span several orders of magnitude.
struct Scaling {
    Eigen::VectorXd D, E_eq, E_in;
};

Scaling ruiz_scale(QuadraticProgram& qp) {
    const int n = qp.n();
    const int me = static_cast<int>(qp.A_eq.rows());
    const int mi = static_cast<int>(qp.A_in.rows());
    Scaling S;
    S.D = Eigen::VectorXd::Ones(n);
    S.E_eq = Eigen::VectorXd::Ones(me);
    S.E_in = Eigen::VectorXd::Ones(mi);
    Eigen::SparseMatrix<double> Qs = qp.Q, Aes = qp.A_eq, Ais = qp.A_in;
    for (int pass = 0; pass < 10; ++pass) {
        Eigen::VectorXd cn = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd re = Eigen::VectorXd::Zero(me), ri = Eigen::VectorXd::Zero(mi);
        for (int k = 0; k < Qs.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(Qs, k); it; ++it)
                cn[it.col()] = std::max(cn[it.col()], std::abs(it.value()));
        for (int k = 0; k < Aes.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(Aes, k); it; ++it) {
                cn[it.col()] = std::max(cn[it.col()], std::abs(it.value()));
                re[it.row()] = std::max(re[it.row()], std::abs(it.value()));
            }
        for (int k = 0; k < Ais.outerSize(); ++k)
            for (Eigen::SparseMatrix<double>::InnerIterator it(Ais, k); it; ++it) {
                cn[it.col()] = std::max(cn[it.col()], std::abs(it.value()));
                ri[it.row()] = std::max(ri[it.row()], std::abs(it.value()));
            }
        for (int j = 0; j < n; ++j)
            if (cn[j] > 1e-12) S.D[j] /= std::sqrt(cn[j]);
        for (int i = 0; i < me; ++i)
            if (re[i] > 1e-12) S.E_eq[i] /= std::sqrt(re[i]);
        for (int i = 0; i < mi; ++i)
            if (ri[i] > 1e-12) S.E_in[i] /= std::sqrt(ri[i]);
        Qs = S.D.asDiagonal() * qp.Q * S.D.asDiagonal();
        Aes = S.E_eq.asDiagonal() * qp.A_eq * S.D.asDiagonal();
        Ais = S.E_in.asDiagonal() * qp.A_in * S.D.asDiagonal();
    }
    qp.Q = Qs;
    qp.A_eq = Aes;
    qp.A_in = Ais;
    qp.c = S.D.asDiagonal() * qp.c;
    qp.b_eq = S.E_eq.asDiagonal() * qp.b_eq;
    qp.b_in = S.E_in.asDiagonal() * qp.b_in;
    for (int j = 0; j < n; ++j) {
        if (std::isfinite(qp.lower[j])) qp.lower[j] /= S.D[j];
        if (std::isfinite(qp.upper[j])) qp.upper[j] /= S.D[j];
    }
    return S;
}

struct IpmProblem {
    // min 0.5 v'Qv + c'v  s.t.  A v = b,  l <= v <= u  (v = [x; slacks])
    int n = 0, m = 0, nx = 0;
    Eigen::SparseMatrix<double> Q, A;
    Eigen::VectorXd c, b, l, u;
};

IpmProblem to_ipm_form(const QuadraticProgram& qp) {
    IpmProblem P;
    P.nx = qp.n();
    const int mi = static_cast<int>(qp.A_in.rows());
    const int me = static_cast<int>(qp.A_eq.rows());
    P.n = P.nx + mi;
    P.m = me + mi;
    std::vector<Eigen::Triplet<double>> tq, ta;
    for (int k = 0; k < qp.Q.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(qp.Q, k); it; ++it)
            tq.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    P.Q.resize(P.n, P.n);
    P.Q.setFromTriplets(tq.begin(), tq.end());
    for (int k = 0; k < qp.A_eq.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A_eq, k); it; ++it)
            ta.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int k = 0; k < qp.A_in.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A_in, k); it; ++it)
            ta.emplace_back(me + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    for (int i = 0; i < mi; ++i) ta.emplace_back(me + i, P.nx + i, 1.0);
    P.A.resize(P.m, P.n);
    P.A.setFromTriplets(ta.begin(), ta.end());
    P.c = Eigen::VectorXd::Zero(P.n);
    P.c.head(P.nx) = qp.c;
    P.b.resize(P.m);
    if (me > 0) P.b.head(me) = qp.b_eq;
    if (mi > 0) P.b.tail(mi) = qp.b_in;
    P.l = Eigen::VectorXd::Constant(P.n, -kInf);
    P.u = Eigen::VectorXd::Constant(P.n, kInf);
    P.l.head(P.nx) = qp.lower;
    P.u.head(P.nx) = qp.upper;
    for (int i = 0; i < mi; ++i) P.l[P.nx + i] = 0.0;
    return P;
}

}  // namespace

Solution solve_qp(const QuadraticProgram& qp_in, const IpmOptions& opts) {
    Presolve R = presolve_qp(qp_in);
    Solution sol;
    if (R.infeasible) {
        sol.status = SolveStatus::Infeasible;
        return sol;
    }
    const QuadraticProgram& qp = R.red;

    // everything pinned by presolve: evaluate directly
    if (qp.n() == 0) {
        Eigen::VectorXd v = R.value;
        double viol = 0.0;
        if (qp_in.A_eq.rows() > 0) viol = (qp_in.A_eq * v - qp_in.b_eq).cwiseAbs().maxCoeff();
        if (qp_in.A_in.rows() > 0)
            viol = std::max(viol, std::max(0.0, (qp_in.A_in * v - qp_in.b_in).maxCoeff()));
        sol.status = viol <= 1e-8 ? SolveStatus::Optimal : SolveStatus::Infeasible;
        sol.x = v;
        sol.objective = 0.5 * v.dot(qp_in.Q * v) + qp_in.c.dot(v);
        sol.dual_eq = Eigen::VectorXd::Zero(qp_in.A_eq.rows());
        sol.dual_in = Eigen::VectorXd::Zero(qp_in.A_in.rows());
        sol.z_lower = Eigen::VectorXd::Zero(qp_in.n());
        sol.z_upper = Eigen::VectorXd::Zero(qp_in.n());
        return sol;
    }

    QuadraticProgram scaled = R.red;
    Scaling S = ruiz_scale(scaled);
    IpmProblem P = to_ipm_form(scaled);
    const int n = P.n, m = P.m;
    // per-entry unscaling factors for honest residual measurement
    Eigen::VectorXd col_unscale = Eigen::VectorXd::Ones(n);
    for (int j = 0; j < P.nx; ++j) col_unscale[j] = 1.0 / S.D[j];
    Eigen::VectorXd row_unscale(m);
    for (int i = 0; i < static_cast<int>(S.E_eq.size()); ++i)
        row_unscale[i] = 1.0 / S.E_eq[i];
    for (int i = 0; i < static_cast<int>(S.E_in.size()); ++i)
        row_unscale[static_cast<int>(S.E_eq.size()) + i] = 1.0 / S.E_in[i];

    // starting point strictly inside the bounds
    Eigen::VectorXd v(n), zl = Eigen::VectorXd::Zero(n), zu = Eigen::VectorXd::Zero(n);
    std::vector<bool> hasl(n), hasu(n);
    int n_bounded = 0;
    for (int j = 0; j < n; ++j) {
        hasl[j] = std::isfinite(P.l[j]);
        hasu[j] = std::isfinite(P.u[j]);
        n_bounded += (hasl[j] ? 1 : 0) + (hasu[j] ? 1 : 0);
        if (hasl[j] && hasu[j]) v[j] = 0.5 * (P.l[j] + P.u[j]);
        else if (hasl[j]) v[j] = P.l[j] + 1.0 + 0.1 * std::abs(P.l[j]);
        else if (hasu[j]) v[j] = P.u[j] - 1.0 - 0.1 * std::abs(P.u[j]);
        else v[j] = 0.0;
        if (hasl[j]) zl[j] = 1.0;
        if (hasu[j]) zu[j] = 1.0;
    }
    Eigen::VectorXd y = Eigen::VectorXd::Zero(m);

    double braw = 0.0;
    if (R.red.b_eq.size() > 0) braw = R.red.b_eq.cwiseAbs().maxCoeff();
    if (R.red.b_in.size() > 0) braw = std::max(braw, R.red.b_in.cwiseAbs().maxCoeff());
    const double bscale = 1.0 + braw;
    const double cscale = 1.0 + (R.red.c.size() > 0 ? R.red.c.cwiseAbs().maxCoeff() : 0.0);
    constexpr double kReg = 1e-9;

    auto gap_of = [&](const Eigen::VectorXd& vv, const Eigen::VectorXd& zll,
                      const Eigen::VectorXd& zuu) {
        double g = 0.0;
        for (int j = 0; j < n; ++j) {
            if (hasl[j]) g += (vv[j] - P.l[j]) * zll[j];
            if (hasu[j]) g += (P.u[j] - vv[j]) * zuu[j];
        }
        return n_bounded > 0 ? g / n_bounded : 0.0;
    };

    Eigen::SparseMatrix<double> K(n + m, n + m);
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
    bool analyzed = false;

    double rp_norm = kInf, rd_norm = kInf, mu = gap_of(v, zl, zu);
    int it = 0;
    double last_ap = 1.0;
    for (; it < opts.max_iterations; ++it) {
        Eigen::VectorXd rp = P.A * v - P.b;
        Eigen::VectorXd rd = P.Q * v + P.c + P.A.transpose() * y - zl + zu;
        rp_norm = m > 0 ? rp.cwiseAbs().cwiseProduct(row_unscale).maxCoeff() : 0.0;
        rd_norm = rd.cwiseAbs().cwiseProduct(col_unscale).maxCoeff();
        mu = gap_of(v, zl, zu);
        double obj = 0.5 * v.dot(P.Q * v) + P.c.dot(v);
        if (std::getenv("EVA_IPM_TRACE")) {
            int worst = 0;
            rd.cwiseAbs().maxCoeff(&worst);
            std::cerr << "ipm it=" << it << " rp=" << rp_norm << " rd=" << rd_norm
                      << " (var " << worst << ", v=" << v[worst] << ", l=" << P.l[worst]
                      << ", u=" << P.u[worst] << ", zl=" << zl[worst] << ", zu=" << zu[worst]
                      << ") mu=" << mu << " obj=" << obj << "\n";
        }
        if (rp_norm <= opts.tol_feas * bscale && rd_norm <= opts.tol_feas * cscale &&
            mu <= opts.tol_gap * (1.0 + std::abs(obj)))
            break;
        // the static regularization bounds the reachable dual accuracy; once
        // the gap sits at its floor, an iterate inside the certified
        // tolerances is final
        if (it >= 15 && rp_norm <= 1e-9 * bscale && rd_norm <= 1e-8 * cscale &&
            mu <= 0.2 * opts.tol_gap * (1.0 + std::abs(obj)))
            break;

        // barrier weights, clamped to keep the KKT system factorizable
        Eigen::VectorXd d = Eigen::VectorXd::Constant(n, kReg);
        for (int j = 0; j < n; ++j) {
            if (hasl[j]) d[j] += zl[j] / (v[j] - P.l[j]);
            if (hasu[j]) d[j] += zu[j] / (P.u[j] - v[j]);
            d[j] = std::min(d[j], 1e12);
        }
        bool factored = false;
        for (double reg = kReg; reg <= 1e-3; reg *= 1000.0) {
            std::vector<Eigen::Triplet<double>> tk;
            tk.reserve(P.Q.nonZeros() + P.A.nonZeros() * 2 + n + m);
            for (int k = 0; k < P.Q.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator itq(P.Q, k); itq; ++itq)
                    tk.emplace_back(static_cast<int>(itq.row()), static_cast<int>(itq.col()),
                                    itq.value());
            for (int j = 0; j < n; ++j) tk.emplace_back(j, j, d[j] + reg);
            for (int k = 0; k < P.A.outerSize(); ++k)
                for (Eigen::SparseMatrix<double>::InnerIterator ita(P.A, k); ita; ++ita) {
                    tk.emplace_back(n + static_cast<int>(ita.row()), static_cast<int>(ita.col()),
                                    ita.value());
                    tk.emplace_back(static_cast<int>(ita.col()), n + static_cast<int>(ita.row()),
                                    ita.value());
                }
            for (int i = 0; i < m; ++i) tk.emplace_back(n + i, n + i, -reg);
            K.setFromTriplets(tk.begin(), tk.end());
            if (!analyzed) {
                ldlt.analyzePattern(K);
                analyzed = true;
            }
            ldlt.factorize(K);
            if (ldlt.info() == Eigen::Success) {
                factored = true;
                break;
            }
        }
        if (!factored) break;  // fall through to the acceptance checks below

        auto solve_dir = [&](const Eigen::VectorXd& sig_l, const Eigen::VectorXd& sig_u,
                             Eigen::VectorXd& dv, Eigen::VectorXd& dy,
                             Eigen::VectorXd& dzl, Eigen::VectorXd& dzu) {
            Eigen::VectorXd rhs(n + m);
            Eigen::VectorXd rbar = -rd;
            for (int j = 0; j < n; ++j) {
                if (hasl[j]) rbar[j] += sig_l[j] / (v[j] - P.l[j]);
                if (hasu[j]) rbar[j] -= sig_u[j] / (P.u[j] - v[j]);
            }
            rhs.head(n) = rbar;
            rhs.tail(m) = -rp;
            Eigen::VectorXd sol_kkt = ldlt.solve(rhs);
            // iterative refinement: the factorization is taken at extreme
            // barrier weights, so one or two corrections buy back the digits
            for (int ir = 0; ir < 2; ++ir) {
                Eigen::VectorXd resid = rhs - K * sol_kkt;
                if (resid.cwiseAbs().maxCoeff() < 1e-14) break;
                sol_kkt += ldlt.solve(resid);
            }
            dv = sol_kkt.head(n);
            dy = sol_kkt.tail(m);
            dzl = Eigen::VectorXd::Zero(n);
            dzu = Eigen::VectorXd::Zero(n);
            for (int j = 0; j < n; ++j) {
                if (hasl[j]) dzl[j] = (sig_l[j] - zl[j] * dv[j]) / (v[j] - P.l[j]);
                if (hasu[j]) dzu[j] = (sig_u[j] + zu[j] * dv[j]) / (P.u[j] - v[j]);
            }
        };

        auto step_len = [&](const Eigen::VectorXd& dv, const Eigen::VectorXd& dzl,
                            const Eigen::VectorXd& dzu, double frac, double& ap, double& ad) {
            ap = 1.0;
            ad = 1.0;
            for (int j = 0; j < n; ++j) {
                if (hasl[j]) {
                    if (dv[j] < 0) ap = std::min(ap, -frac * (v[j] - P.l[j]) / dv[j]);
                    if (dzl[j] < 0) ad = std::min(ad, -frac * zl[j] / dzl[j]);
                }
                if (hasu[j]) {
                    if (dv[j] > 0) ap = std::min(ap, frac * (P.u[j] - v[j]) / dv[j]);
                    if (dzu[j] < 0) ad = std::min(ad, -frac * zu[j] / dzu[j]);
                }
            }
        };

        // affine-scaling predictor
        Eigen::VectorXd zero_l = Eigen::VectorXd::Zero(n), zero_u = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < n; ++j) {
            if (hasl[j]) zero_l[j] = -(v[j] - P.l[j]) * zl[j];
            if (hasu[j]) zero_u[j] = -(P.u[j] - v[j]) * zu[j];
        }
        Eigen::VectorXd dv, dy, dzl, dzu;
        solve_dir(zero_l, zero_u, dv, dy, dzl, dzu);
        double ap, ad;
        step_len(dv, dzl, dzu, 1.0, ap, ad);
        // predicted gap
        Eigen::VectorXd v_aff = v + ap * dv;
        Eigen::VectorXd zl_aff = zl + ad * dzl;
        Eigen::VectorXd zu_aff = zu + ad * dzu;
        double mu_aff = gap_of(v_aff, zl_aff, zu_aff);
        double sigma = mu > 0 ? std::pow(mu_aff / mu, 3.0) : 0.0;
        sigma = std::clamp(sigma, 0.0, 1.0);
        // keep the barrier centered near the target gap until the duals have
        // actually converged; letting mu crash early poisons the Newton system
        double mu_floor = 0.05 * opts.tol_gap * (1.0 + std::abs(obj));
        if (rd_norm > opts.tol_feas * cscale || rp_norm > opts.tol_feas * bscale)
            mu_floor = std::max(mu_floor, 1e-3 * mu);
        double mu_target = std::max(sigma * mu, mu_floor);

        // corrector
        Eigen::VectorXd sig_l = zero_l, sig_u = zero_u;
        for (int j = 0; j < n; ++j) {
            if (hasl[j]) sig_l[j] += mu_target - ap * ad * dv[j] * dzl[j];
            if (hasu[j]) sig_u[j] += mu_target + ap * ad * dv[j] * dzu[j];
        }
        solve_dir(sig_l, sig_u, dv, dy, dzl, dzu);
        step_len(dv, dzl, dzu, 0.995, ap, ad);
        if (n_bounded == 0) { ap = 1.0; ad = 1.0; }

        v += ap * dv;
        y += ad * dy;
        zl += ad * dzl;
        zu += ad * dzu;
        last_ap = ap;
    }

    double obj = 0.5 * v.dot(P.Q * v) + P.c.dot(v);
    bool converged = rp_norm <= opts.tol_feas * bscale && rd_norm <= opts.tol_feas * cscale &&
                     mu <= opts.tol_gap * (1.0 + std::abs(obj));
    // an iterate already inside the certified tolerances is acceptable even
    // if the target gap was not reached before the barrier degenerated
    if (!converged && rp_norm <= 1e-9 * bscale && rd_norm <= 1e-8 * cscale &&
        mu <= 0.2 * opts.tol_gap * (1.0 + std::abs(obj)) * 4.0)
        converged = true;
    if (!converged) {
        // primal residual stuck while steps collapse or duals diverge:
        // treat as infeasible (definitive certification is the caller's job)
        double ynorm = m > 0 ? y.cwiseAbs().maxCoeff() : 0.0;
        bool infeasible_like =
            rp_norm > 1e-6 * bscale && (last_ap < 1e-6 || ynorm > 1e9);
        sol.status = infeasible_like ? SolveStatus::Infeasible : SolveStatus::IterationLimit;
        sol.iterations = it;
        return sol;
    }

    // expand back to the original variable space, undoing the equilibration
    const int n0 = qp_in.n();
    sol.status = SolveStatus::Optimal;
    sol.x = R.value;
    for (size_t r = 0; r < R.keep.size(); ++r)
        sol.x[R.keep[r]] = S.D[static_cast<int>(r)] * v[static_cast<int>(r)];
    sol.objective = 0.5 * sol.x.dot(qp_in.Q * sol.x) + qp_in.c.dot(sol.x);
    const int me = static_cast<int>(qp_in.A_eq.rows());
    const int mi = static_cast<int>(qp_in.A_in.rows());
    sol.dual_eq = Eigen::VectorXd::Zero(me);
    for (size_t rr = 0; rr < R.eq_rows.size(); ++rr)
        sol.dual_eq[R.eq_rows[rr]] = S.E_eq[static_cast<int>(rr)] * y[static_cast<int>(rr)];
    sol.dual_in = Eigen::VectorXd::Zero(mi);
    for (size_t rr = 0; rr < R.in_rows.size(); ++rr)
        sol.dual_in[R.in_rows[rr]] = std::max(
            0.0, S.E_in[static_cast<int>(rr)] * y[static_cast<int>(R.eq_rows.size() + rr)]);
    sol.z_lower = Eigen::VectorXd::Zero(n0);
    sol.z_upper = Eigen::VectorXd::Zero(n0);
    for (size_t r = 0; r < R.keep.size(); ++r) {
        sol.z_lower[R.keep[r]] = zl[static_cast<int>(r)] / S.D[static_cast<int>(r)];
        sol.z_upper[R.keep[r]] = zu[static_cast<int>(r)] / S.D[static_cast<int>(r)];
    }
    // dropped singleton rows that actually cut the bound reclaim their
    // multiplier from the variable it was parked on
    for (const auto& mv : R.moved) {
        int j = mv.var;
        double slack = qp_in.b_in[mv.row] - qp_in.A_in.row(mv.row).dot(sol.x);
        if (slack > 1e-7) continue;
        if (mv.coef > 0 && sol.z_upper[j] > 0 &&
            (!std::isfinite(qp_in.upper[j]) || qp_in.upper[j] - sol.x[j] > 1e-9)) {
            sol.dual_in[mv.row] = sol.z_upper[j] / mv.coef;
            sol.z_upper[j] = 0.0;
        } else if (mv.coef < 0 && sol.z_lower[j] > 0 &&
                   (!std::isfinite(qp_in.lower[j]) || sol.x[j] - qp_in.lower[j] > 1e-9)) {
            sol.dual_in[mv.row] = sol.z_lower[j] / (-mv.coef);
            sol.z_lower[j] = 0.0;
        }
    }
    // reduced costs of presolve-pinned variables, attributed to the pinning
    // equality row when there is one, else to the active bound side
    {
        Eigen::VectorXd rc = qp_in.Q * sol.x + qp_in.c;
        if (me > 0) rc += qp_in.A_eq.transpose() * sol.dual_eq;
        if (mi > 0) rc += qp_in.A_in.transpose() * sol.dual_in;
        rc -= sol.z_lower;
        rc += sol.z_upper;
        for (int j = 0; j < n0; ++j) {
            if (R.to_reduced[j] >= 0) continue;
            if (R.fixed_by[j] >= 0) {
                double a = qp_in.A_eq.coeff(R.fixed_by[j], j);
                if (a != 0.0) {
                    sol.dual_eq[R.fixed_by[j]] -= rc[j] / a;
                    rc = qp_in.Q * sol.x + qp_in.c;
                    rc += qp_in.A_eq.transpose() * sol.dual_eq;
                    if (mi > 0) rc += qp_in.A_in.transpose() * sol.dual_in;
                    rc -= sol.z_lower;
                    rc += sol.z_upper;
                    continue;
                }
            }
            if (rc[j] > 0) sol.z_lower[j] += rc[j];
            else sol.z_upper[j] += -rc[j];
        }
    }
    sol.iterations = it;
    sol.dual_objective = sol.objective - static_cast<double>(n_bounded) * mu;

    constexpr double kActiveTol = 1e-7;
    sol.row_active.assign(mi, 0);
    if (mi > 0) {
        Eigen::VectorXd s = qp_in.b_in - qp_in.A_in * sol.x;
        for (int i = 0; i < mi; ++i) sol.row_active[i] = s[i] <= kActiveTol ? kActiveRow : kInactive;
    }
    sol.var_active.assign(n0, 0);
    for (int j = 0; j < n0; ++j) {
        double scale = 1.0 + std::abs(sol.x[j]);
        if (std::isfinite(qp_in.lower[j]) && sol.x[j] - qp_in.lower[j] <= kActiveTol * scale)
            sol.var_active[j] = kAtLower;
        else if (std::isfinite(qp_in.upper[j]) && qp_in.upper[j] - sol.x[j] <= kActiveTol * scale)
            sol.var_active[j] = kAtUpper;
    }
    std::ostringstream id;
    for (auto a : sol.row_active) id << int(a);
    id << '|';
    for (auto a : sol.var_active) id << int(a);
    sol.active_set_id = id.str();
    return sol;
}

}  // namespace eva::opt
