#include <algorithm>
#include <cmath>
#include <sstream>

#include "eva/optimize.hpp"

namespace eva::opt {

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::IterationLimit: return "iteration_limit";
        case SolveStatus::NodeLimit: return "node_limit";
    }
    return "unknown";
}

void LinearProgram::validate() const {
    const int nv = n();
    if (A_eq.size() > 0 && A_eq.cols() != nv) throw ValidationError("LP: A_eq column mismatch");
    if (A_in.size() > 0 && A_in.cols() != nv) throw ValidationError("LP: A_in column mismatch");
    if (A_eq.rows() != b_eq.size()) throw ValidationError("LP: b_eq length mismatch");
    if (A_in.rows() != b_in.size()) throw ValidationError("LP: b_in length mismatch");
    if (lower.size() != nv || upper.size() != nv) throw ValidationError("LP: bound length mismatch");
    for (int j = 0; j < nv; ++j)
        if (lower[j] > upper[j]) throw ValidationError("LP: crossing bounds at variable " + std::to_string(j));
}

namespace {

constexpr double kPivotTol = 1e-11;
constexpr double kActiveTol = 1e-7;  // slack threshold for active-set classification

// Bounded-variable revised simplex over the augmented space
// [structural | slacks | artificials]. The basis matrix is refactorized with
// a dense LU on every pivot; problem sizes here stay in the low hundreds of
// rows, so simplicity wins over update formulas.
struct SimplexWork {
    int n = 0, m_eq = 0, m_in = 0, m = 0;
    int n_aug = 0;  // n + m_in
    int n_tot = 0;  // n_aug + m artificials
    Eigen::MatrixXd A;  // m x n_tot
    Eigen::VectorXd b;
    Eigen::VectorXd c;  // current phase costs
    Eigen::VectorXd l, u;
    std::vector<int> basic;    // m
    std::vector<int> pos;      // n_tot, row index or -1
    std::vector<std::int8_t> at_up;
    Eigen::VectorXd x;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    double rc_tol = 1e-9;
    int iterations = 0;

    void build(const LinearProgram& lp) {
        n = lp.n();
        m_eq = static_cast<int>(lp.A_eq.rows());
        m_in = static_cast<int>(lp.A_in.rows());
        m = m_eq + m_in;
        n_aug = n + m_in;
        n_tot = n_aug + m;
        A.setZero(m, n_tot);
        if (m_eq > 0) A.block(0, 0, m_eq, n) = lp.A_eq;
        if (m_in > 0) A.block(m_eq, 0, m_in, n) = lp.A_in;
        for (int i = 0; i < m_in; ++i) A(m_eq + i, n + i) = 1.0;
        b.resize(m);
        if (m_eq > 0) b.head(m_eq) = lp.b_eq;
        if (m_in > 0) b.tail(m_in) = lp.b_in;
        l.setConstant(n_tot, 0.0);
        u.setConstant(n_tot, kInf);
        l.head(n) = lp.lower;
        u.head(n) = lp.upper;
        c.setZero(n_tot);
        x.setZero(n_tot);
        basic.assign(m, -1);
        pos.assign(n_tot, -1);
        at_up.assign(n_tot, 0);
    }

    double nb_value(int j) const {
        if (at_up[j] && std::isfinite(u[j])) return u[j];
        if (std::isfinite(l[j])) return l[j];
        if (std::isfinite(u[j])) return u[j];
        return 0.0;
    }

    void refactor() {
        Eigen::MatrixXd B(m, m);
        for (int i = 0; i < m; ++i) B.col(i) = A.col(basic[i]);
        lu.compute(B);
    }

    void recompute_x() {
        Eigen::VectorXd rhs = b;
        for (int j = 0; j < n_tot; ++j) {
            if (pos[j] >= 0) continue;
            double v = nb_value(j);
            x[j] = v;
            if (v != 0.0) rhs -= A.col(j) * v;
        }
        if (m > 0) {
            Eigen::VectorXd xb = lu.solve(rhs);
            for (int i = 0; i < m; ++i) x[basic[i]] = xb[i];
        }
    }

    Eigen::VectorXd duals() const {
        if (m == 0) return Eigen::VectorXd();
        Eigen::VectorXd cb(m);
        for (int i = 0; i < m; ++i) cb[i] = c[basic[i]];
        return lu.transpose().solve(cb);
    }

    // One primal iteration under Bland's rule. Returns 0 = optimal,
    // 1 = pivoted, 2 = unbounded.
    int primal_step() {
        Eigen::VectorXd y = duals();
        int enter = -1, dir = 0;
        for (int j = 0; j < n_tot; ++j) {
            if (pos[j] >= 0) continue;
            if (l[j] == u[j]) continue;
            double rc = c[j] - (m > 0 ? A.col(j).dot(y) : 0.0);
            bool lo_side = !at_up[j] && std::isfinite(l[j]);
            bool free_var = !std::isfinite(l[j]) && !std::isfinite(u[j]);
            bool up_side = at_up[j] || (!std::isfinite(l[j]) && std::isfinite(u[j]));
            if ((lo_side || free_var) && rc < -rc_tol) { enter = j; dir = +1; break; }
            if ((up_side || free_var) && rc > rc_tol) { enter = j; dir = -1; break; }
        }
        if (enter < 0) return 0;

        Eigen::VectorXd w;
        if (m > 0) w = lu.solve(A.col(enter));
        double best = kInf;
        int block_row = -1;      // -1 = entering's own bound flip
        std::int8_t block_up = 0;
        if (std::isfinite(l[enter]) && std::isfinite(u[enter])) best = u[enter] - l[enter];
        for (int i = 0; i < m; ++i) {
            int k = basic[i];
            double rate = -dir * w[i];  // d x_k / d step
            double cap = kInf;
            std::int8_t side = 0;
            if (rate > kPivotTol) {
                if (std::isfinite(u[k])) { cap = (u[k] - x[k]) / rate; side = 1; }
            } else if (rate < -kPivotTol) {
                if (std::isfinite(l[k])) { cap = (x[k] - l[k]) / (-rate); side = 0; }
            }
            if (cap < -1e-9) cap = 0.0;
            if (cap < best - 1e-12 ||
                (cap < best + 1e-12 && block_row >= 0 && k < basic[block_row])) {
                best = cap;
                block_row = i;
                block_up = side;
            }
        }
        if (!std::isfinite(best)) return 2;
        best = std::max(best, 0.0);

        // apply the step
        x[enter] = (pos[enter] >= 0 ? x[enter] : nb_value(enter)) + dir * best;
        for (int i = 0; i < m; ++i) x[basic[i]] -= dir * best * w[i];
        if (block_row < 0) {
            at_up[enter] = static_cast<std::int8_t>(!at_up[enter]);
        } else {
            int leave = basic[block_row];
            pos[leave] = -1;
            at_up[leave] = block_up;
            x[leave] = block_up ? u[leave] : l[leave];
            basic[block_row] = enter;
            pos[enter] = block_row;
            refactor();
            recompute_x();
        }
        ++iterations;
        return 1;
    }

    // Runs primal iterations to optimality for the current cost vector.
    SolveStatus optimize(int max_iterations) {
        while (iterations < max_iterations) {
            int r = primal_step();
            if (r == 0) return SolveStatus::Optimal;
            if (r == 2) return SolveStatus::Unbounded;
        }
        return SolveStatus::IterationLimit;
    }

    // Dual simplex pivot driving the basic variable of `row` out at the given
    // bound side. Returns false when no entering column exists (primal
    // infeasible beyond this point).
    bool dual_pivot(int row, bool below) {
        int leave = basic[row];
        // alpha_j = (B^-1 a_j)_row computed via e_row' B^-1 A
        Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
        e[row] = 1.0;
        Eigen::VectorXd rho = lu.transpose().solve(e);
        Eigen::VectorXd y = duals();
        int enter = -1;
        double best_ratio = kInf;
        for (int j = 0; j < n_tot; ++j) {
            if (pos[j] >= 0 || l[j] == u[j]) continue;
            double alpha = A.col(j).dot(rho);
            if (std::abs(alpha) <= kPivotTol) continue;
            bool at_upper = at_up[j] && std::isfinite(u[j]);
            bool at_lower = !at_upper && std::isfinite(l[j]);
            bool is_free = !std::isfinite(l[j]) && !std::isfinite(u[j]);
            bool eligible;
            if (below) {
                eligible = (at_lower && alpha < 0) || (at_upper && alpha > 0) || is_free;
            } else {
                eligible = (at_lower && alpha > 0) || (at_upper && alpha < 0) || is_free;
            }
            if (!eligible) continue;
            double rc = c[j] - A.col(j).dot(y);
            double ratio = below ? rc / (-alpha) : rc / alpha;
            if (ratio < -1e-7) continue;  // would break dual feasibility badly
            ratio = std::max(ratio, 0.0);
            if (ratio < best_ratio - 1e-12 || (ratio < best_ratio + 1e-12 && enter >= 0 && j < enter)) {
                best_ratio = ratio;
                enter = j;
            }
        }
        if (enter < 0) return false;
        pos[leave] = -1;
        at_up[leave] = below ? 0 : 1;
        basic[row] = enter;
        pos[enter] = row;
        refactor();
        recompute_x();
        ++iterations;
        return true;
    }
};

void fill_solution(const LinearProgram& lp, SimplexWork& W, Solution& sol) {
    const int n = W.n;
    sol.x = W.x.head(n);
    sol.objective = lp.c.dot(sol.x);
    Eigen::VectorXd y = W.duals();
    sol.dual_eq = Eigen::VectorXd::Zero(W.m_eq);
    sol.dual_in = Eigen::VectorXd::Zero(W.m_in);
    for (int i = 0; i < W.m_eq; ++i) sol.dual_eq[i] = -y[i];
    for (int i = 0; i < W.m_in; ++i) sol.dual_in[i] = std::max(0.0, -y[W.m_eq + i]);
    sol.z_lower = Eigen::VectorXd::Zero(n);
    sol.z_upper = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < n; ++j) {
        if (W.pos[j] >= 0) continue;
        double rc = W.c[j] - (W.m > 0 ? W.A.col(j).dot(y) : 0.0);
        if (rc > 0) sol.z_lower[j] = rc;
        else sol.z_upper[j] = -rc;
    }
    // activity classification at the 1e-7 slack threshold
    sol.row_active.assign(W.m_in, 0);
    for (int i = 0; i < W.m_in; ++i) {
        double slack = W.x[W.n + i];
        sol.row_active[i] = slack <= kActiveTol ? kActiveRow : kInactive;
    }
    sol.var_active.assign(n, 0);
    for (int j = 0; j < n; ++j) {
        double scale = 1.0 + std::abs(sol.x[j]);
        if (std::isfinite(lp.lower[j]) && sol.x[j] - lp.lower[j] <= kActiveTol * scale)
            sol.var_active[j] = kAtLower;
        else if (std::isfinite(lp.upper[j]) && lp.upper[j] - sol.x[j] <= kActiveTol * scale)
            sol.var_active[j] = kAtUpper;
    }
    std::ostringstream id;
    for (auto a : sol.row_active) id << int(a);
    id << '|';
    for (auto a : sol.var_active) id << int(a);
    sol.active_set_id = id.str();
    // dual objective: -b_eq'y_eq - b_in'mu + l'z_l - u'z_u over finite bounds
    double g = 0.0;
    if (W.m_eq > 0) g -= lp.b_eq.dot(sol.dual_eq);
    if (W.m_in > 0) g -= lp.b_in.dot(sol.dual_in);
    for (int j = 0; j < n; ++j) {
        if (sol.z_lower[j] > 0 && std::isfinite(lp.lower[j])) g += lp.lower[j] * sol.z_lower[j];
        if (sol.z_upper[j] > 0 && std::isfinite(lp.upper[j])) g -= lp.upper[j] * sol.z_upper[j];
    }
    sol.dual_objective = g;
    sol.iterations = W.iterations;
}

// Phase 1: all-artificial start, minimize the artificial sum.
SolveStatus run_two_phases(const LinearProgram& lp, SimplexWork& W, const SimplexOptions& opts) {
    W.rc_tol = std::max(opts.feas_tol, 1e-10);
    // nonbasic placement for structural + slack variables
    for (int j = 0; j < W.n_aug; ++j) {
        W.at_up[j] = (!std::isfinite(W.l[j]) && std::isfinite(W.u[j])) ? 1 : 0;
        W.x[j] = W.nb_value(j);
    }
    Eigen::VectorXd r = W.b;
    for (int j = 0; j < W.n_aug; ++j)
        if (W.x[j] != 0.0) r -= W.A.col(j) * W.x[j];
    for (int i = 0; i < W.m; ++i) {
        int aj = W.n_aug + i;
        W.A(i, aj) = r[i] >= 0 ? 1.0 : -1.0;
        W.l[aj] = 0.0;
        W.u[aj] = kInf;
        W.basic[i] = aj;
        W.pos[aj] = i;
        W.x[aj] = std::abs(r[i]);
        W.c[aj] = 1.0;
    }
    if (W.m > 0) {
        W.refactor();
        W.recompute_x();
        SolveStatus s1 = W.optimize(opts.max_iterations);
        if (s1 == SolveStatus::IterationLimit) return s1;
        double art = 0.0;
        for (int i = 0; i < W.m; ++i) art += W.x[W.n_aug + i];
        double scale = 1.0 + W.b.cwiseAbs().maxCoeff();
        if (art > 1e-8 * scale) return SolveStatus::Infeasible;
    }
    // phase 2: real costs, artificials pinned at zero
    W.c.setZero();
    W.c.head(W.n) = lp.c;
    for (int i = 0; i < W.m; ++i) {
        int aj = W.n_aug + i;
        W.l[aj] = 0.0;
        W.u[aj] = 0.0;
        if (W.pos[aj] < 0) W.x[aj] = 0.0;
    }
    return W.optimize(opts.max_iterations);
}

}  // namespace

Solution solve_lp(const LinearProgram& lp, const SimplexOptions& opts) {
    SimplexBasis scratch;
    return solve_lp(lp, scratch, opts);
}

Solution solve_lp(const LinearProgram& lp, SimplexBasis& warm, const SimplexOptions& opts) {
    lp.validate();
    SimplexWork W;
    W.build(lp);
    Solution sol;

    bool warm_ok = false;
    if (warm.valid && static_cast<int>(warm.basic.size()) == W.m &&
        static_cast<int>(warm.at_upper.size()) == W.n_aug) {
        // try the supplied basis; fall back to the two-phase start when it is
        // singular or primal infeasible
        bool sane = true;
        for (int v : warm.basic) sane = sane && v >= 0 && v < W.n_aug;
        if (sane) {
            for (int i = 0; i < W.m; ++i) { W.basic[i] = warm.basic[i]; }
            for (int j = 0; j < W.n_aug; ++j) W.at_up[j] = warm.at_upper[j];
            std::fill(W.pos.begin(), W.pos.end(), -1);
            for (int i = 0; i < W.m; ++i) W.pos[W.basic[i]] = i;
            W.c.setZero();
            W.c.head(W.n) = lp.c;
            for (int i = 0; i < W.m; ++i) {
                int aj = W.n_aug + i;
                W.l[aj] = 0.0;
                W.u[aj] = 0.0;
            }
            W.refactor();
            if (W.lu.rcond() > 1e-13) {
                W.recompute_x();
                double viol = 0.0;
                for (int i = 0; i < W.m; ++i) {
                    int k = W.basic[i];
                    if (std::isfinite(W.l[k])) viol = std::max(viol, W.l[k] - W.x[k]);
                    if (std::isfinite(W.u[k])) viol = std::max(viol, W.x[k] - W.u[k]);
                }
                if (viol <= opts.feas_tol * 100) warm_ok = true;
            }
        }
    }

    SolveStatus status;
    if (warm_ok) {
        W.rc_tol = std::max(opts.feas_tol, 1e-10);
        status = W.optimize(opts.max_iterations);
    } else {
        W.build(lp);
        status = run_two_phases(lp, W, opts);
    }
    sol.status = status;
    if (status == SolveStatus::Optimal) {
        fill_solution(lp, W, sol);
        warm.valid = true;
        warm.basic.assign(W.basic.begin(), W.basic.end());
        warm.at_upper.assign(W.at_up.begin(), W.at_up.begin() + W.n_aug);
        // a basis containing artificial columns cannot seed later solves
        for (int v : warm.basic)
            if (v >= W.n_aug) warm.valid = false;
    } else {
        sol.iterations = W.iterations;
    }
    return sol;
}

std::vector<ParametricSegment> parametric_sweep(const LinearProgram& lp,
                                                const Eigen::VectorXd& f_eq,
                                                const Eigen::VectorXd& f_in,
                                                double theta_min, double theta_max) {
    lp.validate();
    if (f_eq.size() != lp.b_eq.size() || f_in.size() != lp.b_in.size())
        throw ValidationError("parametric_sweep: f length mismatch");
    if (!(theta_min < theta_max)) throw ValidationError("parametric_sweep: empty range");

    LinearProgram at_min = lp;
    at_min.b_eq = lp.b_eq + f_eq * theta_min;
    at_min.b_in = lp.b_in + f_in * theta_min;
    SimplexWork W;
    W.build(at_min);
    SimplexOptions opts;
    SolveStatus st = run_two_phases(at_min, W, opts);
    if (st != SolveStatus::Optimal)
        throw SolverError("parametric_sweep: LP " + to_string(st) + " at theta=" +
                          std::to_string(theta_min));

    Eigen::VectorXd f_aug = Eigen::VectorXd::Zero(W.m);
    if (W.m_eq > 0) f_aug.head(W.m_eq) = f_eq;
    if (W.m_in > 0) f_aug.tail(W.m_in) = f_in;
    Eigen::VectorXd b0_aug = Eigen::VectorXd::Zero(W.m);
    if (W.m_eq > 0) b0_aug.head(W.m_eq) = lp.b_eq;
    if (W.m_in > 0) b0_aug.tail(W.m_in) = lp.b_in;

    constexpr double kStep = 1e-9;
    std::vector<ParametricSegment> segments;
    double cursor = theta_min;
    const int n = lp.n();

    for (int guard = 0; guard < 10000; ++guard) {
        // affine map of the current basis: x_B = B^-1 (b0 + f*theta - N x_N)
        Eigen::VectorXd rhs0 = b0_aug;
        for (int j = 0; j < W.n_tot; ++j) {
            if (W.pos[j] >= 0) continue;
            double v = W.nb_value(j);
            if (j >= W.n_aug) v = 0.0;  // artificials pinned
            if (v != 0.0) rhs0 -= W.A.col(j) * v;
        }
        Eigen::VectorXd off_b, slope_b;
        if (W.m > 0) {
            off_b = W.lu.solve(rhs0);
            slope_b = W.lu.solve(f_aug);
        }
        ParametricSegment seg;
        seg.x_slope = Eigen::VectorXd::Zero(n);
        seg.x_offset = Eigen::VectorXd::Zero(n);
        for (int j = 0; j < n; ++j)
            if (W.pos[j] < 0) seg.x_offset[j] = W.nb_value(j);
        double hi = theta_max;
        int block_row = -1;
        bool block_below = false;
        for (int i = 0; i < W.m; ++i) {
            int k = W.basic[i];
            if (k < n) {
                seg.x_offset[k] = off_b[i];
                seg.x_slope[k] = slope_b[i];
            }
            double s = slope_b[i];
            if (std::abs(s) <= kPivotTol) continue;
            double cap = kInf;
            bool below = false;
            if (s > 0 && std::isfinite(W.u[k])) cap = (W.u[k] - off_b[i]) / s;
            else if (s < 0 && std::isfinite(W.l[k])) {
                cap = (W.l[k] - off_b[i]) / s;
                below = true;
            }
            if (cap < hi) {
                hi = cap;
                block_row = i;
                block_below = below;
            }
        }
        seg.lo = cursor;
        seg.hi = std::min(hi, theta_max);
        seg.value_slope = 0.0;
        seg.value_offset = 0.0;
        for (int j = 0; j < n; ++j) {
            seg.value_slope += lp.c[j] * seg.x_slope[j];
            seg.value_offset += lp.c[j] * seg.x_offset[j];
        }
        {
            std::ostringstream id;
            for (int i = 0; i < W.m; ++i) id << W.basic[i] << ',';
            id << '|';
            for (int j = 0; j < W.n_aug; ++j)
                if (W.pos[j] < 0 && W.at_up[j]) id << j << ',';
            seg.active_set_id = id.str();
        }
        if (seg.hi > seg.lo + 1e-12) {
            segments.push_back(seg);
            cursor = seg.hi;
        }
        if (cursor >= theta_max - 1e-12) break;

        // move just past the boundary and restore feasibility by dual pivots
        double theta_next = cursor + kStep;
        W.b = b0_aug + f_aug * theta_next;
        W.recompute_x();
        bool restored = false;
        for (int pivots = 0; pivots <= 4 * W.m + 16; ++pivots) {
            int row = -1;
            bool below = false;
            double worst = 1e-12;
            for (int i = 0; i < W.m; ++i) {
                int k = W.basic[i];
                if (std::isfinite(W.l[k]) && W.l[k] - W.x[k] > worst) {
                    worst = W.l[k] - W.x[k];
                    row = i;
                    below = true;
                }
                if (std::isfinite(W.u[k]) && W.x[k] - W.u[k] > worst) {
                    worst = W.x[k] - W.u[k];
                    row = i;
                    below = false;
                }
            }
            if (row < 0 && pivots == 0 && block_row >= 0) {
                // degenerate boundary: force the pivot on the blocking row
                row = block_row;
                below = block_below;
            }
            if (row < 0) { restored = true; break; }
            if (!W.dual_pivot(row, below)) {
                throw SolverError("parametric_sweep: infeasible beyond theta=" +
                                  std::to_string(cursor));
            }
        }
        if (!restored) {
            // defensive cold restart at theta_next
            LinearProgram shifted = lp;
            shifted.b_eq = lp.b_eq + f_eq * theta_next;
            shifted.b_in = lp.b_in + f_in * theta_next;
            W.build(shifted);
            st = run_two_phases(shifted, W, opts);
            if (st != SolveStatus::Optimal)
                throw SolverError("parametric_sweep: LP " + to_string(st) + " at theta=" +
                                  std::to_string(theta_next));
        } else {
            // dual pivots preserve dual feasibility; tidy any residual
            // reduced-cost noise with primal iterations
            st = W.optimize(opts.max_iterations);
            if (st != SolveStatus::Optimal)
                throw SolverError("parametric_sweep: reoptimize failed (" + to_string(st) + ")");
        }
    }
    if (segments.empty() || segments.back().hi < theta_max - 1e-9)
        throw SolverError("parametric_sweep: sweep did not reach the upper bound");
    segments.back().hi = theta_max;
    return segments;
}

}  // namespace eva::opt
