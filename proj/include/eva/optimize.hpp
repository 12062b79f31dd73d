#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <string>
#include <vector>

#include "eva/common.hpp"

namespace eva::opt {

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterationLimit, NodeLimit };

std::string to_string(SolveStatus s);

// min c'x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  lower <= x <= upper.
// Dense storage; intended for desk-scale dispatch problems and tests.
struct LinearProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd A_eq;
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd A_in;
    Eigen::VectorXd b_in;
    Eigen::VectorXd lower, upper;

    int n() const { return static_cast<int>(c.size()); }
    void validate() const;
};

// min 0.5 x'Q x + c'x with the same constraint blocks, sparse storage.
struct QuadraticProgram {
    Eigen::SparseMatrix<double> Q;  // symmetric PSD
    Eigen::VectorXd c;
    Eigen::SparseMatrix<double> A_eq;
    Eigen::VectorXd b_eq;
    Eigen::SparseMatrix<double> A_in;
    Eigen::VectorXd b_in;
    Eigen::VectorXd lower, upper;

    int n() const { return static_cast<int>(c.size()); }
    void validate() const;  // includes the PSD check (eigen floor >= -1e-10)
};

// Per-entry activity classification (threshold 1e-7 on slack).
enum Activity : std::int8_t {
    kInactive = 0,
    kActiveRow = 1,      // inequality row tight
    kAtLower = 2,
    kAtUpper = 3,
};

struct Solution {
    SolveStatus status = SolveStatus::Infeasible;
    Eigen::VectorXd x;
    double objective = std::numeric_limits<double>::quiet_NaN();

    // Multiplier conventions for min problems:
    //   c (+ Qx) + A_eq' dual_eq + A_in' dual_in - z_lower + z_upper = 0,
    // dual_in >= 0, z_lower >= 0 (at lower bounds), z_upper >= 0 (at upper).
    Eigen::VectorXd dual_eq;
    Eigen::VectorXd dual_in;
    Eigen::VectorXd z_lower, z_upper;

    std::vector<std::int8_t> row_active;  // per inequality row
    std::vector<std::int8_t> var_active;  // per variable (Activity)
    std::string active_set_id;

    double dual_objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;

    // branch-and-bound bookkeeping
    long nodes = 0;
    double best_bound = std::numeric_limits<double>::quiet_NaN();
    double mip_gap = 0.0;
    std::vector<double> incumbent_history;
};

// --- LP: bounded-variable primal simplex with Bland's rule ------------------

// Warm-start basis over the augmented variable space (structural variables
// followed by one slack per inequality row).
struct SimplexBasis {
    bool valid = false;
    std::vector<int> basic;            // size m_eq + m_in
    std::vector<std::int8_t> at_upper; // per augmented variable
};

struct SimplexOptions {
    double feas_tol = 1e-9;
    int max_iterations = 50000;
};

Solution solve_lp(const LinearProgram& lp, const SimplexOptions& opts = {});
Solution solve_lp(const LinearProgram& lp, SimplexBasis& warm, const SimplexOptions& opts = {});

// One maximal interval of the RHS parameter over which the optimal basis --
// hence the affine optimizer map -- is unchanged. Maps are derived from the
// basis equations (the KKT system of the active constraints).
struct ParametricSegment {
    double lo = 0.0, hi = 0.0;
    Eigen::VectorXd x_slope, x_offset;  // x*(theta) = slope * theta + offset
    double value_slope = 0.0, value_offset = 0.0;
    std::string active_set_id;
};

// Sweeps theta upward over [theta_min, theta_max] for rhs(theta) =
// (b_eq + f_eq theta, b_in + f_in theta), advancing across basis changes with
// dual simplex pivots. Throws SolverError if the LP is infeasible or
// unbounded anywhere in the range.
std::vector<ParametricSegment> parametric_sweep(const LinearProgram& lp,
                                                const Eigen::VectorXd& f_eq,
                                                const Eigen::VectorXd& f_in,
                                                double theta_min, double theta_max);

// --- QP: primal-dual interior point (Mehrotra predictor-corrector) ----------

struct IpmOptions {
    double tol_feas = 1e-10;
    double tol_gap = 1e-10;
    int max_iterations = 200;
};

Solution solve_qp(const QuadraticProgram& qp, const IpmOptions& opts = {});

// --- MIQP: branch and bound --------------------------------------------------

// Standard complementarity structure attached to an indicator binary:
// binary = 0 forces x[zero_when_0] = 0, binary = 1 forces x[zero_when_1] = 0.
// Used to complete relaxation solutions whose binaries are free because both
// sides already vanish; the binary must not appear in the objective.
struct ComplementarityPair {
    int binary = -1;
    int zero_when_0 = -1;
    int zero_when_1 = -1;
};

struct MiqpOptions {
    double abs_gap = 1e-6;
    double integrality_tol = 1e-9;
    long max_nodes = 200000;
    std::vector<ComplementarityPair> pairs;
    IpmOptions ipm;
};

Solution solve_miqp(const QuadraticProgram& qp, const std::vector<int>& binary_indices,
                    const MiqpOptions& opts = {});

// Residual report used by tests and internal certification.
struct KktResiduals {
    double primal = 0.0;         // max constraint/bound violation
    double stationarity = 0.0;   // inf-norm of the dual residual
    double complementarity = 0.0;
};
KktResiduals kkt_residuals(const QuadraticProgram& qp, const Solution& sol);

QuadraticProgram lp_as_qp(const LinearProgram& lp);

}  // namespace eva::opt
