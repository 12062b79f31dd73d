#include <algorithm>
#include <cmath>
#include <deque>
#include <vector>

#include "eva/optimize.hpp"

namespace eva::opt {

namespace {

struct Node {
    std::vector<std::pair<int, std::int8_t>> fixes;
    double bound = -kInf;  // parent relaxation value
    int depth = 0;
};

bool integral(double v, double tol) { return std::abs(v - std::round(v)) <= tol; }

// Definitive feasibility check via simplex phase 1; dense conversion keeps it
// restricted to small nodes.
bool constraints_feasible(const QuadraticProgram& qp) {
    LinearProgram lp;
    lp.c = Eigen::VectorXd::Zero(qp.n());
    lp.A_eq = Eigen::MatrixXd(qp.A_eq);
    lp.b_eq = qp.b_eq;
    lp.A_in = Eigen::MatrixXd(qp.A_in);
    lp.b_in = qp.b_in;
    lp.lower = qp.lower;
    lp.upper = qp.upper;
    return solve_lp(lp).status == SolveStatus::Optimal;
}

}  // namespace

Solution solve_miqp(const QuadraticProgram& qp, const std::vector<int>& binary_indices,
                    const MiqpOptions& opts) {
    qp.validate();
    const int n = qp.n();
    for (int b : binary_indices) {
        if (b < 0 || b >= n) throw ValidationError("solve_miqp: binary index out of range");
        if (qp.lower[b] < -1e-9 || qp.upper[b] > 1.0 + 1e-9)
            throw ValidationError("solve_miqp: binary variable " + std::to_string(b) +
                                  " must have bounds within [0,1]");
    }
    // Pair completion is only valid when the indicator carries no cost.
    std::vector<ComplementarityPair> pairs;
    for (const auto& p : opts.pairs) {
        if (p.binary < 0 || p.binary >= n || p.zero_when_0 < 0 || p.zero_when_1 < 0) continue;
        bool costed = qp.c[p.binary] != 0.0;
        for (Eigen::SparseMatrix<double>::InnerIterator it(qp.Q, p.binary); it && !costed; ++it)
            if (it.value() != 0.0) costed = true;
        if (!costed) pairs.push_back(p);
    }
    std::vector<int> pair_of(n, -1);
    for (size_t i = 0; i < pairs.size(); ++i) pair_of[pairs[i].binary] = static_cast<int>(i);

    QuadraticProgram work = qp;
    auto solve_node = [&](const Node& node) {
        work.lower = qp.lower;
        work.upper = qp.upper;
        for (auto [j, v] : node.fixes) {
            work.lower[j] = v;
            work.upper[j] = v;
        }
        return solve_qp(work, opts.ipm);
    };

    // Rounds a relaxation solution to a candidate binary assignment: pair
    // indicators snap toward the pair side with the smaller magnitude, plain
    // binaries require near-integral values.
    auto assign_binaries = [&](const Solution& relax, const Node& node,
                               std::vector<std::pair<int, std::int8_t>>& fixes) -> bool {
        fixes = node.fixes;
        for (int b : binary_indices) {
            bool fixed = false;
            for (auto [j, v] : node.fixes)
                if (j == b) { fixed = true; break; }
            if (fixed) continue;
            int pi = pair_of[b];
            if (pi >= 0) {
                double a0 = std::abs(relax.x[pairs[pi].zero_when_0]);
                double a1 = std::abs(relax.x[pairs[pi].zero_when_1]);
                fixes.emplace_back(b, static_cast<std::int8_t>(a0 <= a1 ? 0 : 1));
            } else {
                if (!integral(relax.x[b], 1e-6)) return false;
                fixes.emplace_back(b, static_cast<std::int8_t>(std::lround(relax.x[b])));
            }
        }
        return true;
    };

    Solution best;
    best.status = SolveStatus::Infeasible;
    double incumbent = kInf;
    std::vector<double> history;

    std::deque<Node> open;
    open.push_back(Node{});
    long nodes = 0;
    bool node_limit_hit = false;
    double pruned_min = kInf;  // tightest bound discarded by gap pruning

    while (!open.empty()) {
        if (nodes >= opts.max_nodes) {
            node_limit_hit = true;
            for (const auto& nd : open) pruned_min = std::min(pruned_min, nd.bound);
            break;
        }
        // depth-first; every 64 nodes jump to the globally best-bound node
        size_t pick = open.size() - 1;
        if (nodes > 0 && nodes % 64 == 0) {
            for (size_t i = 0; i < open.size(); ++i)
                if (open[i].bound < open[pick].bound) pick = i;
        }
        Node node = open[pick];
        open.erase(open.begin() + static_cast<std::ptrdiff_t>(pick));
        if (node.bound >= incumbent - opts.abs_gap) {
            pruned_min = std::min(pruned_min, node.bound);
            continue;
        }
        ++nodes;

        Solution relax = solve_node(node);
        if (relax.status == SolveStatus::Infeasible) continue;
        if (relax.status == SolveStatus::IterationLimit && n <= 800 &&
            !constraints_feasible(work))
            continue;
        if (relax.status != SolveStatus::Optimal)
            throw SolverError("solve_miqp: node relaxation " + to_string(relax.status));
        if (relax.objective >= incumbent - opts.abs_gap) {
            pruned_min = std::min(pruned_min, relax.objective);
            continue;
        }

        // integral relaxations are feasible as-is (indicator rows already bind)
        bool all_integral = true;
        for (int b : binary_indices)
            if (!integral(relax.x[b], opts.integrality_tol)) { all_integral = false; break; }
        if (all_integral) {
            if (relax.objective < incumbent - 1e-15) {
                incumbent = relax.objective;
                best = relax;
                for (int b : binary_indices) best.x[b] = std::round(best.x[b]);
                history.push_back(incumbent);
            }
            continue;
        }

        // completion: fix every remaining binary at the relaxation's preferred
        // side and solve that single QP; the presolve pins the forced
        // variables exactly, so the incumbent value is exact
        std::vector<std::pair<int, std::int8_t>> full_fix;
        if (assign_binaries(relax, node, full_fix)) {
            Node fixed_node;
            fixed_node.fixes = full_fix;
            Solution completed = solve_node(fixed_node);
            if (completed.status == SolveStatus::Optimal) {
                if (completed.objective < incumbent - 1e-15) {
                    incumbent = completed.objective;
                    best = completed;
                    history.push_back(incumbent);
                }
                // nothing in this subtree can beat the node bound by more
                // than the gap once the completion already matches it
                if (completed.objective <= relax.objective + opts.abs_gap) {
                    pruned_min = std::min(pruned_min, relax.objective);
                    continue;
                }
            }
        }

        // branching variable: most violated complementarity pair first, then
        // the most fractional unfixed binary
        int branch = -1;
        double score = -1.0;
        for (const auto& p : pairs) {
            bool fixed = false;
            for (auto [j, v] : node.fixes)
                if (j == p.binary) fixed = true;
            if (fixed) continue;
            double viol = std::min(std::abs(relax.x[p.zero_when_0]), std::abs(relax.x[p.zero_when_1]));
            if (viol > 1e-7 && viol > score) {
                score = viol;
                branch = p.binary;
            }
        }
        if (branch < 0) {
            for (int b : binary_indices) {
                bool fixed = false;
                for (auto [j, v] : node.fixes)
                    if (j == b) fixed = true;
                if (fixed) continue;
                double frac = std::abs(relax.x[b] - std::round(relax.x[b]));
                if (frac > opts.integrality_tol && frac > score) {
                    score = frac;
                    branch = b;
                }
            }
        }
        if (branch < 0) {
            // no branchable binary left and the completion already covered
            // this assignment
            pruned_min = std::min(pruned_min, relax.objective);
            continue;
        }

        std::int8_t preferred = 1;
        int pi = pair_of[branch];
        if (pi >= 0) {
            preferred = std::abs(relax.x[pairs[pi].zero_when_1]) >=
                                std::abs(relax.x[pairs[pi].zero_when_0])
                            ? 1
                            : 0;
        } else {
            preferred = relax.x[branch] >= 0.5 ? 1 : 0;
        }
        Node other = node, pref = node;
        other.fixes.emplace_back(branch, static_cast<std::int8_t>(1 - preferred));
        pref.fixes.emplace_back(branch, preferred);
        other.bound = relax.objective;
        pref.bound = relax.objective;
        other.depth = pref.depth = node.depth + 1;
        open.push_back(other);
        open.push_back(pref);  // explored first (LIFO)
    }

    best.nodes = nodes;
    best.incumbent_history = history;
    if (!std::isfinite(incumbent)) {
        best.status = node_limit_hit ? SolveStatus::NodeLimit : SolveStatus::Infeasible;
        best.nodes = nodes;
        return best;
    }
    best.objective = incumbent;
    best.best_bound = std::min(pruned_min, incumbent);
    best.mip_gap = incumbent - best.best_bound;
    best.status = node_limit_hit ? SolveStatus::NodeLimit : SolveStatus::Optimal;
    return best;
}

}  // namespace eva::opt
