#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "eva/dispatch.hpp"
#include "eva/scenarios.hpp"

namespace eva {

// (sum x)^2 / (N sum x^2) for a nonnegative, not-all-zero vector.
double jain_index(const std::vector<double>& x);
double jain_index(const Eigen::VectorXd& x);

struct MethodOutcome {
    std::string method;
    double eva_cost = 0.0;  // accumulated dispatch objective, $
    double jain = 0.0;      // fairness of the per-EV compensation vector
    Eigen::VectorXd ev_costs;
};

struct ComparisonReport {
    std::vector<MethodOutcome> methods;  // proposed, proportional, round_robin, max_fairness
    const MethodOutcome& by_name(const std::string& name) const;
};

// Replays the trace under the four allocation protocols, accumulating the
// per-EV flexibility compensation used as the fairness vector.
ComparisonReport compare_dispatch_methods(const DispatchProblem& prob, const SignalTrace& trace);

// CSV: method,eva_cost,jain_index
void write_comparison_csv(std::ostream& out, const ComparisonReport& report);

}  // namespace eva
