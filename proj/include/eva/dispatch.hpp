#pragma once

#include <iosfwd>
#include <optional>
#include <unordered_map>
#include <vector>

#include "eva/optimize.hpp"

namespace eva {

// Single-hour power allocation problem with cleared quantities fixed.
// Only EVs connected during the hour appear.
struct DispatchProblem {
    double P_hat = 0.0;  // cleared energy bid, kW
    double R_hat = 0.0;  // cleared regulation capacity, kW

    struct Ev {
        int id = 0;
        double p0 = 0.0;       // scheduled baseline, kW
        double p_lo = 0.0;     // power band, p_lo <= 0 <= p_hi
        double p_hi = 0.0;
        double dup_cap = 0.0;  // committed reserve ranges, kW
        double ddn_cap = 0.0;
        double lambda = 0.0;   // flexibility price, $/kWh
        double eta_d = 1.0;
        double c_dp = 0.0;     // re-dispatch cost coefficient
    };
    std::vector<Ev> evs;

    int n_ev() const { return static_cast<int>(evs.size()); }
    void validate() const;
};

struct ExactRelaxationReport {
    bool applicable = true;
    std::vector<int> violating_ids;  // EVs with lambda - c_dp > 0
};

// The up/down complementarity can be dropped exactly iff lambda_n - c_dp <= 0
// for every EV; charge/discharge exclusion is always droppable.
ExactRelaxationReport exact_relaxation_applicable(const DispatchProblem& prob);

// Dispatch LP over x = [p_c | p_d | dup | ddn] (N entries per block), with
// the signal theta entering the balance RHS as P_hat - R_hat * theta.
// A vanishing tie-break weight on p_d/dup/ddn makes the complementary vertex
// the unique optimum when lambda = 0.
struct ParametricDispatchLp {
    opt::LinearProgram lp;
    Eigen::VectorXd f_eq;  // rhs(theta) = b_eq + f_eq * theta
    double theta_min = -1.0, theta_max = 1.0;
};
ParametricDispatchLp build_dispatch_lp(const DispatchProblem& prob);

inline constexpr double kDispatchTieBreak = 1e-9;

struct CriticalRegion {
    double lo = 0.0, hi = 0.0;
    Eigen::VectorXd map_slope, map_offset;  // x*(theta) = slope*theta + offset
    double value_slope = 0.0, value_offset = 0.0;
    std::string active_set_id;
};

struct DispatchPolicy {
    int n_ev = 0;
    std::vector<CriticalRegion> regions;  // ordered, non-overlapping, covering [-1,1]

    const CriticalRegion& region_at(double s) const;
    void validate() const;
};

// Sweeps the signal parameter across [-1,1], stitching one region per optimal
// basis. Zero-width regions are merged into their right neighbor.
DispatchPolicy compute_regions(const ParametricDispatchLp& plp);

struct DispatchResult {
    Eigen::VectorXd p_c, p_d, dup, ddn;  // per EV, kW
    double cost = 0.0;                   // LP objective (includes tie-break term)
};

// Affine lookup; s outside [-1,1] is clamped (with a stderr warning).
DispatchResult lookup(const DispatchPolicy& policy, double s);

// Direct solve at a fixed signal: LP when the relaxation applies, otherwise a
// small MIQP with the complementarity pairs as indicator binaries.
DispatchResult dispatch_direct(const DispatchProblem& prob, double s);

enum class AllocationMethod { Proportional, RoundRobin, MaxFairness };

// Stateless single-signal allocation (max-fairness levels costs from zero).
DispatchResult baseline_allocation(const DispatchProblem& prob, double s,
                                   AllocationMethod method);

// Max-fairness needs the running per-EV compensation totals to level them
// across a whole hour; this wrapper carries that state through a replay.
class BaselineAllocator {
public:
    BaselineAllocator(const DispatchProblem& prob, AllocationMethod method);
    DispatchResult allocate(double s, double dt_hours);
    const Eigen::VectorXd& cumulative_cost() const { return cum_cost_; }

private:
    DispatchProblem prob_;
    AllocationMethod method_;
    Eigen::VectorXd cum_cost_;
};

// Flexibility compensation cost rate implied by an allocation, per EV ($/h).
Eigen::VectorXd compensation_rate(const DispatchProblem& prob, const DispatchResult& r);
// True dispatch objective rate (compensation + re-dispatch term), $/h.
double dispatch_cost_rate(const DispatchProblem& prob, const DispatchResult& r);

// Caching direct dispatcher used when the exact relaxation fails: solves the
// MIQP per signal, memoized on the signal quantized at 1e-3.
class DirectDispatcher {
public:
    explicit DirectDispatcher(const DispatchProblem& prob) : prob_(prob) {}
    DispatchResult dispatch(double s);

private:
    DispatchProblem prob_;
    std::unordered_map<long, DispatchResult> cache_;
};

// CSV: header comment records N and variable ordering; doubles round-trip
// exactly through the text form.
void write_policy_csv(std::ostream& out, const DispatchPolicy& policy);
DispatchPolicy read_policy_csv(std::istream& in);

}  // namespace eva
