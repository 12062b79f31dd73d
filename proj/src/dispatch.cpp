#include "eva/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "eva/csv.hpp"

namespace eva {

void DispatchProblem::validate() const {
    if (R_hat < 0.0) throw ValidationError("dispatch: R_hat must be nonnegative");
    for (const auto& ev : evs) {
        auto fail = [&](const std::string& w) {
            throw ValidationError("dispatch EV " + std::to_string(ev.id) + ": " + w);
        };
        if (ev.dup_cap < 0 || ev.ddn_cap < 0) fail("negative reserve cap");
        if (!(ev.p_lo <= 0.0 && 0.0 <= ev.p_hi)) fail("power band must contain 0");
        if (ev.lambda < 0) fail("negative flexibility price");
        if (ev.eta_d <= 0 || ev.eta_d > 1) fail("eta_d outside (0,1]");
    }
}

ExactRelaxationReport exact_relaxation_applicable(const DispatchProblem& prob) {
    ExactRelaxationReport rep;
    for (const auto& ev : prob.evs)
        if (ev.lambda - ev.c_dp > 0.0) rep.violating_ids.push_back(ev.id);
    rep.applicable = rep.violating_ids.empty();
    return rep;
}

ParametricDispatchLp build_dispatch_lp(const DispatchProblem& prob) {
    prob.validate();
    auto rep = exact_relaxation_applicable(prob);
    if (!rep.applicable) {
        std::string ids;
        for (int id : rep.violating_ids) ids += " " + std::to_string(id);
        throw ValidationError(
            "build_dispatch_lp: exact relaxation inapplicable (lambda > c_dp) for EVs" + ids +
            "; use dispatch_direct");
    }
    const int N = prob.n_ev();
    const int n = 4 * N;  // [p_c | p_d | dup | ddn]
    ParametricDispatchLp plp;
    auto& lp = plp.lp;
    lp.c.setZero(n);
    lp.lower.setZero(n);
    lp.upper.setZero(n);
    for (int i = 0; i < N; ++i) {
        const auto& ev = prob.evs[i];
        lp.c[i] = kDispatchTieBreak;                                   // p_c
        lp.c[N + i] = ev.lambda / ev.eta_d + kDispatchTieBreak;        // p_d
        lp.c[2 * N + i] = ev.lambda - ev.c_dp + kDispatchTieBreak;     // dup
        lp.c[3 * N + i] = ev.lambda + ev.c_dp + kDispatchTieBreak;     // ddn
        lp.upper[i] = ev.p_hi;
        lp.upper[N + i] = -ev.p_lo;
        lp.upper[2 * N + i] = ev.dup_cap;
        lp.upper[3 * N + i] = ev.ddn_cap;
    }
    // rows: balance, then one link row per EV
    lp.A_eq.setZero(N + 1, n);
    lp.b_eq.setZero(N + 1);
    for (int i = 0; i < N; ++i) {
        lp.A_eq(0, i) = 1.0;
        lp.A_eq(0, N + i) = -1.0;
    }
    lp.b_eq[0] = prob.P_hat;
    for (int i = 0; i < N; ++i) {
        lp.A_eq(1 + i, i) = 1.0;
        lp.A_eq(1 + i, N + i) = -1.0;
        lp.A_eq(1 + i, 2 * N + i) = 1.0;
        lp.A_eq(1 + i, 3 * N + i) = -1.0;
        lp.b_eq[1 + i] = prob.evs[i].p0;
    }
    lp.A_in.resize(0, n);
    lp.b_in.resize(0);
    plp.f_eq = Eigen::VectorXd::Zero(N + 1);
    plp.f_eq[0] = -prob.R_hat;
    return plp;
}

const CriticalRegion& DispatchPolicy::region_at(double s) const {
    if (regions.empty()) throw SolverError("dispatch policy has no regions");
    int lo = 0, hi = static_cast<int>(regions.size()) - 1;
    while (lo < hi) {
        int mid = (lo + hi + 1) / 2;
        if (regions[mid].lo <= s) lo = mid;
        else hi = mid - 1;
    }
    return regions[lo];
}

void DispatchPolicy::validate() const {
    if (regions.empty()) throw SolverError("dispatch policy has no regions");
    if (std::abs(regions.front().lo + 1.0) > 1e-10 || std::abs(regions.back().hi - 1.0) > 1e-10)
        throw SolverError("dispatch policy must cover [-1,1]");
    for (size_t i = 0; i < regions.size(); ++i) {
        if (!(regions[i].lo < regions[i].hi))
            throw SolverError("dispatch policy region " + std::to_string(i) + " is empty");
        if (i > 0) {
            double gap = std::abs(regions[i].lo - regions[i - 1].hi);
            if (gap > 1e-10)
                throw SolverError("dispatch policy has a gap at region " + std::to_string(i));
            const auto& a = regions[i - 1];
            const auto& b = regions[i];
            double va = a.value_slope * b.lo + a.value_offset;
            double vb = b.value_slope * b.lo + b.value_offset;
            if (std::abs(va - vb) > 1e-7 * (1.0 + std::abs(va)))
                throw SolverError("dispatch policy value function discontinuous at theta=" +
                                  std::to_string(b.lo));
        }
    }
}

DispatchPolicy compute_regions(const ParametricDispatchLp& plp) {
    Eigen::VectorXd f_in(0);
    auto segments = opt::parametric_sweep(plp.lp, plp.f_eq, f_in, plp.theta_min, plp.theta_max);
    DispatchPolicy policy;
    policy.n_ev = plp.lp.n() / 4;
    double cursor = plp.theta_min;
    for (const auto& seg : segments) {
        if (seg.hi <= cursor + 1e-12) continue;  // degenerate, merged rightward
        CriticalRegion r;
        r.lo = cursor;
        r.hi = seg.hi;
        r.map_slope = seg.x_slope;
        r.map_offset = seg.x_offset;
        r.value_slope = seg.value_slope;
        r.value_offset = seg.value_offset;
        r.active_set_id = seg.active_set_id;
        policy.regions.push_back(r);
        cursor = seg.hi;
    }
    if (!policy.regions.empty()) policy.regions.back().hi = plp.theta_max;
    policy.validate();
    // feasibility spot checks at endpoints and midpoint of every region
    for (const auto& r : policy.regions) {
        for (double th : {r.lo, 0.5 * (r.lo + r.hi), r.hi}) {
            Eigen::VectorXd x = r.map_slope * th + r.map_offset;
            Eigen::VectorXd res = plp.lp.A_eq * x - (plp.lp.b_eq + plp.f_eq * th);
            if (res.cwiseAbs().maxCoeff() > 1e-8)
                throw SolverError("critical region violates equalities at theta=" + std::to_string(th));
            for (int j = 0; j < x.size(); ++j)
                if (x[j] < plp.lp.lower[j] - 1e-8 || x[j] > plp.lp.upper[j] + 1e-8)
                    throw SolverError("critical region violates bounds at theta=" + std::to_string(th));
        }
    }
    return policy;
}

namespace {

DispatchResult unpack(const Eigen::VectorXd& x, double cost) {
    DispatchResult r;
    const int N = static_cast<int>(x.size()) / 4;
    r.p_c = x.segment(0, N);
    r.p_d = x.segment(N, N);
    r.dup = x.segment(2 * N, N);
    r.ddn = x.segment(3 * N, N);
    r.cost = cost;
    return r;
}

}  // namespace

DispatchResult lookup(const DispatchPolicy& policy, double s) {
    if (s < -1.0 || s > 1.0) {
        std::cerr << "dispatch: signal " << s << " outside [-1,1], clamped\n";
        s = std::clamp(s, -1.0, 1.0);
    }
    const CriticalRegion& r = policy.region_at(s);
    Eigen::VectorXd x = r.map_slope * s + r.map_offset;
    return unpack(x, r.value_slope * s + r.value_offset);
}

DispatchResult dispatch_direct(const DispatchProblem& prob, double s) {
    if (s < -1.0 || s > 1.0) {
        std::cerr << "dispatch: signal " << s << " outside [-1,1], clamped\n";
        s = std::clamp(s, -1.0, 1.0);
    }
    auto rep = exact_relaxation_applicable(prob);
    const int N = prob.n_ev();
    if (rep.applicable) {
        auto plp = build_dispatch_lp(prob);
        opt::LinearProgram lp = plp.lp;
        lp.b_eq += plp.f_eq * s;
        auto sol = opt::solve_lp(lp);
        if (sol.status != opt::SolveStatus::Optimal)
            throw SolverError("dispatch_direct: LP " + opt::to_string(sol.status) +
                              " at s=" + std::to_string(s));
        return unpack(sol.x, sol.objective);
    }
    // complementarity enforced through indicator binaries
    DispatchProblem relaxed = prob;
    for (auto& ev : relaxed.evs) ev.c_dp = std::max(ev.c_dp, ev.lambda);  // build LP shell only
    auto plp = build_dispatch_lp(relaxed);
    opt::QuadraticProgram qp = opt::lp_as_qp(plp.lp);
    // restore the true costs
    for (int i = 0; i < N; ++i) {
        const auto& ev = prob.evs[i];
        qp.c[i] = kDispatchTieBreak;
        qp.c[N + i] = ev.lambda / ev.eta_d + kDispatchTieBreak;
        qp.c[2 * N + i] = ev.lambda - ev.c_dp + kDispatchTieBreak;
        qp.c[3 * N + i] = ev.lambda + ev.c_dp + kDispatchTieBreak;
    }
    qp.b_eq = plp.lp.b_eq + plp.f_eq * s;
    // binaries: z = 1 allows dup, z = 0 allows ddn; w = 1 allows p_d
    const int n0 = 4 * N;
    std::vector<int> binaries;
    std::vector<opt::ComplementarityPair> pairs;
    int extra = 0;
    for (int i = 0; i < N; ++i)
        if (prob.evs[i].dup_cap > 0 && prob.evs[i].ddn_cap > 0) ++extra;
    const int n = n0 + extra;
    opt::QuadraticProgram full;
    full.Q.resize(n, n);
    full.c = Eigen::VectorXd::Zero(n);
    full.c.head(n0) = qp.c;
    full.lower = Eigen::VectorXd::Zero(n);
    full.upper = Eigen::VectorXd::Ones(n);
    full.lower.head(n0) = qp.lower;
    full.upper.head(n0) = qp.upper;
    full.b_eq = qp.b_eq;
    std::vector<Eigen::Triplet<double>> ta;
    for (int k = 0; k < qp.A_eq.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(qp.A_eq, k); it; ++it)
            ta.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
    full.A_eq.resize(qp.A_eq.rows(), n);
    full.A_eq.setFromTriplets(ta.begin(), ta.end());
    // inequality rows dup <= z*cap, ddn <= (1-z)*cap
    std::vector<Eigen::Triplet<double>> ti;
    std::vector<double> bi;
    int zi = n0;
    for (int i = 0; i < N; ++i) {
        const auto& ev = prob.evs[i];
        if (!(ev.dup_cap > 0 && ev.ddn_cap > 0)) continue;
        int row = static_cast<int>(bi.size());
        ti.emplace_back(row, 2 * N + i, 1.0);
        ti.emplace_back(row, zi, -ev.dup_cap);
        bi.push_back(0.0);
        ++row;
        ti.emplace_back(row, 3 * N + i, 1.0);
        ti.emplace_back(row, zi, ev.ddn_cap);
        bi.push_back(ev.ddn_cap);
        binaries.push_back(zi);
        // z = 0 forces dup = 0, z = 1 forces ddn = 0
        pairs.push_back({zi, 2 * N + i, 3 * N + i});
        ++zi;
    }
    full.A_in.resize(static_cast<int>(bi.size()), n);
    full.A_in.setFromTriplets(ti.begin(), ti.end());
    full.b_in = Eigen::Map<Eigen::VectorXd>(bi.data(), static_cast<long>(bi.size()));
    opt::MiqpOptions mopts;
    mopts.pairs = pairs;
    auto sol = opt::solve_miqp(full, binaries, mopts);
    if (sol.status != opt::SolveStatus::Optimal)
        throw SolverError("dispatch_direct: MIQP " + opt::to_string(sol.status) +
                          " at s=" + std::to_string(s));
    return unpack(sol.x.head(n0), sol.objective);
}

DispatchResult DirectDispatcher::dispatch(double s) {
    long key = std::lround(std::clamp(s, -1.0, 1.0) * 1000.0);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    DispatchResult r = dispatch_direct(prob_, static_cast<double>(key) / 1000.0);
    cache_.emplace(key, r);
    return r;
}

namespace {

// Splits the per-EV net power implied by delta deployments into the
// complementary charge/discharge pair and computes the LP-consistent cost.
DispatchResult result_from_deltas(const DispatchProblem& prob, const Eigen::VectorXd& dup,
                                  const Eigen::VectorXd& ddn) {
    const int N = prob.n_ev();
    DispatchResult r;
    r.p_c.setZero(N);
    r.p_d.setZero(N);
    r.dup = dup;
    r.ddn = ddn;
    double cost = 0.0;
    for (int i = 0; i < N; ++i) {
        const auto& ev = prob.evs[i];
        double net = ev.p0 - dup[i] + ddn[i];
        r.p_c[i] = std::max(net, 0.0);
        r.p_d[i] = std::max(-net, 0.0);
        cost += ev.lambda / ev.eta_d * r.p_d[i] + (ev.lambda - ev.c_dp) * dup[i] +
                (ev.lambda + ev.c_dp) * ddn[i] +
                kDispatchTieBreak * (r.p_c[i] + r.p_d[i] + dup[i] + ddn[i]);
    }
    r.cost = cost;
    return r;
}

// Equal-share projection: raise everyone to a common level, respecting caps.
Eigen::VectorXd water_fill_equal(const Eigen::VectorXd& caps, double total) {
    const int N = static_cast<int>(caps.size());
    Eigen::VectorXd out = Eigen::VectorXd::Zero(N);
    double remaining = total;
    std::vector<int> active;
    for (int i = 0; i < N; ++i) active.push_back(i);
    while (remaining > 1e-12 && !active.empty()) {
        double share = remaining / static_cast<double>(active.size());
        std::vector<int> next;
        double used = 0.0;
        for (int i : active) {
            double take = std::min(share, caps[i] - out[i]);
            out[i] += take;
            used += take;
            if (caps[i] - out[i] > 1e-12) next.push_back(i);
        }
        if (used <= 1e-15) break;
        remaining -= used;
        active = next;
    }
    return out;
}

// Compensation cost of deploying d kW on one EV in the given direction,
// clamped at zero so the map stays monotone through the discharge kink
// (a down-deployment that curtails baseline discharge is treated as free).
double cost_of_deployment(const DispatchProblem::Ev& ev, double d, bool up) {
    double net1 = up ? ev.p0 - d : ev.p0 + d;
    double pd0 = std::max(-ev.p0, 0.0);
    double pd1 = std::max(-net1, 0.0);
    return std::max(0.0, ev.lambda * (d + (pd1 - pd0) / ev.eta_d));
}

// Largest deployment with compensation cost <= budget.
double deployment_for_cost(const DispatchProblem::Ev& ev, double cap, double budget, bool up) {
    if (cap <= 0) return 0.0;
    double b = std::max(budget, 0.0);
    if (cost_of_deployment(ev, cap, up) <= b) return cap;
    double lo = 0, hi = cap;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        if (cost_of_deployment(ev, mid, up) <= b) lo = mid;
        else hi = mid;
    }
    return lo;
}

}  // namespace

Eigen::VectorXd compensation_rate(const DispatchProblem& prob, const DispatchResult& r) {
    const int N = prob.n_ev();
    Eigen::VectorXd c(N);
    for (int i = 0; i < N; ++i) {
        const auto& ev = prob.evs[i];
        c[i] = ev.lambda * (r.p_d[i] / ev.eta_d + r.dup[i] + r.ddn[i]);
    }
    return c;
}

double dispatch_cost_rate(const DispatchProblem& prob, const DispatchResult& r) {
    double cost = 0.0;
    const Eigen::VectorXd comp = compensation_rate(prob, r);
    for (int i = 0; i < prob.n_ev(); ++i)
        cost += comp[i] + prob.evs[i].c_dp * (r.ddn[i] - r.dup[i]);
    return cost;
}

BaselineAllocator::BaselineAllocator(const DispatchProblem& prob, AllocationMethod method)
    : prob_(prob), method_(method), cum_cost_(Eigen::VectorXd::Zero(prob.n_ev())) {}

DispatchResult baseline_allocation(const DispatchProblem& prob, double s,
                                   AllocationMethod method) {
    BaselineAllocator alloc(prob, method);
    return alloc.allocate(s, 0.0);
}

DispatchResult BaselineAllocator::allocate(double s, double dt_hours) {
    s = std::clamp(s, -1.0, 1.0);
    const int N = prob_.n_ev();
    const bool up = s >= 0.0;
    const double g = std::abs(s) * prob_.R_hat;  // power to shed (up) or absorb (dn)
    Eigen::VectorXd caps(N);
    for (int i = 0; i < N; ++i) caps[i] = up ? prob_.evs[i].dup_cap : prob_.evs[i].ddn_cap;
    if (g > caps.sum() + 1e-7)
        throw SolverError("baseline allocation: committed ranges cannot cover the signal");

    Eigen::VectorXd d = Eigen::VectorXd::Zero(N);
    switch (method_) {
        case AllocationMethod::Proportional: {
            double total = caps.sum();
            if (total > 0) d = caps * (g / total);
            break;
        }
        case AllocationMethod::RoundRobin: {
            d = water_fill_equal(caps, g);
            break;
        }
        case AllocationMethod::MaxFairness: {
            // level the cumulative compensation: lowest-cost EVs are filled
            // first, all raised to a common level L
            auto total_at = [&](double L) {
                double t = 0.0;
                for (int i = 0; i < N; ++i)
                    t += deployment_for_cost(prob_.evs[i], caps[i], L - cum_cost_[i], up);
                return t;
            };
            double lo = cum_cost_.size() > 0 ? cum_cost_.minCoeff() : 0.0;
            double hi = lo + 1.0;
            while (total_at(hi) < g && hi - lo < 1e12) hi = lo + (hi - lo) * 2.0;
            if (total_at(hi) < g) {
                // caps bind everywhere; hand out the caps
                d = caps;
            } else {
                for (int it = 0; it < 100; ++it) {
                    double mid = 0.5 * (lo + hi);
                    if (total_at(mid) >= g) hi = mid;
                    else lo = mid;
                }
                for (int i = 0; i < N; ++i)
                    d[i] = deployment_for_cost(prob_.evs[i], caps[i], hi - cum_cost_[i], up);
                // trim overshoot deterministically from the highest index down
                double excess = d.sum() - g;
                for (int i = N - 1; i >= 0 && excess > 1e-15; --i) {
                    double cut = std::min(excess, d[i]);
                    d[i] -= cut;
                    excess -= cut;
                }
            }
            break;
        }
    }
    DispatchResult r = up ? result_from_deltas(prob_, d, Eigen::VectorXd::Zero(N))
                          : result_from_deltas(prob_, Eigen::VectorXd::Zero(N), d);
    cum_cost_ += compensation_rate(prob_, r) * dt_hours;
    return r;
}

void write_policy_csv(std::ostream& out, const DispatchPolicy& policy) {
    out << "# eva-dispatch-policy n_ev=" << policy.n_ev << " order=pc,pd,dup,ddn\n";
    out << "theta_lo,theta_hi";
    const int n = 4 * policy.n_ev;
    for (int j = 0; j < n; ++j) out << ",R" << j;
    for (int j = 0; j < n; ++j) out << ",r" << j;
    out << ",value_slope,value_offset\n";
    for (const auto& reg : policy.regions) {
        out << csv::fmt(reg.lo) << ',' << csv::fmt(reg.hi);
        for (int j = 0; j < n; ++j) out << ',' << csv::fmt(reg.map_slope[j]);
        for (int j = 0; j < n; ++j) out << ',' << csv::fmt(reg.map_offset[j]);
        out << ',' << csv::fmt(reg.value_slope) << ',' << csv::fmt(reg.value_offset) << '\n';
    }
}

DispatchPolicy read_policy_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("policy CSV: empty file");
    DispatchPolicy policy;
    const std::string tag = "# eva-dispatch-policy n_ev=";
    if (line.rfind(tag, 0) != 0) throw ValidationError("policy CSV: missing header comment");
    policy.n_ev = static_cast<int>(csv::to_long(
        csv::split(line.substr(tag.size()), ' ')[0], "policy header"));
    if (!std::getline(in, line)) throw ValidationError("policy CSV: missing column header");
    const int n = 4 * policy.n_ev;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto f = csv::split(line);
        if (static_cast<int>(f.size()) != 2 + 2 * n + 2)
            throw ValidationError("policy CSV: wrong column count");
        CriticalRegion reg;
        reg.lo = csv::to_double(f[0], "policy");
        reg.hi = csv::to_double(f[1], "policy");
        reg.map_slope.resize(n);
        reg.map_offset.resize(n);
        for (int j = 0; j < n; ++j) reg.map_slope[j] = csv::to_double(f[2 + j], "policy");
        for (int j = 0; j < n; ++j) reg.map_offset[j] = csv::to_double(f[2 + n + j], "policy");
        reg.value_slope = csv::to_double(f[2 + 2 * n], "policy");
        reg.value_offset = csv::to_double(f[2 + 2 * n + 1], "policy");
        policy.regions.push_back(std::move(reg));
    }
    policy.validate();
    return policy;
}

}  // namespace eva
