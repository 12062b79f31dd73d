#include "eva/evaluation.hpp"

#include <cmath>

#include "eva/csv.hpp"

namespace eva {

double jain_index(const std::vector<double>& x) {
    return jain_index(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<long>(x.size())));
}

double jain_index(const Eigen::VectorXd& x) {
    if (x.size() == 0) throw ValidationError("jain_index: empty vector");
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        if (x[i] < 0) throw ValidationError("jain_index: negative entry");
        sum += x[i];
        sumsq += x[i] * x[i];
    }
    if (sumsq == 0.0) throw ValidationError("jain_index: undefined for the all-zero vector");
    return sum * sum / (static_cast<double>(x.size()) * sumsq);
}

const MethodOutcome& ComparisonReport::by_name(const std::string& name) const {
    for (const auto& m : methods)
        if (m.method == name) return m;
    throw ValidationError("comparison report: unknown method " + name);
}

ComparisonReport compare_dispatch_methods(const DispatchProblem& prob,
                                          const SignalTrace& trace) {
    prob.validate();
    trace.validate();
    if (trace.samples.empty()) throw ValidationError("compare_dispatch_methods: empty trace");
    const int N = prob.n_ev();
    const double dt = trace.dt_seconds / 3600.0;

    ComparisonReport report;
    auto add_method = [&](const std::string& name, auto&& dispatch_fn) {
        MethodOutcome out;
        out.method = name;
        out.ev_costs = Eigen::VectorXd::Zero(N);
        for (double s : trace.samples) {
            DispatchResult r = dispatch_fn(s);
            out.ev_costs += compensation_rate(prob, r) * dt;
            out.eva_cost += dispatch_cost_rate(prob, r) * dt;
        }
        out.jain = out.ev_costs.cwiseAbs().sum() > 0 ? jain_index(out.ev_costs)
                                                     : std::numeric_limits<double>::quiet_NaN();
        report.methods.push_back(std::move(out));
    };

    if (exact_relaxation_applicable(prob).applicable) {
        DispatchPolicy policy = compute_regions(build_dispatch_lp(prob));
        add_method("proposed", [&](double s) { return lookup(policy, s); });
    } else {
        DirectDispatcher direct(prob);
        add_method("proposed", [&](double s) { return direct.dispatch(s); });
    }
    {
        BaselineAllocator alloc(prob, AllocationMethod::Proportional);
        add_method("proportional", [&](double s) { return alloc.allocate(s, dt); });
    }
    {
        BaselineAllocator alloc(prob, AllocationMethod::RoundRobin);
        add_method("round_robin", [&](double s) { return alloc.allocate(s, dt); });
    }
    {
        BaselineAllocator alloc(prob, AllocationMethod::MaxFairness);
        add_method("max_fairness", [&](double s) { return alloc.allocate(s, dt); });
    }
    return report;
}

void write_comparison_csv(std::ostream& out, const ComparisonReport& report) {
    out << "method,eva_cost,jain_index\n";
    for (const auto& m : report.methods)
        out << m.method << ',' << csv::fmt(m.eva_cost) << ',' << csv::fmt(m.jain) << '\n';
}

}  // namespace eva
