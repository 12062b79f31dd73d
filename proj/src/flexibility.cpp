#include "eva/flexibility.hpp"

#include <cmath>

namespace eva {

double flexibility_contribution(double p_d_kw, double dup_kw, double ddn_kw,
                                double eta_d, double dt) {
    if (p_d_kw < 0.0 || dup_kw < 0.0 || ddn_kw < 0.0)
        throw ValidationError("flexibility_contribution: negative component");
    if (eta_d <= 0.0 || eta_d > 1.0)
        throw ValidationError("flexibility_contribution: eta_d outside (0,1]");
    if (dt < 0.0) throw ValidationError("flexibility_contribution: negative dt");
    return (p_d_kw / eta_d + dup_kw + ddn_kw) * dt;
}

double max_flexibility(const EvProfile& ev, double dt) {
    return (-ev.p_min_kw / ev.eta_d + ev.p_max_kw - ev.p_min_kw) * dt;
}

SupplyCurve build_supply_curve(const EvProfile& ev, double c_fee, double dt) {
    if (c_fee <= 0.0) throw ValidationError("build_supply_curve: c_fee must be positive");
    SupplyCurve curve;
    curve.k = ev.alpha * max_flexibility(ev, dt) / c_fee;
    curve.xi = ev.xi_kwh;
    return curve;
}

double flex_at_price(const SupplyCurve& curve, double lambda) {
    return curve.k * lambda + curve.xi;
}

bool reserve_range_feasible(const EvProfile& ev, const Envelope& env,
                            const std::vector<double>& p0,
                            const std::vector<double>& dup,
                            const std::vector<double>& ddn,
                            double dt, double tol) {
    const int T = env.horizon();
    if (static_cast<int>(p0.size()) != T || static_cast<int>(dup.size()) != T ||
        static_cast<int>(ddn.size()) != T)
        throw ValidationError("reserve_range_feasible: arrays must span the horizon");
    double e_up = env.e_lo[0];  // both envelopes coincide before arrival
    double e_dn = env.e_lo[0];
    for (int t = 0; t < T; ++t) {
        if (dup[t] < -tol || dup[t] > p0[t] - env.p_lo[t] + tol) return false;
        if (ddn[t] < -tol || ddn[t] > env.p_hi[t] - p0[t] + tol) return false;
        e_up += battery_delta_kwh(p0[t] - dup[t], ev.eta_c, ev.eta_d, dt);
        e_dn += battery_delta_kwh(p0[t] + ddn[t], ev.eta_c, ev.eta_d, dt);
        if (e_up < env.e_lo[t + 1] - tol || e_up > env.e_hi[t + 1] + tol) return false;
        if (e_dn < env.e_lo[t + 1] - tol || e_dn > env.e_hi[t + 1] + tol) return false;
    }
    return true;
}

}  // namespace eva
