#pragma once

#include <vector>

#include "eva/fleet.hpp"

namespace eva {

// Affine willingness map: offered flexibility = k * price + xi.
struct SupplyCurve {
    double k = 0.0;   // kWh per ($/kWh), >= 0
    double xi = 0.0;  // kWh offered for free
};

struct FlexRecord {
    double discharge_kw = 0.0;
    double delta_up_kw = 0.0;
    double delta_dn_kw = 0.0;
    double flex_kwh = 0.0;
    double price = 0.0;  // $/kWh
};

// (p_d / eta_d + dup + ddn) * dt. Discharge throughput counts at battery-side
// effort, regulation ranges at committed width.
double flexibility_contribution(double p_d_kw, double dup_kw, double ddn_kw,
                                double eta_d, double dt);

// (-p_min/eta_d + p_max - p_min) * dt: the contribution of an EV holding its
// baseline at p_min while committing the full power band.
double max_flexibility(const EvProfile& ev, double dt);

SupplyCurve build_supply_curve(const EvProfile& ev, double c_fee, double dt);

double flex_at_price(const SupplyCurve& curve, double lambda);

// Checks the committed reserve ranges (dup, ddn around baseline p0) against
// the power band hour by hour and propagates the two boundary deployment
// trajectories (sustained full-up, sustained full-dn) through the battery,
// requiring both to stay inside the energy envelope.
bool reserve_range_feasible(const EvProfile& ev, const Envelope& env,
                            const std::vector<double>& p0,
                            const std::vector<double>& dup,
                            const std::vector<double>& ddn,
                            double dt = 1.0, double tol = 1e-9);

}  // namespace eva
