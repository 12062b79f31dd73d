#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "eva/bidding.hpp"

namespace eva {

// CSV: hour,c_e,c_cap,c_per,c_fee,c_dp with hours 0..23 in order.
MarketPrices load_prices(const std::string& path);
MarketPrices read_prices_csv(std::istream& in);
void write_prices_csv(std::ostream& out, const MarketPrices& prices);

// Synthetic stand-in price series shaped like an evening-peaking market.
MarketPrices demo_prices();

// Pay-for-performance regulation credit: (c_cap + c_per * m) * R.
double regulation_credit(double R_kw, double c_cap, double c_per, double m);

struct CashFlowRow {
    int hour = 0;
    double energy_cost = 0.0;        // c_e * P_e * dt
    double regulation_credit = 0.0;  // (c_cap + c_per m) R
    double flex_payments = 0.0;      // sum lambda * realized flex
    double charging_income = 0.0;    // sum c_fee * p0 * dt
    double redispatch_cost = 0.0;    // c_dp * sum(ddn - dup) * dt
};

struct CashFlow {
    std::vector<CashFlowRow> rows;
    CashFlowRow totals() const;
};

// Hour-averaged realized deployments per EV (same order as the commitment's
// dispatch problem).
struct HourDispatchStats {
    double realized_mileage = 0.0;
    Eigen::VectorXd avg_pd, avg_dup, avg_ddn;  // kW
};

CashFlowRow settle_hour(const MpcCommitment& commitment, const HourDispatchStats& stats,
                        const MarketPrices& prices, double dt = 1.0);

// CSV: hour rows plus a trailing "total" row.
void write_settlement_csv(std::ostream& out, const CashFlow& flow);

}  // namespace eva
