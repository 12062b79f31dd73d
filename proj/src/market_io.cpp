#include "eva/market_io.hpp"

#include <cmath>

#include "eva/csv.hpp"

namespace eva {

MarketPrices read_prices_csv(std::istream& in) {
    auto rows = csv::read_rows(in);
    if (rows.empty()) throw ValidationError("price CSV: empty file");
    if (rows[0] != csv::split("hour,c_e,c_cap,c_per,c_fee,c_dp"))
        throw ValidationError("price CSV: unexpected header");
    if (rows.size() - 1 != kHoursPerDay)
        throw ValidationError("price CSV: expected " + std::to_string(kHoursPerDay) +
                              " rows, found " + std::to_string(rows.size() - 1));
    MarketPrices p;
    for (size_t r = 1; r < rows.size(); ++r) {
        std::string ctx = "price CSV row " + std::to_string(r);
        const auto& f = rows[r];
        if (f.size() != 6) throw ValidationError(ctx + ": wrong column count");
        long hour = csv::to_long(f[0], ctx);
        if (hour != static_cast<long>(r) - 1)
            throw ValidationError(ctx + ": hours must run 0..23 in order");
        double ce = csv::to_double(f[1], ctx + " (c_e)");
        double ccap = csv::to_double(f[2], ctx + " (c_cap)");
        double cper = csv::to_double(f[3], ctx + " (c_per)");
        double cfee = csv::to_double(f[4], ctx + " (c_fee)");
        double cdp = csv::to_double(f[5], ctx + " (c_dp)");
        if (ce < 0 || ccap < 0 || cper < 0 || cfee < 0 || cdp < 0)
            throw ValidationError(ctx + ": negative price");
        p.c_e[hour] = ce;
        p.c_cap[hour] = ccap;
        p.c_per[hour] = cper;
        p.c_fee[hour] = cfee;
        p.c_dp[hour] = cdp;
    }
    p.validate();
    return p;
}

MarketPrices load_prices(const std::string& path) {
    auto f = csv::open_input(path);
    return read_prices_csv(f);
}

void write_prices_csv(std::ostream& out, const MarketPrices& p) {
    out << "hour,c_e,c_cap,c_per,c_fee,c_dp\n";
    for (int h = 0; h < kHoursPerDay; ++h)
        out << h << ',' << csv::fmt(p.c_e[h]) << ',' << csv::fmt(p.c_cap[h]) << ','
            << csv::fmt(p.c_per[h]) << ',' << csv::fmt(p.c_fee[h]) << ','
            << csv::fmt(p.c_dp[h]) << '\n';
}

MarketPrices demo_prices() {
    // grid hour 0 = noon; wall-clock evening peak lands at indices 5..9
    MarketPrices p;
    const double base[kHoursPerDay] = {
        0.065, 0.070, 0.075, 0.085, 0.100, 0.120, 0.150, 0.160,  // 12:00-19:00
        0.150, 0.120, 0.095, 0.080, 0.060, 0.050, 0.045, 0.040,  // 20:00-03:00
        0.038, 0.036, 0.038, 0.042, 0.048, 0.055, 0.060, 0.062}; // 04:00-11:00
    for (int h = 0; h < kHoursPerDay; ++h) {
        p.c_e[h] = base[h];
        p.c_cap[h] = 0.045 + 0.015 * (base[h] > 0.1 ? 1.0 : 0.0);
        p.c_per[h] = 2.0e-5;
        p.c_fee[h] = 0.125;
        p.c_dp[h] = 0.05;
    }
    return p;
}

double regulation_credit(double R_kw, double c_cap, double c_per, double m) {
    if (R_kw < 0 || m < 0) throw ValidationError("regulation_credit: negative input");
    return (c_cap + c_per * m) * R_kw;
}

CashFlowRow CashFlow::totals() const {
    CashFlowRow t;
    t.hour = -1;
    for (const auto& r : rows) {
        t.energy_cost += r.energy_cost;
        t.regulation_credit += r.regulation_credit;
        t.flex_payments += r.flex_payments;
        t.charging_income += r.charging_income;
        t.redispatch_cost += r.redispatch_cost;
    }
    return t;
}

CashFlowRow settle_hour(const MpcCommitment& commitment, const HourDispatchStats& stats,
                        const MarketPrices& prices, double dt) {
    const int h = commitment.hour;
    const int N = commitment.dispatch.n_ev();
    if (stats.avg_pd.size() != N || stats.avg_dup.size() != N || stats.avg_ddn.size() != N)
        throw ValidationError("settle_hour: stats size mismatch");
    CashFlowRow row;
    row.hour = h;
    row.energy_cost = prices.c_e[h] * commitment.P_e * dt;
    row.regulation_credit =
        regulation_credit(commitment.R, prices.c_cap[h], prices.c_per[h], stats.realized_mileage);
    for (int i = 0; i < N; ++i) {
        const auto& ev = commitment.dispatch.evs[i];
        double flex = (stats.avg_pd[i] / ev.eta_d + stats.avg_dup[i] + stats.avg_ddn[i]) * dt;
        // a sustained one-sided deployment can push the realized discharge
        // past its typical-scenario expectation; compensation is still capped
        // at the supply-curve commitment
        if (!commitment.active_fleet_indices.empty()) {
            double committed = commitment.plan.flex(commitment.active_fleet_indices[i], 0);
            flex = std::min(flex, committed);
        }
        row.flex_payments += ev.lambda * flex;
        row.charging_income += prices.c_fee[h] * ev.p0 * dt;
        row.redispatch_cost += ev.c_dp * (stats.avg_ddn[i] - stats.avg_dup[i]) * dt;
    }
    return row;
}

void write_settlement_csv(std::ostream& out, const CashFlow& flow) {
    out << "hour,energy_cost,regulation_credit,flex_payments,charging_income,redispatch_cost\n";
    auto line = [&](const std::string& label, const CashFlowRow& r) {
        out << label << ',' << csv::fmt(r.energy_cost) << ',' << csv::fmt(r.regulation_credit)
            << ',' << csv::fmt(r.flex_payments) << ',' << csv::fmt(r.charging_income) << ','
            << csv::fmt(r.redispatch_cost) << '\n';
    };
    for (const auto& r : flow.rows) line(std::to_string(r.hour), r);
    line("total", flow.totals());
}

}  // namespace eva
