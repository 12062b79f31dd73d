#include <doctest.h>

#include <sstream>

#include "eva/market_io.hpp"

using namespace eva;

namespace {

MpcCommitment tiny_commitment() {
    MpcCommitment c;
    c.hour = 3;
    c.P_e = 10.0;
    c.R = 4.0;
    DispatchProblem::Ev ev;
    ev.id = 0;
    ev.p0 = 10.0;
    ev.p_lo = -12.0;
    ev.p_hi = 12.0;
    ev.dup_cap = 4.0;
    ev.ddn_cap = 2.0;
    ev.lambda = 0.05;
    ev.eta_d = 0.93;
    ev.c_dp = 0.05;
    c.dispatch.P_hat = 10.0;
    c.dispatch.R_hat = 4.0;
    c.dispatch.evs.push_back(ev);
    c.active_fleet_indices = {0};
    c.plan.flex = Eigen::MatrixXd::Constant(1, 1, 100.0);  // loose commitment
    return c;
}

}  // namespace

TEST_CASE("market_io: price csv round trip and validation") {
    MarketPrices demo = demo_prices();
    std::stringstream ss;
    write_prices_csv(ss, demo);
    MarketPrices back = read_prices_csv(ss);
    for (int h = 0; h < kHoursPerDay; ++h) {
        CHECK(back.c_e[h] == demo.c_e[h]);
        CHECK(back.c_dp[h] == demo.c_dp[h]);
    }

    // 23 rows
    std::stringstream short_file;
    write_prices_csv(short_file, demo);
    std::string text = short_file.str();
    text.erase(text.rfind("23,"));
    std::stringstream sf(text);
    CHECK_THROWS_WITH_AS(read_prices_csv(sf), doctest::Contains("expected 24"), ValidationError);

    // negative price
    std::string neg = "hour,c_e,c_cap,c_per,c_fee,c_dp\n";
    for (int h = 0; h < 24; ++h)
        neg += std::to_string(h) + ",0.1," + (h == 5 ? std::string("-1") : std::string("0.05")) +
               ",0.001,0.12,0.05\n";
    std::stringstream nf(neg);
    CHECK_THROWS_AS(read_prices_csv(nf), ValidationError);

    // missing column
    std::stringstream mf("hour,c_e,c_cap\n0,0.1,0.05\n");
    CHECK_THROWS_AS(read_prices_csv(mf), ValidationError);
}

TEST_CASE("market_io: regulation credit") {
    CHECK(regulation_credit(0.0, 5.0, 0.5, 10.0) == 0.0);
    CHECK(regulation_credit(2.0, 5.0, 0.5, 10.0) == doctest::Approx(20.0));
    CHECK(regulation_credit(2.0, 5.0, 0.5, 0.0) == doctest::Approx(10.0));
    CHECK_THROWS_AS(regulation_credit(-1.0, 5.0, 0.5, 1.0), ValidationError);
}

TEST_CASE("market_io: settlement of a quiet hour") {
    MpcCommitment c = tiny_commitment();
    c.R = 0.0;
    MarketPrices p = demo_prices();
    HourDispatchStats stats;
    stats.realized_mileage = 0.0;
    stats.avg_pd = Eigen::VectorXd::Zero(1);
    stats.avg_dup = Eigen::VectorXd::Zero(1);
    stats.avg_ddn = Eigen::VectorXd::Zero(1);
    CashFlowRow row = settle_hour(c, stats, p);
    CHECK(row.energy_cost == doctest::Approx(p.c_e[3] * 10.0));
    CHECK(row.charging_income == doctest::Approx(p.c_fee[3] * 10.0));
    CHECK(row.regulation_credit == 0.0);
    CHECK(row.flex_payments == 0.0);
    CHECK(row.redispatch_cost == 0.0);
}

TEST_CASE("market_io: hand-settled hour") {
    MpcCommitment c = tiny_commitment();
    MarketPrices p = demo_prices();
    HourDispatchStats stats;
    stats.realized_mileage = 100.0;
    stats.avg_pd = Eigen::VectorXd::Constant(1, 0.93);
    stats.avg_dup = Eigen::VectorXd::Constant(1, 1.5);
    stats.avg_ddn = Eigen::VectorXd::Constant(1, 0.5);
    CashFlowRow row = settle_hour(c, stats, p);
    CHECK(row.energy_cost == doctest::Approx(p.c_e[3] * 10.0));
    CHECK(row.regulation_credit == doctest::Approx((p.c_cap[3] + p.c_per[3] * 100.0) * 4.0));
    // flex = 0.93/0.93 + 1.5 + 0.5 = 3, payment = 0.05 * 3
    CHECK(row.flex_payments == doctest::Approx(0.15));
    CHECK(row.redispatch_cost == doctest::Approx(0.05 * (0.5 - 1.5)));

    // doubling the fee doubles charging income and nothing else
    MarketPrices p2 = p;
    for (int h = 0; h < 24; ++h) p2.c_fee[h] *= 2.0;
    CashFlowRow row2 = settle_hour(c, stats, p2);
    CHECK(row2.charging_income == doctest::Approx(2.0 * row.charging_income));
    CHECK(row2.energy_cost == doctest::Approx(row.energy_cost));
    CHECK(row2.flex_payments == doctest::Approx(row.flex_payments));
}

TEST_CASE("market_io: payments never exceed the supply-curve commitment") {
    MpcCommitment c = tiny_commitment();
    c.plan.flex = Eigen::MatrixXd::Constant(1, 1, 2.0);  // committed 2 kWh only
    MarketPrices p = demo_prices();
    HourDispatchStats stats;
    stats.realized_mileage = 50.0;
    stats.avg_pd = Eigen::VectorXd::Constant(1, 4.0);  // sustained discharge
    stats.avg_dup = Eigen::VectorXd::Constant(1, 4.0);
    stats.avg_ddn = Eigen::VectorXd::Zero(1);
    CashFlowRow row = settle_hour(c, stats, p);
    CHECK(row.flex_payments <= 0.05 * 2.0 + 1e-9);
}

TEST_CASE("market_io: settlement linearity in each price coefficient") {
    MpcCommitment c = tiny_commitment();
    HourDispatchStats stats;
    stats.realized_mileage = 30.0;
    stats.avg_pd = Eigen::VectorXd::Constant(1, 1.0);
    stats.avg_dup = Eigen::VectorXd::Constant(1, 2.0);
    stats.avg_ddn = Eigen::VectorXd::Constant(1, 1.0);
    MarketPrices p = demo_prices();
    CashFlowRow base = settle_hour(c, stats, p);
    MarketPrices p3 = p;
    for (int h = 0; h < 24; ++h) p3.c_e[h] *= 3.0;
    CHECK(settle_hour(c, stats, p3).energy_cost == doctest::Approx(3.0 * base.energy_cost));
    MarketPrices p4 = p;
    for (int h = 0; h < 24; ++h) p4.c_cap[h] *= 5.0;
    CashFlowRow r4 = settle_hour(c, stats, p4);
    CHECK(r4.regulation_credit - p.c_per[3] * 30.0 * c.R ==
          doctest::Approx(5.0 * (base.regulation_credit - p.c_per[3] * 30.0 * c.R)));
}

TEST_CASE("market_io: cash flow totals equal the sum of rows") {
    CashFlow flow;
    for (int h = 0; h < 24; ++h) {
        CashFlowRow r;
        r.hour = h;
        r.energy_cost = 0.1 * h;
        r.regulation_credit = 0.01 * h * h;
        r.flex_payments = 0.002 * h;
        r.charging_income = 1.0;
        r.redispatch_cost = -0.03 + 0.001 * h;
        flow.rows.push_back(r);
    }
    CashFlowRow t = flow.totals();
    double ec = 0;
    for (const auto& r : flow.rows) ec += r.energy_cost;
    CHECK(t.energy_cost == doctest::Approx(ec).epsilon(1e-12));
    std::stringstream ss;
    write_settlement_csv(ss, flow);
    std::string out = ss.str();
    CHECK(out.find("total,") != std::string::npos);
    CHECK(std::count(out.begin(), out.end(), '\n') == 26);  // header + 24 + total
}
