#include <doctest.h>

#include <random>

#include "eva/flexibility.hpp"
#include "eva/optimize.hpp"

using namespace eva;

namespace {

EvProfile v2g_ev() {
    EvProfile ev;
    ev.id = 1;
    ev.t_arrive = 0;
    ev.t_depart = 3;
    ev.soc_arrive = 0.4;
    ev.soc_required = 0.7;
    ev.soc_min = 0.2;
    ev.soc_max = 0.9;
    ev.battery_kwh = 50.0;
    ev.p_max_kw = 10.0;
    ev.p_min_kw = -10.0;
    ev.eta_c = 0.9;
    ev.eta_d = 0.93;
    ev.alpha = 1.0;
    return ev;
}

// Independent feasibility route for the committed reserve ranges: the paired
// under/over energy proxies as one LP feasibility problem.
bool reserve_lp_feasible(const EvProfile& ev, const Envelope& env,
                         const std::vector<double>& p0, const std::vector<double>& dup,
                         const std::vector<double>& ddn) {
    const int T = env.horizon();
    for (int t = 0; t < T; ++t) {
        if (dup[t] < -1e-9 || dup[t] > p0[t] - env.p_lo[t] + 1e-9) return false;
        if (ddn[t] < -1e-9 || ddn[t] > env.p_hi[t] - p0[t] + 1e-9) return false;
    }
    // vars: [eup_min | eup_max | edn_min | edn_max], T entries each
    const int n = 4 * T;
    opt::LinearProgram lp;
    lp.c = Eigen::VectorXd::Zero(n);
    lp.lower = Eigen::VectorXd::Constant(n, -kInf);
    lp.upper = Eigen::VectorXd::Constant(n, kInf);
    for (int t = 0; t < T; ++t) {
        lp.lower[t] = env.e_lo[t + 1];              // eup_min >= e_lo
        lp.upper[T + t] = env.e_hi[t + 1];          // eup_max <= e_hi
        lp.lower[2 * T + t] = env.e_lo[t + 1];      // edn_min >= e_lo
        lp.upper[3 * T + t] = env.e_hi[t + 1];      // edn_max <= e_hi
    }
    std::vector<Eigen::Triplet<double>> rows;
    std::vector<double> rhs;
    auto add = [&](int var_now, int var_prev, double sgn, double q, double e0) {
        for (double slope : {ev.eta_c, 1.0 / ev.eta_d}) {
            int r = static_cast<int>(rhs.size());
            rows.emplace_back(r, var_now, sgn);
            double b = sgn * slope * q;
            if (var_prev >= 0) rows.emplace_back(r, var_prev, -sgn);
            else b += sgn * e0;
            rhs.push_back(b);
        }
    };
    for (int t = 0; t < T; ++t) {
        double qup = p0[t] - dup[t], qdn = p0[t] + ddn[t];
        double e0 = env.e_lo[0];
        add(t, t > 0 ? t - 1 : -1, 1.0, qup, e0);
        add(T + t, t > 0 ? T + t - 1 : -1, -1.0, qup, e0);
        add(2 * T + t, t > 0 ? 2 * T + t - 1 : -1, 1.0, qdn, e0);
        add(3 * T + t, t > 0 ? 3 * T + t - 1 : -1, -1.0, qdn, e0);
    }
    lp.A_in.setZero(static_cast<int>(rhs.size()), n);
    lp.b_in.resize(static_cast<int>(rhs.size()));
    for (const auto& t : rows) lp.A_in(t.row(), t.col()) = t.value();
    for (size_t i = 0; i < rhs.size(); ++i) lp.b_in[static_cast<int>(i)] = rhs[i];
    lp.A_eq.resize(0, n);
    lp.b_eq.resize(0);
    return opt::solve_lp(lp).status == opt::SolveStatus::Optimal;
}

}  // namespace

TEST_CASE("flexibility: contribution formula") {
    CHECK(flexibility_contribution(0, 0, 0, 0.93, 1.0) == 0.0);
    CHECK(flexibility_contribution(5, 2, 3, 0.93, 1.0) ==
          doctest::Approx(5.0 / 0.93 + 5.0).epsilon(1e-12));
    CHECK(flexibility_contribution(0, 4, 4, 0.93, 0.5) == doctest::Approx(4.0));
    CHECK_THROWS_AS(flexibility_contribution(-1, 0, 0, 0.93, 1.0), ValidationError);
}

TEST_CASE("flexibility: contribution is additive and degree-1 homogeneous") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    for (int k = 0; k < 200; ++k) {
        double pd = u(rng), up = u(rng), dn = u(rng), c = 0.1 + 0.2 * u(rng);
        double whole = flexibility_contribution(pd, up, dn, 0.93, 1.0);
        double parts = flexibility_contribution(pd, 0, 0, 0.93, 1.0) +
                       flexibility_contribution(0, up, 0, 0.93, 1.0) +
                       flexibility_contribution(0, 0, dn, 0.93, 1.0);
        CHECK(whole == doctest::Approx(parts).epsilon(1e-12));
        CHECK(flexibility_contribution(c * pd, c * up, c * dn, 0.93, 1.0) ==
              doctest::Approx(c * whole).epsilon(1e-12));
    }
}

TEST_CASE("flexibility: maximum contribution") {
    EvProfile ev = v2g_ev();
    CHECK(max_flexibility(ev, 1.0) == doctest::Approx(10.0 / 0.93 + 20.0).epsilon(1e-12));
    ev.p_min_kw = 0.0;
    CHECK(max_flexibility(ev, 1.0) == doctest::Approx(10.0));
    CHECK(max_flexibility(ev, 0.0) == 0.0);
}

TEST_CASE("flexibility: supply curve construction") {
    EvProfile ev = v2g_ev();
    SupplyCurve c = build_supply_curve(ev, 0.5, 1.0);
    CHECK(c.k == doctest::Approx((10.0 / 0.93 + 20.0) / 0.5).epsilon(1e-12));
    CHECK(c.k == doctest::Approx(61.5054).epsilon(1e-5));
    CHECK(c.xi == 0.0);

    ev.alpha = 0.0;
    CHECK(build_supply_curve(ev, 0.5, 1.0).k == 0.0);
    CHECK_THROWS_AS(build_supply_curve(ev, 0.0, 1.0), ValidationError);

    // the four preference classes keep their ratios
    double ks[4];
    double alphas[4] = {0.2, 0.6, 1.0, 1.4};
    for (int i = 0; i < 4; ++i) {
        ev.alpha = alphas[i];
        ks[i] = build_supply_curve(ev, 0.5, 1.0).k;
    }
    for (int i = 1; i < 4; ++i)
        CHECK(ks[i] / ks[0] == doctest::Approx(alphas[i] / alphas[0]).epsilon(1e-12));
}

TEST_CASE("flexibility: price-to-quantity map") {
    CHECK(flex_at_price({61.5, 0.0}, 0.0) == 0.0);
    CHECK(flex_at_price({61.5, 0.0}, 0.1) == doctest::Approx(6.15));
    CHECK(flex_at_price({0.0, 2.0}, 3.7) == 2.0);
}

TEST_CASE("flexibility: supply curve monotone in price over 250 random curves") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 250; ++k) {
        SupplyCurve c{100.0 * u(rng), 5.0 * u(rng)};
        double l1 = u(rng), l2 = u(rng);
        if (l1 > l2) std::swap(l1, l2);
        CHECK(flex_at_price(c, l1) <= flex_at_price(c, l2) + 1e-12);
    }
}

TEST_CASE("flexibility: reserve range basics") {
    EvProfile ev = v2g_ev();
    Envelope env = build_envelope(ev, 3);
    std::vector<double> p0 = {6.0, 6.0, 6.0}, z = {0.0, 0.0, 0.0};
    CHECK(reserve_range_feasible(ev, env, p0, z, z, 1.0));
    std::vector<double> dup = {17.0, 0.0, 0.0};  // exceeds p0 - p_lo = 16
    CHECK_FALSE(reserve_range_feasible(ev, env, p0, dup, z, 1.0));
}

TEST_CASE("flexibility: checker agrees with the LP-encoding oracle on a grid") {
    EvProfile ev = v2g_ev();
    // tighten the envelope: little headroom above the required trajectory
    ev.soc_arrive = 0.56;
    ev.soc_required = 0.9;
    ev.soc_max = 0.9;
    REQUIRE(check_feasible(ev));
    Envelope env = build_envelope(ev, 3);
    int agree = 0, total = 0;
    for (double p0v : {-4.0, 0.0, 4.0, 8.0, 10.0})
        for (double dupv : {0.0, 3.1, 6.2, 12.4})
            for (double ddnv : {0.0, 3.1, 6.2}) {
                std::vector<double> p0(3, p0v), dup(3, dupv), ddn(3, ddnv);
                bool a = reserve_range_feasible(ev, env, p0, dup, ddn, 1.0);
                bool b = reserve_lp_feasible(ev, env, p0, dup, ddn);
                CHECK(a == b);
                agree += (a == b);
                ++total;
            }
    CHECK(agree == total);
}
