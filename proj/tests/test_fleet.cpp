#include <doctest.h>

#include <random>
#include <sstream>

#include "eva/fleet.hpp"

using namespace eva;

namespace {

EvProfile basic_ev() {
    EvProfile ev;
    ev.id = 0;
    ev.t_arrive = 6;   // 18:00 wall
    ev.t_depart = 20;  // 08:00 next day
    ev.soc_arrive = 0.3;
    ev.soc_required = 0.8;
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

EvProfile random_ev(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    EvProfile ev = basic_ev();
    ev.t_arrive = 1 + static_cast<int>(u(rng) * 11);
    ev.t_depart = 13 + static_cast<int>(u(rng) * 11);
    ev.soc_arrive = 0.2 + 0.2 * u(rng);
    ev.soc_required = 0.7 + 0.2 * u(rng);
    ev.p_max_kw = 8.0 + 4.0 * u(rng);
    ev.p_min_kw = u(rng) < 0.3 ? 0.0 : -ev.p_max_kw;
    if (!check_feasible(ev)) {
        double reach = ev.soc_arrive + ev.eta_c * ev.p_max_kw * ev.sojourn_hours() / ev.battery_kwh;
        ev.soc_required = std::min(reach, ev.soc_max);
    }
    return ev;
}

}  // namespace

TEST_CASE("fleet: paper-table sampling statistics") {
    FleetConfig cfg;  // defaults mirror the experiment table
    cfg.n_ev = 100;
    cfg.seed = 1;
    auto fleet = sample_fleet(cfg);
    REQUIRE(fleet.size() == 100);
    double mean_arrival_wall = 0.0;
    for (const auto& ev : fleet) {
        ev.validate();
        CHECK(ev.t_arrive >= 1);
        CHECK(ev.t_depart <= 24);
        CHECK(ev.t_arrive < ev.t_depart);
        mean_arrival_wall += ev.t_arrive + kGridStartWallHour;
    }
    mean_arrival_wall /= 100.0;
    CHECK(std::abs(mean_arrival_wall - 18.0) <= 0.5);
}

TEST_CASE("fleet: empty fleet and determinism") {
    FleetConfig cfg;
    cfg.n_ev = 0;
    CHECK(sample_fleet(cfg).empty());

    cfg.n_ev = 30;
    cfg.seed = 77;
    auto a = sample_fleet(cfg);
    auto b = sample_fleet(cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].t_arrive == b[i].t_arrive);
        CHECK(a[i].soc_arrive == b[i].soc_arrive);
        CHECK(a[i].p_max_kw == b[i].p_max_kw);
    }
}

TEST_CASE("fleet: zero-width truncated normal is a configuration error") {
    FleetConfig cfg;
    cfg.arrival_hour = DistSpec::trunc_normal(18.0, 1.0, 18.0, 18.0);
    CHECK_THROWS_AS(sample_fleet(cfg), ValidationError);
}

TEST_CASE("fleet: alpha classes cycle through the paper's four values") {
    FleetConfig cfg;
    cfg.n_ev = 8;
    auto fleet = sample_fleet(cfg);
    CHECK(fleet[0].alpha == 0.2);
    CHECK(fleet[1].alpha == 0.6);
    CHECK(fleet[2].alpha == 1.0);
    CHECK(fleet[3].alpha == 1.4);
    CHECK(fleet[4].alpha == 0.2);
}

TEST_CASE("fleet: power envelope on the raw-hour example") {
    EvProfile ev = basic_ev();
    ev.t_arrive = 18;
    ev.t_depart = 32;  // 8 a.m. wrapped past midnight
    std::vector<double> lo, hi;
    power_envelope(ev, 36, lo, hi);
    CHECK(lo[20] == -10.0);
    CHECK(hi[20] == 10.0);
    CHECK(lo[14] == 0.0);
    CHECK(hi[14] == 0.0);
    CHECK(lo[32] == 0.0);  // departed

    ev.p_min_kw = 0.0;  // V2G off
    power_envelope(ev, 36, lo, hi);
    for (double v : lo) CHECK(v == 0.0);
}

TEST_CASE("fleet: energy envelope hand values") {
    EvProfile ev = basic_ev();  // arrives hour 6, departs hour 20
    std::vector<double> lo, hi;
    energy_envelope(ev, 24, 1.0, lo, hi);
    // two hours after arrival: min(15 + 0.9*10*2, 45) = 33
    CHECK(hi[ev.t_arrive + 2] == doctest::Approx(33.0));
    CHECK(lo[ev.t_arrive] == doctest::Approx(15.0));
    CHECK(lo[21] == doctest::Approx(40.0));
    CHECK(lo[24] == doctest::Approx(40.0));
}

TEST_CASE("fleet: reachability check") {
    EvProfile ev = basic_ev();  // 14-hour sojourn
    CHECK(check_feasible(ev));  // 15 + 126 >= 40
    ev.t_depart = ev.t_arrive + 2;
    CHECK_FALSE(check_feasible(ev));  // 15 + 18 < 40
    ev.soc_required = ev.soc_arrive;
    CHECK(check_feasible(ev));

    EvProfile bad = basic_ev();
    bad.t_depart = bad.t_arrive + 2;
    std::vector<double> lo, hi;
    CHECK_THROWS_AS(energy_envelope(bad, 24, 1.0, lo, hi), ValidationError);
}

TEST_CASE("fleet: envelope monotonicity and ordering over 250 random EVs") {
    std::mt19937_64 rng(123);
    for (int k = 0; k < 250; ++k) {
        EvProfile ev = random_ev(rng);
        Envelope env = build_envelope(ev, 24);
        for (int t = 0; t <= 24; ++t) {
            CHECK(env.e_lo[t] <= env.e_hi[t] + 1e-12);
            if (t > 0) {
                CHECK(env.e_lo[t] >= env.e_lo[t - 1] - 1e-12);
                CHECK(env.e_hi[t] >= env.e_hi[t - 1] - 1e-12);
            }
        }
        for (int t = 0; t < 24; ++t) CHECK(env.p_lo[t] <= env.p_hi[t]);
    }
}

TEST_CASE("fleet: envelope-respecting trajectories always meet the demand") {
    std::mt19937_64 rng(321);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 200; ++k) {
        EvProfile ev = random_ev(rng);
        Envelope env = build_envelope(ev, 24);
        double e = ev.energy_arrive_kwh();
        for (int t = 0; t < 24; ++t) {
            // feasible power range keeping the next energy inside the band
            auto inv = [&](double delta) {
                return delta >= 0 ? delta / ev.eta_c : delta * ev.eta_d;
            };
            double p_lo_feas = std::max(env.p_lo[t], inv(env.e_lo[t + 1] - e));
            double p_hi_feas = std::min(env.p_hi[t], inv(env.e_hi[t + 1] - e));
            REQUIRE(p_lo_feas <= p_hi_feas + 1e-9);
            double p = p_lo_feas + u(rng) * std::max(0.0, p_hi_feas - p_lo_feas);
            e += battery_delta_kwh(p, ev.eta_c, ev.eta_d, 1.0);
            CHECK(e >= env.e_lo[t + 1] - 1e-7);
            CHECK(e <= env.e_hi[t + 1] + 1e-7);
        }
        CHECK(e >= ev.energy_required_kwh() - 1e-6);
    }
}

TEST_CASE("fleet: csv round trip") {
    FleetConfig cfg;
    cfg.n_ev = 17;
    cfg.seed = 5;
    auto fleet = sample_fleet(cfg);
    std::stringstream ss;
    write_fleet_csv(ss, fleet);
    auto back = read_fleet_csv(ss);
    REQUIRE(back.size() == fleet.size());
    for (size_t i = 0; i < fleet.size(); ++i) {
        CHECK(back[i].id == fleet[i].id);
        CHECK(back[i].soc_arrive == fleet[i].soc_arrive);  // exact via %.17g
        CHECK(back[i].p_min_kw == fleet[i].p_min_kw);
        CHECK(back[i].alpha == fleet[i].alpha);
    }

    std::stringstream bad("id,wrong\n");
    CHECK_THROWS_AS(read_fleet_csv(bad), ValidationError);
}

TEST_CASE("fleet: assumption repair clips unreachable requirements") {
    FleetConfig cfg;
    cfg.n_ev = 40;
    cfg.seed = 9;
    // force short sojourns: arrive late, depart early
    cfg.arrival_hour = DistSpec::trunc_normal(23.0, 0.5, 22.0, 24.0);
    cfg.departure_hour = DistSpec::trunc_normal(1.5, 0.5, 1.0, 2.0);
    auto fleet = sample_fleet(cfg);
    for (const auto& ev : fleet) CHECK(check_feasible(ev));
}
