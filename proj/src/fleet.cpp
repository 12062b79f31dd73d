#include "eva/fleet.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <ostream>

#include "eva/csv.hpp"

namespace eva {

void EvProfile::validate(double dt) const {
    auto fail = [&](const std::string& what) {
        throw ValidationError("EV " + std::to_string(id) + ": " + what);
    };
    if (t_depart <= t_arrive) fail("departure must come after arrival");
    if (!(soc_min <= soc_arrive && soc_arrive <= soc_max)) fail("soc_arrive outside [soc_min, soc_max]");
    if (!(soc_min <= soc_required && soc_required <= soc_max)) fail("soc_required outside [soc_min, soc_max]");
    if (!(p_min_kw <= 0.0 && 0.0 < p_max_kw)) fail("need p_min <= 0 < p_max");
    if (!(eta_c > 0.0 && eta_c <= 1.0 && eta_d > 0.0 && eta_d <= 1.0)) fail("efficiencies must lie in (0,1]");
    if (battery_kwh <= 0.0) fail("battery capacity must be positive");
    if (alpha < 0.0) fail("alpha must be nonnegative");
    if (xi_kwh < 0.0) fail("xi must be nonnegative");
    if (!check_feasible(*this, dt)) fail("required SoC unreachable at maximum charging rate");
}

double DistSpec::sample(std::mt19937_64& rng) const {
    switch (kind) {
        case Kind::Uniform: {
            if (max == min) return min;
            std::uniform_real_distribution<double> d(min, max);
            return d(rng);
        }
        case Kind::TruncNormal: {
            std::normal_distribution<double> d(mean, stddev);
            for (int tries = 0; tries < 100000; ++tries) {
                double x = d(rng);
                if (x >= min && x <= max) return x;
            }
            throw ValidationError("truncated normal rejection did not terminate");
        }
    }
    throw ValidationError("unknown distribution kind");
}

void DistSpec::validate(const std::string& name) const {
    if (min > max) throw ValidationError(name + ": min > max");
    if (kind == Kind::TruncNormal) {
        if (stddev <= 0.0) throw ValidationError(name + ": truncated normal needs stddev > 0");
        if (min == max) throw ValidationError(name + ": zero-width bounds with truncated normal");
    }
}

void FleetConfig::validate() const {
    if (n_ev < 0) throw ValidationError("fleet size must be nonnegative");
    arrival_hour.validate("arrival_hour");
    departure_hour.validate("departure_hour");
    soc_arrive.validate("soc_arrive");
    soc_required.validate("soc_required");
    p_max_kw.validate("p_max_kw");
    if (battery_kwh <= 0.0) throw ValidationError("battery_kwh must be positive");
    if (!(soc_min <= soc_max)) throw ValidationError("soc_min > soc_max");
    if (alpha_classes.empty()) throw ValidationError("alpha_classes must be nonempty");
}

bool check_feasible(const EvProfile& ev, double dt) {
    double reachable = ev.battery_kwh * ev.soc_arrive +
                       ev.eta_c * ev.p_max_kw * ev.sojourn_hours() * dt;
    double required = ev.battery_kwh * ev.soc_required;
    return reachable >= required - 1e-9 * (1.0 + std::abs(required));
}

std::vector<EvProfile> sample_fleet(const FleetConfig& config) {
    config.validate();
    std::mt19937_64 rng(config.seed);
    std::vector<EvProfile> fleet;
    fleet.reserve(config.n_ev);
    for (int i = 0; i < config.n_ev; ++i) {
        EvProfile ev;
        ev.id = i;
        double arr_wall = std::round(config.arrival_hour.sample(rng));
        double dep_wall = std::round(config.departure_hour.sample(rng));
        arr_wall = std::clamp(arr_wall, config.arrival_hour.min, config.arrival_hour.max);
        dep_wall = std::clamp(dep_wall, config.departure_hour.min, config.departure_hour.max);
        ev.t_arrive = static_cast<int>(arr_wall) - kGridStartWallHour;
        // departure hours are next-day wall-clock values
        ev.t_depart = static_cast<int>(dep_wall) + (kHoursPerDay - kGridStartWallHour);
        ev.soc_arrive = config.soc_arrive.sample(rng);
        ev.soc_required = config.soc_required.sample(rng);
        ev.p_max_kw = config.p_max_kw.sample(rng);
        ev.p_min_kw = config.v2g ? -ev.p_max_kw : 0.0;
        ev.battery_kwh = config.battery_kwh;
        ev.soc_min = config.soc_min;
        ev.soc_max = config.soc_max;
        ev.soc_arrive = std::clamp(ev.soc_arrive, ev.soc_min, ev.soc_max);
        ev.soc_required = std::clamp(ev.soc_required, ev.soc_min, ev.soc_max);
        ev.eta_c = config.eta_c;
        ev.eta_d = config.eta_d;
        ev.alpha = config.alpha_classes[i % config.alpha_classes.size()];
        ev.xi_kwh = config.xi_kwh;
        if (!check_feasible(ev)) {
            double reachable_soc = ev.soc_arrive +
                ev.eta_c * ev.p_max_kw * ev.sojourn_hours() / ev.battery_kwh;
            double clipped = std::clamp(reachable_soc, ev.soc_min, ev.soc_max);
            std::clog << "fleet: EV " << ev.id << " soc_required clipped "
                      << ev.soc_required << " -> " << clipped << "\n";
            ev.soc_required = clipped;
        }
        ev.validate();
        fleet.push_back(ev);
    }
    return fleet;
}

void power_envelope(const EvProfile& ev, int horizon,
                    std::vector<double>& p_lo, std::vector<double>& p_hi) {
    p_lo.assign(horizon, 0.0);
    p_hi.assign(horizon, 0.0);
    for (int t = std::max(0, ev.t_arrive); t < std::min(horizon, ev.t_depart); ++t) {
        p_lo[t] = ev.p_min_kw;
        p_hi[t] = ev.p_max_kw;
    }
}

void energy_envelope(const EvProfile& ev, int horizon, double dt,
                     std::vector<double>& e_lo, std::vector<double>& e_hi) {
    if (!check_feasible(ev, dt)) {
        throw ValidationError("EV " + std::to_string(ev.id) +
                              ": infeasible profile, no energy envelope exists");
    }
    const double ea = ev.energy_arrive_kwh();
    const double ed = ev.energy_required_kwh();
    const double emin = ev.energy_min_kwh();
    const double emax = ev.energy_max_kwh();
    e_lo.assign(horizon + 1, ea);
    e_hi.assign(horizon + 1, ea);
    for (int t = 0; t <= horizon; ++t) {
        if (t <= ev.t_arrive) {
            e_lo[t] = ea;
            e_hi[t] = ea;
        } else if (t >= ev.t_depart) {
            e_lo[t] = ed;
            e_hi[t] = emax;
        } else {
            e_hi[t] = std::min(ea + ev.eta_c * ev.p_max_kw * (t - ev.t_arrive) * dt, emax);
            // lowest energy from which max-rate charging still reaches ed by departure
            double latest = ed - ev.eta_c * ev.p_max_kw * (ev.t_depart - t) * dt;
            e_lo[t] = std::max({ea, latest, emin});
        }
    }
}

Envelope build_envelope(const EvProfile& ev, int horizon, double dt) {
    Envelope env;
    power_envelope(ev, horizon, env.p_lo, env.p_hi);
    energy_envelope(ev, horizon, dt, env.e_lo, env.e_hi);
    return env;
}

void write_fleet_csv(std::ostream& out, const std::vector<EvProfile>& fleet) {
    out << "id,t_arrive,t_depart,soc_arrive,soc_required,soc_min,soc_max,"
           "battery_kwh,p_max_kw,p_min_kw,eta_c,eta_d,alpha,xi\n";
    for (const auto& ev : fleet) {
        out << ev.id << ',' << ev.t_arrive << ',' << ev.t_depart << ','
            << csv::fmt(ev.soc_arrive) << ',' << csv::fmt(ev.soc_required) << ','
            << csv::fmt(ev.soc_min) << ',' << csv::fmt(ev.soc_max) << ','
            << csv::fmt(ev.battery_kwh) << ',' << csv::fmt(ev.p_max_kw) << ','
            << csv::fmt(ev.p_min_kw) << ',' << csv::fmt(ev.eta_c) << ','
            << csv::fmt(ev.eta_d) << ',' << csv::fmt(ev.alpha) << ','
            << csv::fmt(ev.xi_kwh) << '\n';
    }
}

std::vector<EvProfile> read_fleet_csv(std::istream& in) {
    auto rows = csv::read_rows(in);
    if (rows.empty()) throw ValidationError("fleet CSV: empty file");
    const std::vector<std::string> header = csv::split(
        "id,t_arrive,t_depart,soc_arrive,soc_required,soc_min,soc_max,"
        "battery_kwh,p_max_kw,p_min_kw,eta_c,eta_d,alpha,xi");
    if (rows[0] != header) throw ValidationError("fleet CSV: unexpected header");
    std::vector<EvProfile> fleet;
    for (size_t r = 1; r < rows.size(); ++r) {
        const auto& f = rows[r];
        std::string ctx = "fleet CSV row " + std::to_string(r);
        if (f.size() != header.size()) throw ValidationError(ctx + ": wrong column count");
        EvProfile ev;
        ev.id = static_cast<int>(csv::to_long(f[0], ctx));
        ev.t_arrive = static_cast<int>(csv::to_long(f[1], ctx));
        ev.t_depart = static_cast<int>(csv::to_long(f[2], ctx));
        ev.soc_arrive = csv::to_double(f[3], ctx);
        ev.soc_required = csv::to_double(f[4], ctx);
        ev.soc_min = csv::to_double(f[5], ctx);
        ev.soc_max = csv::to_double(f[6], ctx);
        ev.battery_kwh = csv::to_double(f[7], ctx);
        ev.p_max_kw = csv::to_double(f[8], ctx);
        ev.p_min_kw = csv::to_double(f[9], ctx);
        ev.eta_c = csv::to_double(f[10], ctx);
        ev.eta_d = csv::to_double(f[11], ctx);
        ev.alpha = csv::to_double(f[12], ctx);
        ev.xi_kwh = csv::to_double(f[13], ctx);
        ev.validate();
        fleet.push_back(ev);
    }
    return fleet;
}

}  // namespace eva
