#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <vector>

#include "eva/common.hpp"

namespace eva {

// One EV charging session as declared to the aggregator.
// Hour indices live on the simulation grid (0 = noon); t_depart is exclusive,
// so the sojourn is [t_arrive, t_depart).
struct EvProfile {
    int id = 0;
    int t_arrive = 0;
    int t_depart = 0;
    double soc_arrive = 0.0;
    double soc_required = 0.0;
    double soc_min = 0.0;
    double soc_max = 1.0;
    double battery_kwh = 0.0;
    double p_max_kw = 0.0;   // max charging rate, > 0
    double p_min_kw = 0.0;   // max discharging rate, <= 0 (0 disables V2G)
    double eta_c = 1.0;
    double eta_d = 1.0;
    double alpha = 0.0;      // flexibility offering preference ratio
    double xi_kwh = 0.0;     // flexibility offered without compensation

    double energy_arrive_kwh() const { return battery_kwh * soc_arrive; }
    double energy_required_kwh() const { return battery_kwh * soc_required; }
    double energy_min_kwh() const { return battery_kwh * soc_min; }
    double energy_max_kwh() const { return battery_kwh * soc_max; }
    bool present(int t) const { return t >= t_arrive && t < t_depart; }
    int sojourn_hours() const { return t_depart - t_arrive; }

    void validate(double dt = 1.0) const;  // throws ValidationError
};

struct DistSpec {
    enum class Kind { TruncNormal, Uniform };
    Kind kind = Kind::Uniform;
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;

    static DistSpec trunc_normal(double mean, double stddev, double min, double max) {
        return {Kind::TruncNormal, mean, stddev, min, max};
    }
    static DistSpec uniform(double min, double max) {
        return {Kind::Uniform, 0.5 * (min + max), 0.0, min, max};
    }
    double sample(std::mt19937_64& rng) const;
    void validate(const std::string& name) const;
};

struct FleetConfig {
    int n_ev = 100;
    std::uint64_t seed = 1;
    // Wall-clock hours; arrivals are same-day, departures next-day.
    DistSpec arrival_hour = DistSpec::trunc_normal(18.0, 1.0, 13.0, 24.0);
    DistSpec departure_hour = DistSpec::trunc_normal(8.0, 2.0, 1.0, 12.0);
    DistSpec soc_arrive = DistSpec::uniform(0.20, 0.40);
    DistSpec soc_required = DistSpec::uniform(0.70, 0.90);
    DistSpec p_max_kw = DistSpec::uniform(8.0, 12.0);
    double battery_kwh = 50.0;
    double soc_min = 0.20;
    double soc_max = 0.90;
    double eta_c = 0.90;
    double eta_d = 0.93;
    double xi_kwh = 0.0;
    std::vector<double> alpha_classes = {0.2, 0.6, 1.0, 1.4};
    bool v2g = true;  // when true p_min = -p_max

    void validate() const;
};

// Hourly power band and cumulative-energy band for one EV. Power arrays have
// `horizon` entries; energy arrays have horizon+1 entries (values at hour
// boundaries, index 0 = start of hour 0).
struct Envelope {
    std::vector<double> p_lo, p_hi;  // kW
    std::vector<double> e_lo, e_hi;  // kWh
    int horizon() const { return static_cast<int>(p_lo.size()); }
};

// Deterministic for a fixed seed. Profiles violating the maximum-rate
// reachability check get soc_required clipped down (logged to clog).
std::vector<EvProfile> sample_fleet(const FleetConfig& config);

bool check_feasible(const EvProfile& ev, double dt = 1.0);

// p_hi = p_max and p_lo = p_min during the sojourn, 0 outside.
void power_envelope(const EvProfile& ev, int horizon,
                    std::vector<double>& p_lo, std::vector<double>& p_hi);

// Upper bound charges to soc_max as fast as possible; lower bound is the
// latest trajectory that still reaches the required energy by departure.
void energy_envelope(const EvProfile& ev, int horizon, double dt,
                     std::vector<double>& e_lo, std::vector<double>& e_hi);

Envelope build_envelope(const EvProfile& ev, int horizon, double dt = 1.0);

// Battery energy change for a net plug power held for dt hours, splitting
// charge/discharge at the zero crossing.
inline double battery_delta_kwh(double net_kw, double eta_c, double eta_d, double dt) {
    return net_kw >= 0.0 ? net_kw * eta_c * dt : net_kw * dt / eta_d;
}

// CSV schema: id,t_arrive,t_depart,soc_arrive,soc_required,soc_min,soc_max,
//             battery_kwh,p_max_kw,p_min_kw,eta_c,eta_d,alpha,xi
void write_fleet_csv(std::ostream& out, const std::vector<EvProfile>& fleet);
std::vector<EvProfile> read_fleet_csv(std::istream& in);

}  // namespace eva
