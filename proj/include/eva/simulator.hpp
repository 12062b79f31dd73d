#pragma once

#include <string>
#include <vector>

#include "eva/bidding.hpp"
#include "eva/evaluation.hpp"
#include "eva/market_io.hpp"

namespace eva {

struct RunConfig {
    std::string fleet_path;
    std::string prices_path;
    std::string trace_path;
    std::string out_dir = "run";

    FleetConfig fleet_gen;
    // optional companion outputs for `generate`
    std::string prices_out;
    std::string trace_out;
    std::uint64_t trace_seed = 7;
    int trace_hours = kHoursPerDay;

    double stats_bin_width = 0.1;  // scenario statistics / reports
    double mpc_bin_width = 0.5;    // scenario set driving the bidding MPC
    int lookahead = 8;
    double c_dp_override = std::numeric_limits<double>::quiet_NaN();
    int compare_hour = 10;             // grid hour for the method comparison
    std::string dispatch_mode = "lookup";  // or "direct"

    static RunConfig from_file(const std::string& path);  // JSON
    void validate_for_simulate() const;
};

struct SimOptions {
    double mpc_bin_width = 0.5;
    int lookahead = 8;
    double c_dp_override = std::numeric_limits<double>::quiet_NaN();
    int compare_hour = 10;
    bool use_lookup = true;
    bool run_comparison = true;

    static SimOptions from(const RunConfig& cfg) {
        SimOptions o;
        o.mpc_bin_width = cfg.mpc_bin_width;
        o.lookahead = cfg.lookahead;
        o.c_dp_override = cfg.c_dp_override;
        o.compare_hour = cfg.compare_hour;
        o.use_lookup = cfg.dispatch_mode != "direct";
        return o;
    }
};

struct HourRecord {
    MpcCommitment commitment;
    HourDispatchStats stats;
    CashFlowRow cash;
    bool lookup_path = false;
    int regions = 0;
    DispatchPolicy policy;  // empty when the MIQP fallback ran
};

struct SimulationResult {
    std::vector<HourRecord> hours;
    CashFlow cashflow;
    std::vector<double> final_energy_kwh;      // state energies at day end
    std::vector<double> raw_final_energy_kwh;  // without envelope clamping
    std::vector<double> required_energy_kwh;
    double max_balance_residual_kw = 0.0;
    bool demand_satisfied = true;
    ComparisonReport comparison;
    int compare_hour = -1;
    Eigen::MatrixXd energy_path;  // n_ev x 25, battery energy at hour bounds
    // diagnostics (not part of the deterministic artifacts)
    double median_lookup_us = 0.0;
    double total_replay_s = 0.0;
};

SimulationResult simulate(const std::vector<EvProfile>& fleet, const MarketPrices& prices,
                          const SignalTrace& trace, const SimOptions& opts);

// Plan-following state at the start of `hour`: each earlier hour's expected
// end-of-hour energies are taken from that hour's committed plan.
EvaState plan_following_state(const std::vector<EvProfile>& fleet,
                              const std::vector<Envelope>& envelopes,
                              const MarketPrices& prices, const ScenarioSet& scen,
                              int hour, const BidOptions& opts);

int cmd_generate(const RunConfig& cfg);
int cmd_bid(const RunConfig& cfg, int hour);
int cmd_regions(const RunConfig& cfg, int hour);
int cmd_dispatch(const RunConfig& cfg, int hour, double signal);
int cmd_simulate(const RunConfig& cfg);
int cmd_report(const RunConfig& cfg);

}  // namespace eva
