#include <CLI11.hpp>
#include <iostream>

#include "eva/simulator.hpp"

namespace {

// flag overrides win over the config file
struct Flags {
    std::string config;
    std::string fleet, prices, trace, out;
    int n_ev = -1;
    long seed = -1;
    int lookahead = -1;
    double mpc_bin_width = -1;
    double c_dp = std::numeric_limits<double>::quiet_NaN();
    int compare_hour = -1;
    std::string dispatch_mode;
    std::string prices_out, trace_out;
    long trace_seed = -1;
    int trace_hours = -1;
};

eva::RunConfig make_config(const Flags& f) {
    eva::RunConfig cfg;
    if (!f.config.empty()) cfg = eva::RunConfig::from_file(f.config);
    if (!f.fleet.empty()) cfg.fleet_path = f.fleet;
    if (!f.prices.empty()) cfg.prices_path = f.prices;
    if (!f.trace.empty()) cfg.trace_path = f.trace;
    if (!f.out.empty()) cfg.out_dir = f.out;
    if (f.n_ev >= 0) cfg.fleet_gen.n_ev = f.n_ev;
    if (f.seed >= 0) cfg.fleet_gen.seed = static_cast<std::uint64_t>(f.seed);
    if (f.lookahead > 0) cfg.lookahead = f.lookahead;
    if (f.mpc_bin_width > 0) cfg.mpc_bin_width = f.mpc_bin_width;
    if (std::isfinite(f.c_dp)) cfg.c_dp_override = f.c_dp;
    if (f.compare_hour >= 0) cfg.compare_hour = f.compare_hour;
    if (!f.dispatch_mode.empty()) cfg.dispatch_mode = f.dispatch_mode;
    if (!f.prices_out.empty()) cfg.prices_out = f.prices_out;
    if (!f.trace_out.empty()) cfg.trace_out = f.trace_out;
    if (f.trace_seed >= 0) cfg.trace_seed = static_cast<std::uint64_t>(f.trace_seed);
    if (f.trace_hours > 0) cfg.trace_hours = f.trace_hours;
    return cfg;
}

void add_common(CLI::App* app, Flags& f) {
    app->add_option("--config", f.config, "JSON config file; flags override it");
    app->add_option("--fleet", f.fleet, "fleet CSV path");
    app->add_option("--prices", f.prices, "price CSV path");
    app->add_option("--trace", f.trace, "regulation signal trace CSV path");
    app->add_option("--out", f.out, "output directory");
    app->add_option("--lookahead", f.lookahead, "MPC lookahead window, hours");
    app->add_option("--mpc-bin-width", f.mpc_bin_width, "scenario bin width for bidding");
    app->add_option("--c-dp", f.c_dp, "override re-dispatch cost coefficient, $/kWh");
    app->add_option("--compare-hour", f.compare_hour, "grid hour for the method comparison");
    app->add_option("--dispatch-mode", f.dispatch_mode, "lookup (default) or direct");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EV-aggregator joint energy-regulation market simulator"};
    app.require_subcommand(1);
    Flags f;

    auto* gen = app.add_subcommand("generate", "sample a fleet and write its CSV");
    add_common(gen, f);
    gen->add_option("--n", f.n_ev, "fleet size");
    gen->add_option("--seed", f.seed, "fleet sampling seed");
    gen->add_option("--prices-out", f.prices_out, "also write a demo price CSV here");
    gen->add_option("--trace-out", f.trace_out, "also write a synthetic RegD trace here");
    gen->add_option("--trace-seed", f.trace_seed, "trace synthesis seed");
    gen->add_option("--trace-hours", f.trace_hours, "trace length in hours");

    int hour = 0;
    double signal = 0.0;
    auto* bid = app.add_subcommand("bid", "solve one hour's bidding problem");
    add_common(bid, f);
    bid->add_option("--hour", hour, "grid hour (0 = noon)")->required();

    auto* regions = app.add_subcommand("regions", "precompute the hour's dispatch policy");
    add_common(regions, f);
    regions->add_option("--hour", hour, "grid hour (0 = noon)")->required();

    auto* dispatch = app.add_subcommand("dispatch", "answer a single regulation signal");
    add_common(dispatch, f);
    dispatch->add_option("--hour", hour, "grid hour (0 = noon)")->required();
    dispatch->add_option("--signal", signal, "signal value in [-1,1]")->required();

    auto* simulate = app.add_subcommand("simulate", "run the full-day pipeline");
    add_common(simulate, f);

    auto* report = app.add_subcommand("report", "summarize a completed run directory");
    add_common(report, f);

    CLI11_PARSE(app, argc, argv);
    try {
        eva::RunConfig cfg = make_config(f);
        if (gen->parsed()) return eva::cmd_generate(cfg);
        if (bid->parsed()) return eva::cmd_bid(cfg, hour);
        if (regions->parsed()) return eva::cmd_regions(cfg, hour);
        if (dispatch->parsed()) return eva::cmd_dispatch(cfg, hour, signal);
        if (simulate->parsed()) return eva::cmd_simulate(cfg);
        if (report->parsed()) return eva::cmd_report(cfg);
    } catch (const eva::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const eva::SolverError& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
