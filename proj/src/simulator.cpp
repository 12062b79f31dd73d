#include "eva/simulator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>

#include "eva/csv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace eva {

namespace {

DistSpec dist_from_json(const json& j, const DistSpec& fallback) {
    DistSpec d = fallback;
    if (j.contains("kind")) {
        std::string k = j["kind"];
        if (k == "truncated_normal") d.kind = DistSpec::Kind::TruncNormal;
        else if (k == "uniform") d.kind = DistSpec::Kind::Uniform;
        else throw ValidationError("config: unknown distribution kind " + k);
    }
    if (j.contains("mean")) d.mean = j["mean"];
    if (j.contains("stddev")) d.stddev = j["stddev"];
    if (j.contains("min")) d.min = j["min"];
    if (j.contains("max")) d.max = j["max"];
    return d;
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ValidationError("config: parse error: " + std::string(e.what()));
    }
    RunConfig cfg;
    cfg.fleet_path = j.value("fleet", cfg.fleet_path);
    cfg.prices_path = j.value("prices", cfg.prices_path);
    cfg.trace_path = j.value("trace", cfg.trace_path);
    cfg.out_dir = j.value("out_dir", cfg.out_dir);
    cfg.prices_out = j.value("prices_out", cfg.prices_out);
    cfg.trace_out = j.value("trace_out", cfg.trace_out);
    cfg.trace_seed = j.value("trace_seed", cfg.trace_seed);
    cfg.trace_hours = j.value("trace_hours", cfg.trace_hours);
    cfg.stats_bin_width = j.value("stats_bin_width", cfg.stats_bin_width);
    cfg.mpc_bin_width = j.value("mpc_bin_width", cfg.mpc_bin_width);
    cfg.lookahead = j.value("lookahead", cfg.lookahead);
    if (j.contains("c_dp")) cfg.c_dp_override = j["c_dp"];
    cfg.compare_hour = j.value("compare_hour", cfg.compare_hour);
    cfg.dispatch_mode = j.value("dispatch_mode", cfg.dispatch_mode);
    if (j.contains("fleet_gen")) {
        const auto& g = j["fleet_gen"];
        cfg.fleet_gen.n_ev = g.value("n_ev", cfg.fleet_gen.n_ev);
        cfg.fleet_gen.seed = g.value("seed", cfg.fleet_gen.seed);
        cfg.fleet_gen.battery_kwh = g.value("battery_kwh", cfg.fleet_gen.battery_kwh);
        cfg.fleet_gen.soc_min = g.value("soc_min", cfg.fleet_gen.soc_min);
        cfg.fleet_gen.soc_max = g.value("soc_max", cfg.fleet_gen.soc_max);
        cfg.fleet_gen.eta_c = g.value("eta_c", cfg.fleet_gen.eta_c);
        cfg.fleet_gen.eta_d = g.value("eta_d", cfg.fleet_gen.eta_d);
        cfg.fleet_gen.xi_kwh = g.value("xi_kwh", cfg.fleet_gen.xi_kwh);
        cfg.fleet_gen.v2g = g.value("v2g", cfg.fleet_gen.v2g);
        if (g.contains("alpha_classes"))
            cfg.fleet_gen.alpha_classes = g["alpha_classes"].get<std::vector<double>>();
        if (g.contains("arrival")) cfg.fleet_gen.arrival_hour = dist_from_json(g["arrival"], cfg.fleet_gen.arrival_hour);
        if (g.contains("departure")) cfg.fleet_gen.departure_hour = dist_from_json(g["departure"], cfg.fleet_gen.departure_hour);
        if (g.contains("soc_arrive")) cfg.fleet_gen.soc_arrive = dist_from_json(g["soc_arrive"], cfg.fleet_gen.soc_arrive);
        if (g.contains("soc_required")) cfg.fleet_gen.soc_required = dist_from_json(g["soc_required"], cfg.fleet_gen.soc_required);
        if (g.contains("p_max")) cfg.fleet_gen.p_max_kw = dist_from_json(g["p_max"], cfg.fleet_gen.p_max_kw);
    }
    return cfg;
}

void RunConfig::validate_for_simulate() const {
    if (fleet_path.empty() || !fs::exists(fleet_path))
        throw ValidationError("config: fleet file missing: " + fleet_path);
    if (prices_path.empty() || !fs::exists(prices_path))
        throw ValidationError("config: price file missing: " + prices_path);
    if (trace_path.empty() || !fs::exists(trace_path))
        throw ValidationError("config: trace file missing: " + trace_path);
    if (dispatch_mode != "lookup" && dispatch_mode != "direct")
        throw ValidationError("config: dispatch_mode must be lookup or direct");
}

EvaState plan_following_state(const std::vector<EvProfile>& fleet,
                              const std::vector<Envelope>& envelopes,
                              const MarketPrices& prices, const ScenarioSet& scen,
                              int hour, const BidOptions& opts) {
    EvaState state;
    state.hour = 0;
    state.prev_signal = 0.0;
    state.mileage = MileageForecaster(iid_mileage_estimate(scen, 1800));
    state.energy_kwh.resize(fleet.size());
    for (size_t n = 0; n < fleet.size(); ++n) state.energy_kwh[n] = fleet[n].energy_arrive_kwh();
    for (int t = 0; t < hour; ++t) {
        MpcCommitment c = mpc_step(state, fleet, envelopes, prices, scen, opts);
        for (size_t n = 0; n < fleet.size(); ++n)
            if (fleet[n].present(t)) state.energy_kwh[n] = c.plan.e0(static_cast<int>(n), 0);
        state.hour = t + 1;
    }
    return state;
}

SimulationResult simulate(const std::vector<EvProfile>& fleet, const MarketPrices& prices_in,
                          const SignalTrace& trace, const SimOptions& opts) {
    if (fleet.empty()) throw ValidationError("simulate: empty fleet");
    trace.validate();
    MarketPrices prices = prices_in;
    if (std::isfinite(opts.c_dp_override))
        for (int h = 0; h < kHoursPerDay; ++h) prices.c_dp[h] = opts.c_dp_override;
    prices.validate();

    const int N = static_cast<int>(fleet.size());
    const int D = trace.steps_per_hour();
    if (static_cast<int>(trace.samples.size()) < kHoursPerDay * D)
        throw ValidationError("simulate: trace shorter than the simulation day");
    std::vector<Envelope> envelopes;
    envelopes.reserve(N);
    for (const auto& ev : fleet) envelopes.push_back(build_envelope(ev, kHoursPerDay));

    ScenarioSet scen = bin_signals(trace, opts.mpc_bin_width);
    BidOptions bopts;
    bopts.lookahead = opts.lookahead;

    SimulationResult res;
    res.energy_path = Eigen::MatrixXd::Zero(N, kHoursPerDay + 1);
    res.required_energy_kwh.resize(N);
    for (int n = 0; n < N; ++n) res.required_energy_kwh[n] = fleet[n].energy_required_kwh();

    EvaState state;
    state.hour = 0;
    state.prev_signal = 0.0;
    state.mileage = MileageForecaster(iid_mileage_estimate(scen, D));
    state.energy_kwh.resize(N);
    std::vector<double> raw_energy(N);
    for (int n = 0; n < N; ++n) {
        state.energy_kwh[n] = fleet[n].energy_arrive_kwh();
        raw_energy[n] = state.energy_kwh[n];
        res.energy_path(n, 0) = state.energy_kwh[n];
    }

    std::vector<double> lookup_us;
    lookup_us.reserve(static_cast<size_t>(kHoursPerDay) * D);
    double replay_seconds = 0.0;
    const double dt_h = trace.dt_seconds / 3600.0;

    for (int tau = 0; tau < kHoursPerDay; ++tau) {
        HourRecord rec;
        rec.commitment = mpc_step(state, fleet, envelopes, prices, scen, bopts);
        const DispatchProblem& dp = rec.commitment.dispatch;
        const int M = dp.n_ev();

        SignalTrace hour_trace;
        hour_trace.dt_seconds = trace.dt_seconds;
        hour_trace.samples.assign(trace.samples.begin() + static_cast<long>(tau) * D,
                                  trace.samples.begin() + static_cast<long>(tau + 1) * D);

        rec.lookup_path = opts.use_lookup && exact_relaxation_applicable(dp).applicable;
        DirectDispatcher direct(dp);
        if (rec.lookup_path) {
            rec.policy = compute_regions(build_dispatch_lp(dp));
            rec.regions = static_cast<int>(rec.policy.regions.size());
        }

        rec.stats.avg_pd = Eigen::VectorXd::Zero(M);
        rec.stats.avg_dup = Eigen::VectorXd::Zero(M);
        rec.stats.avg_ddn = Eigen::VectorXd::Zero(M);
        std::vector<DispatchedEnergy> dispatched(N);

        auto t_hour0 = std::chrono::steady_clock::now();
        for (int d = 0; d < D; ++d) {
            double s = hour_trace.samples[d];
            DispatchResult r;
            if (rec.lookup_path) {
                auto t0 = std::chrono::steady_clock::now();
                r = lookup(rec.policy, s);
                auto t1 = std::chrono::steady_clock::now();
                lookup_us.push_back(std::chrono::duration<double, std::micro>(t1 - t0).count());
            } else {
                r = direct.dispatch(s);
            }
            double agg = r.p_c.sum() - r.p_d.sum();
            double target = dp.P_hat - s * dp.R_hat;
            res.max_balance_residual_kw =
                std::max(res.max_balance_residual_kw, std::abs(agg - target));
            for (int i = 0; i < M; ++i) {
                int n = dp.evs[i].id;
                dispatched[n].charge_kwh += r.p_c[i] * dt_h;
                dispatched[n].discharge_kwh += r.p_d[i] * dt_h;
            }
            rec.stats.avg_pd += r.p_d / D;
            rec.stats.avg_dup += r.dup / D;
            rec.stats.avg_ddn += r.ddn / D;
        }
        auto t_hour1 = std::chrono::steady_clock::now();
        replay_seconds += std::chrono::duration<double>(t_hour1 - t_hour0).count();

        rec.stats.realized_mileage = mileage(hour_trace, state.prev_signal);
        rec.cash = settle_hour(rec.commitment, rec.stats, prices);
        res.cashflow.rows.push_back(rec.cash);

        if (tau == opts.compare_hour && opts.run_comparison && M > 0) {
            res.comparison = compare_dispatch_methods(dp, hour_trace);
            res.compare_hour = tau;
        }

        for (int n = 0; n < N; ++n)
            raw_energy[n] += fleet[n].eta_c * dispatched[n].charge_kwh -
                             dispatched[n].discharge_kwh / fleet[n].eta_d;
        update_state(state, dispatched, fleet, envelopes);
        state.prev_signal = hour_trace.samples.back();
        state.mileage.record(tau, rec.stats.realized_mileage);
        for (int n = 0; n < N; ++n) res.energy_path(n, tau + 1) = state.energy_kwh[n];
        res.hours.push_back(std::move(rec));
    }

    res.final_energy_kwh = state.energy_kwh;
    res.raw_final_energy_kwh = raw_energy;
    for (int n = 0; n < N; ++n)
        if (raw_energy[n] < res.required_energy_kwh[n] - 1e-6) res.demand_satisfied = false;
    if (!lookup_us.empty()) {
        std::vector<double> tmp = lookup_us;
        std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
        res.median_lookup_us = tmp[tmp.size() / 2];
    }
    res.total_replay_s = replay_seconds;
    return res;
}

namespace {

std::string hour_tag(int h) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "%02d", h);
    return buf;
}

void write_bid_csv(std::ostream& out, const MpcCommitment& c) {
    out << "hour,P_e_kw,R_kw\n";
    out << c.hour << ',' << csv::fmt(c.P_e) << ',' << csv::fmt(c.R) << '\n';
    out << "id,p0_kw,dup_kw,ddn_kw,lambda,flex_kwh\n";
    for (size_t i = 0; i < c.dispatch.evs.size(); ++i) {
        const auto& ev = c.dispatch.evs[i];
        double flex = c.plan.flex(c.active_fleet_indices[i], 0);
        out << ev.id << ',' << csv::fmt(ev.p0) << ',' << csv::fmt(ev.dup_cap) << ','
            << csv::fmt(ev.ddn_cap) << ',' << csv::fmt(ev.lambda) << ','
            << csv::fmt(flex) << '\n';
    }
}

struct LoadedInputs {
    std::vector<EvProfile> fleet;
    MarketPrices prices;
    SignalTrace trace;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
    cfg.validate_for_simulate();
    LoadedInputs in;
    {
        auto f = csv::open_input(cfg.fleet_path);
        in.fleet = read_fleet_csv(f);
    }
    in.prices = load_prices(cfg.prices_path);
    {
        auto f = csv::open_input(cfg.trace_path);
        in.trace = read_trace_csv(f);
    }
    return in;
}

}  // namespace

int cmd_generate(const RunConfig& cfg) {
    auto fleet = sample_fleet(cfg.fleet_gen);
    if (cfg.fleet_path.empty()) throw ValidationError("generate: --fleet output path required");
    fs::create_directories(fs::path(cfg.fleet_path).parent_path().empty()
                               ? fs::path(".")
                               : fs::path(cfg.fleet_path).parent_path());
    auto f = csv::open_output(cfg.fleet_path);
    write_fleet_csv(f, fleet);
    std::cout << "wrote " << fleet.size() << " EVs to " << cfg.fleet_path << "\n";
    if (!cfg.prices_out.empty()) {
        auto pf = csv::open_output(cfg.prices_out);
        write_prices_csv(pf, demo_prices());
        std::cout << "wrote demo prices to " << cfg.prices_out << "\n";
    }
    if (!cfg.trace_out.empty()) {
        auto tf = csv::open_output(cfg.trace_out);
        write_trace_csv(tf, synth_regd_trace(cfg.trace_seed, cfg.trace_hours));
        std::cout << "wrote synthetic trace to " << cfg.trace_out << "\n";
    }
    return 0;
}

namespace {

struct PreparedHour {
    std::vector<EvProfile> fleet;
    std::vector<Envelope> envelopes;
    MarketPrices prices;
    ScenarioSet scen;
    MpcCommitment commitment;
};

PreparedHour prepare_hour(const RunConfig& cfg, int hour) {
    if (hour < 0 || hour >= kHoursPerDay) throw ValidationError("hour must lie in [0,24)");
    LoadedInputs in = load_inputs(cfg);
    PreparedHour ph;
    ph.fleet = std::move(in.fleet);
    ph.prices = in.prices;
    if (std::isfinite(cfg.c_dp_override))
        for (int h = 0; h < kHoursPerDay; ++h) ph.prices.c_dp[h] = cfg.c_dp_override;
    for (const auto& ev : ph.fleet) ph.envelopes.push_back(build_envelope(ev, kHoursPerDay));
    ph.scen = bin_signals(in.trace, cfg.mpc_bin_width);
    BidOptions bopts;
    bopts.lookahead = cfg.lookahead;
    EvaState state =
        plan_following_state(ph.fleet, ph.envelopes, ph.prices, ph.scen, hour, bopts);
    ph.commitment = mpc_step(state, ph.fleet, ph.envelopes, ph.prices, ph.scen, bopts);
    return ph;
}

}  // namespace

int cmd_bid(const RunConfig& cfg, int hour) {
    PreparedHour ph = prepare_hour(cfg, hour);
    fs::create_directories(fs::path(cfg.out_dir) / "bids");
    auto f = csv::open_output((fs::path(cfg.out_dir) / "bids" /
                               ("bid_hour_" + hour_tag(hour) + ".csv")).string());
    write_bid_csv(f, ph.commitment);
    std::cout << "hour " << hour << ": P_e=" << ph.commitment.P_e
              << " kW, R=" << ph.commitment.R << " kW, " << ph.commitment.dispatch.n_ev()
              << " EVs connected\n";
    return 0;
}

int cmd_regions(const RunConfig& cfg, int hour) {
    PreparedHour ph = prepare_hour(cfg, hour);
    auto rep = exact_relaxation_applicable(ph.commitment.dispatch);
    if (!rep.applicable) {
        std::cout << "exact relaxation inapplicable for " << rep.violating_ids.size()
                  << " EVs; dispatch must run in direct mode\n";
        return 0;
    }
    DispatchPolicy policy = compute_regions(build_dispatch_lp(ph.commitment.dispatch));
    fs::create_directories(fs::path(cfg.out_dir) / "policies");
    auto f = csv::open_output((fs::path(cfg.out_dir) / "policies" /
                               ("policy_hour_" + hour_tag(hour) + ".csv")).string());
    write_policy_csv(f, policy);
    std::cout << "hour " << hour << ": " << policy.regions.size() << " critical regions\n";
    return 0;
}

int cmd_dispatch(const RunConfig& cfg, int hour, double signal) {
    if (signal < -1.0 || signal > 1.0)
        throw ValidationError("signal must lie in [-1,1]");
    PreparedHour ph = prepare_hour(cfg, hour);
    const auto& dp = ph.commitment.dispatch;
    DispatchResult r;
    if (cfg.dispatch_mode != "direct" && exact_relaxation_applicable(dp).applicable) {
        DispatchPolicy policy = compute_regions(build_dispatch_lp(dp));
        r = lookup(policy, signal);
    } else {
        r = dispatch_direct(dp, signal);
    }
    std::cout << "id,p_c_kw,p_d_kw,dup_kw,ddn_kw\n";
    for (int i = 0; i < dp.n_ev(); ++i)
        std::cout << dp.evs[i].id << ',' << csv::fmt(r.p_c[i]) << ',' << csv::fmt(r.p_d[i])
                  << ',' << csv::fmt(r.dup[i]) << ',' << csv::fmt(r.ddn[i]) << '\n';
    std::cout << "cost," << csv::fmt(r.cost) << "\n";
    return 0;
}

int cmd_simulate(const RunConfig& cfg) {
    LoadedInputs in = load_inputs(cfg);
    SimulationResult res = simulate(in.fleet, in.prices, in.trace, SimOptions::from(cfg));

    fs::create_directories(cfg.out_dir);
    fs::create_directories(fs::path(cfg.out_dir) / "bids");
    fs::create_directories(fs::path(cfg.out_dir) / "policies");
    fs::create_directories(fs::path(cfg.out_dir) / "plots");

    for (const auto& rec : res.hours) {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "bids" /
                                   ("bid_hour_" + hour_tag(rec.commitment.hour) + ".csv")).string());
        write_bid_csv(f, rec.commitment);
        if (rec.lookup_path) {
            auto pf = csv::open_output((fs::path(cfg.out_dir) / "policies" /
                                        ("policy_hour_" + hour_tag(rec.commitment.hour) + ".csv")).string());
            write_policy_csv(pf, rec.policy);
        }
    }
    {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "settlement.csv").string());
        write_settlement_csv(f, res.cashflow);
    }
    if (res.compare_hour >= 0) {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "comparison.csv").string());
        write_comparison_csv(f, res.comparison);
    }
    {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "plots" / "bids_hourly.csv").string());
        f << "hour,P_e_kw,R_kw\n";
        for (const auto& rec : res.hours)
            f << rec.commitment.hour << ',' << csv::fmt(rec.commitment.P_e) << ','
              << csv::fmt(rec.commitment.R) << '\n';
    }
    {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "plots" / "revenue_cost.csv").string());
        CashFlowRow t = res.cashflow.totals();
        f << "component,total_usd\n";
        f << "energy_cost," << csv::fmt(t.energy_cost) << '\n';
        f << "regulation_credit," << csv::fmt(t.regulation_credit) << '\n';
        f << "flex_payments," << csv::fmt(t.flex_payments) << '\n';
        f << "charging_income," << csv::fmt(t.charging_income) << '\n';
        f << "redispatch_cost," << csv::fmt(t.redispatch_cost) << '\n';
    }
    {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "plots" / "soc_by_class.csv").string());
        f << "hour,alpha,mean_soc\n";
        std::map<double, std::vector<int>> classes;
        for (size_t n = 0; n < in.fleet.size(); ++n)
            classes[in.fleet[n].alpha].push_back(static_cast<int>(n));
        for (int h = 0; h <= kHoursPerDay; ++h)
            for (const auto& [alpha, members] : classes) {
                double soc = 0.0;
                for (int n : members)
                    soc += res.energy_path(n, h) / in.fleet[n].battery_kwh;
                f << h << ',' << csv::fmt(alpha) << ','
                  << csv::fmt(soc / static_cast<double>(members.size())) << '\n';
            }
    }
    {
        auto f = csv::open_output((fs::path(cfg.out_dir) / "summary.txt").string());
        CashFlowRow t = res.cashflow.totals();
        f << "eva day summary\n";
        f << "fleet_size " << in.fleet.size() << "\n";
        f << "demand_satisfied " << (res.demand_satisfied ? "yes" : "no") << "\n";
        f << "max_balance_residual_kw " << csv::fmt(res.max_balance_residual_kw) << "\n";
        f << "energy_cost " << csv::fmt(t.energy_cost) << "\n";
        f << "regulation_credit " << csv::fmt(t.regulation_credit) << "\n";
        f << "flex_payments " << csv::fmt(t.flex_payments) << "\n";
        f << "charging_income " << csv::fmt(t.charging_income) << "\n";
        f << "net_profit " << csv::fmt(t.regulation_credit + t.charging_income -
                                       t.energy_cost - t.flex_payments) << "\n";
        int shortfalls = 0;
        for (size_t n = 0; n < in.fleet.size(); ++n)
            if (res.raw_final_energy_kwh[n] < res.required_energy_kwh[n] - 1e-6) ++shortfalls;
        f << "departure_shortfalls " << shortfalls << "\n";
    }
    {
        // wall-clock diagnostics; excluded from the byte-determinism guarantee
        std::ofstream f(fs::path(cfg.out_dir) / "timing.log");
        f << "median_lookup_us " << res.median_lookup_us << "\n";
        f << "replay_total_s " << res.total_replay_s << "\n";
    }
    std::cout << "simulation finished; artifacts in " << cfg.out_dir << "\n";
    if (!res.demand_satisfied) {
        std::cerr << "warning: some EVs departed below their required energy\n";
    }
    return 0;
}

int cmd_report(const RunConfig& cfg) {
    const fs::path dir = cfg.out_dir;
    std::vector<std::string> expected = {"settlement.csv", "summary.txt",
                                         "plots/bids_hourly.csv", "plots/revenue_cost.csv",
                                         "plots/soc_by_class.csv"};
    std::vector<std::string> missing;
    for (const auto& e : expected)
        if (!fs::exists(dir / e)) missing.push_back(e);
    if (!missing.empty()) {
        std::string msg = "report: missing artifacts:";
        for (const auto& m : missing) msg += " " + m;
        throw ValidationError(msg);
    }
    std::ifstream summary(dir / "summary.txt");
    std::ofstream out(dir / "report.txt");
    out << "run report\n----------\n";
    out << summary.rdbuf();
    if (fs::exists(dir / "comparison.csv")) {
        std::ifstream cmp(dir / "comparison.csv");
        out << "\ndispatch method comparison\n";
        out << cmp.rdbuf();
    }
    std::cout << "report written to " << (dir / "report.txt").string() << "\n";
    return 0;
}

}  // namespace eva
