#pragma once

#include <array>
#include <vector>

#include "eva/dispatch.hpp"
#include "eva/fleet.hpp"
#include "eva/flexibility.hpp"
#include "eva/optimize.hpp"
#include "eva/scenarios.hpp"

namespace eva {

struct MarketPrices {
    std::array<double, kHoursPerDay> c_e{};    // $/kWh energy
    std::array<double, kHoursPerDay> c_cap{};  // $/kW regulation capacity
    std::array<double, kHoursPerDay> c_per{};  // $/(mileage*kW) performance
    std::array<double, kHoursPerDay> c_fee{};  // $/kWh charging fee
    std::array<double, kHoursPerDay> c_dp{};   // $/kWh re-dispatch coefficient

    void validate() const;
};

// MPC state: the current hour, realized battery energies, the final signal of
// the previous hour (mileage chaining) and the realized-mileage history used
// to forecast the performance credit.
struct EvaState {
    int hour = 0;
    std::vector<double> energy_kwh;
    double prev_signal = 0.0;
    MileageForecaster mileage{0.0};
};

struct BidOptions {
    int lookahead = 8;             // receding window length, hours
    double dt = 1.0;
    double lambda_cap_multiple = 10.0;  // lambda <= multiple * c_fee
    opt::MiqpOptions miqp;
};

// Variable layout of the compiled stochastic program. Hours are window-
// relative (0 = current hour tau); (t, n) pairs exist only while EV n is
// plugged in. Per-pair first-stage variables: p0, dup_cap, ddn_cap, lambda,
// flex, the end-of-hour energy, and four energy-proxy trajectories bounding
// the sustained-deployment boundary paths. Per scenario and pair: p_c, p_d
// (V2G pairs only), delta_up, delta_dn, and the charge/discharge indicator
// binary (V2G pairs only), appended last.
struct BidLayout {
    int start_hour = 0;
    int horizon = 0;
    int n_ev = 0;
    int n_scen = 0;
    int n_vars = 0;
    std::vector<std::vector<int>> active;     // [t] -> EV indices present
    std::vector<int> idx_Pe, idx_R;           // [t]
    // first-stage, indexed [t][slot] following `active`
    std::vector<std::vector<int>> idx_p0, idx_dup, idx_ddn, idx_lambda, idx_flex, idx_e;
    std::vector<std::vector<int>> idx_eup_min, idx_eup_max, idx_edn_min, idx_edn_max;
    // scenario-stage, indexed [w][t][slot]; -1 where the variable is absent
    std::vector<std::vector<std::vector<int>>> idx_pc, idx_pd, idx_du, idx_dd, idx_mu;

    int slot_of(int t, int ev_index) const;   // -1 if not active
};

struct CompiledBid {
    opt::QuadraticProgram qp;
    std::vector<int> binaries;
    std::vector<opt::ComplementarityPair> pairs;
    BidLayout layout;
    ScenarioSet scenario_set;
};

// Variable count: 2H + 10|A| + S(3|A| + |Av|) + S|Av| binaries, where A is
// the set of plugged (hour, EV) pairs and Av its V2G subset. Equality rows:
// H + 2|A| + SH + S|A| + |A|; inequality rows: 2H + 2|A| + 2S|A| + 2S|Av| +
// 8|A|.
CompiledBid compile_bidding(const std::vector<EvProfile>& fleet,
                            const std::vector<Envelope>& envelopes,
                            const MarketPrices& prices,
                            const ScenarioSet& scenario_set,
                            const EvaState& state,
                            int horizon,
                            const std::vector<double>& mileage_forecast,
                            const BidOptions& opts = {});

struct ScenarioAdjust {
    double signal = 0.0;
    double probability = 0.0;
    bool is_extreme = false;
    Eigen::MatrixXd p_c, p_d, dup, ddn;  // (n_ev x horizon), 0 where absent
    Eigen::MatrixXd mu;
};

struct BidDecision {
    int start_hour = 0;
    int horizon = 0;
    std::vector<double> P_e, R;                       // per window hour, kW
    Eigen::MatrixXd p0, delta_up, delta_dn;           // (n_ev x horizon), kW
    Eigen::MatrixXd lambda, flex;                     // $/kWh, kWh
    Eigen::MatrixXd e0;                               // energy at end of each hour, kWh
    std::vector<ScenarioAdjust> scenarios;
    double objective = 0.0;
    long nodes = 0;
};

BidDecision solve_bid(const CompiledBid& compiled, const BidOptions& opts = {});

// First-step commitment plus the fixed parameters handed to dispatch.
struct MpcCommitment {
    int hour = 0;
    double P_e = 0.0, R = 0.0;
    DispatchProblem dispatch;
    std::vector<int> active_fleet_indices;  // dispatch EV order -> fleet index
    BidDecision plan;
};

MpcCommitment mpc_step(const EvaState& state,
                       const std::vector<EvProfile>& fleet,
                       const std::vector<Envelope>& envelopes,
                       const MarketPrices& prices,
                       const ScenarioSet& scenario_set,
                       const BidOptions& opts = {});

struct DispatchedEnergy {
    double charge_kwh = 0.0;     // plug-side
    double discharge_kwh = 0.0;  // plug-side
};

// Advances the hour and applies eta_c * charge - discharge / eta_d per EV.
// Energies drifting outside the envelope beyond 1e-6 kWh are clamped and
// logged.
void update_state(EvaState& state,
                  const std::vector<DispatchedEnergy>& dispatched,
                  const std::vector<EvProfile>& fleet,
                  const std::vector<Envelope>& envelopes,
                  double tol = 1e-6);

}  // namespace eva
