#include "eva/bidding.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace eva {

void MarketPrices::validate() const {
    for (int h = 0; h < kHoursPerDay; ++h) {
        if (c_e[h] < 0 || c_cap[h] < 0 || c_per[h] < 0 || c_fee[h] < 0 || c_dp[h] < 0)
            throw ValidationError("prices: negative entry at hour " + std::to_string(h));
        if (c_fee[h] <= 0)
            throw ValidationError("prices: c_fee must be positive (hour " + std::to_string(h) + ")");
    }
}

int BidLayout::slot_of(int t, int ev_index) const {
    const auto& lst = active[t];
    for (size_t s = 0; s < lst.size(); ++s)
        if (lst[s] == ev_index) return static_cast<int>(s);
    return -1;
}

CompiledBid compile_bidding(const std::vector<EvProfile>& fleet,
                            const std::vector<Envelope>& envelopes,
                            const MarketPrices& prices,
                            const ScenarioSet& scenario_set,
                            const EvaState& state,
                            int horizon,
                            const std::vector<double>& mileage_forecast,
                            const BidOptions& opts) {
    prices.validate();
    scenario_set.validate();
    if (fleet.size() != envelopes.size())
        throw ValidationError("compile_bidding: fleet/envelope size mismatch");
    if (state.energy_kwh.size() != fleet.size())
        throw ValidationError("compile_bidding: state energy size mismatch");
    const int tau = state.hour;
    if (tau < 0 || tau >= kHoursPerDay) throw ValidationError("compile_bidding: hour out of range");
    const int H = std::min(horizon, kHoursPerDay - tau);
    if (H <= 0) throw ValidationError("compile_bidding: empty horizon");
    if (static_cast<int>(mileage_forecast.size()) < H)
        throw ValidationError("compile_bidding: mileage forecast shorter than horizon");
    const double dt = opts.dt;
    const int N = static_cast<int>(fleet.size());
    const int S = static_cast<int>(scenario_set.scenarios.size());
    const auto weights = scenario_set.objective_weights();

    // plugged EVs must carry a consistent state energy
    for (int n = 0; n < N; ++n) {
        if (!fleet[n].present(tau)) continue;
        const auto& env = envelopes[n];
        double e = state.energy_kwh[n];
        if (e < env.e_lo[tau] - 1e-9 || e > env.e_hi[tau] + 1e-9)
            throw ValidationError("compile_bidding: EV " + std::to_string(fleet[n].id) +
                                  " state energy " + std::to_string(e) +
                                  " outside its envelope at hour " + std::to_string(tau));
    }

    CompiledBid out;
    out.scenario_set = scenario_set;
    BidLayout& L = out.layout;
    L.start_hour = tau;
    L.horizon = H;
    L.n_ev = N;
    L.n_scen = S;
    L.active.assign(H, {});
    for (int t = 0; t < H; ++t)
        for (int n = 0; n < N; ++n)
            if (fleet[n].present(tau + t)) L.active[t].push_back(n);

    auto grid2 = [&](std::vector<std::vector<int>>& v) {
        v.assign(H, {});
        for (int t = 0; t < H; ++t) v[t].assign(L.active[t].size(), -1);
    };
    grid2(L.idx_p0); grid2(L.idx_dup); grid2(L.idx_ddn); grid2(L.idx_lambda);
    grid2(L.idx_flex); grid2(L.idx_e);
    grid2(L.idx_eup_min); grid2(L.idx_eup_max); grid2(L.idx_edn_min); grid2(L.idx_edn_max);
    auto grid3 = [&](std::vector<std::vector<std::vector<int>>>& v) {
        v.assign(S, {});
        for (int w = 0; w < S; ++w) {
            v[w].assign(H, {});
            for (int t = 0; t < H; ++t) v[w][t].assign(L.active[t].size(), -1);
        }
    };
    grid3(L.idx_pc); grid3(L.idx_pd); grid3(L.idx_du); grid3(L.idx_dd); grid3(L.idx_mu);

    int nv = 0;
    L.idx_Pe.resize(H);
    L.idx_R.resize(H);
    for (int t = 0; t < H; ++t) {
        L.idx_Pe[t] = nv++;
        L.idx_R[t] = nv++;
    }
    for (int t = 0; t < H; ++t)
        for (size_t s = 0; s < L.active[t].size(); ++s) {
            L.idx_p0[t][s] = nv++;
            L.idx_dup[t][s] = nv++;
            L.idx_ddn[t][s] = nv++;
            L.idx_lambda[t][s] = nv++;
            L.idx_flex[t][s] = nv++;
            L.idx_e[t][s] = nv++;
        }
    for (int t = 0; t < H; ++t)
        for (size_t s = 0; s < L.active[t].size(); ++s) {
            L.idx_eup_min[t][s] = nv++;
            L.idx_eup_max[t][s] = nv++;
            L.idx_edn_min[t][s] = nv++;
            L.idx_edn_max[t][s] = nv++;
        }
    for (int w = 0; w < S; ++w)
        for (int t = 0; t < H; ++t)
            for (size_t s = 0; s < L.active[t].size(); ++s) {
                int n = L.active[t][s];
                L.idx_pc[w][t][s] = nv++;
                if (fleet[n].p_min_kw < 0) L.idx_pd[w][t][s] = nv++;
                L.idx_du[w][t][s] = nv++;
                L.idx_dd[w][t][s] = nv++;
            }
    for (int w = 0; w < S; ++w)
        for (int t = 0; t < H; ++t)
            for (size_t s = 0; s < L.active[t].size(); ++s)
                if (fleet[L.active[t][s]].p_min_kw < 0) {
                    L.idx_mu[w][t][s] = nv;
                    out.binaries.push_back(nv);
                    out.pairs.push_back({nv, L.idx_pd[w][t][s], L.idx_pc[w][t][s]});
                    ++nv;
                }
    L.n_vars = nv;

    auto& qp = out.qp;
    qp.c = Eigen::VectorXd::Zero(nv);
    qp.lower = Eigen::VectorXd::Constant(nv, -kInf);
    qp.upper = Eigen::VectorXd::Constant(nv, kInf);
    std::vector<Eigen::Triplet<double>> tq, te, ti;
    std::vector<double> be, bi;
    auto erow = [&]() { return static_cast<int>(be.size()); };
    auto irow = [&]() { return static_cast<int>(bi.size()); };

    for (int t = 0; t < H; ++t) {
        const int h = tau + t;
        // market terms
        qp.c[L.idx_Pe[t]] = prices.c_e[h] * dt;
        qp.c[L.idx_R[t]] = -(prices.c_cap[h] + prices.c_per[h] * mileage_forecast[t]);
        qp.lower[L.idx_R[t]] = 0.0;
        // P_e = sum p0
        {
            int r = erow();
            te.emplace_back(r, L.idx_Pe[t], 1.0);
            for (size_t s = 0; s < L.active[t].size(); ++s)
                te.emplace_back(r, L.idx_p0[t][s], -1.0);
            be.push_back(0.0);
        }
        // R <= sum dup, R <= sum ddn
        {
            int r = irow();
            ti.emplace_back(r, L.idx_R[t], 1.0);
            for (size_t s = 0; s < L.active[t].size(); ++s)
                ti.emplace_back(r, L.idx_dup[t][s], -1.0);
            bi.push_back(0.0);
            r = irow();
            ti.emplace_back(r, L.idx_R[t], 1.0);
            for (size_t s = 0; s < L.active[t].size(); ++s)
                ti.emplace_back(r, L.idx_ddn[t][s], -1.0);
            bi.push_back(0.0);
        }
        for (size_t s = 0; s < L.active[t].size(); ++s) {
            const int n = L.active[t][s];
            const auto& ev = fleet[n];
            const auto& env = envelopes[n];
            SupplyCurve curve = build_supply_curve(ev, prices.c_fee[h], dt);
            // first-stage bounds
            qp.lower[L.idx_p0[t][s]] = env.p_lo[h];
            qp.upper[L.idx_p0[t][s]] = env.p_hi[h];
            qp.lower[L.idx_dup[t][s]] = 0.0;
            qp.lower[L.idx_ddn[t][s]] = 0.0;
            qp.lower[L.idx_lambda[t][s]] = 0.0;
            qp.upper[L.idx_lambda[t][s]] = opts.lambda_cap_multiple * prices.c_fee[h];
            qp.lower[L.idx_flex[t][s]] = 0.0;
            qp.lower[L.idx_e[t][s]] = env.e_lo[h + 1];
            qp.upper[L.idx_e[t][s]] = env.e_hi[h + 1];
            qp.lower[L.idx_eup_min[t][s]] = env.e_lo[h + 1];
            qp.upper[L.idx_eup_max[t][s]] = env.e_hi[h + 1];
            qp.lower[L.idx_edn_min[t][s]] = env.e_lo[h + 1];
            qp.upper[L.idx_edn_max[t][s]] = env.e_hi[h + 1];
            // objective: charging income and the supply-curve payment
            qp.c[L.idx_p0[t][s]] = -prices.c_fee[h] * dt;
            qp.c[L.idx_lambda[t][s]] = curve.xi;
            if (curve.k > 0) tq.emplace_back(L.idx_lambda[t][s], L.idx_lambda[t][s], 2.0 * curve.k);
            // supply: flex - k*lambda = xi
            {
                int r = erow();
                te.emplace_back(r, L.idx_flex[t][s], 1.0);
                te.emplace_back(r, L.idx_lambda[t][s], -curve.k);
                be.push_back(curve.xi);
            }
            // flex definition: flex = dt*(E_typ[pd]/eta_d + dup + ddn)
            {
                int r = erow();
                te.emplace_back(r, L.idx_flex[t][s], 1.0);
                te.emplace_back(r, L.idx_dup[t][s], -dt);
                te.emplace_back(r, L.idx_ddn[t][s], -dt);
                for (int w = 0; w < S; ++w)
                    if (L.idx_pd[w][t][s] >= 0 && weights[w] > 0)
                        te.emplace_back(r, L.idx_pd[w][t][s], -dt * weights[w] / ev.eta_d);
                be.push_back(0.0);
            }
            // reserve power caps: dup <= p0 - p_lo, ddn <= p_hi - p0
            {
                int r = irow();
                ti.emplace_back(r, L.idx_dup[t][s], 1.0);
                ti.emplace_back(r, L.idx_p0[t][s], -1.0);
                bi.push_back(-env.p_lo[h]);
                r = irow();
                ti.emplace_back(r, L.idx_ddn[t][s], 1.0);
                ti.emplace_back(r, L.idx_p0[t][s], 1.0);
                bi.push_back(env.p_hi[h]);
            }
            // previous-hour anchors
            const bool chained = t > 0 && L.slot_of(t - 1, n) >= 0;
            const int sprev = chained ? L.slot_of(t - 1, n) : -1;
            // an unchained pair is either the window start (realized state) or
            // the EV's arrival hour
            const double e_start = t == 0 ? state.energy_kwh[n] : ev.energy_arrive_kwh();
            // expected-energy recursion over typical scenarios
            {
                int r = erow();
                te.emplace_back(r, L.idx_e[t][s], 1.0);
                double rhs = 0.0;
                if (chained) te.emplace_back(r, L.idx_e[t - 1][sprev], -1.0);
                else rhs = e_start;
                for (int w = 0; w < S; ++w) {
                    if (weights[w] <= 0) continue;
                    te.emplace_back(r, L.idx_pc[w][t][s], -dt * weights[w] * ev.eta_c);
                    if (L.idx_pd[w][t][s] >= 0)
                        te.emplace_back(r, L.idx_pd[w][t][s], dt * weights[w] / ev.eta_d);
                }
                be.push_back(rhs);
            }
            // boundary-deployment energy proxies; the under-estimator obeys
            // both efficiency slopes as <=, the over-estimator as >=, which
            // represents the zero-crossing charge/discharge split exactly
            auto proxy_rows = [&](int idx_now, const std::vector<std::vector<int>>& idx_grid,
                                  int delta_idx, double delta_sign, bool lower_proxy) {
                for (double slope : {ev.eta_c, 1.0 / ev.eta_d}) {
                    int r = irow();
                    double sgn = lower_proxy ? 1.0 : -1.0;
                    ti.emplace_back(r, idx_now, sgn);
                    double rhs = 0.0;
                    if (chained) ti.emplace_back(r, idx_grid[t - 1][sprev], -sgn);
                    else rhs = sgn * e_start;
                    ti.emplace_back(r, L.idx_p0[t][s], -sgn * slope * dt);
                    ti.emplace_back(r, delta_idx, -sgn * slope * dt * delta_sign);
                    bi.push_back(rhs);
                }
            };
            proxy_rows(L.idx_eup_min[t][s], L.idx_eup_min, L.idx_dup[t][s], -1.0, true);
            proxy_rows(L.idx_eup_max[t][s], L.idx_eup_max, L.idx_dup[t][s], -1.0, false);
            proxy_rows(L.idx_edn_min[t][s], L.idx_edn_min, L.idx_ddn[t][s], 1.0, true);
            proxy_rows(L.idx_edn_max[t][s], L.idx_edn_max, L.idx_ddn[t][s], 1.0, false);
        }
        // scenario blocks
        for (int w = 0; w < S; ++w) {
            const auto& sc = scenario_set.scenarios[w];
            // balance: sum(p0 - du + dd) = P_e - s*R
            {
                int r = erow();
                te.emplace_back(r, L.idx_Pe[t], -1.0);
                te.emplace_back(r, L.idx_R[t], sc.value);
                for (size_t s = 0; s < L.active[t].size(); ++s) {
                    te.emplace_back(r, L.idx_p0[t][s], 1.0);
                    te.emplace_back(r, L.idx_du[w][t][s], -1.0);
                    te.emplace_back(r, L.idx_dd[w][t][s], 1.0);
                }
                be.push_back(0.0);
            }
            for (size_t s = 0; s < L.active[t].size(); ++s) {
                const int n = L.active[t][s];
                const auto& env = envelopes[n];
                qp.lower[L.idx_pc[w][t][s]] = 0.0;
                qp.upper[L.idx_pc[w][t][s]] = env.p_hi[h];
                qp.lower[L.idx_du[w][t][s]] = 0.0;
                qp.lower[L.idx_dd[w][t][s]] = 0.0;
                if (weights[w] > 0) {
                    qp.c[L.idx_du[w][t][s]] += weights[w] * prices.c_dp[h] * dt;
                    qp.c[L.idx_dd[w][t][s]] -= weights[w] * prices.c_dp[h] * dt;
                }
                // link: pc - pd = p0 - du + dd
                {
                    int r = erow();
                    te.emplace_back(r, L.idx_pc[w][t][s], 1.0);
                    if (L.idx_pd[w][t][s] >= 0) te.emplace_back(r, L.idx_pd[w][t][s], -1.0);
                    te.emplace_back(r, L.idx_p0[t][s], -1.0);
                    te.emplace_back(r, L.idx_du[w][t][s], 1.0);
                    te.emplace_back(r, L.idx_dd[w][t][s], -1.0);
                    be.push_back(0.0);
                }
                // deployment caps: du <= dup, dd <= ddn
                {
                    int r = irow();
                    ti.emplace_back(r, L.idx_du[w][t][s], 1.0);
                    ti.emplace_back(r, L.idx_dup[t][s], -1.0);
                    bi.push_back(0.0);
                    r = irow();
                    ti.emplace_back(r, L.idx_dd[w][t][s], 1.0);
                    ti.emplace_back(r, L.idx_ddn[t][s], -1.0);
                    bi.push_back(0.0);
                }
                if (L.idx_pd[w][t][s] >= 0) {
                    qp.lower[L.idx_pd[w][t][s]] = 0.0;
                    qp.upper[L.idx_pd[w][t][s]] = -env.p_lo[h];
                    qp.lower[L.idx_mu[w][t][s]] = 0.0;
                    qp.upper[L.idx_mu[w][t][s]] = 1.0;
                    // pc <= (1-mu) p_hi, pd <= mu (-p_lo)
                    int r = irow();
                    ti.emplace_back(r, L.idx_pc[w][t][s], 1.0);
                    ti.emplace_back(r, L.idx_mu[w][t][s], env.p_hi[h]);
                    bi.push_back(env.p_hi[h]);
                    r = irow();
                    ti.emplace_back(r, L.idx_pd[w][t][s], 1.0);
                    ti.emplace_back(r, L.idx_mu[w][t][s], env.p_lo[h]);
                    bi.push_back(0.0);
                }
            }
        }
    }

    qp.Q.resize(nv, nv);
    qp.Q.setFromTriplets(tq.begin(), tq.end());
    qp.A_eq.resize(static_cast<int>(be.size()), nv);
    qp.A_eq.setFromTriplets(te.begin(), te.end());
    qp.b_eq = Eigen::Map<Eigen::VectorXd>(be.data(), static_cast<long>(be.size()));
    qp.A_in.resize(static_cast<int>(bi.size()), nv);
    qp.A_in.setFromTriplets(ti.begin(), ti.end());
    qp.b_in = Eigen::Map<Eigen::VectorXd>(bi.data(), static_cast<long>(bi.size()));
    return out;
}

BidDecision solve_bid(const CompiledBid& compiled, const BidOptions& opts) {
    opt::MiqpOptions mopts = opts.miqp;
    mopts.pairs = compiled.pairs;
    auto sol = opt::solve_miqp(compiled.qp, compiled.binaries, mopts);
    if (sol.status == opt::SolveStatus::Infeasible) {
        throw SolverError(
            "solve_bid: bidding problem infeasible; check extreme-scenario coverage "
            "around hour " + std::to_string(compiled.layout.start_hour));
    }
    if (sol.status != opt::SolveStatus::Optimal && sol.status != opt::SolveStatus::NodeLimit)
        throw SolverError("solve_bid: " + opt::to_string(sol.status));

    const BidLayout& L = compiled.layout;
    BidDecision bid;
    bid.start_hour = L.start_hour;
    bid.horizon = L.horizon;
    bid.objective = sol.objective;
    bid.nodes = sol.nodes;
    bid.P_e.resize(L.horizon);
    bid.R.resize(L.horizon);
    auto zeros = [&]() { return Eigen::MatrixXd::Zero(L.n_ev, L.horizon); };
    bid.p0 = zeros(); bid.delta_up = zeros(); bid.delta_dn = zeros();
    bid.lambda = zeros(); bid.flex = zeros(); bid.e0 = zeros();
    const auto& x = sol.x;
    for (int t = 0; t < L.horizon; ++t) {
        bid.P_e[t] = x[L.idx_Pe[t]];
        bid.R[t] = x[L.idx_R[t]];
        for (size_t s = 0; s < L.active[t].size(); ++s) {
            int n = L.active[t][s];
            bid.p0(n, t) = x[L.idx_p0[t][s]];
            bid.delta_up(n, t) = x[L.idx_dup[t][s]];
            bid.delta_dn(n, t) = x[L.idx_ddn[t][s]];
            bid.lambda(n, t) = x[L.idx_lambda[t][s]];
            bid.flex(n, t) = x[L.idx_flex[t][s]];
            bid.e0(n, t) = x[L.idx_e[t][s]];
        }
    }
    bid.scenarios.resize(L.n_scen);
    for (int w = 0; w < L.n_scen; ++w) {
        auto& sa = bid.scenarios[w];
        sa.signal = compiled.scenario_set.scenarios[w].value;
        sa.probability = compiled.scenario_set.scenarios[w].probability;
        sa.is_extreme = compiled.scenario_set.scenarios[w].is_extreme;
        sa.p_c = zeros(); sa.p_d = zeros(); sa.dup = zeros(); sa.ddn = zeros(); sa.mu = zeros();
        for (int t = 0; t < L.horizon; ++t)
            for (size_t s = 0; s < L.active[t].size(); ++s) {
                int n = L.active[t][s];
                sa.p_c(n, t) = x[L.idx_pc[w][t][s]];
                if (L.idx_pd[w][t][s] >= 0) sa.p_d(n, t) = x[L.idx_pd[w][t][s]];
                sa.dup(n, t) = x[L.idx_du[w][t][s]];
                sa.ddn(n, t) = x[L.idx_dd[w][t][s]];
                if (L.idx_mu[w][t][s] >= 0) sa.mu(n, t) = x[L.idx_mu[w][t][s]];
            }
    }

    // decision invariants
    for (int t = 0; t < L.horizon; ++t) {
        double sum_p0 = 0, sum_up = 0, sum_dn = 0;
        for (size_t s = 0; s < L.active[t].size(); ++s) {
            int n = L.active[t][s];
            sum_p0 += bid.p0(n, t);
            sum_up += bid.delta_up(n, t);
            sum_dn += bid.delta_dn(n, t);
        }
        double scale = 1.0 + std::abs(bid.P_e[t]);
        if (std::abs(bid.P_e[t] - sum_p0) > 1e-7 * scale)
            throw SolverError("solve_bid: energy bid does not match baselines");
        if (bid.R[t] < -1e-8 || bid.R[t] > std::min(sum_up, sum_dn) + 1e-6)
            throw SolverError("solve_bid: regulation bid violates capability bounds");
    }
    return bid;
}

MpcCommitment mpc_step(const EvaState& state,
                       const std::vector<EvProfile>& fleet,
                       const std::vector<Envelope>& envelopes,
                       const MarketPrices& prices,
                       const ScenarioSet& scenario_set,
                       const BidOptions& opts) {
    const int tau = state.hour;
    const int H = std::min(opts.lookahead, kHoursPerDay - tau);
    std::vector<double> mf(H);
    for (int t = 0; t < H; ++t) mf[t] = state.mileage.forecast(tau + t);
    CompiledBid compiled =
        compile_bidding(fleet, envelopes, prices, scenario_set, state, H, mf, opts);
    BidDecision bid = solve_bid(compiled, opts);

    MpcCommitment c;
    c.hour = tau;
    c.P_e = bid.P_e[0];
    c.R = bid.R[0];
    c.dispatch.P_hat = c.P_e;
    c.dispatch.R_hat = c.R;
    for (size_t s = 0; s < compiled.layout.active[0].size(); ++s) {
        int n = compiled.layout.active[0][s];
        c.active_fleet_indices.push_back(n);
        DispatchProblem::Ev ev;
        ev.id = fleet[n].id;
        ev.p0 = bid.p0(n, 0);
        ev.p_lo = envelopes[n].p_lo[tau];
        ev.p_hi = envelopes[n].p_hi[tau];
        ev.dup_cap = bid.delta_up(n, 0);
        ev.ddn_cap = bid.delta_dn(n, 0);
        ev.lambda = bid.lambda(n, 0);
        ev.eta_d = fleet[n].eta_d;
        ev.c_dp = prices.c_dp[tau];
        c.dispatch.evs.push_back(ev);
    }
    c.plan = std::move(bid);
    return c;
}

void update_state(EvaState& state,
                  const std::vector<DispatchedEnergy>& dispatched,
                  const std::vector<EvProfile>& fleet,
                  const std::vector<Envelope>& envelopes,
                  double tol) {
    if (dispatched.size() != fleet.size() || state.energy_kwh.size() != fleet.size())
        throw ValidationError("update_state: size mismatch");
    const int next = state.hour + 1;
    for (size_t n = 0; n < fleet.size(); ++n) {
        double e = state.energy_kwh[n] + fleet[n].eta_c * dispatched[n].charge_kwh -
                   dispatched[n].discharge_kwh / fleet[n].eta_d;
        const auto& env = envelopes[n];
        if (next < static_cast<int>(env.e_lo.size())) {
            double lo = env.e_lo[next], hi = env.e_hi[next];
            if (e < lo - tol || e > hi + tol) {
                std::clog << "update_state: EV " << fleet[n].id << " energy " << e
                          << " clamped into [" << lo << ", " << hi << "] at hour " << next << "\n";
            }
            e = std::clamp(e, lo, hi);
        }
        state.energy_kwh[n] = e;
    }
    state.hour = next;
}

}  // namespace eva
