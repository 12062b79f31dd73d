#include "eva/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "eva/csv.hpp"

namespace eva {

void SignalTrace::validate() const {
    if (dt_seconds <= 0.0) throw ValidationError("trace: dt_seconds must be positive");
    for (size_t i = 0; i < samples.size(); ++i) {
        if (std::abs(samples[i]) > 1.0 + 1e-12)
            throw ValidationError("trace: sample " + std::to_string(i) + " outside [-1,1]");
    }
}

double ScenarioSet::typical_mass() const {
    double m = 0.0;
    for (const auto& s : scenarios)
        if (!s.is_extreme) m += s.probability;
    return m;
}

std::vector<double> ScenarioSet::objective_weights() const {
    double mass = typical_mass();
    std::vector<double> w(scenarios.size(), 0.0);
    if (mass <= 0.0) return w;
    for (size_t i = 0; i < scenarios.size(); ++i)
        if (!scenarios[i].is_extreme) w[i] = scenarios[i].probability / mass;
    return w;
}

void ScenarioSet::validate() const {
    if (bin_width <= 0.0) throw ValidationError("scenario set: bin_width must be positive");
    double total = 0.0;
    bool has_lo = false, has_hi = false;
    for (const auto& s : scenarios) {
        if (s.probability < 0.0) throw ValidationError("scenario set: negative probability");
        total += s.probability;
        if (s.is_extreme) {
            if (s.value == -1.0) has_lo = true;
            else if (s.value == 1.0) has_hi = true;
            else throw ValidationError("scenario set: extreme scenarios must be exactly -1 or +1");
        }
    }
    if (!has_lo || !has_hi) throw ValidationError("scenario set: both extremes must be present");
    if (std::abs(total - 1.0) > 1e-9)
        throw ValidationError("scenario set: probabilities must sum to 1");
    double mass = typical_mass();
    if (mass > 0.0) {
        double wsum = 0.0;
        for (double w : objective_weights()) wsum += w;
        if (std::abs(wsum - 1.0) > 1e-9)
            throw ValidationError("scenario set: typical weights must renormalize to 1");
    }
}

ScenarioSet bin_signals(const SignalTrace& trace, double bin_width) {
    if (trace.samples.empty()) throw ValidationError("bin_signals: empty trace");
    if (bin_width <= 0.0 || bin_width > 2.0) throw ValidationError("bin_signals: bad bin width");
    trace.validate();
    const int nbins = static_cast<int>(std::round(2.0 / bin_width));
    std::vector<long> counts(nbins, 0);
    long n_lo = 0, n_hi = 0;
    for (double s : trace.samples) {
        if (s <= -1.0) {
            ++n_lo;
        } else if (s >= 1.0) {
            ++n_hi;
        } else {
            int idx = static_cast<int>(std::floor((s + 1.0) / bin_width));
            idx = std::clamp(idx, 0, nbins - 1);
            ++counts[idx];
        }
    }
    const double total = static_cast<double>(trace.samples.size());
    ScenarioSet set;
    set.bin_width = bin_width;
    set.scenarios.push_back({-1.0, n_lo / total, true});
    for (int i = 0; i < nbins; ++i) {
        if (counts[i] == 0) continue;
        double mid = -1.0 + (i + 0.5) * bin_width;
        set.scenarios.push_back({mid, counts[i] / total, false});
    }
    set.scenarios.push_back({1.0, n_hi / total, true});
    set.validate();
    return set;
}

double mileage(const SignalTrace& trace, double s_prev) {
    if (std::abs(s_prev) > 1.0 + 1e-12)
        throw ValidationError("mileage: s_prev outside [-1,1]");
    double m = 0.0;
    double prev = s_prev;
    for (double s : trace.samples) {
        m += std::abs(s - prev);
        prev = s;
    }
    return m;
}

double forecast_mileage(const std::vector<double>& history) {
    if (history.empty()) throw ValidationError("forecast_mileage: empty history");
    double sum = 0.0;
    for (double v : history) sum += v;
    return sum / static_cast<double>(history.size());
}

double iid_mileage_estimate(const ScenarioSet& set, int steps_per_hour) {
    double mean_abs_diff = 0.0;
    for (const auto& a : set.scenarios)
        for (const auto& b : set.scenarios)
            mean_abs_diff += a.probability * b.probability * std::abs(a.value - b.value);
    return mean_abs_diff * steps_per_hour;
}

void MileageForecaster::record(int hour_of_day, double m) {
    buckets_[((hour_of_day % kHoursPerDay) + kHoursPerDay) % kHoursPerDay].push_back(m);
    sum_all_ += m;
    ++count_all_;
}

double MileageForecaster::forecast(int hour_of_day) const {
    const auto& b = buckets_[((hour_of_day % kHoursPerDay) + kHoursPerDay) % kHoursPerDay];
    if (!b.empty()) return forecast_mileage(b);
    if (count_all_ > 0) return sum_all_ / count_all_;
    return fallback_;
}

SignalTrace synth_regd_trace(std::uint64_t seed, int hours, double dt_seconds) {
    // Marginal: extremes 0.041/0.069, boundary bins 0.1/0.09, remaining mass
    // spread evenly over the 18 interior bins.
    constexpr double kPLo = 0.041, kPHi = 0.069;
    constexpr double kPBinLo = 0.10, kPBinHi = 0.09;
    const double interior = (1.0 - kPLo - kPHi - kPBinLo - kPBinHi) / 18.0;
    std::vector<double> mass;
    mass.push_back(kPLo);    // s = -1
    mass.push_back(kPBinLo); // [-1.0, -0.9)
    for (int i = 0; i < 18; ++i) mass.push_back(interior);
    mass.push_back(kPBinHi); // [0.9, 1.0)
    mass.push_back(kPHi);    // s = +1

    SignalTrace trace;
    trace.dt_seconds = dt_seconds;
    const long n = static_cast<long>(hours) * trace.steps_per_hour();
    trace.samples.reserve(n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (long i = 0; i < n; ++i) {
        double u = u01(rng);
        double acc = 0.0;
        int pick = static_cast<int>(mass.size()) - 1;
        for (size_t j = 0; j < mass.size(); ++j) {
            acc += mass[j];
            if (u < acc) { pick = static_cast<int>(j); break; }
        }
        if (pick == 0) {
            trace.samples.push_back(-1.0);
        } else if (pick == static_cast<int>(mass.size()) - 1) {
            trace.samples.push_back(1.0);
        } else {
            double lo = -1.0 + (pick - 1) * 0.1;
            trace.samples.push_back(lo + 0.1 * u01(rng));
        }
    }
    return trace;
}

void write_trace_csv(std::ostream& out, const SignalTrace& trace) {
    out << "timestamp_s,signal\n";
    for (size_t i = 0; i < trace.samples.size(); ++i)
        out << csv::fmt(i * trace.dt_seconds) << ',' << csv::fmt(trace.samples[i]) << '\n';
}

SignalTrace read_trace_csv(std::istream& in) {
    auto rows = csv::read_rows(in);
    if (rows.empty()) throw ValidationError("trace CSV: empty file");
    if (rows[0] != csv::split("timestamp_s,signal"))
        throw ValidationError("trace CSV: unexpected header");
    SignalTrace trace;
    double prev_ts = -1.0;
    for (size_t r = 1; r < rows.size(); ++r) {
        std::string ctx = "trace CSV row " + std::to_string(r);
        if (rows[r].size() != 2) throw ValidationError(ctx + ": wrong column count");
        double ts = csv::to_double(rows[r][0], ctx);
        if (r == 2) trace.dt_seconds = ts - prev_ts;
        prev_ts = ts;
        trace.samples.push_back(csv::to_double(rows[r][1], ctx));
    }
    trace.validate();
    return trace;
}

void write_scenarios_csv(std::ostream& out, const ScenarioSet& set) {
    out << "value,probability,is_extreme\n";
    for (const auto& s : set.scenarios)
        out << csv::fmt(s.value) << ',' << csv::fmt(s.probability) << ','
            << (s.is_extreme ? 1 : 0) << '\n';
}

ScenarioSet read_scenarios_csv(std::istream& in) {
    auto rows = csv::read_rows(in);
    if (rows.empty()) throw ValidationError("scenario CSV: empty file");
    if (rows[0] != csv::split("value,probability,is_extreme"))
        throw ValidationError("scenario CSV: unexpected header");
    ScenarioSet set;
    for (size_t r = 1; r < rows.size(); ++r) {
        std::string ctx = "scenario CSV row " + std::to_string(r);
        if (rows[r].size() != 3) throw ValidationError(ctx + ": wrong column count");
        Scenario s;
        s.value = csv::to_double(rows[r][0], ctx);
        s.probability = csv::to_double(rows[r][1], ctx);
        s.is_extreme = csv::to_long(rows[r][2], ctx) != 0;
        set.scenarios.push_back(s);
    }
    set.validate();
    return set;
}

}  // namespace eva
