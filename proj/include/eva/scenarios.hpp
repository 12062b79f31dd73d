#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "eva/common.hpp"

namespace eva {

// Regulation signal samples at a fixed sub-hourly cadence (2 s in PJM RegD).
struct SignalTrace {
    double dt_seconds = 2.0;
    std::vector<double> samples;  // each in [-1, 1]

    int steps_per_hour() const { return static_cast<int>(3600.0 / dt_seconds); }
    void validate() const;
};

struct Scenario {
    double value = 0.0;
    double probability = 0.0;  // raw empirical frequency
    bool is_extreme = false;
};

// Typical scenarios are the nonempty signal bins (midpoint representative);
// the boundary values -1 and +1 are carried separately as extreme scenarios,
// always present even at zero probability. Raw probabilities over the whole
// set sum to one; objective_weights() renormalizes the typical mass to one
// and zeroes the extremes.
struct ScenarioSet {
    std::vector<Scenario> scenarios;
    double bin_width = 0.1;

    double typical_mass() const;
    std::vector<double> objective_weights() const;
    void validate() const;
};

ScenarioSet bin_signals(const SignalTrace& trace, double bin_width = 0.1);

// Accumulated absolute movement over the hour, including the step from the
// previous hour's final signal.
double mileage(const SignalTrace& trace, double s_prev);

// Mean of past observations for one hour-of-day bucket.
double forecast_mileage(const std::vector<double>& history);

// Expected hourly mileage if consecutive signals were independent draws from
// the binned marginal; used to prime forecasts before any hour has realized.
double iid_mileage_estimate(const ScenarioSet& set, int steps_per_hour);

// Trailing per-hour-of-day mean with a fallback for unseen hours.
class MileageForecaster {
public:
    explicit MileageForecaster(double fallback) : fallback_(fallback) {}
    void record(int hour_of_day, double m);
    double forecast(int hour_of_day) const;

private:
    std::array<std::vector<double>, kHoursPerDay> buckets_{};
    double sum_all_ = 0.0;
    int count_all_ = 0;
    double fallback_;
};

// Synthetic RegD-like replay trace: independent draws from a fixed marginal
// with point masses 0.041 / 0.069 at -1 / +1 and boundary bins 0.1 / 0.09.
SignalTrace synth_regd_trace(std::uint64_t seed, int hours, double dt_seconds = 2.0);

// CSV: timestamp_s,signal
void write_trace_csv(std::ostream& out, const SignalTrace& trace);
SignalTrace read_trace_csv(std::istream& in);

// CSV: value,probability,is_extreme
void write_scenarios_csv(std::ostream& out, const ScenarioSet& set);
ScenarioSet read_scenarios_csv(std::istream& in);

}  // namespace eva
