#pragma once

#include <limits>
#include <stdexcept>
#include <string>

namespace eva {

// Bad inputs, malformed files, violated preconditions. CLI exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Optimization failures (infeasible models, iteration limits). CLI exit code 2.
struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Simulation grid: 24 one-hour slots starting at 12:00 noon, so overnight
// charging sessions fit into one window without wrap-around.
inline constexpr int kHoursPerDay = 24;
inline constexpr int kGridStartWallHour = 12;

}  // namespace eva
