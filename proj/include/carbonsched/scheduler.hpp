#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carbonsched/common.hpp"
#include "carbonsched/hardware.hpp"
#include "carbonsched/workload.hpp"

namespace carbonsched {

enum class Policy { MufunctionExact, MufunctionHeuristic, FaasBaseline, RoundRobin, NoDefer };

std::string to_string(Policy policy);
/// Throws InputError listing the valid names.
Policy parse_policy(std::string_view name);
const std::vector<std::string> &policy_names();

enum class SolverMode { Exact, Heuristic };

std::string to_string(SolverMode mode);
SolverMode parse_solver_mode(std::string_view name);

/// Default scheduling window length.
inline constexpr Micros kDefaultWindow = 1000;

struct ScheduleWindow {
    std::size_t index = 0;
    Micros start = 0;
    Micros end = 0;
    std::vector<std::string> admitted;
    std::vector<std::string> deferred;

    Micros length() const { return end - start; }
};

/// Best achievable duration of a function, or nullopt when it cannot run
/// on any device.
using DurationEstimator = std::function<std::optional<Micros>(const MicroFunction &)>;

struct PartitionResult {
    std::vector<std::string> admit;
    std::vector<std::string> defer;
    /// Admitted although already past its latest feasible start.
    std::vector<std::string> infeasible;
};

/// Packs functions whose slack is below the window length into `window` and
/// defers the rest, never deferring a function into infeasibility. With a
/// carbon series, a function that could wait is still admitted when no
/// window it could wait for is greener than this one.
PartitionResult partition(const std::vector<MicroFunction> &pending, const ScheduleWindow &window,
                          const DurationEstimator &estimate, const CarbonIntensitySeries *carbon = nullptr);

/// Shortest duration over every device and media choice, ignoring queueing
/// and setup: the optimistic estimate used for slack.
std::optional<Micros> best_duration(const MicroFunction &f, const std::vector<ComputeDevice> &devices,
                                    const std::vector<StorageMedium> &media,
                                    const std::map<std::string, std::vector<std::string>> &object_locations);

/// Lowest intensity at any window start in [from, to] (stepping by `window`).
double min_intensity(const CarbonIntensitySeries &series, Micros from, Micros to, Micros window);

} // namespace carbonsched
