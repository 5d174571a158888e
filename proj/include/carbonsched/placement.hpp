#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "carbonsched/common.hpp"
#include "carbonsched/hardware.hpp"
#include "carbonsched/workload.hpp"

namespace carbonsched {

enum class SlaMode { Hard, Soft };

std::string to_string(SlaMode mode);
SlaMode parse_sla_mode(std::string_view name);

struct PlacementOptions {
    SlaMode sla_mode = SlaMode::Hard;
    /// Soft mode only: joules charged per microsecond past a deadline.
    double penalty_j_per_us = 0.0;
    double network_j_per_byte = 0.0;
    /// solve_exact refuses larger problems.
    std::size_t exact_cutoff = 12;
    /// Below this many functions solve_exact enumerates without pruning.
    std::size_t enumeration_below = 6;
    /// 0 = unlimited. When exceeded, solve_exact throws SearchLimitExceeded.
    std::size_t max_nodes = 0;
};

/// A compute device together with its state at the start of the window.
struct DeviceState {
    ComputeDevice device;
    /// Earliest instant the device can start new work.
    Micros free_at = 0;
    /// FPGA bitstream currently loaded (app id), if any.
    std::optional<std::string> configured_app;
    /// False when power-gated: first use pays startup latency and energy.
    bool powered = true;
};

/// One window's placement instance: the commodities (functions grouped by
/// app), the compute devices with their residual availability, and the
/// storage media holding each object. A medium's bandwidth and capacity
/// here are the residual amounts available to this window.
struct PlacementProblem {
    std::vector<MicroFunction> functions;
    std::vector<DeviceState> devices;
    std::vector<StorageMedium> media;
    /// object id -> media ids holding it. Writes to an object absent from
    /// this map may target any medium.
    std::map<std::string, std::vector<std::string>> object_locations;
    Micros now = 0;
    Micros window_end = 0;
    PlacementOptions options;

    /// Sorts functions, devices and media by id (the tie-break order) and
    /// sorts each object's location list.
    void normalize();
    std::vector<std::string> issues() const;
    void validate() const;
};

struct EdgeCost {
    Joules compute_energy = 0.0;
    Joules data_energy = 0.0;
    Joules total = 0.0;
};

/// Media picked for each access: reads first, then writes, in order.
using MediaChoice = std::vector<const StorageMedium *>;

/// Compute time work / (capacity * speedup) plus, per access, median latency,
/// transfer time and the remote penalty, rounded up to whole microseconds.
/// Throws std::domain_error when `f` has no speedup for `device`.
Micros effective_duration(const MicroFunction &f, const ComputeDevice &device, const MediaChoice &media);

/// Marginal energy of running `f` on `device` with `media`: the busy-time
/// power above idle, plus bytes moved times each medium's active cost and
/// the network cost of remote accesses.
EdgeCost edge_cost(const MicroFunction &f, const ComputeDevice &device, const MediaChoice &media,
                   double network_j_per_byte);

/// edge_cost with the device's one-time setup folded in: the wake cost of a
/// gated device or the reconfiguration of an FPGA loaded for another app.
EdgeCost edge_cost(const MicroFunction &f, const DeviceState &device, const MediaChoice &media,
                   const PlacementProblem &problem);

/// Whether placing a function of `app` on the device pays startup first.
bool needs_setup(const DeviceState &device, const std::string &app);

/// A function's chosen device and media, by index into the problem.
struct OptionChoice {
    std::size_t device = 0;
    std::vector<std::size_t> media; ///< per access, reads then writes

    bool operator==(const OptionChoice &) const = default;
};

struct Placement {
    std::string function_id;
    std::optional<OptionChoice> choice; ///< nullopt = not placed
    std::string device_id;
    std::vector<std::string> media_ids;
    Micros start = 0;
    Micros end = 0;
    Micros duration = 0;
    EdgeCost cost;
    Joules penalty = 0.0;
    /// Placed and meets its deadline.
    bool feasible = false;
};

struct SolverStats {
    std::size_t nodes_expanded = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
    double wall_time_us = 0.0;
};

struct Assignment {
    /// Same order as the problem's functions.
    std::vector<Placement> placements;
    /// Sum of placed edge costs (plus soft-mode penalties), then one-time
    /// setup energy per device, in that fixed order.
    Joules total_cost = 0.0;
    std::size_t unplaced = 0;
    SolverStats stats;

    /// total_cost + unplaced_penalty * unplaced.
    Joules objective(const PlacementProblem &problem) const;
};

/// Charge per unplaced function in objective values. Larger than any
/// achievable total cost, so minimizing the objective minimizes the
/// unplaced count first.
Joules unplaced_penalty(const PlacementProblem &problem);

/// Schedules the chosen options (EDF per device from its ready time) and
/// computes the canonical cost. Placements that miss a deadline are marked
/// infeasible (hard mode) or charged a penalty (soft mode). In hard mode an
/// FPGA carrying two apps, or a late placement, throws std::invalid_argument
/// unless `allow_infeasible`.
Assignment evaluate_assignment(const PlacementProblem &problem, const std::vector<std::optional<OptionChoice>> &choice,
                               bool allow_infeasible = false);

class SearchLimitExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Minimum-objective assignment by branch and bound (plain enumeration for
/// small problems). Throws std::invalid_argument above the exact cutoff.
Assignment solve_exact(const PlacementProblem &problem);

/// Memoized placement decisions, reused across windows by one scheduler.
class PlacementMemo {
public:
    struct Entry {
        OptionChoice choice;
    };
    const Entry *find(const std::string &key) const;
    void store(const std::string &key, Entry entry);
    std::size_t size() const { return entries_.size(); }
    void clear() { entries_.clear(); }

private:
    std::unordered_map<std::string, Entry> entries_;
};

/// Greedy in ascending order of each function's cheapest edge; every pick
/// keeps the device's EDF schedule feasible. Decisions are memoized by
/// (app, function shape, residual state bucketed to 10% of the window).
Assignment solve_heuristic(const PlacementProblem &problem, PlacementMemo *memo = nullptr);

/// Cost-blind baseline: devices in rotation, first feasible option.
Assignment solve_round_robin(const PlacementProblem &problem);

/// Lagrangian bound on the fractional relaxation (functions divisible
/// across devices); never above solve_exact's objective.
Joules lower_bound(const PlacementProblem &problem);

struct SweepPoint {
    double scale = 1.0;
    Joules objective = 0.0;
    Assignment assignment;
};

/// Copy of `problem` with every relative deadline multiplied by `scale`.
PlacementProblem scale_deadlines(const PlacementProblem &problem, double scale);

/// solve_exact at each deadline scale. Scales must be ascending.
std::vector<SweepPoint> pareto_sweep(const PlacementProblem &problem, const std::vector<double> &scales);

} // namespace carbonsched
