#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carbonsched/common.hpp"
#include "carbonsched/hardware.hpp"
#include "carbonsched/placement.hpp"
#include "carbonsched/provenance.hpp"
#include "carbonsched/scheduler.hpp"
#include "carbonsched/workload.hpp"

namespace carbonsched {

/// Event kinds in tie-break rank order at equal timestamps.
enum class EventKind { Completion, IntensityChange, WindowBoundary, Arrival, Start, Custom };

struct Event {
    Micros time = 0;
    EventKind kind = EventKind::Custom;
    std::uint64_t id = 0;
    /// Function index for Arrival/Start/Completion, window index for
    /// WindowBoundary, sample index for IntensityChange.
    std::size_t payload = 0;
};

/// Strict total order: time, then kind rank, then id.
bool event_before(const Event &a, const Event &b);

/// FaaS cold start used when a configuration does not set one.
inline constexpr Micros kDefaultColdStart = 125'000;
inline constexpr Micros kDefaultKeepAlive = 60'000'000;

struct SimConfig {
    Policy policy = Policy::MufunctionHeuristic;
    Micros window = kDefaultWindow;
    /// Solver for no-defer (mufunction-* policies fix their own).
    SolverMode solver = SolverMode::Heuristic;
    SlaMode sla_mode = SlaMode::Hard;
    double sla_penalty_j_per_us = 0.0;
    IdlePolicy idle_attribution = IdlePolicy::Proportional;
    std::uint64_t seed = 0;
    /// Simulated span; defaults to the last arrival plus the longest
    /// deadline. Always extended to cover the last completion.
    std::optional<Micros> horizon;
    /// Gate devices left idle for a whole window.
    bool power_gating = false;
    /// Windowed policies wait for greener windows when slack allows.
    bool carbon_aware = true;
    Micros cold_start = kDefaultColdStart;
    Micros keep_alive = kDefaultKeepAlive;
    /// Attribution model; defaults to one derived from the catalog.
    std::optional<AttributionModel> model;
    std::size_t exact_cutoff = 12;
    std::size_t max_nodes = 2'000'000;
    /// Include solver wall time in exports (makes them non-reproducible).
    bool record_wall_time = false;
};

struct ScheduleRow {
    std::string function_id;
    std::string app_id;
    std::size_t window = 0;
    std::string device_id; ///< empty when the function never ran
    std::vector<std::string> media_ids;
    Micros start = 0;
    Micros end = 0;
    Joules energy = 0.0; ///< direct + idle share
    Grams carbon = 0.0;
    bool violated = false;
    bool ran = false;
};

struct TimelineRow {
    std::string device_id;
    Micros start = 0;
    Micros end = 0;
    std::string state; ///< busy | idle | gated
    Watts power = 0.0;
    Joules energy = 0.0;
};

struct AppRollup {
    std::size_t functions = 0;
    std::size_t violations = 0;
    Joules energy = 0.0;
    Grams carbon = 0.0;
};

struct SolverTotals {
    std::size_t calls = 0;
    std::size_t exact_calls = 0;
    std::size_t heuristic_calls = 0;
    std::size_t round_robin_calls = 0;
    /// Exact requested but the window was too large or hit the node limit.
    std::size_t fallbacks = 0;
    std::size_t nodes_expanded = 0;
    std::size_t cache_hits = 0;
    std::size_t cache_misses = 0;
    double wall_time_us = 0.0;
};

struct Metrics {
    std::string policy;
    Micros horizon = 0;
    std::size_t windows = 0;
    std::size_t functions = 0;
    std::size_t completed = 0;

    Joules total_energy = 0.0;
    Joules device_energy = 0.0; ///< includes startup lumps
    Joules startup_energy = 0.0;
    Joules media_energy = 0.0;
    Joules network_energy = 0.0;
    Grams operational_carbon = 0.0;
    Grams embodied_carbon = 0.0;
    Grams total_carbon = 0.0;

    /// deadline_violations + tail_breaches + unschedulable.
    std::size_t sla_violations = 0;
    double violation_rate = 0.0;
    std::size_t deadline_violations = 0;
    /// Apps whose on-time fraction fell below their percentile target.
    std::size_t tail_breaches = 0;
    /// Functions no device can run at all.
    std::size_t unschedulable = 0;
    std::size_t infeasible_at_admission = 0;
    std::size_t energy_budget_overruns = 0;
    std::size_t carbon_budget_overruns = 0;

    std::map<std::string, double> device_utilization;
    std::map<std::string, AppRollup> apps;
    SolverTotals solver;
    Micros cold_start_time_total = 0;
    std::size_t cold_starts = 0;

    Joules provenance_total = 0.0; ///< sum of direct + idle shares
    Joules operator_residual = 0.0;
};

struct SimResult {
    Metrics metrics;
    std::vector<ScheduleRow> schedule;             ///< trace order
    std::map<std::string, ProvenanceRecord> provenance;
    std::vector<TimelineRow> timeline;
};

/// Attribution model whose coefficients are the catalog's mean marginal
/// costs: busy watts per cycle, joules per byte moved and sent.
AttributionModel catalog_model(const Catalog &catalog);

/// Locations of each catalog object (home first, then replicas).
std::map<std::string, std::vector<std::string>> object_locations(const Catalog &catalog);

/// Runs the discrete-event simulation. Throws ValidationError on invalid
/// inputs and InvariantViolation if the engine breaks its own ordering.
SimResult simulate(const Trace &trace, const Catalog &catalog, const CarbonIntensitySeries &intensity,
                   const SimConfig &config);

struct ComparisonRow {
    std::string policy;
    Metrics metrics;
};

/// simulate once per policy with otherwise identical configuration.
/// Throws InputError with fewer than two policies.
std::vector<ComparisonRow> compare_policies(const Trace &trace, const Catalog &catalog,
                                            const CarbonIntensitySeries &intensity, const SimConfig &config,
                                            const std::vector<Policy> &policies);

void write_metrics_json(std::ostream &out, const Metrics &metrics, bool include_wall_time = false);
void write_schedule_csv(std::ostream &out, const std::vector<ScheduleRow> &rows);
void write_provenance_csv(std::ostream &out, const SimResult &result);
void write_timeline_csv(std::ostream &out, const std::vector<TimelineRow> &rows);

} // namespace carbonsched
