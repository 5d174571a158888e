#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carbonsched/common.hpp"
#include "carbonsched/hardware.hpp"

namespace carbonsched {

struct SLA {
    Micros deadline = 0; ///< relative to arrival
    /// Tail target. 1.0 is a hard per-invocation deadline; below 1 the
    /// deadline is checked as a fleet-level percentile per app.
    double percentile = 1.0;
    std::optional<Grams> carbon_budget;

    bool operator==(const SLA &) const = default;
};

struct ObjectAccess {
    std::string object_id;
    double bytes = 0.0;

    bool operator==(const ObjectAccess &) const = default;
};

struct MicroFunction {
    std::string id;
    std::string app_id;
    Micros arrival = 0;
    double work = 0.0; ///< work-units on the reference device
    /// Keyed by device kind name ("CPU", "FPGA", ...) or by a device id;
    /// an id entry overrides the kind entry.
    std::map<std::string, double> speedup;
    std::vector<ObjectAccess> reads;
    std::vector<ObjectAccess> writes;
    SLA sla;
    std::optional<Joules> energy_budget;
    std::optional<std::string> parent;

    Micros absolute_deadline() const { return arrival + sla.deadline; }
    /// Speedup on `device`, or nullopt when the function has no profile for it.
    std::optional<double> speedup_on(const ComputeDevice &device) const;

    bool operator==(const MicroFunction &) const = default;
};

using Trace = std::vector<MicroFunction>;

/// Invariant violations of a single function, each naming the field.
std::vector<std::string> function_issues(const MicroFunction &f);

/// Every invariant over a whole trace: per-function fields, unique ids,
/// sorted arrivals, resolvable parents and an acyclic call graph.
std::vector<std::string> trace_issues(const Trace &trace);

/// Follows parent links; returns the first cycle found (ids in call order),
/// or an empty vector when the graph is a forest.
std::vector<std::string> find_parent_cycle(const Trace &trace);

/// (arrival + deadline) - now - best_duration. Negative once infeasible.
Micros slack(const MicroFunction &f, Micros now, Micros best_duration);

/// Per-app distributions used by the trace generator.
struct AppProfile {
    double work_min = 1.0;
    double work_max = 1.0;
    std::map<std::string, double> speedup{{"CPU", 1.0}};
    Micros deadline_min = 1000;
    Micros deadline_max = 1000;
    double percentile = 1.0;
    std::vector<ObjectAccess> reads;
    std::vector<ObjectAccess> writes;
    std::optional<Joules> energy_budget;
    std::optional<Grams> carbon_budget;
    /// Probability that an invocation is an RPC issued by the app's
    /// previous invocation.
    double parent_probability = 0.0;
};

struct TraceSpec {
    Micros duration = 0;
    double base_rate = 0.0;  ///< arrivals per second
    double burst_rate = 0.0; ///< arrivals per second
    /// Fraction of each period spent in the burst state (at its start).
    double burst_duty = 0.0;
    Micros burst_period = 1'000'000;
    std::map<std::string, double> app_mix;
    std::uint64_t seed = 0;
    std::map<std::string, AppProfile> apps;

    /// Throws ValidationError.
    void validate() const;
};

/// Two-state modulated Poisson arrivals, sorted, fully determined by seed.
Trace generate_trace(const TraceSpec &spec);

/// JSON-lines trace format, one function per line.
std::string serialize_function(const MicroFunction &f);
void write_trace(std::ostream &out, const Trace &trace);
/// Throws ParseError (with line number) or ValidationError.
Trace parse_trace(std::istream &in);
MicroFunction parse_function(std::string_view line, std::size_t line_number);

} // namespace carbonsched
