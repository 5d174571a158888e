#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "carbonsched/common.hpp"
#include "carbonsched/hardware.hpp"
#include "carbonsched/workload.hpp"

namespace carbonsched {

struct TradeoffPoint {
    std::string label;
    Joules energy = 0.0;
    double tail_latency = 0.0; ///< microseconds

    bool operator==(const TradeoffPoint &) const = default;
};

/// True when `p` is no worse than `q` in both coordinates and better in one.
bool dominates(const TradeoffPoint &p, const TradeoffPoint &q);

/// The non-dominated subset in ascending energy. Of several identical
/// points only the smallest label survives. Throws std::domain_error on a
/// negative or NaN coordinate.
std::vector<TradeoffPoint> pareto_frontier(std::vector<TradeoffPoint> points);

/// label,energy_j,tail_us,on_frontier for every point, sorted by
/// (energy, tail, label).
void write_frontier_csv(std::ostream &out, const std::vector<TradeoffPoint> &points);

/// Piecewise-constant request rate. Sample i holds until sample i+1, the
/// last one until `end`.
struct LoadProfile {
    std::vector<IntensitySample> samples; ///< (time, requests/s)
    Micros end = 0;

    void validate() const;
};

struct HybridOptions {
    double work_per_request = 1.0;
    double cpu_speedup = 1.0;
    double fpga_speedup = 1.0;
    /// Time-weighted quantile of the rate that the FPGA carries.
    double baseline_percentile = 0.1;
};

struct PlanSegment {
    Micros start = 0;
    Micros end = 0;
    double rate = 0.0;
    double fpga_rate = 0.0;
    double cpu_rate = 0.0;
};

/// Energy and SLA outcome of serving a profile one way.
struct ServingOutcome {
    Joules energy = 0.0;
    /// Ramps whose new capacity arrives too late for the deadline, plus
    /// segments whose service time alone exceeds it.
    std::size_t violations = 0;
};

struct HybridPlan {
    double baseline_rate = 0.0;
    std::vector<PlanSegment> segments;
    ServingOutcome hybrid;
    ServingOutcome cpu_only;
    ServingOutcome fpga_only;
};

/// Splits a load profile between one FPGA fixed at the baseline rate and an
/// elastic pool of CPUs absorbing the excess. The CPU-only and FPGA-only
/// references use elastic pools of whole devices that take the device's
/// startup latency to join. Throws InputError when the FPGA cannot sustain
/// the baseline rate.
HybridPlan split_hybrid(const LoadProfile &profile, const ComputeDevice &cpu, const ComputeDevice &fpga,
                        const SLA &sla, const HybridOptions &options = {});

/// Requests/s at the time-weighted `quantile` of a profile.
double rate_quantile(const LoadProfile &profile, double quantile);

struct AccessStats {
    double reads_per_s = 0.0;
    double writes_per_s = 0.0;
    double bytes_per_access = 0.0;
};

struct TieringOptions {
    /// Per-access tail latency bound (µs); defaults to the SLA deadline.
    std::optional<double> latency_bound;
    std::optional<Joules> energy_budget;
    /// Steady-state period the energy is computed over.
    double horizon_s = 1.0;
    /// At most this many objects are solved by exhaustive search.
    std::size_t exact_limit = 10;
};

struct TierPlan {
    std::map<std::string, std::string> placement; ///< object id -> medium id
    Joules energy = 0.0;
    bool exact = false;
};

/// The tiering problem has no solution. `binding()` is "latency",
/// "capacity" or "energy_budget".
class TieringError : public InputError {
public:
    TieringError(std::string binding, const std::string &what) : InputError(what), binding_(std::move(binding)) {}
    const std::string &binding() const { return binding_; }

private:
    std::string binding_;
};

/// Steady-state energy of keeping `object` on `medium` for `horizon_s`.
Joules tier_energy(const DataObject &object, const AccessStats &stats, const StorageMedium &medium, double horizon_s);

/// Worst-case latency of one access to `medium` (tail latency + transfer).
double tier_latency(const AccessStats &stats, const StorageMedium &medium);

/// Assigns objects to media at minimum steady-state energy subject to the
/// latency bound, media capacity and the energy budget. Exhaustive for up
/// to options.exact_limit objects (ties resolved toward lower medium index
/// for earlier object ids), greedy most-constrained-first beyond that.
TierPlan tier_data(const std::vector<DataObject> &objects, const std::map<std::string, AccessStats> &access,
                   const std::vector<StorageMedium> &media, const SLA &sla, const TieringOptions &options = {});

} // namespace carbonsched
