#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "carbonsched/common.hpp"

namespace carbonsched {

enum class DeviceKind { CPU, GPU, FPGA, OTHER };
enum class StorageTier { DRAM, NVM, SSD, HDD };

std::string to_string(DeviceKind kind);
std::string to_string(StorageTier tier);
/// Throws InputError on an unknown name.
DeviceKind parse_device_kind(std::string_view name);
StorageTier parse_storage_tier(std::string_view name);

/// Fraction of peak power drawn at zero load when a catalog does not say.
inline constexpr double kDefaultIdleFraction = 0.5;

struct ComputeDevice {
    std::string id;
    DeviceKind kind = DeviceKind::CPU;
    Watts peak_power = 0.0;
    double idle_fraction = kDefaultIdleFraction;
    /// Work-units per second on the reference scale (speedup 1).
    double capacity = 0.0;
    /// Cold start, or reconfiguration for an FPGA.
    Micros startup_latency = 0;
    Joules startup_energy = 0.0;
    /// Embodied carbon amortized per second of existence.
    double embodied_rate = 0.0;

    Watts idle_power() const { return idle_fraction * peak_power; }

    /// Throws ValidationError listing every broken field.
    void validate() const;
};

struct StorageMedium {
    std::string id;
    StorageTier tier = StorageTier::DRAM;
    double capacity = 0.0; ///< bytes
    /// Watts per (byte/second) of achieved bandwidth, i.e. joules per byte moved.
    double active_power_per_bw = 0.0;
    /// Watts per byte resident.
    double idle_power_per_byte = 0.0;
    double access_latency_p50 = 0.0;  ///< microseconds
    double access_latency_tail = 0.0; ///< microseconds
    double bandwidth = 0.0;           ///< bytes per second
    /// Added to each access made from a device the medium is not local to.
    double remote_access_penalty = 0.0; ///< microseconds
    /// Devices that reach this medium without the remote penalty.
    std::vector<std::string> local_to;

    bool is_local_to(const std::string &device_id) const;
    void validate() const;
};

struct IntensitySample {
    Micros time = 0;
    double intensity = 0.0; ///< gCO2e per kWh

    bool operator==(const IntensitySample &) const = default;
};

/// Grid carbon intensity as a right-continuous step function.
class CarbonIntensitySeries {
public:
    CarbonIntensitySeries() = default;
    /// Throws ValidationError unless timestamps strictly increase and
    /// intensities are non-negative.
    explicit CarbonIntensitySeries(std::vector<IntensitySample> samples);

    static CarbonIntensitySeries constant(double intensity);

    const std::vector<IntensitySample> &samples() const { return samples_; }
    bool empty() const { return samples_.empty(); }

private:
    std::vector<IntensitySample> samples_;
};

struct LoadSegment {
    Micros duration = 0;
    double utilization = 0.0;
};

/// idle + (peak - idle) * utilization. Throws std::domain_error outside [0, 1].
Watts power_draw(const ComputeDevice &device, double utilization);

/// Energy of a piecewise-constant utilization trace.
Joules energy_over(const ComputeDevice &device, std::span<const LoadSegment> segments);

/// Step lookup: the latest sample at or before `t`.
double intensity_at(const CarbonIntensitySeries &series, Micros t);

Grams embodied_carbon(const ComputeDevice &device, Micros duration);

/// Reference operating point for calibrating embodied carbon.
inline constexpr double kReferenceUtilization = 0.5;
inline constexpr double kReferenceIntensity = 400.0; // gCO2e/kWh
inline constexpr double kDefaultEmbodiedShare = 1.0 / 3.0;

/// Embodied rate (g/s) that makes embodied carbon `share` of the lifecycle
/// total when the device runs at `utilization` on a grid at `intensity`.
double calibrated_embodied_rate(const ComputeDevice &device,
                                double utilization = kReferenceUtilization,
                                double intensity = kReferenceIntensity,
                                double share = kDefaultEmbodiedShare);

/// A single data object resident in storage.
struct DataObject {
    std::string id;
    double size = 0.0; ///< bytes
    std::string home;  ///< StorageMedium id
    /// Additional media holding a readable copy.
    std::vector<std::string> replicas;

    void validate() const;
};

/// Everything a device catalog file describes.
struct Catalog {
    std::vector<ComputeDevice> devices;
    std::vector<StorageMedium> media;
    std::vector<DataObject> objects;
    /// Energy per byte crossing the network on remote accesses.
    double network_j_per_byte = 0.0;

    const ComputeDevice *find_device(std::string_view id) const;
    const StorageMedium *find_medium(std::string_view id) const;
    const DataObject *find_object(std::string_view id) const;

    /// Field invariants, unique ids, and object homes that resolve.
    void validate() const;
    /// Same checks, collected instead of thrown.
    std::vector<std::string> issues() const;
};

} // namespace carbonsched
