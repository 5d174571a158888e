#include "carbonsched/hardware.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace carbonsched {

std::string to_string(DeviceKind kind)
{
    switch (kind) {
    case DeviceKind::CPU: return "CPU";
    case DeviceKind::GPU: return "GPU";
    case DeviceKind::FPGA: return "FPGA";
    case DeviceKind::OTHER: return "OTHER";
    }
    return "OTHER";
}

std::string to_string(StorageTier tier)
{
    switch (tier) {
    case StorageTier::DRAM: return "DRAM";
    case StorageTier::NVM: return "NVM";
    case StorageTier::SSD: return "SSD";
    case StorageTier::HDD: return "HDD";
    }
    return "DRAM";
}

DeviceKind parse_device_kind(std::string_view name)
{
    if (name == "CPU") return DeviceKind::CPU;
    if (name == "GPU") return DeviceKind::GPU;
    if (name == "FPGA") return DeviceKind::FPGA;
    if (name == "OTHER") return DeviceKind::OTHER;
    throw InputError("unknown device kind '" + std::string(name) + "' (expected CPU, GPU, FPGA, OTHER)");
}

StorageTier parse_storage_tier(std::string_view name)
{
    if (name == "DRAM") return StorageTier::DRAM;
    if (name == "NVM") return StorageTier::NVM;
    if (name == "SSD") return StorageTier::SSD;
    if (name == "HDD") return StorageTier::HDD;
    throw InputError("unknown storage tier '" + std::string(name) + "' (expected DRAM, NVM, SSD, HDD)");
}

namespace {

void device_issues(const ComputeDevice &d, std::vector<std::string> &out)
{
    const std::string where = "device '" + d.id + "': ";
    if (d.id.empty()) out.push_back("device with empty id");
    if (!(d.peak_power > 0.0)) out.push_back(where + "peak_power must be > 0");
    if (!(d.capacity > 0.0)) out.push_back(where + "capacity must be > 0");
    if (!(d.idle_fraction >= 0.0 && d.idle_fraction <= 1.0))
        out.push_back(where + "idle_fraction must be in [0, 1]");
    if (d.startup_latency < 0) out.push_back(where + "startup_latency must be >= 0");
    if (!(d.startup_energy >= 0.0)) out.push_back(where + "startup_energy must be >= 0");
    if (!(d.embodied_rate >= 0.0)) out.push_back(where + "embodied_rate must be >= 0");
}

void medium_issues(const StorageMedium &m, std::vector<std::string> &out)
{
    const std::string where = "medium '" + m.id + "': ";
    if (m.id.empty()) out.push_back("medium with empty id");
    if (!(m.capacity > 0.0)) out.push_back(where + "capacity must be > 0");
    if (!(m.bandwidth > 0.0)) out.push_back(where + "bandwidth must be > 0");
    if (!(m.access_latency_p50 >= 0.0)) out.push_back(where + "access_latency_p50 must be >= 0");
    if (!(m.access_latency_tail >= m.access_latency_p50))
        out.push_back(where + "access_latency_tail must be >= access_latency_p50");
    if (!(m.active_power_per_bw >= 0.0)) out.push_back(where + "active_power_per_bw must be >= 0");
    if (!(m.idle_power_per_byte >= 0.0)) out.push_back(where + "idle_power_per_byte must be >= 0");
    if (!(m.remote_access_penalty >= 0.0)) out.push_back(where + "remote_access_penalty must be >= 0");
}

void throw_if_any(std::vector<std::string> issues)
{
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

} // namespace

void ComputeDevice::validate() const
{
    std::vector<std::string> issues;
    device_issues(*this, issues);
    throw_if_any(std::move(issues));
}

bool StorageMedium::is_local_to(const std::string &device_id) const
{
    return std::find(local_to.begin(), local_to.end(), device_id) != local_to.end();
}

void StorageMedium::validate() const
{
    std::vector<std::string> issues;
    medium_issues(*this, issues);
    throw_if_any(std::move(issues));
}

void DataObject::validate() const
{
    std::vector<std::string> issues;
    if (id.empty()) issues.push_back("object with empty id");
    if (!(size > 0.0)) issues.push_back("object '" + id + "': size must be > 0");
    throw_if_any(std::move(issues));
}

CarbonIntensitySeries::CarbonIntensitySeries(std::vector<IntensitySample> samples)
    : samples_(std::move(samples))
{
    std::vector<std::string> issues;
    for (std::size_t i = 0; i < samples_.size(); ++i) {
        if (!(samples_[i].intensity >= 0.0))
            issues.push_back("intensity sample " + std::to_string(i) + " is negative");
        if (i > 0 && samples_[i].time <= samples_[i - 1].time)
            issues.push_back("intensity sample " + std::to_string(i) + " timestamp does not increase");
    }
    throw_if_any(std::move(issues));
}

CarbonIntensitySeries CarbonIntensitySeries::constant(double intensity)
{
    return CarbonIntensitySeries({{0, intensity}});
}

Watts power_draw(const ComputeDevice &device, double utilization)
{
    if (!(utilization >= 0.0 && utilization <= 1.0))
        throw std::domain_error("utilization " + std::to_string(utilization) + " outside [0, 1]");
    const Watts idle = device.idle_power();
    if (utilization == 1.0) return device.peak_power;
    return std::min(device.peak_power, idle + (device.peak_power - idle) * utilization);
}

Joules energy_over(const ComputeDevice &device, std::span<const LoadSegment> segments)
{
    Joules total = 0.0;
    for (const auto &s : segments) {
        if (s.duration < 0) throw std::domain_error("negative segment duration");
        total += power_draw(device, s.utilization) * to_seconds(s.duration);
    }
    return total;
}

double intensity_at(const CarbonIntensitySeries &series, Micros t)
{
    const auto &s = series.samples();
    if (s.empty()) throw std::domain_error("empty carbon intensity series");
    if (t < s.front().time)
        throw std::domain_error("time " + std::to_string(t) + " precedes the first intensity sample");
    auto it = std::upper_bound(s.begin(), s.end(), t,
                               [](Micros value, const IntensitySample &x) { return value < x.time; });
    return std::prev(it)->intensity;
}

Grams embodied_carbon(const ComputeDevice &device, Micros duration)
{
    if (duration < 0) throw std::domain_error("negative duration");
    return device.embodied_rate * to_seconds(duration);
}

double calibrated_embodied_rate(const ComputeDevice &device, double utilization, double intensity,
                                double share)
{
    if (!(share >= 0.0 && share < 1.0)) throw std::domain_error("embodied share must be in [0, 1)");
    // Operational grams per second at the reference point.
    const double operational = power_draw(device, utilization) / kJoulesPerKwh * intensity;
    return operational * share / (1.0 - share);
}

const ComputeDevice *Catalog::find_device(std::string_view id) const
{
    for (const auto &d : devices)
        if (d.id == id) return &d;
    return nullptr;
}

const StorageMedium *Catalog::find_medium(std::string_view id) const
{
    for (const auto &m : media)
        if (m.id == id) return &m;
    return nullptr;
}

const DataObject *Catalog::find_object(std::string_view id) const
{
    for (const auto &o : objects)
        if (o.id == id) return &o;
    return nullptr;
}

std::vector<std::string> Catalog::issues() const
{
    std::vector<std::string> out;
    std::set<std::string> ids;
    for (const auto &d : devices) {
        device_issues(d, out);
        if (!ids.insert(d.id).second) out.push_back("duplicate id '" + d.id + "'");
    }
    for (const auto &m : media) {
        medium_issues(m, out);
        if (!ids.insert(m.id).second) out.push_back("duplicate id '" + m.id + "'");
        for (const auto &dev : m.local_to)
            if (!find_device(dev)) out.push_back("medium '" + m.id + "': local_to names unknown device '" + dev + "'");
    }
    std::set<std::string> object_ids;
    for (const auto &o : objects) {
        if (o.id.empty()) out.push_back("object with empty id");
        if (!(o.size > 0.0)) out.push_back("object '" + o.id + "': size must be > 0");
        if (!object_ids.insert(o.id).second) out.push_back("duplicate object id '" + o.id + "'");
        if (!find_medium(o.home)) out.push_back("object '" + o.id + "': home '" + o.home + "' is not a medium");
        for (const auto &r : o.replicas)
            if (!find_medium(r)) out.push_back("object '" + o.id + "': replica '" + r + "' is not a medium");
    }
    if (!(network_j_per_byte >= 0.0)) out.push_back("network_j_per_byte must be >= 0");
    return out;
}

void Catalog::validate() const { throw_if_any(issues()); }

} // namespace carbonsched
