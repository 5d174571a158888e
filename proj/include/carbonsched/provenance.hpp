#pragma once

#include <map>
#include <string>
#include <vector>

#include "carbonsched/common.hpp"
#include "carbonsched/hardware.hpp"

namespace carbonsched {

/// Canonical telemetry features.
namespace feature {
inline constexpr const char *kCpuCycles = "cpu_cycles";
inline constexpr const char *kAcceleratorCycles = "accelerator_cycles";
inline constexpr const char *kNetworkBytes = "network_bytes";
inline constexpr const char *kStorageBytesMoved = "storage_bytes_moved";
inline constexpr const char *kByteSecondsResident = "byte_seconds_resident";
} // namespace feature

const std::vector<std::string> &canonical_features();

struct TelemetrySample {
    std::string function_id;
    std::string device_id;
    std::map<std::string, double> features;
};

struct AttributionModel {
    std::map<std::string, double> coefficients; ///< joules per unit of feature
    Joules baseline = 0.0;                       ///< per sample interval
};

/// baseline + sum(coefficient * feature). Throws std::domain_error on a
/// feature the model has no coefficient for.
Joules estimate_energy(const AttributionModel &model, const TelemetrySample &sample);

struct LabeledSample {
    TelemetrySample sample;
    Joules measured = 0.0;
};

/// The design matrix does not have full column rank.
class RankDeficientError : public std::runtime_error {
public:
    RankDeficientError(std::vector<std::string> collinear);
    const std::vector<std::string> &collinear() const { return collinear_; }

private:
    std::vector<std::string> collinear_;
};

/// Least-squares fit of baseline plus one coefficient per feature, with any
/// negative coefficient (or baseline) clamped to zero and the rest refit.
/// Features are the union of keys across samples; a sample missing a key
/// contributes 0 for it. Throws InputError with fewer than features + 1
/// samples, RankDeficientError when columns are collinear.
AttributionModel fit_model(const std::vector<LabeledSample> &samples);

struct FitStatistics {
    std::size_t samples = 0;
    double rmse = 0.0;
    double max_abs_residual = 0.0;
    double r_squared = 0.0;
};

FitStatistics fit_statistics(const AttributionModel &model, const std::vector<LabeledSample> &samples);

/// How the gap between measured and estimated interval energy is booked.
enum class IdlePolicy { Proportional, Equal, OperatorOnly };

std::string to_string(IdlePolicy policy);
IdlePolicy parse_idle_policy(std::string_view name);

struct EnergyShare {
    Joules direct = 0.0;
    Joules idle_share = 0.0;
};

struct IntervalLedger {
    std::map<std::string, EnergyShare> shares;
    /// Energy that no function carries (empty intervals, OperatorOnly policy).
    Joules operator_residual = 0.0;
};

/// Splits an interval's measured energy across the functions that sampled
/// in it. Shares plus the operator residual sum to `measured_total`.
/// When the model over-estimates, direct energies are scaled down
/// proportionally so no share goes negative.
IntervalLedger attribute_interval(const AttributionModel &model, const std::vector<TelemetrySample> &samples,
                                  Joules measured_total, IdlePolicy policy = IdlePolicy::Proportional);

struct ProvenanceRecord {
    std::string function_id;
    Joules direct_energy = 0.0;
    Joules idle_share = 0.0;
    /// Sum over RPC children of (direct + idle_share + descendant_energy).
    Joules descendant_energy = 0.0;
    Grams carbon = 0.0;

    Joules own_energy() const { return direct_energy + idle_share; }
    Joules total_energy() const { return own_energy() + descendant_energy; }
};

/// Fills descendant_energy from child -> parent links. Throws CycleError on
/// a cycle and InputError when a link names an unknown function.
std::map<std::string, ProvenanceRecord> aggregate_provenance(std::map<std::string, ProvenanceRecord> records,
                                                             const std::map<std::string, std::string> &parent_of);

/// (energy / 3.6e6) * intensity at `t`.
Grams carbonize(Joules energy, const CarbonIntensitySeries &series, Micros t);

} // namespace carbonsched
