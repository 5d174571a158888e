#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "carbonsched/engine.hpp"
#include "carbonsched/hardware.hpp"
#include "carbonsched/placement.hpp"
#include "carbonsched/provenance.hpp"
#include "carbonsched/workload.hpp"

namespace carbonsched {

/// Reads a whole file; throws InputError naming the path when it cannot.
std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::string &content);

/// Device catalog JSON: {devices, media, objects, network_j_per_byte}.
/// Keys must match the field names; unknown keys are rejected. A device's
/// "embodied_rate" may be the string "calibrated".
Catalog parse_catalog(const nlohmann::json &doc);
Catalog load_catalog(const std::filesystem::path &path);
nlohmann::json catalog_to_json(const Catalog &catalog);

nlohmann::json device_to_json(const ComputeDevice &d);
ComputeDevice device_from_json(const nlohmann::json &j);
nlohmann::json medium_to_json(const StorageMedium &m);
StorageMedium medium_from_json(const nlohmann::json &j);

/// CSV with header t_us,g_per_kwh.
CarbonIntensitySeries parse_intensity_csv(std::istream &in);
CarbonIntensitySeries load_intensity(const std::filesystem::path &path);
void write_intensity_csv(std::ostream &out, const CarbonIntensitySeries &series);

Trace load_trace(const std::filesystem::path &path);

TraceSpec parse_trace_spec(const nlohmann::json &doc);
TraceSpec load_trace_spec(const std::filesystem::path &path);

/// Problem dump format for reproducing solver runs.
nlohmann::json problem_to_json(const PlacementProblem &p);
PlacementProblem problem_from_json(const nlohmann::json &j);
nlohmann::json assignment_to_json(const Assignment &a, bool include_wall_time = false);

/// Telemetry CSV: one column per feature plus measured_j, and optionally
/// function_id and device_id.
std::vector<LabeledSample> parse_telemetry_csv(std::istream &in);
nlohmann::json model_to_json(const AttributionModel &model, const std::optional<FitStatistics> &stats = std::nullopt);
AttributionModel model_from_json(const nlohmann::json &j);

/// Everything a simulate run needs, resolved from file, env and flags.
struct RunConfig {
    std::filesystem::path trace;
    std::filesystem::path catalog;
    std::optional<std::filesystem::path> intensity;
    std::optional<std::filesystem::path> model;
    std::filesystem::path output_dir = "out";
    SimConfig sim;
};

/// Applies a config document on top of `base`. Relative paths resolve
/// against `base_dir`. Unknown keys are rejected.
RunConfig apply_config(RunConfig base, const nlohmann::json &doc, const std::filesystem::path &base_dir);

/// Parses a JSON document, reporting syntax errors as InputError.
nlohmann::json parse_json(const std::string &text, const std::string &origin);

} // namespace carbonsched
