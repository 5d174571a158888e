#include "carbonsched/io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace carbonsched {

using nlohmann::json;
namespace fs = std::filesystem;

std::string read_file(const fs::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path &path, const std::string &content)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

json parse_json(const std::string &text, const std::string &origin)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        throw InputError(origin + ": " + e.what());
    }
}

namespace {

/// Collects unknown-key and type problems for one object.
class Reader {
public:
    Reader(const json &j, std::string where, std::vector<std::string> &issues) : j_(j), where_(std::move(where)), issues_(issues)
    {
        if (!j_.is_object()) issues_.push_back(where_ + ": expected an object");
    }

    void allow(std::initializer_list<const char *> keys)
    {
        if (!j_.is_object()) return;
        std::set<std::string> ok(keys.begin(), keys.end());
        for (const auto &[k, _] : j_.items())
            if (!ok.count(k)) issues_.push_back(where_ + ": unknown key '" + k + "'");
    }

    bool has(const char *key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }

    template <class T>
    T get(const char *key, T fallback = T{}, bool required = false)
    {
        if (!has(key)) {
            if (required) issues_.push_back(where_ + ": missing key '" + std::string(key) + "'");
            return fallback;
        }
        try {
            return j_.at(key).get<T>();
        } catch (const json::exception &) {
            issues_.push_back(where_ + ": key '" + std::string(key) + "' has the wrong type");
            return fallback;
        }
    }

    const json &at(const char *key) const { return j_.at(key); }

private:
    const json &j_;
    std::string where_;
    std::vector<std::string> &issues_;
};

void throw_if(std::vector<std::string> &issues)
{
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

template <class F>
auto parse_enum(F f, const std::string &name, const std::string &where, std::vector<std::string> &issues)
    -> decltype(f(name))
{
    try {
        return f(name);
    } catch (const InputError &e) {
        issues.push_back(where + ": " + e.what());
        return decltype(f(name)){};
    }
}

ComputeDevice read_device(const json &j, const std::string &where, std::vector<std::string> &issues)
{
    Reader r(j, where, issues);
    r.allow({"id", "kind", "peak_power", "idle_fraction", "capacity", "startup_latency", "startup_energy", "embodied_rate"});
    ComputeDevice d;
    d.id = r.get<std::string>("id", "", true);
    d.kind = parse_enum(parse_device_kind, r.get<std::string>("kind", "", true), where, issues);
    d.peak_power = r.get<double>("peak_power", 0.0, true);
    d.idle_fraction = r.get<double>("idle_fraction", kDefaultIdleFraction);
    d.capacity = r.get<double>("capacity", 0.0, true);
    d.startup_latency = r.get<Micros>("startup_latency", 0);
    d.startup_energy = r.get<double>("startup_energy", 0.0);
    if (r.has("embodied_rate") && r.at("embodied_rate").is_string()) {
        if (r.at("embodied_rate").get<std::string>() != "calibrated") {
            issues.push_back(where + ": embodied_rate must be a number or \"calibrated\"");
        } else if (d.peak_power > 0.0 && d.idle_fraction >= 0.0 && d.idle_fraction <= 1.0) {
            d.embodied_rate = calibrated_embodied_rate(d);
        }
    } else {
        d.embodied_rate = r.get<double>("embodied_rate", 0.0);
    }
    return d;
}

StorageMedium read_medium(const json &j, const std::string &where, std::vector<std::string> &issues)
{
    Reader r(j, where, issues);
    r.allow({"id", "tier", "capacity", "active_power_per_bw", "idle_power_per_byte", "access_latency_p50",
             "access_latency_tail", "bandwidth", "remote_access_penalty", "local_to"});
    StorageMedium m;
    m.id = r.get<std::string>("id", "", true);
    m.tier = parse_enum(parse_storage_tier, r.get<std::string>("tier", "", true), where, issues);
    m.capacity = r.get<double>("capacity", 0.0, true);
    m.active_power_per_bw = r.get<double>("active_power_per_bw");
    m.idle_power_per_byte = r.get<double>("idle_power_per_byte");
    m.access_latency_p50 = r.get<double>("access_latency_p50");
    m.access_latency_tail = r.get<double>("access_latency_tail", m.access_latency_p50);
    m.bandwidth = r.get<double>("bandwidth", 0.0, true);
    m.remote_access_penalty = r.get<double>("remote_access_penalty");
    m.local_to = r.get<std::vector<std::string>>("local_to");
    return m;
}

} // namespace

ComputeDevice device_from_json(const json &j)
{
    std::vector<std::string> issues;
    auto d = read_device(j, "device", issues);
    throw_if(issues);
    return d;
}

StorageMedium medium_from_json(const json &j)
{
    std::vector<std::string> issues;
    auto m = read_medium(j, "medium", issues);
    throw_if(issues);
    return m;
}

json device_to_json(const ComputeDevice &d)
{
    return json{{"id", d.id},
                {"kind", to_string(d.kind)},
                {"peak_power", d.peak_power},
                {"idle_fraction", d.idle_fraction},
                {"capacity", d.capacity},
                {"startup_latency", d.startup_latency},
                {"startup_energy", d.startup_energy},
                {"embodied_rate", d.embodied_rate}};
}

json medium_to_json(const StorageMedium &m)
{
    return json{{"id", m.id},
                {"tier", to_string(m.tier)},
                {"capacity", m.capacity},
                {"active_power_per_bw", m.active_power_per_bw},
                {"idle_power_per_byte", m.idle_power_per_byte},
                {"access_latency_p50", m.access_latency_p50},
                {"access_latency_tail", m.access_latency_tail},
                {"bandwidth", m.bandwidth},
                {"remote_access_penalty", m.remote_access_penalty},
                {"local_to", m.local_to}};
}

Catalog parse_catalog(const json &doc)
{
    std::vector<std::string> issues;
    Reader r(doc, "catalog", issues);
    r.allow({"devices", "media", "objects", "network_j_per_byte"});
    Catalog c;
    c.network_j_per_byte = r.get<double>("network_j_per_byte");
    auto list = [&](const char *key) -> const json * {
        if (!r.has(key)) return nullptr;
        if (!r.at(key).is_array()) {
            issues.push_back(std::string("catalog: '") + key + "' must be an array");
            return nullptr;
        }
        return &r.at(key);
    };
    if (const json *a = list("devices"))
        for (std::size_t i = 0; i < a->size(); ++i) c.devices.push_back(read_device((*a)[i], "devices[" + std::to_string(i) + "]", issues));
    if (const json *a = list("media"))
        for (std::size_t i = 0; i < a->size(); ++i) c.media.push_back(read_medium((*a)[i], "media[" + std::to_string(i) + "]", issues));
    if (const json *a = list("objects"))
        for (std::size_t i = 0; i < a->size(); ++i) {
            const std::string where = "objects[" + std::to_string(i) + "]";
            Reader o((*a)[i], where, issues);
            o.allow({"id", "size", "home", "replicas"});
            DataObject obj;
            obj.id = o.get<std::string>("id", "", true);
            obj.size = o.get<double>("size", 0.0, true);
            obj.home = o.get<std::string>("home", "", true);
            obj.replicas = o.get<std::vector<std::string>>("replicas");
            c.objects.push_back(std::move(obj));
        }
    auto more = c.issues();
    issues.insert(issues.end(), more.begin(), more.end());
    throw_if(issues);
    return c;
}

Catalog load_catalog(const fs::path &path) { return parse_catalog(parse_json(read_file(path), path.string())); }

json catalog_to_json(const Catalog &c)
{
    json j{{"devices", json::array()}, {"media", json::array()}, {"objects", json::array()},
           {"network_j_per_byte", c.network_j_per_byte}};
    for (const auto &d : c.devices) j["devices"].push_back(device_to_json(d));
    for (const auto &m : c.media) j["media"].push_back(medium_to_json(m));
    for (const auto &o : c.objects)
        j["objects"].push_back(json{{"id", o.id}, {"size", o.size}, {"home", o.home}, {"replicas", o.replicas}});
    return j;
}

namespace {

std::vector<std::string> split_csv(const std::string &line)
{
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double to_number(const std::string &cell, std::size_t line, const std::string &column)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception &) {
        throw ParseError(line, "column '" + column + "': '" + cell + "' is not a number");
    }
}

bool blank(const std::string &line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

} // namespace

CarbonIntensitySeries parse_intensity_csv(std::istream &in)
{
    std::string line;
    std::size_t n = 0;
    std::vector<IntensitySample> samples;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        if (blank(line)) continue;
        const auto cells = split_csv(line);
        if (!header) {
            if (cells != std::vector<std::string>{"t_us", "g_per_kwh"})
                throw ParseError(n, "expected header 't_us,g_per_kwh'");
            header = true;
            continue;
        }
        if (cells.size() != 2) throw ParseError(n, "expected 2 columns");
        const double t = to_number(cells[0], n, "t_us");
        if (t != std::floor(t)) throw ParseError(n, "column 't_us' must be an integer");
        samples.push_back({static_cast<Micros>(t), to_number(cells[1], n, "g_per_kwh")});
    }
    if (samples.empty()) throw InputError("intensity series has no samples");
    return CarbonIntensitySeries(std::move(samples));
}

CarbonIntensitySeries load_intensity(const fs::path &path)
{
    std::istringstream in(read_file(path));
    try {
        return parse_intensity_csv(in);
    } catch (const ParseError &e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_intensity_csv(std::ostream &out, const CarbonIntensitySeries &series)
{
    out << "t_us,g_per_kwh\n";
    for (const auto &s : series.samples()) out << s.time << ',' << format_double(s.intensity) << '\n';
}

Trace load_trace(const fs::path &path)
{
    std::istringstream in(read_file(path));
    try {
        return parse_trace(in);
    } catch (const ValidationError &) {
        throw;
    } catch (const InputError &e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

namespace {

std::vector<ObjectAccess> read_accesses(const json &j, const std::string &where, std::vector<std::string> &issues)
{
    std::vector<ObjectAccess> out;
    if (!j.is_array()) {
        issues.push_back(where + ": expected an array");
        return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
        Reader r(j[i], where + "[" + std::to_string(i) + "]", issues);
        r.allow({"object_id", "bytes"});
        out.push_back({r.get<std::string>("object_id", "", true), r.get<double>("bytes", 0.0, true)});
    }
    return out;
}

} // namespace

TraceSpec parse_trace_spec(const json &doc)
{
    std::vector<std::string> issues;
    Reader r(doc, "trace spec", issues);
    r.allow({"duration_us", "base_rate", "burst_rate", "burst_duty", "burst_period_us", "app_mix", "seed", "apps"});
    TraceSpec s;
    s.duration = r.get<Micros>("duration_us", 0, true);
    s.base_rate = r.get<double>("base_rate", 0.0, true);
    s.burst_rate = r.get<double>("burst_rate", s.base_rate);
    s.burst_duty = r.get<double>("burst_duty");
    s.burst_period = r.get<Micros>("burst_period_us", s.burst_period);
    s.app_mix = r.get<std::map<std::string, double>>("app_mix", {}, true);
    s.seed = r.get<std::uint64_t>("seed");
    if (r.has("apps")) {
        for (const auto &[name, j] : r.at("apps").items()) {
            const std::string where = "apps." + name;
            Reader a(j, where, issues);
            a.allow({"work_min", "work_max", "speedup", "deadline_min_us", "deadline_max_us", "percentile", "reads",
                     "writes", "energy_budget_j", "carbon_budget_g", "parent_probability"});
            AppProfile p;
            p.work_min = a.get<double>("work_min", p.work_min);
            p.work_max = a.get<double>("work_max", p.work_min);
            p.speedup = a.get<std::map<std::string, double>>("speedup", p.speedup);
            p.deadline_min = a.get<Micros>("deadline_min_us", p.deadline_min);
            p.deadline_max = a.get<Micros>("deadline_max_us", p.deadline_min);
            p.percentile = a.get<double>("percentile", 1.0);
            if (a.has("reads")) p.reads = read_accesses(a.at("reads"), where + ".reads", issues);
            if (a.has("writes")) p.writes = read_accesses(a.at("writes"), where + ".writes", issues);
            if (a.has("energy_budget_j")) p.energy_budget = a.get<double>("energy_budget_j");
            if (a.has("carbon_budget_g")) p.carbon_budget = a.get<double>("carbon_budget_g");
            p.parent_probability = a.get<double>("parent_probability");
            s.apps[name] = std::move(p);
        }
    }
    throw_if(issues);
    s.validate();
    return s;
}

TraceSpec load_trace_spec(const fs::path &path) { return parse_trace_spec(parse_json(read_file(path), path.string())); }

json problem_to_json(const PlacementProblem &p)
{
    json j;
    j["now_us"] = p.now;
    j["window_end_us"] = p.window_end;
    j["options"] = json{{"sla_mode", to_string(p.options.sla_mode)},
                        {"penalty_j_per_us", p.options.penalty_j_per_us},
                        {"network_j_per_byte", p.options.network_j_per_byte},
                        {"exact_cutoff", p.options.exact_cutoff},
                        {"enumeration_below", p.options.enumeration_below},
                        {"max_nodes", p.options.max_nodes}};
    j["functions"] = json::array();
    for (const auto &f : p.functions) j["functions"].push_back(json::parse(serialize_function(f)));
    j["devices"] = json::array();
    for (const auto &d : p.devices) {
        json e{{"device", device_to_json(d.device)}, {"free_at_us", d.free_at}, {"powered", d.powered}};
        if (d.configured_app) e["configured_app"] = *d.configured_app;
        j["devices"].push_back(std::move(e));
    }
    j["media"] = json::array();
    for (const auto &m : p.media) j["media"].push_back(medium_to_json(m));
    j["object_locations"] = p.object_locations;
    return j;
}

PlacementProblem problem_from_json(const json &j)
{
    std::vector<std::string> issues;
    Reader r(j, "problem", issues);
    r.allow({"now_us", "window_end_us", "options", "functions", "devices", "media", "object_locations"});
    PlacementProblem p;
    p.now = r.get<Micros>("now_us");
    p.window_end = r.get<Micros>("window_end_us", p.now);
    if (r.has("options")) {
        Reader o(r.at("options"), "problem.options", issues);
        o.allow({"sla_mode", "penalty_j_per_us", "network_j_per_byte", "exact_cutoff", "enumeration_below", "max_nodes"});
        p.options.sla_mode = parse_enum(parse_sla_mode, o.get<std::string>("sla_mode", "hard"), "problem.options", issues);
        p.options.penalty_j_per_us = o.get<double>("penalty_j_per_us");
        p.options.network_j_per_byte = o.get<double>("network_j_per_byte");
        p.options.exact_cutoff = o.get<std::size_t>("exact_cutoff", p.options.exact_cutoff);
        p.options.enumeration_below = o.get<std::size_t>("enumeration_below", p.options.enumeration_below);
        p.options.max_nodes = o.get<std::size_t>("max_nodes");
    }
    if (r.has("functions")) {
        std::size_t i = 0;
        for (const auto &f : r.at("functions")) {
            try {
                p.functions.push_back(parse_function(f.dump(), ++i));
            } catch (const InputError &e) {
                issues.push_back(std::string("functions: ") + e.what());
            }
        }
    }
    if (r.has("devices")) {
        std::size_t i = 0;
        for (const auto &d : r.at("devices")) {
            const std::string where = "devices[" + std::to_string(i++) + "]";
            Reader dr(d, where, issues);
            dr.allow({"device", "free_at_us", "powered", "configured_app"});
            DeviceState s;
            if (dr.has("device")) s.device = read_device(dr.at("device"), where + ".device", issues);
            else issues.push_back(where + ": missing key 'device'");
            s.free_at = dr.get<Micros>("free_at_us");
            s.powered = dr.get<bool>("powered", true);
            if (dr.has("configured_app")) s.configured_app = dr.get<std::string>("configured_app");
            p.devices.push_back(std::move(s));
        }
    }
    if (r.has("media")) {
        std::size_t i = 0;
        for (const auto &m : r.at("media")) p.media.push_back(read_medium(m, "media[" + std::to_string(i++) + "]", issues));
    }
    p.object_locations = r.get<std::map<std::string, std::vector<std::string>>>("object_locations");
    throw_if(issues);
    p.validate();
    return p;
}

json assignment_to_json(const Assignment &a, bool include_wall_time)
{
    json j;
    j["total_cost_j"] = a.total_cost;
    j["unplaced"] = a.unplaced;
    j["placements"] = json::array();
    for (const auto &pl : a.placements) {
        json e{{"function_id", pl.function_id}, {"placed", pl.choice.has_value()}, {"feasible", pl.feasible}};
        if (pl.choice) {
            e["device_id"] = pl.device_id;
            e["media_ids"] = pl.media_ids;
            e["start_us"] = pl.start;
            e["end_us"] = pl.end;
            e["cost_j"] = pl.cost.total;
            e["penalty_j"] = pl.penalty;
        }
        j["placements"].push_back(std::move(e));
    }
    json stats{{"nodes_expanded", a.stats.nodes_expanded},
               {"cache_hits", a.stats.cache_hits},
               {"cache_misses", a.stats.cache_misses}};
    if (include_wall_time) stats["wall_time_us"] = a.stats.wall_time_us;
    j["stats"] = stats;
    return j;
}

std::vector<LabeledSample> parse_telemetry_csv(std::istream &in)
{
    std::string line;
    std::size_t n = 0;
    std::vector<std::string> header;
    std::vector<LabeledSample> out;
    std::optional<std::size_t> measured, fid, did;
    while (std::getline(in, line)) {
        ++n;
        if (blank(line)) continue;
        const auto cells = split_csv(line);
        if (header.empty()) {
            header = cells;
            std::set<std::string> seen;
            for (std::size_t i = 0; i < header.size(); ++i) {
                if (header[i].empty()) throw ParseError(n, "empty column name");
                if (!seen.insert(header[i]).second) throw ParseError(n, "duplicate column '" + header[i] + "'");
                if (header[i] == "measured_j") measured = i;
                else if (header[i] == "function_id") fid = i;
                else if (header[i] == "device_id") did = i;
            }
            if (!measured) throw ParseError(n, "missing column 'measured_j'");
            continue;
        }
        if (cells.size() != header.size())
            throw ParseError(n, "expected " + std::to_string(header.size()) + " columns, got " + std::to_string(cells.size()));
        LabeledSample s;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == *measured) s.measured = to_number(cells[i], n, header[i]);
            else if (fid && i == *fid) s.sample.function_id = cells[i];
            else if (did && i == *did) s.sample.device_id = cells[i];
            else {
                const double v = to_number(cells[i], n, header[i]);
                if (v < 0.0) throw ParseError(n, "column '" + header[i] + "' must be >= 0");
                s.sample.features[header[i]] = v;
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

json model_to_json(const AttributionModel &model, const std::optional<FitStatistics> &stats)
{
    json j{{"coefficients", model.coefficients}, {"baseline", model.baseline}};
    if (stats)
        j["fit"] = json{{"samples", stats->samples},
                        {"rmse", stats->rmse},
                        {"max_abs_residual", stats->max_abs_residual},
                        {"r_squared", stats->r_squared}};
    return j;
}

AttributionModel model_from_json(const json &j)
{
    std::vector<std::string> issues;
    Reader r(j, "model", issues);
    r.allow({"coefficients", "baseline", "fit"});
    AttributionModel m;
    m.coefficients = r.get<std::map<std::string, double>>("coefficients", {}, true);
    m.baseline = r.get<double>("baseline");
    for (const auto &[k, v] : m.coefficients)
        if (!(v >= 0.0)) issues.push_back("model: coefficient '" + k + "' must be >= 0");
    throw_if(issues);
    return m;
}

RunConfig apply_config(RunConfig cfg, const json &doc, const fs::path &base_dir)
{
    std::vector<std::string> issues;
    Reader r(doc, "config", issues);
    r.allow({"trace", "catalog", "intensity", "policy", "window_length_us", "solver", "sla_mode", "sla_penalty_j_per_us",
             "idle_attribution", "seed", "output_dir", "horizon_us", "power_gating", "carbon_aware", "cold_start_us",
             "keep_alive_us", "model", "exact_cutoff", "max_nodes"});
    auto path = [&](const char *key) { return base_dir / fs::path(r.get<std::string>(key)); };
    if (r.has("trace")) cfg.trace = path("trace");
    if (r.has("catalog")) cfg.catalog = path("catalog");
    if (r.has("intensity")) cfg.intensity = path("intensity");
    if (r.has("model")) cfg.model = path("model");
    if (r.has("output_dir")) cfg.output_dir = path("output_dir");
    auto &s = cfg.sim;
    if (r.has("policy")) s.policy = parse_enum(parse_policy, r.get<std::string>("policy"), "config", issues);
    if (r.has("solver")) s.solver = parse_enum(parse_solver_mode, r.get<std::string>("solver"), "config", issues);
    if (r.has("sla_mode")) s.sla_mode = parse_enum(parse_sla_mode, r.get<std::string>("sla_mode"), "config", issues);
    if (r.has("idle_attribution"))
        s.idle_attribution = parse_enum(parse_idle_policy, r.get<std::string>("idle_attribution"), "config", issues);
    s.window = r.get<Micros>("window_length_us", s.window);
    s.sla_penalty_j_per_us = r.get<double>("sla_penalty_j_per_us", s.sla_penalty_j_per_us);
    s.seed = r.get<std::uint64_t>("seed", s.seed);
    if (r.has("horizon_us")) s.horizon = r.get<Micros>("horizon_us");
    s.power_gating = r.get<bool>("power_gating", s.power_gating);
    s.carbon_aware = r.get<bool>("carbon_aware", s.carbon_aware);
    s.cold_start = r.get<Micros>("cold_start_us", s.cold_start);
    s.keep_alive = r.get<Micros>("keep_alive_us", s.keep_alive);
    s.exact_cutoff = r.get<std::size_t>("exact_cutoff", s.exact_cutoff);
    s.max_nodes = r.get<std::size_t>("max_nodes", s.max_nodes);
    if (s.window <= 0) issues.push_back("config: window_length_us must be > 0");
    throw_if(issues);
    return cfg;
}

} // namespace carbonsched
