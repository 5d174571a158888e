#include "carbonsched/workload.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "carbonsched/rng.hpp"

namespace carbonsched {

using nlohmann::json;

std::optional<double> MicroFunction::speedup_on(const ComputeDevice &device) const
{
    if (auto it = speedup.find(device.id); it != speedup.end()) return it->second;
    if (auto it = speedup.find(to_string(device.kind)); it != speedup.end()) return it->second;
    return std::nullopt;
}

std::vector<std::string> function_issues(const MicroFunction &f)
{
    std::vector<std::string> out;
    const std::string where = "function '" + f.id + "': ";
    if (f.id.empty()) out.push_back("function with empty id");
    if (f.app_id.empty()) out.push_back(where + "app_id must not be empty");
    if (!(f.work > 0.0)) out.push_back(where + "work must be > 0");
    if (f.arrival < 0) out.push_back(where + "arrival_us must be >= 0");
    for (const auto &[key, s] : f.speedup)
        if (!(s > 0.0)) out.push_back(where + "speedup[" + key + "] must be > 0");
    if (f.sla.deadline <= 0) out.push_back(where + "sla.deadline_us must be > 0");
    if (!(f.sla.percentile > 0.0 && f.sla.percentile <= 1.0))
        out.push_back(where + "sla.percentile must be in (0, 1]");
    if (f.sla.carbon_budget && !(*f.sla.carbon_budget >= 0.0))
        out.push_back(where + "sla.carbon_budget_g must be >= 0");
    if (f.energy_budget && !(*f.energy_budget >= 0.0)) out.push_back(where + "energy_budget_j must be >= 0");
    if (f.parent && *f.parent == f.id) out.push_back(where + "parent must differ from id");
    for (const auto *list : {&f.reads, &f.writes})
        for (const auto &a : *list) {
            if (a.object_id.empty()) out.push_back(where + "object access with empty object_id");
            if (!(a.bytes >= 0.0)) out.push_back(where + "bytes for '" + a.object_id + "' must be >= 0");
        }
    return out;
}

std::vector<std::string> find_parent_cycle(const Trace &trace)
{
    std::unordered_map<std::string, const MicroFunction *> by_id;
    for (const auto &f : trace) by_id.emplace(f.id, &f);
    // 0 = unvisited, 1 = on current walk, 2 = known acyclic
    std::unordered_map<std::string, int> state;
    for (const auto &f : trace) {
        if (state[f.id] == 2) continue;
        std::vector<std::string> walk;
        const MicroFunction *cur = &f;
        while (cur) {
            int &s = state[cur->id];
            if (s == 2) break;
            if (s == 1) {
                auto start = std::find(walk.begin(), walk.end(), cur->id);
                std::vector<std::string> cycle(start, walk.end());
                // Report callers first: reverse the child->parent walk.
                std::reverse(cycle.begin(), cycle.end());
                return cycle;
            }
            s = 1;
            walk.push_back(cur->id);
            if (!cur->parent) break;
            auto it = by_id.find(*cur->parent);
            cur = it == by_id.end() ? nullptr : it->second;
        }
        for (const auto &id : walk) state[id] = 2;
    }
    return {};
}

std::vector<std::string> trace_issues(const Trace &trace)
{
    std::vector<std::string> out;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto &f = trace[i];
        auto fi = function_issues(f);
        out.insert(out.end(), fi.begin(), fi.end());
        if (!ids.insert(f.id).second) out.push_back("duplicate function id '" + f.id + "'");
        if (i > 0 && f.arrival < trace[i - 1].arrival)
            out.push_back("function '" + f.id + "': arrivals are not sorted (arrival_us " +
                          std::to_string(f.arrival) + " after " + std::to_string(trace[i - 1].arrival) + ")");
    }
    for (const auto &f : trace)
        if (f.parent && !ids.count(*f.parent))
            out.push_back("function '" + f.id + "': parent '" + *f.parent + "' is not in the trace");
    if (auto cycle = find_parent_cycle(trace); !cycle.empty()) out.push_back(CycleError(cycle).issues().front());
    return out;
}

Micros slack(const MicroFunction &f, Micros now, Micros best_duration)
{
    return f.arrival + f.sla.deadline - now - best_duration;
}

void TraceSpec::validate() const
{
    std::vector<std::string> issues;
    if (duration < 0) issues.push_back("duration_us must be >= 0");
    if (!(base_rate >= 0.0)) issues.push_back("base_rate must be >= 0");
    if (!(burst_rate >= 0.0)) issues.push_back("burst_rate must be >= 0");
    if (!(burst_duty >= 0.0 && burst_duty <= 1.0)) issues.push_back("burst_duty must be in [0, 1]");
    if (burst_period <= 0) issues.push_back("burst_period_us must be > 0");
    double total = 0.0;
    for (const auto &[app, p] : app_mix) {
        if (!(p >= 0.0)) issues.push_back("app_mix[" + app + "] must be >= 0");
        if (!apps.count(app)) issues.push_back("app_mix names app '" + app + "' with no profile");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) issues.push_back("app_mix probabilities sum to " + format_double(total) + ", not 1");
    for (const auto &[app, prof] : apps) {
        const std::string where = "app '" + app + "': ";
        if (!(prof.work_min > 0.0 && prof.work_max >= prof.work_min))
            issues.push_back(where + "need 0 < work_min <= work_max");
        if (!(prof.deadline_min > 0 && prof.deadline_max >= prof.deadline_min))
            issues.push_back(where + "need 0 < deadline_min_us <= deadline_max_us");
        if (!(prof.percentile > 0.0 && prof.percentile <= 1.0)) issues.push_back(where + "percentile must be in (0, 1]");
        if (!(prof.parent_probability >= 0.0 && prof.parent_probability <= 1.0))
            issues.push_back(where + "parent_probability must be in [0, 1]");
        for (const auto &[k, s] : prof.speedup)
            if (!(s > 0.0)) issues.push_back(where + "speedup[" + k + "] must be > 0");
    }
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

Trace generate_trace(const TraceSpec &spec)
{
    spec.validate();
    Trace out;
    if (spec.duration == 0 || spec.app_mix.empty()) return out;

    Rng arrivals(substream_seed(spec.seed, "trace.arrivals"));
    Rng attributes(substream_seed(spec.seed, "trace.attributes"));

    std::vector<std::pair<std::string, double>> mix(spec.app_mix.begin(), spec.app_mix.end());
    std::map<std::string, std::string> last_of_app;

    const double period = static_cast<double>(spec.burst_period);
    const double burst_len = spec.burst_duty * period;
    const double horizon = static_cast<double>(spec.duration);

    auto emit = [&](double t) {
        double u = attributes.uniform();
        std::size_t pick = mix.size() - 1;
        double acc = 0.0;
        for (std::size_t i = 0; i < mix.size(); ++i) {
            acc += mix[i].second;
            if (u < acc) {
                pick = i;
                break;
            }
        }
        const std::string &app = mix[pick].first;
        const AppProfile &prof = spec.apps.at(app);

        MicroFunction f;
        f.id = fmt::format("f{:07d}", out.size());
        f.app_id = app;
        f.arrival = static_cast<Micros>(std::floor(t));
        f.work = attributes.uniform(prof.work_min, prof.work_max);
        f.speedup = prof.speedup;
        f.reads = prof.reads;
        f.writes = prof.writes;
        const auto span = static_cast<std::uint64_t>(prof.deadline_max - prof.deadline_min);
        f.sla.deadline = prof.deadline_min + static_cast<Micros>(attributes.below(span + 1));
        f.sla.percentile = prof.percentile;
        f.sla.carbon_budget = prof.carbon_budget;
        f.energy_budget = prof.energy_budget;
        const bool rpc = attributes.bernoulli(prof.parent_probability);
        if (rpc) {
            if (auto it = last_of_app.find(app); it != last_of_app.end()) f.parent = it->second;
        }
        last_of_app[app] = f.id;
        out.push_back(std::move(f));
    };

    // Piecewise-constant rate: restart the exponential clock at every state
    // boundary, which is exact by memorylessness.
    auto run_segment = [&](double from, double to, double rate) {
        to = std::min(to, horizon);
        if (!(rate > 0.0) || from >= to) return;
        for (double t = from;;) {
            t += arrivals.exponential(rate) * kMicrosPerSecond;
            if (t >= to) break;
            emit(t);
        }
    };
    for (double k = 0.0; k * period < horizon; k += 1.0) {
        const double base = k * period;
        run_segment(base, base + burst_len, spec.burst_rate);
        run_segment(base + burst_len, base + period, spec.base_rate);
    }
    return out;
}

namespace {

json accesses_to_json(const std::vector<ObjectAccess> &list)
{
    json arr = json::array();
    for (const auto &a : list) arr.push_back({{"object_id", a.object_id}, {"bytes", a.bytes}});
    return arr;
}

json function_to_json(const MicroFunction &f)
{
    json j;
    j["id"] = f.id;
    j["app_id"] = f.app_id;
    j["arrival_us"] = f.arrival;
    j["work"] = f.work;
    j["speedup"] = json::object();
    for (const auto &[k, v] : f.speedup) j["speedup"][k] = v;
    j["reads"] = accesses_to_json(f.reads);
    j["writes"] = accesses_to_json(f.writes);
    json sla{{"deadline_us", f.sla.deadline}, {"percentile", f.sla.percentile}};
    if (f.sla.carbon_budget) sla["carbon_budget_g"] = *f.sla.carbon_budget;
    j["sla"] = sla;
    if (f.energy_budget) j["energy_budget_j"] = *f.energy_budget;
    if (f.parent) j["parent"] = *f.parent;
    return j;
}

[[noreturn]] void fail(std::size_t line, const std::string &what) { throw ParseError(line, what); }

void reject_unknown(const json &j, std::initializer_list<std::string_view> known, std::size_t line,
                    const std::string &where)
{
    for (const auto &[key, _] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            fail(line, "unknown field '" + where + key + "'");
}

template <typename T>
T get_field(const json &j, const char *name, std::size_t line, const std::string &where = "")
{
    if (!j.contains(name)) fail(line, "missing field '" + where + name + "'");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception &) {
        fail(line, "field '" + where + name + "' has the wrong type");
    }
}

std::vector<ObjectAccess> accesses_from_json(const json &j, const char *name, std::size_t line)
{
    std::vector<ObjectAccess> out;
    if (!j.contains(name)) return out;
    const json &arr = j.at(name);
    if (!arr.is_array()) fail(line, std::string("field '") + name + "' must be an array");
    for (const auto &a : arr) {
        if (!a.is_object()) fail(line, std::string("entries of '") + name + "' must be objects");
        reject_unknown(a, {"object_id", "bytes"}, line, std::string(name) + ".");
        const std::string where = std::string(name) + ".";
        out.push_back({get_field<std::string>(a, "object_id", line, where), get_field<double>(a, "bytes", line, where)});
    }
    return out;
}

} // namespace

std::string serialize_function(const MicroFunction &f) { return function_to_json(f).dump(); }

void write_trace(std::ostream &out, const Trace &trace)
{
    for (const auto &f : trace) out << serialize_function(f) << '\n';
}

MicroFunction parse_function(std::string_view text, std::size_t line)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        fail(line, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) fail(line, "expected a JSON object");
    reject_unknown(j, {"id", "app_id", "arrival_us", "work", "speedup", "reads", "writes", "sla", "energy_budget_j", "parent"},
                   line, "");

    MicroFunction f;
    f.id = get_field<std::string>(j, "id", line);
    f.app_id = get_field<std::string>(j, "app_id", line);
    f.arrival = get_field<Micros>(j, "arrival_us", line);
    f.work = get_field<double>(j, "work", line);
    if (j.contains("speedup")) {
        if (!j["speedup"].is_object()) fail(line, "field 'speedup' must be an object");
        for (const auto &[k, v] : j["speedup"].items()) {
            if (!v.is_number()) fail(line, "field 'speedup." + k + "' must be a number");
            f.speedup[k] = v.get<double>();
        }
    }
    f.reads = accesses_from_json(j, "reads", line);
    f.writes = accesses_from_json(j, "writes", line);
    const json sla = j.contains("sla") ? j["sla"] : json();
    if (!sla.is_object()) fail(line, "missing field 'sla'");
    reject_unknown(sla, {"deadline_us", "percentile", "carbon_budget_g"}, line, "sla.");
    f.sla.deadline = get_field<Micros>(sla, "deadline_us", line, "sla.");
    if (sla.contains("percentile")) f.sla.percentile = get_field<double>(sla, "percentile", line, "sla.");
    if (sla.contains("carbon_budget_g")) f.sla.carbon_budget = get_field<double>(sla, "carbon_budget_g", line, "sla.");
    if (j.contains("energy_budget_j")) f.energy_budget = get_field<double>(j, "energy_budget_j", line);
    if (j.contains("parent")) f.parent = get_field<std::string>(j, "parent", line);

    if (auto issues = function_issues(f); !issues.empty()) fail(line, issues.front());
    return f;
}

Trace parse_trace(std::istream &in)
{
    Trace out;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        out.push_back(parse_function(text, line));
    }
    if (auto issues = trace_issues(out); !issues.empty()) throw ValidationError(std::move(issues));
    return out;
}

} // namespace carbonsched
