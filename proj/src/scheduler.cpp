#include "carbonsched/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace carbonsched {

namespace {

const std::vector<std::pair<Policy, std::string>> &policy_table()
{
    static const std::vector<std::pair<Policy, std::string>> table{
        {Policy::MufunctionExact, "mufunction-exact"},
        {Policy::MufunctionHeuristic, "mufunction-heuristic"},
        {Policy::FaasBaseline, "faas-baseline"},
        {Policy::RoundRobin, "round-robin"},
        {Policy::NoDefer, "no-defer"},
    };
    return table;
}

} // namespace

std::string to_string(Policy policy)
{
    for (const auto &[p, name] : policy_table())
        if (p == policy) return name;
    return "unknown";
}

const std::vector<std::string> &policy_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> out;
        for (const auto &[_, name] : policy_table()) out.push_back(name);
        return out;
    }();
    return names;
}

Policy parse_policy(std::string_view name)
{
    for (const auto &[p, n] : policy_table())
        if (n == name) return p;
    std::string valid;
    for (const auto &n : policy_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw InputError("unknown policy '" + std::string(name) + "' (valid: " + valid + ")");
}

std::string to_string(SolverMode mode) { return mode == SolverMode::Exact ? "exact" : "heuristic"; }

SolverMode parse_solver_mode(std::string_view name)
{
    if (name == "exact") return SolverMode::Exact;
    if (name == "heuristic") return SolverMode::Heuristic;
    throw InputError("unknown solver '" + std::string(name) + "' (expected exact, heuristic)");
}

double min_intensity(const CarbonIntensitySeries &series, Micros from, Micros to, Micros window)
{
    if (window <= 0) throw std::domain_error("window length must be > 0");
    double best = std::numeric_limits<double>::infinity();
    if (to < from) return best;
    best = intensity_at(series, from);
    // Only window starts matter: the value at `from`, then the value holding
    // at the first window start at or after each later change point.
    for (const auto &s : series.samples()) {
        if (s.time <= from) continue;
        const Micros k = (s.time - from + window - 1) / window;
        const Micros start = from + k * window;
        if (start > to) break;
        best = std::min(best, intensity_at(series, start));
    }
    return best;
}

PartitionResult partition(const std::vector<MicroFunction> &pending, const ScheduleWindow &window,
                          const DurationEstimator &estimate, const CarbonIntensitySeries *carbon)
{
    const Micros w = window.length();
    if (w <= 0) throw std::domain_error("window length must be > 0");
    std::vector<const MicroFunction *> order;
    for (const auto &f : pending) order.push_back(&f);
    std::sort(order.begin(), order.end(), [](const auto *a, const auto *b) { return a->id < b->id; });

    PartitionResult out;
    for (const auto *f : order) {
        const auto best = estimate(*f);
        if (!best) {
            out.admit.push_back(f->id);
            out.infeasible.push_back(f->id);
            continue;
        }
        const Micros s = slack(*f, window.start, *best);
        if (s < 0) {
            out.admit.push_back(f->id);
            out.infeasible.push_back(f->id);
            continue;
        }
        bool admit = s < w || s - w < 0;
        if (!admit && carbon && !carbon->empty()) {
            // Latest window start from which the function can still finish.
            const Micros latest = window.start + (s / w) * w;
            const double here = intensity_at(*carbon, window.start);
            admit = here <= min_intensity(*carbon, window.start + w, latest, w);
        }
        (admit ? out.admit : out.defer).push_back(f->id);
    }
    return out;
}

std::optional<Micros> best_duration(const MicroFunction &f, const std::vector<ComputeDevice> &devices,
                                    const std::vector<StorageMedium> &media,
                                    const std::map<std::string, std::vector<std::string>> &object_locations)
{
    std::optional<Micros> best;
    const std::size_t n_access = f.reads.size() + f.writes.size();
    for (const auto &d : devices) {
        const auto s = f.speedup_on(d);
        if (!s) continue;
        double us = f.work / (d.capacity * *s) * kMicrosPerSecond;
        bool ok = true;
        for (std::size_t i = 0; i < n_access && ok; ++i) {
            const auto &a = i < f.reads.size() ? f.reads[i] : f.writes[i - f.reads.size()];
            const auto it = object_locations.find(a.object_id);
            double fastest = std::numeric_limits<double>::infinity();
            for (const auto &m : media) {
                if (it != object_locations.end() &&
                    std::find(it->second.begin(), it->second.end(), m.id) == it->second.end())
                    continue;
                double t = m.access_latency_p50 + a.bytes / m.bandwidth * kMicrosPerSecond;
                if (!m.is_local_to(d.id)) t += m.remote_access_penalty;
                fastest = std::min(fastest, t);
            }
            if (std::isinf(fastest)) ok = false;
            else us += fastest;
        }
        if (!ok) continue;
        const auto dur = static_cast<Micros>(std::max(0.0, std::ceil(us - 1e-6)));
        if (!best || dur < *best) best = dur;
    }
    return best;
}

} // namespace carbonsched
