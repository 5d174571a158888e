#include "carbonsched/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>
#include <set>

#include <fmt/format.h>

namespace carbonsched {

bool event_before(const Event &a, const Event &b)
{
    return std::make_tuple(a.time, static_cast<int>(a.kind), a.id) < std::make_tuple(b.time, static_cast<int>(b.kind), b.id);
}

AttributionModel catalog_model(const Catalog &catalog)
{
    AttributionModel m;
    for (const auto &name : canonical_features()) m.coefficients[name] = 0.0;
    // Busy power above idle divided by cycles per second = joules per cycle.
    double cpu = 0.0, acc = 0.0;
    std::size_t n_cpu = 0, n_acc = 0;
    for (const auto &d : catalog.devices) {
        const double per_cycle = (d.peak_power - d.idle_power()) / d.capacity;
        if (d.kind == DeviceKind::CPU) {
            cpu += per_cycle;
            ++n_cpu;
        } else {
            acc += per_cycle;
            ++n_acc;
        }
    }
    if (n_cpu) m.coefficients[feature::kCpuCycles] = cpu / static_cast<double>(n_cpu);
    if (n_acc) m.coefficients[feature::kAcceleratorCycles] = acc / static_cast<double>(n_acc);
    double moved = 0.0;
    for (const auto &s : catalog.media) moved += s.active_power_per_bw;
    if (!catalog.media.empty()) m.coefficients[feature::kStorageBytesMoved] = moved / static_cast<double>(catalog.media.size());
    m.coefficients[feature::kNetworkBytes] = catalog.network_j_per_byte;
    return m;
}

std::map<std::string, std::vector<std::string>> object_locations(const Catalog &catalog)
{
    std::map<std::string, std::vector<std::string>> out;
    for (const auto &o : catalog.objects) {
        auto &l = out[o.id];
        l.push_back(o.home);
        for (const auto &r : o.replicas)
            if (std::find(l.begin(), l.end(), r) == l.end()) l.push_back(r);
    }
    return out;
}

namespace {

using Interval = std::pair<Micros, Micros>;

struct DeviceRuntime {
    DeviceState state;
    Micros busy_until = 0;
    std::vector<Interval> busy;
    std::vector<Interval> gated;
    std::vector<std::pair<Micros, Joules>> lumps;
    // FaaS container bookkeeping.
    std::optional<std::string> container;
    Micros last_used = 0;
};

struct Execution {
    bool ran = false;
    std::size_t device = 0;
    std::vector<std::size_t> media;
    Micros busy_start = 0; ///< includes a FaaS cold start
    Micros start = 0;
    Micros end = 0;
    std::size_t window = 0;
};

struct EventAfter {
    bool operator()(const Event &a, const Event &b) const { return event_before(b, a); }
};

std::size_t access_count(const MicroFunction &f) { return f.reads.size() + f.writes.size(); }

const ObjectAccess &access_at(const MicroFunction &f, std::size_t i)
{
    return i < f.reads.size() ? f.reads[i] : f.writes[i - f.reads.size()];
}

/// Operational carbon of constant power over [a, b).
Grams segment_carbon(const CarbonIntensitySeries &series, Micros a, Micros b, Watts power)
{
    if (b <= a || power == 0.0) return 0.0;
    Grams g = 0.0;
    Micros t = a;
    const auto &s = series.samples();
    while (t < b) {
        auto next = std::upper_bound(s.begin(), s.end(), t, [](Micros v, const IntensitySample &x) { return v < x.time; });
        const Micros stop = next == s.end() ? b : std::min(b, next->time);
        g += power * to_seconds(stop - t) / kJoulesPerKwh * intensity_at(series, t);
        t = stop;
    }
    return g;
}

class Simulation {
public:
    Simulation(const Trace &trace, const Catalog &catalog, const CarbonIntensitySeries &intensity, const SimConfig &config)
        : trace_(trace), catalog_(catalog), intensity_(intensity), config_(config), locations_(object_locations(catalog))
    {
        validate_inputs();
        for (const auto &d : catalog_.devices) {
            DeviceRuntime r;
            r.state.device = d;
            devices_.push_back(std::move(r));
        }
        for (const auto &f : trace_) best_.push_back(best_duration(f, catalog_.devices, catalog_.media, locations_));
        exec_.resize(trace_.size());
        for (std::size_t i = 0; i < trace_.size(); ++i) index_[trace_[i].id] = i;
        for (const auto &m : catalog_.media) medium_index_[m.id] = medium_index_.size();

        if (config_.horizon) {
            base_horizon_ = *config_.horizon;
        } else if (!trace_.empty()) {
            Micros longest = 0;
            for (const auto &f : trace_) longest = std::max(longest, f.sla.deadline);
            base_horizon_ = trace_.back().arrival + longest;
        }
    }

    SimResult run()
    {
        for (std::size_t i = 0; i < trace_.size(); ++i) push(trace_[i].arrival, EventKind::Arrival, i);
        for (std::size_t i = 0; i < intensity_.samples().size(); ++i)
            if (intensity_.samples()[i].time >= 0) push(intensity_.samples()[i].time, EventKind::IntensityChange, i);
        push(0, EventKind::WindowBoundary, 0);

        Micros clock = std::numeric_limits<Micros>::min();
        while (!queue_.empty()) {
            const Event e = queue_.top();
            queue_.pop();
            if (e.time < clock)
                throw InvariantViolation(fmt::format("event queue went back in time: event {} (kind {}) at {} after {}; "
                                                     "{} pending, {} arrivals outstanding",
                                                     e.id, static_cast<int>(e.kind), e.time, clock, pending_.size(),
                                                     trace_.size() - arrived_));
            clock = e.time;
            switch (e.kind) {
            case EventKind::Arrival: on_arrival(e.payload, e.time); break;
            case EventKind::WindowBoundary: on_window(e.payload, e.time); break;
            case EventKind::Completion: ++completed_; break;
            case EventKind::Start:
            case EventKind::IntensityChange:
            case EventKind::Custom: break;
            }
        }
        return account();
    }

private:
    void validate_inputs() const
    {
        std::vector<std::string> issues = trace_issues(trace_);
        auto ci = catalog_.issues();
        issues.insert(issues.end(), ci.begin(), ci.end());
        for (const auto &f : trace_)
            for (const auto &r : f.reads)
                if (!locations_.count(r.object_id))
                    issues.push_back("function '" + f.id + "' reads unknown object '" + r.object_id + "'");
        if (intensity_.empty()) issues.push_back("carbon intensity series is empty");
        else if (intensity_.samples().front().time > 0) issues.push_back("carbon intensity series must start at or before 0");
        if (config_.window <= 0) issues.push_back("window_length_us must be > 0");
        if (config_.horizon && *config_.horizon < 0) issues.push_back("horizon_us must be >= 0");
        if (config_.cold_start < 0) issues.push_back("cold_start_us must be >= 0");
        if (config_.keep_alive < 0) issues.push_back("keep_alive_us must be >= 0");
        if (!(config_.sla_penalty_j_per_us >= 0.0)) issues.push_back("sla_penalty_j_per_us must be >= 0");
        if (!issues.empty()) throw ValidationError(std::move(issues));
    }

    void push(Micros t, EventKind kind, std::size_t payload) { queue_.push(Event{t, kind, next_id_++, payload}); }

    bool windowed() const { return config_.policy != Policy::FaasBaseline; }

    void on_arrival(std::size_t fi, Micros t)
    {
        ++arrived_;
        if (windowed()) {
            pending_.push_back(fi);
        } else {
            faas_dispatch(fi, t);
        }
    }

    Micros latest_busy() const
    {
        Micros m = 0;
        for (const auto &d : devices_) m = std::max(m, d.busy_until);
        return m;
    }

    void on_window(std::size_t k, Micros t)
    {
        ++windows_seen_;
        if (windowed() && !pending_.empty()) schedule_window(k, t);
        else if (windowed() && config_.power_gating) gate_idle(t, {});
        const Micros next = t + config_.window;
        if (arrived_ < trace_.size() || !pending_.empty() || next < base_horizon_ || next < latest_busy())
            push(next, EventKind::WindowBoundary, k + 1);
    }

    void schedule_window(std::size_t k, Micros t)
    {
        std::vector<MicroFunction> pending;
        for (auto fi : pending_) pending.push_back(trace_[fi]);
        ScheduleWindow w{k, t, t + config_.window, {}, {}};

        const bool defers = config_.policy == Policy::MufunctionExact || config_.policy == Policy::MufunctionHeuristic;
        const DurationEstimator est = [&](const MicroFunction &f) { return best_[index_.at(f.id)]; };
        PartitionResult part = partition(pending, w, est, defers && config_.carbon_aware ? &intensity_ : nullptr);
        if (!defers) {
            for (const auto &id : part.defer) part.admit.push_back(id);
            part.defer.clear();
            std::sort(part.admit.begin(), part.admit.end());
        }
        infeasible_at_admission_ += part.infeasible.size();

        std::vector<std::size_t> admitted;
        for (const auto &id : part.admit) admitted.push_back(index_.at(id));
        std::vector<std::size_t> still;
        for (const auto &id : part.defer) still.push_back(index_.at(id));
        std::sort(still.begin(), still.end());
        pending_ = std::move(still);

        PlacementProblem p;
        for (auto fi : admitted) p.functions.push_back(trace_[fi]);
        for (auto &d : devices_) {
            DeviceState s = d.state;
            s.free_at = d.busy_until;
            p.devices.push_back(std::move(s));
        }
        p.media = catalog_.media;
        p.object_locations = locations_;
        p.now = t;
        p.window_end = t + config_.window;
        p.options.sla_mode = config_.sla_mode;
        p.options.penalty_j_per_us = config_.sla_penalty_j_per_us;
        p.options.network_j_per_byte = catalog_.network_j_per_byte;
        p.options.exact_cutoff = config_.exact_cutoff;
        p.options.max_nodes = config_.max_nodes;

        const Assignment a = solve(p);

        // Setup is paid once per device, at the moment it becomes free.
        std::set<std::size_t> used;
        std::vector<std::size_t> by_start(a.placements.size());
        std::iota(by_start.begin(), by_start.end(), std::size_t{0});
        std::stable_sort(by_start.begin(), by_start.end(),
                         [&](std::size_t x, std::size_t y) { return a.placements[x].start < a.placements[y].start; });
        for (auto i : by_start) {
            const auto &pl = a.placements[i];
            if (!pl.choice) continue;
            const std::size_t d = pl.choice->device;
            if (used.insert(d).second) prepare_device(d, trace_[admitted[i]].app_id, t);
            commit(admitted[i], d, pl.choice->media, pl.start, pl.start, pl.end, k);
        }
        for (std::size_t i = 0; i < a.placements.size(); ++i)
            if (!a.placements[i].choice) best_effort(admitted[i], t, k, used);

        if (config_.power_gating) gate_idle(t, used);
    }

    Assignment solve(const PlacementProblem &p)
    {
        auto &s = solver_;
        ++s.calls;
        Assignment a;
        auto heuristic = [&] {
            ++s.heuristic_calls;
            return solve_heuristic(p, &memo_);
        };
        bool exact = config_.policy == Policy::MufunctionExact ||
                     (config_.policy == Policy::NoDefer && config_.solver == SolverMode::Exact);
        if (config_.policy == Policy::RoundRobin) {
            ++s.round_robin_calls;
            a = solve_round_robin(p);
        } else if (exact && p.functions.size() <= config_.exact_cutoff) {
            try {
                ++s.exact_calls;
                a = solve_exact(p);
            } catch (const SearchLimitExceeded &) {
                ++s.fallbacks;
                a = heuristic();
            }
        } else {
            if (exact) ++s.fallbacks;
            a = heuristic();
        }
        s.nodes_expanded += a.stats.nodes_expanded;
        s.cache_hits += a.stats.cache_hits;
        s.cache_misses += a.stats.cache_misses;
        s.wall_time_us += a.stats.wall_time_us;
        return a;
    }

    /// Wakes a gated device or loads an FPGA for `app` before its first
    /// placement in this window.
    void prepare_device(std::size_t d, const std::string &app, Micros now)
    {
        auto &r = devices_[d];
        if (needs_setup(r.state, app)) r.lumps.emplace_back(std::max(now, r.busy_until), r.state.device.startup_energy);
        r.state.powered = true;
        if (r.state.device.kind == DeviceKind::FPGA) r.state.configured_app = app;
    }

    void commit(std::size_t fi, std::size_t d, std::vector<std::size_t> media, Micros busy_start, Micros start,
                Micros end, std::size_t window)
    {
        auto &r = devices_[d];
        if (busy_start < r.busy_until)
            throw InvariantViolation(fmt::format("device {} double-booked at {} (busy until {})", r.state.device.id,
                                                 busy_start, r.busy_until));
        if (!r.gated.empty() && r.gated.back().second > busy_start)
            throw InvariantViolation("work committed to gated device " + r.state.device.id);
        auto &e = exec_[fi];
        e.ran = true;
        e.device = d;
        e.media = std::move(media);
        e.busy_start = busy_start;
        e.start = start;
        e.end = end;
        e.window = window;
        r.busy.emplace_back(busy_start, end);
        r.busy_until = end;
        push(start, EventKind::Start, fi);
        push(end, EventKind::Completion, fi);
    }

    /// Per-access fastest media for `f` on device `d`.
    std::optional<std::vector<std::size_t>> fastest_media(const MicroFunction &f, const ComputeDevice &d) const
    {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < access_count(f); ++i) {
            const auto &a = access_at(f, i);
            const auto it = locations_.find(a.object_id);
            std::optional<std::size_t> pick;
            double pick_t = 0.0;
            for (std::size_t m = 0; m < catalog_.media.size(); ++m) {
                const auto &med = catalog_.media[m];
                if (it != locations_.end() && std::find(it->second.begin(), it->second.end(), med.id) == it->second.end())
                    continue;
                double t = med.access_latency_p50 + a.bytes / med.bandwidth * kMicrosPerSecond;
                if (!med.is_local_to(d.id)) t += med.remote_access_penalty;
                if (!pick || t < pick_t) {
                    pick = m;
                    pick_t = t;
                }
            }
            if (!pick) return std::nullopt;
            out.push_back(*pick);
        }
        return out;
    }

    MediaChoice media_ptrs(const std::vector<std::size_t> &idx) const
    {
        MediaChoice out;
        for (auto m : idx) out.push_back(&catalog_.media[m]);
        return out;
    }

    /// Runs a function the solver could not place as early as possible.
    void best_effort(std::size_t fi, Micros t, std::size_t window, std::set<std::size_t> &used)
    {
        const auto &f = trace_[fi];
        std::optional<std::size_t> best_d;
        std::vector<std::size_t> best_m;
        Micros best_start = 0, best_end = 0;
        for (std::size_t d = 0; d < devices_.size(); ++d) {
            const auto &r = devices_[d];
            if (!f.speedup_on(r.state.device)) continue;
            if (r.state.device.kind == DeviceKind::FPGA && r.state.configured_app != f.app_id && r.busy_until > t) continue;
            const auto media = fastest_media(f, r.state.device);
            if (!media) continue;
            const Micros start = std::max(t, r.busy_until) + (needs_setup(r.state, f.app_id) ? r.state.device.startup_latency : 0);
            const Micros end = start + effective_duration(f, r.state.device, media_ptrs(*media));
            if (!best_d || end < best_end) {
                best_d = d;
                best_m = *media;
                best_start = start;
                best_end = end;
            }
        }
        if (!best_d) return; // unschedulable; reported in accounting
        used.insert(*best_d);
        prepare_device(*best_d, f.app_id, t);
        commit(fi, *best_d, best_m, best_start, best_start, best_end, window);
    }

    void gate_idle(Micros t, const std::set<std::size_t> &used)
    {
        // Keep idle devices up when a deferred function must start this window.
        bool urgent = false;
        for (auto fi : pending_) {
            if (!best_[fi]) continue;
            const Micros latest_start = trace_[fi].absolute_deadline() - *best_[fi];
            if (latest_start < t + config_.window) urgent = true;
        }
        for (std::size_t d = 0; d < devices_.size(); ++d) {
            auto &r = devices_[d];
            if (used.count(d) || r.busy_until > t) continue;
            if (r.state.powered && urgent) continue;
            r.state.powered = false;
            r.state.configured_app.reset();
            if (!r.gated.empty() && r.gated.back().second == t) r.gated.back().second = t + config_.window;
            else r.gated.emplace_back(t, t + config_.window);
        }
    }

    void faas_dispatch(std::size_t fi, Micros t)
    {
        const auto &f = trace_[fi];
        std::vector<std::size_t> cands;
        for (std::size_t d = 0; d < devices_.size(); ++d)
            if (devices_[d].state.device.kind == DeviceKind::CPU && f.speedup_on(devices_[d].state.device)) cands.push_back(d);
        if (cands.empty()) return;

        auto alive = [&](const DeviceRuntime &r, Micros at) {
            return r.container && r.last_used + config_.keep_alive >= at;
        };
        std::optional<std::size_t> pick;
        bool cold = false;
        Micros begin = t;
        for (auto d : cands) {
            const auto &r = devices_[d];
            if (r.busy_until <= t && alive(r, t) && *r.container == f.app_id) {
                pick = d;
                break;
            }
        }
        if (!pick)
            for (auto d : cands) {
                const auto &r = devices_[d];
                if (r.busy_until <= t && !alive(r, t)) {
                    pick = d;
                    cold = true;
                    break;
                }
            }
        if (!pick)
            for (auto d : cands) {
                const auto &r = devices_[d];
                if (r.container && *r.container == f.app_id && (!pick || r.busy_until < devices_[*pick].busy_until)) pick = d;
            }
        if (pick) {
            begin = std::max(t, devices_[*pick].busy_until);
        } else {
            // Every container belongs to another app: evict the one that frees first.
            for (auto d : cands)
                if (!pick || devices_[d].busy_until < devices_[*pick].busy_until) pick = d;
            cold = true;
            begin = std::max(t, devices_[*pick].busy_until);
        }

        auto &r = devices_[*pick];
        // Containers bundle data statically: each access goes to the object's home.
        std::vector<std::size_t> media;
        for (std::size_t i = 0; i < access_count(f); ++i) {
            const auto it = locations_.find(access_at(f, i).object_id);
            media.push_back(it == locations_.end() ? 0 : medium_index_.at(it->second.front()));
        }
        if (access_count(f) && catalog_.media.empty()) return;
        const Micros start = begin + (cold ? config_.cold_start : 0);
        const Micros end = start + effective_duration(f, r.state.device, media_ptrs(media));
        if (cold) {
            cold_time_ += config_.cold_start;
            ++cold_starts_;
        }
        r.container = f.app_id;
        r.last_used = end;
        commit(fi, *pick, media, begin, start, end, static_cast<std::size_t>(t / config_.window));
    }

    SimResult account();

    const Trace &trace_;
    const Catalog &catalog_;
    const CarbonIntensitySeries &intensity_;
    SimConfig config_;
    std::map<std::string, std::vector<std::string>> locations_;
    std::vector<DeviceRuntime> devices_;
    std::vector<std::optional<Micros>> best_;
    std::vector<Execution> exec_;
    std::map<std::string, std::size_t> index_;
    std::map<std::string, std::size_t> medium_index_;
    std::priority_queue<Event, std::vector<Event>, EventAfter> queue_;
    std::uint64_t next_id_ = 0;
    std::vector<std::size_t> pending_;
    std::size_t arrived_ = 0;
    std::size_t completed_ = 0;
    std::size_t windows_seen_ = 0;
    std::size_t infeasible_at_admission_ = 0;
    Micros base_horizon_ = 0;
    PlacementMemo memo_;
    SolverTotals solver_;
    Micros cold_time_ = 0;
    std::size_t cold_starts_ = 0;
};

SimResult Simulation::account()
{
    SimResult res;
    Metrics &m = res.metrics;
    const Micros w = config_.window;
    m.policy = to_string(config_.policy);
    m.functions = trace_.size();
    m.completed = completed_;

    Micros h = base_horizon_;
    bool any_ran = false;
    for (const auto &d : devices_) {
        h = std::max(h, d.busy_until);
        any_ran = any_ran || !d.busy.empty();
    }
    h = (h + w - 1) / w * w;
    if (any_ran && h == 0) h = w;
    m.horizon = h;
    const auto n_int = static_cast<std::size_t>(h / w);
    m.windows = n_int;

    std::vector<Joules> measured(n_int, 0.0);
    auto add_span = [&](Micros a, Micros b, Watts p) {
        for (Micros k = a / w; k < static_cast<Micros>(n_int) && k * w < b; ++k) {
            const Micros lo = std::max(a, k * w), hi = std::min(b, (k + 1) * w);
            if (hi > lo) measured[static_cast<std::size_t>(k)] += p * to_seconds(hi - lo);
        }
    };
    auto add_lump = [&](Micros t, Joules j) {
        if (n_int == 0) return;
        measured[std::min(static_cast<std::size_t>(t / w), n_int - 1)] += j;
    };

    // Device timelines: busy at full power, gated at zero, idle otherwise.
    for (auto &r : devices_) {
        const auto &dev = r.state.device;
        std::vector<std::pair<Interval, int>> marks; // 0 busy, 2 gated
        for (const auto &b : r.busy) marks.push_back({b, 0});
        for (const auto &g : r.gated) marks.push_back({g, 2});
        std::sort(marks.begin(), marks.end());
        Micros busy_time = 0;
        Micros t = 0;
        auto emit = [&](Micros a, Micros b, const char *state, Watts p) {
            if (b <= a) return;
            res.timeline.push_back({dev.id, a, b, state, p, p * to_seconds(b - a)});
            m.device_energy += p * to_seconds(b - a);
            m.operational_carbon += segment_carbon(intensity_, a, b, p);
            add_span(a, b, p);
        };
        for (const auto &[iv, kind] : marks) {
            const Micros a = std::max(iv.first, t);
            if (iv.second <= a) continue;
            emit(t, a, "idle", dev.idle_power());
            if (kind == 0) {
                emit(a, iv.second, "busy", dev.peak_power);
                busy_time += iv.second - a;
            } else {
                emit(a, iv.second, "gated", 0.0);
            }
            t = iv.second;
        }
        emit(t, h, "idle", dev.idle_power());
        for (const auto &[at, j] : r.lumps) {
            m.device_energy += j;
            m.startup_energy += j;
            m.operational_carbon += j / kJoulesPerKwh * intensity_at(intensity_, at);
            add_lump(at, j);
        }
        m.device_utilization[dev.id] = h > 0 ? static_cast<double>(busy_time) / static_cast<double>(h) : 0.0;
        m.embodied_carbon += embodied_carbon(dev, h);
    }

    // Resident objects draw idle power on every medium holding a copy.
    Watts media_idle = 0.0;
    for (const auto &o : catalog_.objects)
        for (const auto &loc : locations_.at(o.id)) media_idle += o.size * catalog_.find_medium(loc)->idle_power_per_byte;
    m.media_energy += media_idle * to_seconds(h);
    m.operational_carbon += segment_carbon(intensity_, 0, h, media_idle);
    add_span(0, h, media_idle);

    // Per-function telemetry and data movement.
    const AttributionModel model = [&] {
        AttributionModel md = config_.model ? *config_.model : catalog_model(catalog_);
        for (const auto &name : canonical_features()) md.coefficients.try_emplace(name, 0.0);
        return md;
    }();
    std::vector<std::vector<TelemetrySample>> samples(n_int);
    for (std::size_t fi = 0; fi < trace_.size(); ++fi) {
        const auto &e = exec_[fi];
        if (!e.ran) continue;
        const auto &f = trace_[fi];
        const auto &dev = devices_[e.device].state.device;
        double moved = 0.0, remote = 0.0;
        Joules data_j = 0.0, net_j = 0.0;
        for (std::size_t i = 0; i < e.media.size(); ++i) {
            const auto &med = catalog_.media[e.media[i]];
            const double bytes = access_at(f, i).bytes;
            moved += bytes;
            data_j += bytes * med.active_power_per_bw;
            if (!med.is_local_to(dev.id)) {
                remote += bytes;
                net_j += bytes * catalog_.network_j_per_byte;
            }
        }
        m.media_energy += data_j;
        m.network_energy += net_j;
        m.operational_carbon += (data_j + net_j) / kJoulesPerKwh * intensity_at(intensity_, e.start);
        add_lump(e.start, data_j + net_j);

        const std::string cycles = dev.kind == DeviceKind::CPU ? feature::kCpuCycles : feature::kAcceleratorCycles;
        const auto start_k = std::min(static_cast<std::size_t>(e.start / w), n_int - 1);
        for (Micros k = e.busy_start / w; k < static_cast<Micros>(n_int) && k * w < e.end; ++k) {
            const Micros lo = std::max(e.busy_start, k * w), hi = std::min(e.end, (k + 1) * w);
            TelemetrySample s{f.id, dev.id, {}};
            s.features[cycles] = to_seconds(std::max<Micros>(0, hi - lo)) * dev.capacity;
            if (static_cast<std::size_t>(k) == start_k) {
                s.features[feature::kStorageBytesMoved] = moved;
                s.features[feature::kNetworkBytes] = remote;
            }
            samples[static_cast<std::size_t>(k)].push_back(std::move(s));
        }
        // A zero-length execution still moved its data in its start interval.
        if (e.end == e.busy_start) {
            TelemetrySample s{f.id, dev.id, {}};
            s.features[feature::kStorageBytesMoved] = moved;
            s.features[feature::kNetworkBytes] = remote;
            samples[start_k].push_back(std::move(s));
        }
    }
    m.total_energy = m.device_energy + m.media_energy + m.network_energy;

    // Close the books interval by interval.
    std::map<std::string, ProvenanceRecord> records;
    for (const auto &f : trace_) records[f.id].function_id = f.id;
    for (std::size_t k = 0; k < n_int; ++k) {
        const IntervalLedger ledger = attribute_interval(model, samples[k], measured[k], config_.idle_attribution);
        for (const auto &[id, share] : ledger.shares) {
            records[id].direct_energy += share.direct;
            records[id].idle_share += share.idle_share;
        }
        m.operator_residual += ledger.operator_residual;
    }
    std::map<std::string, std::string> parent_of;
    for (const auto &f : trace_)
        if (f.parent) parent_of[f.id] = *f.parent;
    for (std::size_t fi = 0; fi < trace_.size(); ++fi)
        if (exec_[fi].ran) {
            auto &rec = records[trace_[fi].id];
            rec.carbon = carbonize(rec.own_energy(), intensity_, exec_[fi].end);
        }
    res.provenance = aggregate_provenance(std::move(records), parent_of);
    for (const auto &f : trace_) m.provenance_total += res.provenance.at(f.id).own_energy();

    m.total_carbon = m.operational_carbon + m.embodied_carbon;

    // Violations and the schedule export.
    std::map<std::string, std::pair<std::size_t, std::size_t>> tail; // app -> (on time, count)
    std::map<std::string, double> tail_target;
    for (std::size_t fi = 0; fi < trace_.size(); ++fi) {
        const auto &f = trace_[fi];
        const auto &e = exec_[fi];
        const auto &rec = res.provenance.at(f.id);
        ScheduleRow row;
        row.function_id = f.id;
        row.app_id = f.app_id;
        row.ran = e.ran;
        if (e.ran) {
            row.window = e.window;
            row.device_id = devices_[e.device].state.device.id;
            for (auto mi : e.media) row.media_ids.push_back(catalog_.media[mi].id);
            row.start = e.start;
            row.end = e.end;
        } else {
            row.window = static_cast<std::size_t>(f.arrival / w);
        }
        row.energy = rec.own_energy();
        row.carbon = rec.carbon;
        const bool late = !e.ran || e.end > f.absolute_deadline();
        row.violated = late;
        if (!e.ran) {
            ++m.unschedulable;
        } else if (f.sla.percentile >= 1.0) {
            if (late) ++m.deadline_violations;
        } else {
            auto &[ok, n] = tail[f.app_id];
            ++n;
            if (!late) ++ok;
            auto [it, fresh] = tail_target.emplace(f.app_id, f.sla.percentile);
            if (!fresh) it->second = std::max(it->second, f.sla.percentile);
        }
        if (f.energy_budget && rec.own_energy() > *f.energy_budget) ++m.energy_budget_overruns;
        if (f.sla.carbon_budget && rec.carbon > *f.sla.carbon_budget) ++m.carbon_budget_overruns;

        auto &app = m.apps[f.app_id];
        ++app.functions;
        if (late) ++app.violations;
        app.energy += rec.own_energy();
        app.carbon += rec.carbon;
        res.schedule.push_back(std::move(row));
    }
    for (const auto &[app, counts] : tail)
        if (static_cast<double>(counts.first) < tail_target[app] * static_cast<double>(counts.second)) ++m.tail_breaches;
    m.sla_violations = m.deadline_violations + m.tail_breaches + m.unschedulable;
    m.violation_rate = m.functions ? static_cast<double>(m.sla_violations) / static_cast<double>(m.functions) : 0.0;
    m.infeasible_at_admission = infeasible_at_admission_;
    m.solver = solver_;
    m.cold_start_time_total = cold_time_;
    m.cold_starts = cold_starts_;
    return res;
}

} // namespace

SimResult simulate(const Trace &trace, const Catalog &catalog, const CarbonIntensitySeries &intensity,
                   const SimConfig &config)
{
    Simulation sim(trace, catalog, intensity, config);
    return sim.run();
}

std::vector<ComparisonRow> compare_policies(const Trace &trace, const Catalog &catalog,
                                            const CarbonIntensitySeries &intensity, const SimConfig &config,
                                            const std::vector<Policy> &policies)
{
    if (policies.size() < 2) throw InputError("a policy comparison needs at least two policies");
    std::vector<ComparisonRow> out;
    for (auto p : policies) {
        SimConfig c = config;
        c.policy = p;
        out.push_back({to_string(p), simulate(trace, catalog, intensity, c).metrics});
    }
    return out;
}

namespace {

std::string quote(const std::string &s)
{
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + '"';
}

/// Minimal ordered JSON writer; keeps key order and number formatting fixed.
class JsonOut {
public:
    explicit JsonOut(std::ostream &out) : out_(out) {}

    void open(const std::string &key = {})
    {
        prefix(key);
        out_ << '{';
        first_ = true;
        ++depth_;
    }
    void close()
    {
        --depth_;
        out_ << '\n' << std::string(2 * depth_, ' ') << '}';
        first_ = false;
    }
    void num(const std::string &key, double v)
    {
        prefix(key);
        out_ << format_double(v);
    }
    void integer(const std::string &key, long long v)
    {
        prefix(key);
        out_ << v;
    }
    void str(const std::string &key, const std::string &v)
    {
        prefix(key);
        out_ << quote(v);
    }

private:
    void prefix(const std::string &key)
    {
        if (depth_ == 0) return;
        if (!first_) out_ << ',';
        out_ << '\n' << std::string(2 * depth_, ' ') << quote(key) << ": ";
        first_ = false;
    }

    std::ostream &out_;
    int depth_ = 0;
    bool first_ = true;
};

} // namespace

void write_metrics_json(std::ostream &out, const Metrics &m, bool include_wall_time)
{
    JsonOut j(out);
    j.open();
    j.str("policy", m.policy);
    j.integer("horizon_us", m.horizon);
    j.integer("windows", static_cast<long long>(m.windows));
    j.integer("functions", static_cast<long long>(m.functions));
    j.integer("completed", static_cast<long long>(m.completed));
    j.num("total_energy_j", m.total_energy);
    j.num("device_energy_j", m.device_energy);
    j.num("startup_energy_j", m.startup_energy);
    j.num("media_energy_j", m.media_energy);
    j.num("network_energy_j", m.network_energy);
    j.num("operational_carbon_g", m.operational_carbon);
    j.num("embodied_carbon_g", m.embodied_carbon);
    j.num("total_carbon_g", m.total_carbon);
    j.integer("sla_violations", static_cast<long long>(m.sla_violations));
    j.num("violation_rate", m.violation_rate);
    j.integer("deadline_violations", static_cast<long long>(m.deadline_violations));
    j.integer("tail_breaches", static_cast<long long>(m.tail_breaches));
    j.integer("unschedulable", static_cast<long long>(m.unschedulable));
    j.integer("infeasible_at_admission", static_cast<long long>(m.infeasible_at_admission));
    j.integer("energy_budget_overruns", static_cast<long long>(m.energy_budget_overruns));
    j.integer("carbon_budget_overruns", static_cast<long long>(m.carbon_budget_overruns));
    j.integer("cold_starts", static_cast<long long>(m.cold_starts));
    j.integer("cold_start_time_total_us", m.cold_start_time_total);
    j.num("provenance_total_j", m.provenance_total);
    j.num("operator_residual_j", m.operator_residual);
    j.open("device_utilization");
    for (const auto &[id, u] : m.device_utilization) j.num(id, u);
    j.close();
    j.open("apps");
    for (const auto &[id, a] : m.apps) {
        j.open(id);
        j.integer("functions", static_cast<long long>(a.functions));
        j.integer("violations", static_cast<long long>(a.violations));
        j.num("energy_j", a.energy);
        j.num("carbon_g", a.carbon);
        j.close();
    }
    j.close();
    j.open("solver");
    j.integer("calls", static_cast<long long>(m.solver.calls));
    j.integer("exact_calls", static_cast<long long>(m.solver.exact_calls));
    j.integer("heuristic_calls", static_cast<long long>(m.solver.heuristic_calls));
    j.integer("round_robin_calls", static_cast<long long>(m.solver.round_robin_calls));
    j.integer("fallbacks", static_cast<long long>(m.solver.fallbacks));
    j.integer("nodes_expanded", static_cast<long long>(m.solver.nodes_expanded));
    j.integer("cache_hits", static_cast<long long>(m.solver.cache_hits));
    j.integer("cache_misses", static_cast<long long>(m.solver.cache_misses));
    if (include_wall_time) j.num("wall_time_us", m.solver.wall_time_us);
    j.close();
    j.close();
    out << '\n';
}

void write_schedule_csv(std::ostream &out, const std::vector<ScheduleRow> &rows)
{
    out << "function_id,window,device_id,start_us,end_us,energy_j,carbon_g,violated\n";
    for (const auto &r : rows)
        out << r.function_id << ',' << r.window << ',' << r.device_id << ',' << r.start << ',' << r.end << ','
            << format_double(r.energy) << ',' << format_double(r.carbon) << ',' << (r.violated ? "true" : "false")
            << '\n';
}

void write_provenance_csv(std::ostream &out, const SimResult &result)
{
    out << "function_id,app_id,direct_j,idle_share_j,descendant_j,carbon_g\n";
    for (const auto &row : result.schedule) {
        const auto &r = result.provenance.at(row.function_id);
        out << row.function_id << ',' << row.app_id << ',' << format_double(r.direct_energy) << ','
            << format_double(r.idle_share) << ',' << format_double(r.descendant_energy) << ','
            << format_double(r.carbon) << '\n';
    }
}

void write_timeline_csv(std::ostream &out, const std::vector<TimelineRow> &rows)
{
    out << "device_id,start_us,end_us,state,power_w,energy_j\n";
    for (const auto &r : rows)
        out << r.device_id << ',' << r.start << ',' << r.end << ',' << r.state << ',' << format_double(r.power) << ','
            << format_double(r.energy) << '\n';
}

} // namespace carbonsched
