#pragma once

// Random placement instances shaped like the three-app example (5 devices,
// 2 media, three objects for a1) and an exhaustive optimum for them.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "carbonsched/hardware.hpp"
#include "carbonsched/placement.hpp"
#include "carbonsched/rng.hpp"

namespace fig6 {

using namespace carbonsched;

inline ComputeDevice make_device(const std::string &id, DeviceKind kind, Watts peak, double capacity,
                                 Micros startup_latency, Joules startup_energy)
{
    ComputeDevice d;
    d.id = id;
    d.kind = kind;
    d.peak_power = peak;
    d.capacity = capacity;
    d.startup_latency = startup_latency;
    d.startup_energy = startup_energy;
    return d;
}

inline PlacementProblem instance(Rng &rng, std::size_t n)
{
    PlacementProblem p;
    p.now = 0;
    p.window_end = 1000;
    p.options.network_j_per_byte = 5e-9;

    auto state = [&](ComputeDevice d, double gated_prob) {
        DeviceState s;
        s.device = std::move(d);
        s.free_at = rng.bernoulli(0.4) ? static_cast<Micros>(rng.below(1500)) : 0;
        s.powered = !rng.bernoulli(gated_prob);
        return s;
    };
    p.devices.push_back(state(make_device("cpu0", DeviceKind::CPU, rng.uniform(100, 200), rng.uniform(0.8e9, 1.2e9), 0, 0), 0.1));
    p.devices.push_back(state(make_device("cpu1", DeviceKind::CPU, rng.uniform(100, 200), rng.uniform(0.8e9, 1.2e9), 0, 0), 0.1));
    p.devices.push_back(state(make_device("gpu0", DeviceKind::GPU, rng.uniform(200, 300), 1e9,
                                          static_cast<Micros>(rng.uniform(100, 600)), rng.uniform(0.05, 0.3)), 0.3));
    for (const char *id : {"fpga0", "fpga1"}) {
        auto s = state(make_device(id, DeviceKind::FPGA, rng.uniform(20, 40), 1e9,
                                   static_cast<Micros>(rng.uniform(200, 1500)), rng.uniform(0.01, 0.1)),
                       0.2);
        const auto pick = rng.below(4);
        if (pick > 0) s.configured_app = "a" + std::to_string(pick);
        p.devices.push_back(std::move(s));
    }

    StorageMedium dram;
    dram.id = "dram0";
    dram.tier = StorageTier::DRAM;
    dram.capacity = 64e9;
    dram.active_power_per_bw = rng.uniform(0.5e-10, 2e-10);
    dram.idle_power_per_byte = 1e-11;
    dram.access_latency_p50 = 0.1;
    dram.access_latency_tail = 1.0;
    dram.bandwidth = 2e10;
    dram.remote_access_penalty = rng.uniform(2, 20);
    dram.local_to = {"cpu0", "cpu1"};
    StorageMedium ssd;
    ssd.id = "ssd0";
    ssd.tier = StorageTier::SSD;
    ssd.capacity = 1e12;
    ssd.active_power_per_bw = rng.uniform(2e-10, 8e-10);
    ssd.idle_power_per_byte = 1e-13;
    ssd.access_latency_p50 = rng.uniform(20, 120);
    ssd.access_latency_tail = 500;
    ssd.bandwidth = 2e9;
    ssd.remote_access_penalty = rng.uniform(10, 80);
    ssd.local_to = {"cpu0", "cpu1", "gpu0"};
    p.media = {dram, ssd};

    const std::vector<std::string> all = {"dram0", "ssd0"};
    for (const char *obj : {"a1-o1", "a1-o2", "a1-o3"}) {
        const auto k = rng.below(3);
        p.object_locations[obj] = k == 0 ? std::vector<std::string>{"dram0"}
                                : k == 1 ? std::vector<std::string>{"ssd0"}
                                         : all;
    }

    for (std::size_t i = 0; i < n; ++i) {
        MicroFunction f;
        f.id = "f" + std::to_string(i);
        const auto app = rng.below(3);
        f.app_id = "a" + std::to_string(app + 1);
        f.arrival = 0;
        f.work = rng.uniform(1e5, 1.5e6);
        if (app == 0) {
            f.speedup = {{"CPU", 1.0}, {"GPU", rng.uniform(1.0, 2.0)}, {"FPGA", rng.uniform(1.5, 4.0)}};
            for (const char *obj : {"a1-o1", "a1-o2", "a1-o3"}) f.reads.push_back({obj, rng.uniform(1e4, 1e6)});
        } else if (app == 1) {
            f.speedup = {{"CPU", 1.0}, {"GPU", rng.uniform(4.0, 10.0)}};
        } else {
            f.speedup = {{"CPU", 1.0}, {"FPGA", rng.uniform(2.0, 6.0)}};
        }
        f.sla.deadline = static_cast<Micros>(rng.uniform(300, 4000));
        p.functions.push_back(std::move(f));
    }
    p.normalize();
    return p;
}

/// Everything the search needs about one (function, device, media) triple,
/// recomputed from the documented formulas.
struct Option {
    std::size_t device = 0;
    std::vector<std::size_t> media;
    Micros duration = 0;
    double cost = 0.0;
};

inline bool local(const StorageMedium &m, const std::string &device)
{
    return std::find(m.local_to.begin(), m.local_to.end(), device) != m.local_to.end();
}

inline Option make_option(const PlacementProblem &p, std::size_t fi, std::size_t d, const std::vector<std::size_t> &media)
{
    const auto &f = p.functions[fi];
    const auto &dev = p.devices[d].device;
    double s = 0.0;
    if (auto it = f.speedup.find(dev.id); it != f.speedup.end())
        s = it->second;
    else
        s = f.speedup.at(to_string(dev.kind));
    double us = f.work / (dev.capacity * s) * 1e6;
    double data = 0.0;
    for (std::size_t i = 0; i < media.size(); ++i) {
        const auto &m = p.media[media[i]];
        const double bytes = i < f.reads.size() ? f.reads[i].bytes : f.writes[i - f.reads.size()].bytes;
        us += m.access_latency_p50 + bytes / m.bandwidth * 1e6;
        data += bytes * m.active_power_per_bw;
        if (!local(m, dev.id)) {
            us += m.remote_access_penalty;
            data += bytes * p.options.network_j_per_byte;
        }
    }
    Option o;
    o.device = d;
    o.media = media;
    o.duration = static_cast<Micros>(std::max(0.0, std::ceil(us - 1e-6)));
    const double marginal = dev.peak_power - dev.idle_power();
    o.cost = marginal * (static_cast<double>(o.duration) / 1e6) + data;
    return o;
}

/// Per function, per device: every media combination, with the ones that are
/// both slower and no cheaper than another combination removed.
inline std::vector<std::vector<std::vector<Option>>> all_options(const PlacementProblem &p)
{
    std::vector<std::vector<std::vector<Option>>> out(p.functions.size(),
                                                      std::vector<std::vector<Option>>(p.devices.size()));
    for (std::size_t fi = 0; fi < p.functions.size(); ++fi) {
        const auto &f = p.functions[fi];
        std::vector<std::vector<std::size_t>> candidates;
        auto candidates_for = [&](const std::string &obj) {
            std::vector<std::size_t> c;
            auto it = p.object_locations.find(obj);
            for (std::size_t m = 0; m < p.media.size(); ++m)
                if (it == p.object_locations.end() ||
                    std::find(it->second.begin(), it->second.end(), p.media[m].id) != it->second.end())
                    c.push_back(m);
            return c;
        };
        for (const auto &r : f.reads) candidates.push_back(candidates_for(r.object_id));
        for (const auto &w : f.writes) candidates.push_back(candidates_for(w.object_id));

        for (std::size_t d = 0; d < p.devices.size(); ++d) {
            const auto &dev = p.devices[d].device;
            if (!f.speedup.count(dev.id) && !f.speedup.count(to_string(dev.kind))) continue;
            std::vector<std::size_t> pick(candidates.size(), 0);
            std::vector<Option> opts;
            for (;;) {
                std::vector<std::size_t> media;
                for (std::size_t i = 0; i < candidates.size(); ++i) media.push_back(candidates[i][pick[i]]);
                opts.push_back(make_option(p, fi, d, media));
                std::size_t i = 0;
                while (i < candidates.size() && ++pick[i] == candidates[i].size()) pick[i++] = 0;
                if (i == candidates.size()) break;
            }
            std::vector<Option> kept;
            for (const auto &o : opts) {
                bool dominated = false;
                for (const auto &q : opts)
                    if (&q != &o && q.duration <= o.duration && q.cost <= o.cost &&
                        (q.duration < o.duration || q.cost < o.cost))
                        dominated = true;
                bool duplicate = false;
                for (const auto &k : kept)
                    if (k.duration == o.duration && k.cost == o.cost) duplicate = true;
                if (!dominated && !duplicate) kept.push_back(o);
            }
            out[fi][d] = std::move(kept);
        }
    }
    return out;
}

inline bool setup_needed(const DeviceState &d, const std::string &app)
{
    return !d.powered || (d.device.kind == DeviceKind::FPGA && d.configured_app != app);
}

/// EDF from the device's ready time; every function must finish by its deadline.
inline bool device_feasible(const PlacementProblem &p, std::size_t d, std::vector<std::pair<std::size_t, Micros>> jobs)
{
    if (jobs.empty()) return true;
    const auto &ds = p.devices[d];
    const std::string &app = p.functions[jobs.front().first].app_id;
    if (ds.device.kind == DeviceKind::FPGA)
        for (const auto &[fi, dur] : jobs)
            if (p.functions[fi].app_id != app) return false;
    std::sort(jobs.begin(), jobs.end(), [&](const auto &x, const auto &y) {
        const Micros dx = p.functions[x.first].arrival + p.functions[x.first].sla.deadline;
        const Micros dy = p.functions[y.first].arrival + p.functions[y.first].sla.deadline;
        return dx != dy ? dx < dy : x.first < y.first;
    });
    Micros t = std::max(p.now, ds.free_at) + (setup_needed(ds, app) ? ds.device.startup_latency : 0);
    for (const auto &[fi, dur] : jobs) {
        t += dur;
        if (t > p.functions[fi].arrival + p.functions[fi].sla.deadline) return false;
    }
    return true;
}

struct Optimum {
    std::size_t unplaced = 0;
    /// Optimum from the subset decomposition (summation order differs).
    double dp_cost = 0.0;
    /// Same optimum summed in the canonical order: placed edges in function
    /// order, then device setups in device order.
    double cost = 0.0;
};

/// Hard-deadline optimum by exhaustive decomposition: the cheapest feasible
/// media mix for every (device, function subset), combined over devices with
/// a subset DP, then every assignment within rounding distance of that value
/// re-summed canonically.
inline Optimum exhaustive(const PlacementProblem &p)
{
    const std::size_t n = p.functions.size();
    const std::size_t nd = p.devices.size();
    const std::uint32_t full = (1u << n) - 1;
    const double inf = std::numeric_limits<double>::infinity();
    const auto opts = all_options(p);

    std::vector<std::vector<double>> device_cost(nd, std::vector<double>(full + 1, inf));
    for (std::size_t d = 0; d < nd; ++d) {
        device_cost[d][0] = 0.0;
        for (std::uint32_t s = 1; s <= full; ++s) {
            std::vector<std::size_t> members;
            bool runnable = true;
            for (std::size_t fi = 0; fi < n; ++fi)
                if (s >> fi & 1u) {
                    members.push_back(fi);
                    if (opts[fi][d].empty()) runnable = false;
                }
            if (!runnable) continue;
            const auto &app = p.functions[members.front()].app_id;
            const double setup = setup_needed(p.devices[d], app) ? p.devices[d].device.startup_energy : 0.0;
            std::vector<std::size_t> pick(members.size(), 0);
            for (;;) {
                std::vector<std::pair<std::size_t, Micros>> jobs;
                double c = setup;
                for (std::size_t k = 0; k < members.size(); ++k) {
                    const auto &o = opts[members[k]][d][pick[k]];
                    jobs.emplace_back(members[k], o.duration);
                    c += o.cost;
                }
                if (device_feasible(p, d, jobs)) device_cost[d][s] = std::min(device_cost[d][s], c);
                std::size_t k = 0;
                while (k < members.size() && ++pick[k] == opts[members[k]][d].size()) pick[k++] = 0;
                if (k == members.size()) break;
            }
        }
    }

    std::vector<double> best(full + 1, inf);
    best[0] = 0.0;
    for (std::size_t d = 0; d < nd; ++d) {
        std::vector<double> next(full + 1, inf);
        for (std::uint32_t s = 0; s <= full; ++s)
            for (std::uint32_t t = s;; t = (t - 1) & s) {
                const double v = best[s & ~t] + device_cost[d][t];
                if (v < next[s]) next[s] = v;
                if (t == 0) break;
            }
        best = std::move(next);
    }
    Optimum opt;
    opt.unplaced = n + 1;
    for (std::uint32_t s = 0; s <= full; ++s) {
        if (best[s] == inf) continue;
        const std::size_t u = n - static_cast<std::size_t>(std::popcount(s));
        if (u < opt.unplaced || (u == opt.unplaced && best[s] < opt.dp_cost)) {
            opt.unplaced = u;
            opt.dp_cost = best[s];
        }
    }

    // Canonical re-summation over all assignments near the optimum.
    const double limit = opt.dp_cost + 1e-9 * (1.0 + std::abs(opt.dp_cost));
    std::vector<double> cheapest(n, inf);
    for (std::size_t fi = 0; fi < n; ++fi)
        for (const auto &od : opts[fi])
            for (const auto &o : od) cheapest[fi] = std::min(cheapest[fi], o.cost);
    double best_canonical = inf;
    std::vector<const Option *> chosen(n, nullptr);
    std::vector<std::vector<std::pair<std::size_t, Micros>>> jobs(nd);

    auto rest_bound = [&](std::size_t from, std::size_t skips) {
        std::vector<double> rest;
        for (std::size_t fi = from; fi < n; ++fi) rest.push_back(cheapest[fi] == inf ? 0.0 : cheapest[fi]);
        std::sort(rest.begin(), rest.end());
        double b = 0.0;
        for (std::size_t i = 0; i + std::min(skips, rest.size()) < rest.size(); ++i) b += rest[i];
        return b;
    };
    auto partial_setup = [&]() {
        double s = 0.0;
        for (std::size_t d = 0; d < nd; ++d)
            if (!jobs[d].empty() && setup_needed(p.devices[d], p.functions[jobs[d].front().first].app_id))
                s += p.devices[d].device.startup_energy;
        return s;
    };

    auto dfs = [&](auto &&self, std::size_t fi, std::size_t unplaced, double partial) -> void {
        if (unplaced > opt.unplaced) return;
        if (partial + partial_setup() + rest_bound(fi, opt.unplaced - unplaced) > limit) return;
        if (fi == n) {
            if (unplaced != opt.unplaced) return;
            double total = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                if (chosen[k]) total += chosen[k]->cost;
            for (std::size_t d = 0; d < nd; ++d)
                if (!jobs[d].empty() && setup_needed(p.devices[d], p.functions[jobs[d].front().first].app_id))
                    total += p.devices[d].device.startup_energy;
            best_canonical = std::min(best_canonical, total);
            return;
        }
        for (std::size_t d = 0; d < nd; ++d)
            for (const auto &o : opts[fi][d]) {
                jobs[d].emplace_back(fi, o.duration);
                if (device_feasible(p, d, jobs[d])) {
                    chosen[fi] = &o;
                    self(self, fi + 1, unplaced, partial + o.cost);
                    chosen[fi] = nullptr;
                }
                jobs[d].pop_back();
            }
        self(self, fi + 1, unplaced + 1, partial);
    };
    dfs(dfs, 0, 0, 0.0);
    opt.cost = best_canonical;
    return opt;
}

} // namespace fig6
