#include "carbonsched/interchange.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

namespace carbonsched {

bool dominates(const TradeoffPoint &p, const TradeoffPoint &q)
{
    return p.energy <= q.energy && p.tail_latency <= q.tail_latency &&
           (p.energy < q.energy || p.tail_latency < q.tail_latency);
}

namespace {

void check_point(const TradeoffPoint &p)
{
    if (!(p.energy >= 0.0) || !(p.tail_latency >= 0.0))
        throw std::domain_error("tradeoff point '" + p.label + "' has a negative or NaN coordinate");
}

bool point_order(const TradeoffPoint &a, const TradeoffPoint &b)
{
    return std::tie(a.energy, a.tail_latency, a.label) < std::tie(b.energy, b.tail_latency, b.label);
}

} // namespace

std::vector<TradeoffPoint> pareto_frontier(std::vector<TradeoffPoint> points)
{
    for (const auto &p : points) check_point(p);
    std::sort(points.begin(), points.end(), point_order);
    std::vector<TradeoffPoint> out;
    double best_tail = std::numeric_limits<double>::infinity();
    for (auto &p : points) {
        if (p.tail_latency < best_tail) {
            best_tail = p.tail_latency;
            out.push_back(std::move(p));
        }
    }
    return out;
}

void write_frontier_csv(std::ostream &out, const std::vector<TradeoffPoint> &points)
{
    std::vector<TradeoffPoint> sorted = points;
    for (const auto &p : sorted) check_point(p);
    std::sort(sorted.begin(), sorted.end(), point_order);
    out << "label,energy_j,tail_us,on_frontier\n";
    double best_tail = std::numeric_limits<double>::infinity();
    for (const auto &p : sorted) {
        const bool on = p.tail_latency < best_tail;
        if (on) best_tail = p.tail_latency;
        out << p.label << ',' << format_double(p.energy) << ',' << format_double(p.tail_latency) << ','
            << (on ? "true" : "false") << '\n';
    }
}

void LoadProfile::validate() const
{
    std::vector<std::string> issues;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (!(samples[i].intensity >= 0.0)) issues.push_back("rate at sample " + std::to_string(i) + " must be >= 0");
        if (i > 0 && samples[i].time <= samples[i - 1].time)
            issues.push_back("timestamps must increase (sample " + std::to_string(i) + ")");
    }
    if (!samples.empty() && end < samples.back().time) issues.push_back("profile end precedes its last sample");
    if (!issues.empty()) throw ValidationError(std::move(issues));
}

namespace {

struct Span {
    Micros start;
    Micros end;
    double rate;
};

std::vector<Span> spans(const LoadProfile &p)
{
    std::vector<Span> out;
    for (std::size_t i = 0; i < p.samples.size(); ++i) {
        const Micros end = i + 1 < p.samples.size() ? p.samples[i + 1].time : p.end;
        if (end > p.samples[i].time) out.push_back({p.samples[i].time, end, p.samples[i].intensity});
    }
    return out;
}

/// Service time of one request, µs.
double service_us(const ComputeDevice &d, double speedup, double work)
{
    return work / (d.capacity * speedup) * kMicrosPerSecond;
}

/// An elastic pool of whole devices following `rates` segment by segment.
ServingOutcome serve_with_pool(const std::vector<Span> &sp, const std::vector<double> &rates, const ComputeDevice &d,
                               double speedup, double work, Micros deadline)
{
    ServingOutcome out;
    const double per_request = work / (d.capacity * speedup); // device-seconds
    const double headroom = static_cast<double>(deadline) - service_us(d, speedup, work);
    double previous = -1.0;
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const double units = rates[i] * per_request;
        const double count = std::ceil(units - 1e-12);
        const double secs = to_seconds(sp[i].end - sp[i].start);
        out.energy += (d.idle_power() * count + (d.peak_power - d.idle_power()) * units) * secs;
        const double joined = std::max(0.0, count - std::max(previous, 0.0));
        out.energy += joined * d.startup_energy;
        if (rates[i] > 0.0) {
            if (headroom < 0.0) ++out.violations;
            else if (previous >= 0.0 && joined > 0.0 && static_cast<double>(d.startup_latency) > headroom)
                ++out.violations;
        }
        previous = count;
    }
    return out;
}

} // namespace

double rate_quantile(const LoadProfile &profile, double quantile)
{
    if (!(quantile >= 0.0 && quantile <= 1.0)) throw std::domain_error("quantile must lie in [0, 1]");
    auto sp = spans(profile);
    if (sp.empty()) return 0.0;
    std::stable_sort(sp.begin(), sp.end(), [](const Span &a, const Span &b) { return a.rate < b.rate; });
    double total = 0.0;
    for (const auto &s : sp) total += static_cast<double>(s.end - s.start);
    double cumulative = 0.0;
    for (const auto &s : sp) {
        cumulative += static_cast<double>(s.end - s.start);
        if (cumulative >= quantile * total) return s.rate;
    }
    return sp.back().rate;
}

HybridPlan split_hybrid(const LoadProfile &profile, const ComputeDevice &cpu, const ComputeDevice &fpga,
                        const SLA &sla, const HybridOptions &options)
{
    profile.validate();
    cpu.validate();
    fpga.validate();
    if (!(options.work_per_request > 0.0) || !(options.cpu_speedup > 0.0) || !(options.fpga_speedup > 0.0))
        throw InputError("hybrid options: work and speedups must be > 0");

    HybridPlan plan;
    const auto sp = spans(profile);
    const bool any_load = std::any_of(sp.begin(), sp.end(), [](const Span &s) { return s.rate > 0.0; });
    if (!any_load) return plan;

    const double work = options.work_per_request;
    const double b = rate_quantile(profile, options.baseline_percentile);
    const double fpga_max_rate = fpga.capacity * options.fpga_speedup / work;
    if (b > fpga_max_rate * (1.0 + 1e-12))
        throw InputError("FPGA '" + fpga.id + "' sustains " + format_double(fpga_max_rate) +
                         " requests/s, below the baseline rate " + format_double(b));
    plan.baseline_rate = b;

    std::vector<double> total, excess;
    for (const auto &s : sp) {
        PlanSegment seg{s.start, s.end, s.rate, std::min(s.rate, b), std::max(0.0, s.rate - b)};
        plan.segments.push_back(seg);
        total.push_back(s.rate);
        excess.push_back(seg.cpu_rate);
    }

    plan.cpu_only = serve_with_pool(sp, total, cpu, options.cpu_speedup, work, sla.deadline);
    plan.fpga_only = serve_with_pool(sp, total, fpga, options.fpga_speedup, work, sla.deadline);

    // The dedicated FPGA is configured before the profile starts and stays on.
    ServingOutcome h = serve_with_pool(sp, excess, cpu, options.cpu_speedup, work, sla.deadline);
    if (b > 0.0) {
        h.energy += fpga.startup_energy;
        const bool too_slow = service_us(fpga, options.fpga_speedup, work) > static_cast<double>(sla.deadline);
        for (const auto &seg : plan.segments) {
            const double u = std::min(1.0, seg.fpga_rate * work / (fpga.capacity * options.fpga_speedup));
            h.energy += power_draw(fpga, u) * to_seconds(seg.end - seg.start);
            if (too_slow && seg.fpga_rate > 0.0) ++h.violations;
        }
    }
    plan.hybrid = h;
    return plan;
}

Joules tier_energy(const DataObject &object, const AccessStats &stats, const StorageMedium &medium, double horizon_s)
{
    const double moved = (stats.reads_per_s + stats.writes_per_s) * stats.bytes_per_access;
    return (object.size * medium.idle_power_per_byte + moved * medium.active_power_per_bw) * horizon_s;
}

double tier_latency(const AccessStats &stats, const StorageMedium &medium)
{
    return medium.access_latency_tail + stats.bytes_per_access / medium.bandwidth * kMicrosPerSecond;
}

namespace {

struct TierSearch {
    std::vector<std::vector<std::size_t>> feasible; // per object, media indices
    std::vector<std::vector<Joules>> cost;          // per object, per medium
    std::vector<double> sizes;
    std::vector<double> remaining;
    std::vector<Joules> suffix_min;
    std::vector<std::size_t> current, best;
    Joules best_cost = std::numeric_limits<double>::infinity();
    bool found = false;

    void run()
    {
        const std::size_t n = feasible.size();
        suffix_min.assign(n + 1, 0.0);
        for (std::size_t k = n; k-- > 0;) {
            Joules m = std::numeric_limits<double>::infinity();
            for (auto j : feasible[k]) m = std::min(m, cost[k][j]);
            suffix_min[k] = suffix_min[k + 1] + m;
        }
        current.assign(n, 0);
        dfs(0, 0.0);
    }

    void dfs(std::size_t k, Joules partial)
    {
        if (found && partial + suffix_min[k] > best_cost * (1.0 + 1e-12)) return;
        if (k == feasible.size()) {
            if (!found || partial < best_cost) {
                found = true;
                best_cost = partial;
                best = current;
            }
            return;
        }
        for (auto j : feasible[k]) {
            if (sizes[k] > remaining[j]) continue;
            remaining[j] -= sizes[k];
            current[k] = j;
            dfs(k + 1, partial + cost[k][j]);
            remaining[j] += sizes[k];
        }
    }
};

} // namespace

TierPlan tier_data(const std::vector<DataObject> &objects, const std::map<std::string, AccessStats> &access,
                   const std::vector<StorageMedium> &media, const SLA &sla, const TieringOptions &options)
{
    for (const auto &m : media) m.validate();
    for (const auto &o : objects) o.validate();
    if (!(options.horizon_s > 0.0)) throw InputError("tiering horizon must be > 0");

    std::vector<const DataObject *> order;
    for (const auto &o : objects) order.push_back(&o);
    std::sort(order.begin(), order.end(), [](const auto *a, const auto *b) { return a->id < b->id; });

    double total_size = 0.0, total_capacity = 0.0;
    for (const auto *o : order) total_size += o->size;
    for (const auto &m : media) total_capacity += m.capacity;
    if (total_size > total_capacity)
        throw TieringError("capacity", "objects need " + format_double(total_size) + " bytes but media hold " +
                                           format_double(total_capacity));

    const double bound = options.latency_bound.value_or(static_cast<double>(sla.deadline));
    TierSearch s;
    for (const auto *o : order) {
        const auto it = access.find(o->id);
        const AccessStats st = it == access.end() ? AccessStats{} : it->second;
        const bool accessed = st.reads_per_s + st.writes_per_s > 0.0;
        std::vector<std::size_t> ok;
        std::vector<Joules> c;
        for (std::size_t j = 0; j < media.size(); ++j) {
            c.push_back(tier_energy(*o, st, media[j], options.horizon_s));
            if (o->size > media[j].capacity) continue;
            if (accessed && tier_latency(st, media[j]) > bound) continue;
            ok.push_back(j);
        }
        if (ok.empty())
            throw TieringError("latency", "no medium meets the " + format_double(bound) + " us access bound for object '" +
                                              o->id + "'");
        s.feasible.push_back(std::move(ok));
        s.cost.push_back(std::move(c));
        s.sizes.push_back(o->size);
    }
    s.remaining.clear();
    for (const auto &m : media) s.remaining.push_back(m.capacity);

    TierPlan plan;
    if (order.size() <= options.exact_limit) {
        s.run();
        plan.exact = true;
    } else {
        // Most constrained first: fewest usable media, then largest, then id.
        std::vector<std::size_t> idx(order.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (s.feasible[a].size() != s.feasible[b].size()) return s.feasible[a].size() < s.feasible[b].size();
            return s.sizes[a] > s.sizes[b];
        });
        s.best.assign(order.size(), 0);
        s.found = true;
        for (auto k : idx) {
            std::optional<std::size_t> pick;
            for (auto j : s.feasible[k])
                if (s.sizes[k] <= s.remaining[j] && (!pick || s.cost[k][j] < s.cost[k][*pick])) pick = j;
            if (!pick) {
                s.found = false;
                break;
            }
            s.remaining[*pick] -= s.sizes[k];
            s.best[k] = *pick;
        }
        if (s.found) {
            s.best_cost = 0.0;
            for (std::size_t k = 0; k < order.size(); ++k) s.best_cost += s.cost[k][s.best[k]];
        }
    }
    if (!s.found) throw TieringError("capacity", "no assignment fits the media capacities within the latency bound");
    if (options.energy_budget && s.best_cost > *options.energy_budget)
        throw TieringError("energy_budget", "cheapest placement needs " + format_double(s.best_cost) +
                                                " J, above the budget of " + format_double(*options.energy_budget) + " J");
    for (std::size_t k = 0; k < order.size(); ++k) plan.placement[order[k]->id] = media[s.best[k]].id;
    plan.energy = s.best_cost;
    return plan;
}

} // namespace carbonsched
