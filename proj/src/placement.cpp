#include "carbonsched/placement.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include <fmt/format.h>

namespace carbonsched {

std::string to_string(SlaMode mode) { return mode == SlaMode::Hard ? "hard" : "soft"; }

SlaMode parse_sla_mode(std::string_view name)
{
    if (name == "hard") return SlaMode::Hard;
    if (name == "soft") return SlaMode::Soft;
    throw InputError("unknown sla mode '" + std::string(name) + "' (expected hard, soft)");
}

void PlacementProblem::normalize()
{
    std::sort(functions.begin(), functions.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
    std::sort(devices.begin(), devices.end(), [](const auto &a, const auto &b) { return a.device.id < b.device.id; });
    std::sort(media.begin(), media.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
    for (auto &[_, locs] : object_locations) std::sort(locs.begin(), locs.end());
}

std::vector<std::string> PlacementProblem::issues() const
{
    std::vector<std::string> out;
    std::set<std::string> ids;
    for (const auto &f : functions) {
        auto fi = function_issues(f);
        out.insert(out.end(), fi.begin(), fi.end());
        if (!ids.insert(f.id).second) out.push_back("duplicate function id '" + f.id + "'");
        for (const auto &r : f.reads) {
            auto it = object_locations.find(r.object_id);
            if (it == object_locations.end() || it->second.empty())
                out.push_back("function '" + f.id + "' reads object '" + r.object_id + "' with no location");
        }
    }
    std::set<std::string> dev_ids;
    for (const auto &d : devices) {
        try {
            d.device.validate();
        } catch (const ValidationError &e) {
            out.insert(out.end(), e.issues().begin(), e.issues().end());
        }
        if (!dev_ids.insert(d.device.id).second) out.push_back("duplicate device id '" + d.device.id + "'");
    }
    std::set<std::string> medium_ids;
    for (const auto &m : media) {
        try {
            m.validate();
        } catch (const ValidationError &e) {
            out.insert(out.end(), e.issues().begin(), e.issues().end());
        }
        if (!medium_ids.insert(m.id).second) out.push_back("duplicate medium id '" + m.id + "'");
    }
    for (const auto &[obj, locs] : object_locations)
        for (const auto &l : locs)
            if (!medium_ids.count(l)) out.push_back("object '" + obj + "' located on unknown medium '" + l + "'");
    if (window_end < now) out.push_back("window_end precedes now");
    if (!(options.penalty_j_per_us >= 0.0)) out.push_back("penalty_j_per_us must be >= 0");
    if (!(options.network_j_per_byte >= 0.0)) out.push_back("network_j_per_byte must be >= 0");
    return out;
}

void PlacementProblem::validate() const
{
    if (auto i = issues(); !i.empty()) throw ValidationError(std::move(i));
}

namespace {

std::size_t access_count(const MicroFunction &f) { return f.reads.size() + f.writes.size(); }

const ObjectAccess &access_at(const MicroFunction &f, std::size_t i)
{
    return i < f.reads.size() ? f.reads[i] : f.writes[i - f.reads.size()];
}

Micros round_up_us(double us)
{
    // Absorb representation noise before rounding up to whole microseconds.
    return static_cast<Micros>(std::max(0.0, std::ceil(us - 1e-6)));
}

} // namespace

Micros effective_duration(const MicroFunction &f, const ComputeDevice &device, const MediaChoice &media)
{
    const auto s = f.speedup_on(device);
    if (!s) throw std::domain_error("function '" + f.id + "' has no speedup for device '" + device.id + "'");
    if (media.size() != access_count(f)) throw std::invalid_argument("media choice does not match the access list");
    double us = f.work / (device.capacity * *s) * kMicrosPerSecond;
    for (std::size_t i = 0; i < media.size(); ++i) {
        const StorageMedium &m = *media[i];
        us += m.access_latency_p50 + access_at(f, i).bytes / m.bandwidth * kMicrosPerSecond;
        if (!m.is_local_to(device.id)) us += m.remote_access_penalty;
    }
    return round_up_us(us);
}

EdgeCost edge_cost(const MicroFunction &f, const ComputeDevice &device, const MediaChoice &media,
                   double network_j_per_byte)
{
    EdgeCost c;
    const Micros duration = effective_duration(f, device, media);
    c.compute_energy = (power_draw(device, 1.0) - power_draw(device, 0.0)) * to_seconds(duration);
    for (std::size_t i = 0; i < media.size(); ++i) {
        const double bytes = access_at(f, i).bytes;
        c.data_energy += bytes * media[i]->active_power_per_bw;
        if (!media[i]->is_local_to(device.id)) c.data_energy += bytes * network_j_per_byte;
    }
    c.total = c.compute_energy + c.data_energy;
    return c;
}

bool needs_setup(const DeviceState &device, const std::string &app)
{
    if (!device.powered) return true;
    return device.device.kind == DeviceKind::FPGA && device.configured_app != app;
}

EdgeCost edge_cost(const MicroFunction &f, const DeviceState &device, const MediaChoice &media,
                   const PlacementProblem &problem)
{
    EdgeCost c = edge_cost(f, device.device, media, problem.options.network_j_per_byte);
    if (needs_setup(device, f.app_id)) {
        c.compute_energy += device.device.startup_energy;
        c.total = c.compute_energy + c.data_energy;
    }
    return c;
}

namespace {

/// Ready time of a device for work of `app`, counting any setup.
Micros ready_time(const PlacementProblem &p, const DeviceState &d, const std::string &app)
{
    return std::max(p.now, d.free_at) + (needs_setup(d, app) ? d.device.startup_latency : 0);
}

struct Option {
    std::size_t device = 0;
    std::vector<std::size_t> media;
    Micros duration = 0;
    EdgeCost cost;
    /// Soft mode: penalty if the function ran alone on the device.
    Joules alone_penalty = 0.0;

    Joules term() const { return cost.total + alone_penalty; }
};

/// Candidate options per function, shared by all solvers.
struct Prepared {
    const PlacementProblem &p;
    std::vector<std::vector<std::vector<std::size_t>>> candidates; // [f][access] -> media indices
    std::vector<std::vector<Option>> options;                      // [f] -> pruned options
    std::vector<Joules> min_term;

    explicit Prepared(const PlacementProblem &problem) : p(problem)
    {
        const std::size_t n = p.functions.size();
        candidates.resize(n);
        options.resize(n);
        min_term.assign(n, std::numeric_limits<double>::infinity());
        std::map<std::string, std::size_t> medium_index;
        for (std::size_t m = 0; m < p.media.size(); ++m) medium_index[p.media[m].id] = m;
        std::vector<std::size_t> all_media(p.media.size());
        std::iota(all_media.begin(), all_media.end(), std::size_t{0});

        for (std::size_t fi = 0; fi < n; ++fi) {
            const auto &f = p.functions[fi];
            for (std::size_t a = 0; a < access_count(f); ++a) {
                auto it = p.object_locations.find(access_at(f, a).object_id);
                if (it == p.object_locations.end()) {
                    candidates[fi].push_back(all_media);
                } else {
                    std::vector<std::size_t> idx;
                    for (const auto &id : it->second) idx.push_back(medium_index.at(id));
                    candidates[fi].push_back(std::move(idx));
                }
            }
            for (std::size_t d = 0; d < p.devices.size(); ++d) add_device_options(fi, d);
            for (const auto &o : options[fi]) min_term[fi] = std::min(min_term[fi], o.term());
        }
    }

    MediaChoice media_of(std::size_t fi, const std::vector<std::size_t> &idx) const
    {
        (void)fi;
        MediaChoice out;
        for (auto m : idx) out.push_back(&p.media[m]);
        return out;
    }

private:
    void add_device_options(std::size_t fi, std::size_t d)
    {
        const auto &f = p.functions[fi];
        const auto &ds = p.devices[d];
        if (!f.speedup_on(ds.device)) return;
        const auto &cand = candidates[fi];
        for (const auto &c : cand)
            if (c.empty()) return;

        std::vector<Option> combos;
        std::vector<std::size_t> digit(cand.size(), 0);
        while (true) {
            Option o;
            o.device = d;
            for (std::size_t a = 0; a < cand.size(); ++a) o.media.push_back(cand[a][digit[a]]);
            const MediaChoice mc = media_of(fi, o.media);
            o.duration = effective_duration(f, ds.device, mc);
            o.cost = edge_cost(f, ds.device, mc, p.options.network_j_per_byte);
            combos.push_back(std::move(o));
            std::size_t a = 0;
            while (a < cand.size() && ++digit[a] == cand[a].size()) digit[a++] = 0;
            if (a == cand.size()) break;
        }

        const Micros ready = ready_time(p, ds, f.app_id);
        for (std::size_t i = 0; i < combos.size(); ++i) {
            const auto &o = combos[i];
            bool dominated = false;
            for (std::size_t j = 0; j < combos.size() && !dominated; ++j) {
                if (i == j) continue;
                const auto &q = combos[j];
                const bool no_worse = q.duration <= o.duration && q.cost.total <= o.cost.total;
                const bool strictly = q.duration < o.duration || q.cost.total < o.cost.total;
                dominated = no_worse && (strictly || j < i);
            }
            if (dominated) continue;
            Option kept = o;
            const Micros finish = ready + kept.duration;
            const Micros late = std::max<Micros>(0, finish - f.absolute_deadline());
            if (p.options.sla_mode == SlaMode::Hard) {
                if (late > 0) continue;
            } else {
                kept.alone_penalty = p.options.penalty_j_per_us * static_cast<double>(late);
            }
            options[fi].push_back(std::move(kept));
        }
    }
};

/// Per-device EDF sequences of the functions placed so far.
class DeviceSchedules {
public:
    DeviceSchedules(const PlacementProblem &p, std::size_t n)
        : p_(p), chosen_(n, nullptr), members_(p.devices.size()), penalty_(p.devices.size(), 0.0)
    {
    }

    const Option *chosen(std::size_t fi) const { return chosen_[fi]; }
    bool used(std::size_t d) const { return !members_[d].empty(); }
    const std::vector<std::size_t> &members(std::size_t d) const { return members_[d]; }
    Joules penalty(std::size_t d) const { return penalty_[d]; }

    Joules setup_energy(std::size_t d) const
    {
        if (members_[d].empty()) return 0.0;
        const auto &ds = p_.devices[d];
        return needs_setup(ds, p_.functions[members_[d].front()].app_id) ? ds.device.startup_energy : 0.0;
    }

    /// Latest finish time on a device (its busy horizon).
    Micros busy_until(std::size_t d) const
    {
        const auto &ds = p_.devices[d];
        Micros t = std::max(p_.now, ds.free_at);
        if (members_[d].empty()) return t;
        t = ready_time(p_, ds, p_.functions[members_[d].front()].app_id);
        for (auto fi : members_[d]) t += chosen_[fi]->duration;
        return t;
    }

    struct Trial {
        bool ok = false;
        Joules penalty = 0.0; ///< device penalty after insertion
        Joules setup_added = 0.0;
    };

    /// Evaluates adding `fi` with option `o` without changing state.
    Trial try_add(std::size_t fi, const Option &o) const
    {
        const std::size_t d = o.device;
        const auto &ds = p_.devices[d];
        const auto &f = p_.functions[fi];
        Trial t;
        if (ds.device.kind == DeviceKind::FPGA && !members_[d].empty() &&
            p_.functions[members_[d].front()].app_id != f.app_id)
            return t;
        const std::string &app = members_[d].empty() ? f.app_id : p_.functions[members_[d].front()].app_id;
        Micros clock = ready_time(p_, ds, app);
        const auto pos = insert_pos(d, fi);
        Joules pen = 0.0;
        const bool hard = p_.options.sla_mode == SlaMode::Hard;
        auto visit = [&](std::size_t g, Micros duration) {
            clock += duration;
            const Micros late = clock - p_.functions[g].absolute_deadline();
            if (late > 0) {
                if (hard) return false;
                pen += p_.options.penalty_j_per_us * static_cast<double>(late);
            }
            return true;
        };
        for (std::size_t k = 0; k <= members_[d].size(); ++k) {
            if (k == pos && !visit(fi, o.duration)) return t;
            if (k < members_[d].size() && !visit(members_[d][k], chosen_[members_[d][k]]->duration)) return t;
        }
        t.ok = true;
        t.penalty = pen;
        t.setup_added = members_[d].empty() && needs_setup(ds, f.app_id) ? ds.device.startup_energy : 0.0;
        return t;
    }

    void add(std::size_t fi, const Option &o, const Trial &t)
    {
        const std::size_t d = o.device;
        members_[d].insert(members_[d].begin() + static_cast<std::ptrdiff_t>(insert_pos(d, fi)), fi);
        chosen_[fi] = &o;
        penalty_[d] = t.penalty;
    }

    void remove(std::size_t fi, Joules previous_penalty)
    {
        const std::size_t d = chosen_[fi]->device;
        members_[d].erase(std::find(members_[d].begin(), members_[d].end(), fi));
        chosen_[fi] = nullptr;
        penalty_[d] = previous_penalty;
    }

private:
    std::size_t insert_pos(std::size_t d, std::size_t fi) const
    {
        const auto key = [&](std::size_t g) { return std::make_pair(p_.functions[g].absolute_deadline(), g); };
        const auto &m = members_[d];
        return static_cast<std::size_t>(
            std::lower_bound(m.begin(), m.end(), fi, [&](std::size_t a, std::size_t b) { return key(a) < key(b); }) -
            m.begin());
    }

    const PlacementProblem &p_;
    std::vector<const Option *> chosen_;
    std::vector<std::vector<std::size_t>> members_;
    std::vector<Joules> penalty_;
};

std::vector<std::optional<OptionChoice>> to_choices(const DeviceSchedules &s, std::size_t n)
{
    std::vector<std::optional<OptionChoice>> out(n);
    for (std::size_t fi = 0; fi < n; ++fi)
        if (const Option *o = s.chosen(fi)) out[fi] = OptionChoice{o->device, o->media};
    return out;
}

PlacementProblem normalized_copy(const PlacementProblem &problem)
{
    PlacementProblem p = problem;
    p.normalize();
    p.validate();
    return p;
}

/// Restores the caller's function order in an assignment computed on a
/// normalized copy.
Assignment reorder(const PlacementProblem &original, Assignment a)
{
    std::map<std::string, Placement> by_id;
    for (auto &pl : a.placements) by_id.emplace(pl.function_id, std::move(pl));
    a.placements.clear();
    for (const auto &f : original.functions) a.placements.push_back(std::move(by_id.at(f.id)));
    return a;
}

using Clock = std::chrono::steady_clock;

double elapsed_us(Clock::time_point since)
{
    return std::chrono::duration<double, std::micro>(Clock::now() - since).count();
}

/// Index translation from a normalized copy back to the caller's problem.
Assignment translate(const PlacementProblem &original, const PlacementProblem &normal, Assignment a)
{
    std::map<std::string, std::size_t> dev, med;
    for (std::size_t i = 0; i < original.devices.size(); ++i) dev[original.devices[i].device.id] = i;
    for (std::size_t i = 0; i < original.media.size(); ++i) med[original.media[i].id] = i;
    for (auto &pl : a.placements) {
        if (!pl.choice) continue;
        pl.choice->device = dev.at(normal.devices[pl.choice->device].device.id);
        for (auto &m : pl.choice->media) m = med.at(normal.media[m].id);
    }
    return reorder(original, std::move(a));
}

} // namespace

Joules unplaced_penalty(const PlacementProblem &p)
{
    // Upper bound on any achievable total cost: the slowest media choice
    // on the most expensive device for every function, plus every setup.
    Joules bound = 1.0;
    for (const auto &f : p.functions) {
        Joules worst = 0.0;
        for (const auto &ds : p.devices) {
            const auto s = f.speedup_on(ds.device);
            if (!s) continue;
            double us = f.work / (ds.device.capacity * *s) * kMicrosPerSecond;
            Joules data = 0.0;
            for (std::size_t i = 0; i < access_count(f); ++i) {
                const double bytes = access_at(f, i).bytes;
                double worst_us = 0.0, worst_j = 0.0;
                for (const auto &m : p.media) {
                    worst_us = std::max(worst_us, m.access_latency_p50 + bytes / m.bandwidth * kMicrosPerSecond +
                                                      m.remote_access_penalty);
                    worst_j = std::max(worst_j, bytes * (m.active_power_per_bw + p.options.network_j_per_byte));
                }
                us += worst_us;
                data += worst_j;
            }
            const Joules e = (power_draw(ds.device, 1.0) - power_draw(ds.device, 0.0)) * (std::ceil(us) + 1.0) /
                                 kMicrosPerSecond +
                             data;
            worst = std::max(worst, e);
        }
        bound += worst;
    }
    for (const auto &ds : p.devices) bound += ds.device.startup_energy;
    return 2.0 * bound;
}

Joules Assignment::objective(const PlacementProblem &problem) const
{
    return total_cost + unplaced_penalty(problem) * static_cast<double>(unplaced);
}

Assignment evaluate_assignment(const PlacementProblem &p, const std::vector<std::optional<OptionChoice>> &choice,
                               bool allow_infeasible)
{
    if (choice.size() != p.functions.size()) throw std::invalid_argument("one choice per function required");
    const bool hard = p.options.sla_mode == SlaMode::Hard;
    Assignment a;
    a.placements.resize(p.functions.size());
    std::vector<std::vector<std::size_t>> groups(p.devices.size());

    for (std::size_t fi = 0; fi < p.functions.size(); ++fi) {
        const auto &f = p.functions[fi];
        auto &pl = a.placements[fi];
        pl.function_id = f.id;
        pl.choice = choice[fi];
        if (!choice[fi]) {
            ++a.unplaced;
            continue;
        }
        const auto &c = *choice[fi];
        if (c.device >= p.devices.size()) throw std::invalid_argument("device index out of range");
        if (c.media.size() != access_count(f)) throw std::invalid_argument("media choice does not match accesses");
        MediaChoice mc;
        for (std::size_t i = 0; i < c.media.size(); ++i) {
            if (c.media[i] >= p.media.size()) throw std::invalid_argument("medium index out of range");
            const auto &obj = access_at(f, i).object_id;
            auto it = p.object_locations.find(obj);
            if (it != p.object_locations.end() &&
                std::find(it->second.begin(), it->second.end(), p.media[c.media[i]].id) == it->second.end())
                throw std::invalid_argument("object '" + obj + "' is not available on medium '" + p.media[c.media[i]].id + "'");
            mc.push_back(&p.media[c.media[i]]);
            pl.media_ids.push_back(p.media[c.media[i]].id);
        }
        const auto &ds = p.devices[c.device];
        pl.device_id = ds.device.id;
        pl.duration = effective_duration(f, ds.device, mc);
        pl.cost = edge_cost(f, ds.device, mc, p.options.network_j_per_byte);
        groups[c.device].push_back(fi);
    }

    std::vector<Joules> setups(p.devices.size(), 0.0);
    for (std::size_t d = 0; d < p.devices.size(); ++d) {
        auto &g = groups[d];
        if (g.empty()) continue;
        const auto &ds = p.devices[d];
        const std::string &app = p.functions[g.front()].app_id;
        if (ds.device.kind == DeviceKind::FPGA)
            for (auto fi : g)
                if (p.functions[fi].app_id != app)
                    throw std::invalid_argument("FPGA '" + ds.device.id + "' assigned functions of two apps");
        std::sort(g.begin(), g.end(), [&](std::size_t x, std::size_t y) {
            return std::make_pair(p.functions[x].absolute_deadline(), x) <
                   std::make_pair(p.functions[y].absolute_deadline(), y);
        });
        if (needs_setup(ds, app)) setups[d] = ds.device.startup_energy;
        Micros clock = ready_time(p, ds, app);
        for (auto fi : g) {
            auto &pl = a.placements[fi];
            pl.start = clock;
            clock += pl.duration;
            pl.end = clock;
            const Micros late = pl.end - p.functions[fi].absolute_deadline();
            pl.feasible = late <= 0;
            if (late > 0) {
                if (hard && !allow_infeasible)
                    throw std::invalid_argument("function '" + pl.function_id + "' misses its deadline");
                if (!hard) pl.penalty = p.options.penalty_j_per_us * static_cast<double>(late);
            }
        }
    }

    Joules total = 0.0;
    for (const auto &pl : a.placements)
        if (pl.choice) total += pl.cost.total + pl.penalty;
    for (Joules s : setups) total += s;
    a.total_cost = total;
    return a;
}

namespace {

class ExactSearch {
public:
    ExactSearch(const PlacementProblem &p, const Prepared &prep, std::optional<std::pair<std::size_t, Joules>> upper)
        : p_(p), prep_(prep), n_(p.functions.size()), sched_(p, n_), hard_(p.options.sla_mode == SlaMode::Hard),
          prune_(n_ >= p.options.enumeration_below)
    {
        suffix_.assign(n_ + 1, 0.0);
        suffix_unplaced_.assign(n_ + 1, 0);
        for (std::size_t k = n_; k-- > 0;) {
            const bool none = prep_.options[k].empty();
            suffix_[k] = suffix_[k + 1] + (none ? 0.0 : prep_.min_term[k]);
            suffix_unplaced_[k] = suffix_unplaced_[k + 1] + (none ? 1 : 0);
        }
        if (upper) bound_ = *upper;
    }

    void run() { dfs(0, 0, 0.0); }

    bool found() const { return best_.has_value(); }
    const std::vector<std::optional<OptionChoice>> &best() const { return *best_; }
    std::size_t nodes() const { return nodes_; }

private:
    bool worse_than_bound(std::size_t unplaced, Joules cost) const
    {
        if (!bound_) return false;
        if (unplaced != bound_->first) return unplaced > bound_->first;
        const double margin = 1e-9 * std::abs(bound_->second) + 1e-12;
        return cost > bound_->second + margin;
    }

    Joules partial_cost() const
    {
        Joules c = 0.0;
        for (std::size_t fi = 0; fi < n_; ++fi)
            if (const Option *o = sched_.chosen(fi)) c += o->cost.total;
        for (std::size_t d = 0; d < p_.devices.size(); ++d) c += sched_.setup_energy(d) + sched_.penalty(d);
        return c;
    }

    void dfs(std::size_t k, std::size_t unplaced, Joules cost)
    {
        ++nodes_;
        if (p_.options.max_nodes && nodes_ > p_.options.max_nodes)
            throw SearchLimitExceeded("exact search exceeded " + std::to_string(p_.options.max_nodes) + " nodes");
        if (prune_ && worse_than_bound(unplaced + suffix_unplaced_[k], cost + suffix_[k])) return;
        if (k == n_) {
            leaf();
            return;
        }
        for (const auto &o : prep_.options[k]) {
            const auto trial = sched_.try_add(k, o);
            if (!trial.ok) continue;
            const Joules before = sched_.penalty(o.device);
            sched_.add(k, o, trial);
            dfs(k + 1, unplaced, cost + o.cost.total + trial.setup_added + (trial.penalty - before));
            sched_.remove(k, before);
        }
        // Leaving a function unplaced only makes sense in hard mode, or when
        // it has no option at all.
        if (hard_ || prep_.options[k].empty()) dfs(k + 1, unplaced + 1, cost);
    }

    void leaf()
    {
        auto choice = to_choices(sched_, n_);
        const Assignment a = evaluate_assignment(p_, choice);
        const auto key = std::make_pair(a.unplaced, a.total_cost);
        const bool better = !best_ ? !worse_than_bound(key.first, key.second) : key < *bound_;
        if (!better) return;
        best_ = std::move(choice);
        bound_ = key;
    }

    const PlacementProblem &p_;
    const Prepared &prep_;
    std::size_t n_;
    DeviceSchedules sched_;
    bool hard_;
    bool prune_;
    std::vector<Joules> suffix_;
    std::vector<std::size_t> suffix_unplaced_;
    std::optional<std::pair<std::size_t, Joules>> bound_;
    std::optional<std::vector<std::optional<OptionChoice>>> best_;
    std::size_t nodes_ = 0;
};

std::string memo_key(const PlacementProblem &p, const DeviceSchedules &s, const MicroFunction &f)
{
    std::string key = fmt::format("{}|{:.17g}", f.app_id, f.work);
    for (const auto *list : {&f.reads, &f.writes}) {
        key += '|';
        for (const auto &a : *list) key += fmt::format("{}:{:.17g},", a.object_id, a.bytes);
    }
    const double window = static_cast<double>(p.window_end - p.now);
    for (std::size_t d = 0; d < p.devices.size(); ++d) {
        int bucket = 0;
        if (window > 0.0) {
            const double free = static_cast<double>(p.window_end - s.busy_until(d)) / window;
            bucket = static_cast<int>(std::floor(std::clamp(free, 0.0, 1.0) * 10.0));
        }
        key += fmt::format("|{}{}", to_string(p.devices[d].device.kind)[0], bucket);
    }
    return key;
}

Assignment heuristic_on_normalized(const PlacementProblem &p, const Prepared &prep, PlacementMemo *memo)
{
    const std::size_t n = p.functions.size();
    Assignment result;
    DeviceSchedules sched(p, n);

    // Ascending best edge (setup included), ties by id order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<Joules> best_edge(n, std::numeric_limits<double>::infinity());
    for (std::size_t fi = 0; fi < n; ++fi)
        for (const auto &o : prep.options[fi]) {
            const auto &ds = p.devices[o.device];
            const Joules setup = needs_setup(ds, p.functions[fi].app_id) ? ds.device.startup_energy : 0.0;
            best_edge[fi] = std::min(best_edge[fi], o.term() + setup);
        }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return best_edge[a] < best_edge[b]; });

    for (auto fi : order) {
        const auto &opts = prep.options[fi];
        ++result.stats.nodes_expanded;
        std::string key;
        if (memo) {
            key = memo_key(p, sched, p.functions[fi]);
            if (const auto *hit = memo->find(key)) {
                const auto it = std::find_if(opts.begin(), opts.end(), [&](const Option &o) {
                    return o.device == hit->choice.device && o.media == hit->choice.media;
                });
                if (it != opts.end()) {
                    const auto trial = sched.try_add(fi, *it);
                    if (trial.ok) {
                        sched.add(fi, *it, trial);
                        ++result.stats.cache_hits;
                        continue;
                    }
                }
            }
            ++result.stats.cache_misses;
        }
        const Option *best = nullptr;
        DeviceSchedules::Trial best_trial;
        Joules best_delta = std::numeric_limits<double>::infinity();
        for (const auto &o : opts) {
            const auto trial = sched.try_add(fi, o);
            if (!trial.ok) continue;
            const Joules delta = o.cost.total + trial.setup_added + (trial.penalty - sched.penalty(o.device));
            if (delta < best_delta) {
                best_delta = delta;
                best = &o;
                best_trial = trial;
            }
        }
        if (!best) continue;
        sched.add(fi, *best, best_trial);
        if (memo) memo->store(key, {OptionChoice{best->device, best->media}});
    }

    const SolverStats stats = result.stats;
    result = evaluate_assignment(p, to_choices(sched, n));
    result.stats = stats;
    return result;
}

} // namespace

Assignment solve_exact(const PlacementProblem &problem)
{
    const auto started = Clock::now();
    if (problem.functions.size() > problem.options.exact_cutoff)
        throw std::invalid_argument("solve_exact: " + std::to_string(problem.functions.size()) +
                                    " functions exceed the exact cutoff of " +
                                    std::to_string(problem.options.exact_cutoff));
    const PlacementProblem p = normalized_copy(problem);
    const Prepared prep(p);

    std::optional<std::pair<std::size_t, Joules>> upper;
    if (p.functions.size() >= p.options.enumeration_below) {
        const Assignment h = heuristic_on_normalized(p, prep, nullptr);
        upper = std::make_pair(h.unplaced, h.total_cost);
    }
    ExactSearch search(p, prep, upper);
    search.run();
    Assignment a = evaluate_assignment(p, search.best());
    a.stats.nodes_expanded = search.nodes();
    a.stats.wall_time_us = elapsed_us(started);
    return translate(problem, p, std::move(a));
}

const PlacementMemo::Entry *PlacementMemo::find(const std::string &key) const
{
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
}

void PlacementMemo::store(const std::string &key, Entry entry) { entries_[key] = std::move(entry); }

Assignment solve_heuristic(const PlacementProblem &problem, PlacementMemo *memo)
{
    const auto started = Clock::now();
    const PlacementProblem p = normalized_copy(problem);
    const Prepared prep(p);
    Assignment a = heuristic_on_normalized(p, prep, memo);
    a.stats.wall_time_us = elapsed_us(started);
    return translate(problem, p, std::move(a));
}

Assignment solve_round_robin(const PlacementProblem &problem)
{
    const auto started = Clock::now();
    const PlacementProblem p = normalized_copy(problem);
    const Prepared prep(p);
    const std::size_t n = p.functions.size();
    const std::size_t nd = p.devices.size();
    DeviceSchedules sched(p, n);
    std::size_t cursor = 0;
    for (std::size_t fi = 0; fi < n; ++fi) {
        for (std::size_t step = 0; step < nd; ++step) {
            const std::size_t d = (cursor + step) % nd;
            const Option *pick = nullptr;
            DeviceSchedules::Trial trial;
            for (const auto &o : prep.options[fi]) {
                if (o.device != d) continue;
                trial = sched.try_add(fi, o);
                if (trial.ok) {
                    pick = &o;
                    break;
                }
            }
            if (!pick) continue;
            sched.add(fi, *pick, trial);
            cursor = d + 1;
            break;
        }
    }
    Assignment a = evaluate_assignment(p, to_choices(sched, n));
    a.stats.nodes_expanded = n;
    a.stats.wall_time_us = elapsed_us(started);
    return translate(problem, p, std::move(a));
}

Joules lower_bound(const PlacementProblem &problem)
{
    const PlacementProblem p = normalized_copy(problem);
    const Prepared prep(p);
    const std::size_t n = p.functions.size();
    const std::size_t nd = p.devices.size();
    const Joules big = unplaced_penalty(p);
    const bool hard = p.options.sla_mode == SlaMode::Hard;

    std::map<std::string, std::size_t> app_count;
    for (const auto &f : p.functions) ++app_count[f.app_id];

    // Each option's price carries its share of the device's one-time setup:
    // a device is shared by at most n functions (an FPGA by one app's).
    struct Priced {
        std::size_t device;
        Micros duration;
        double term;
    };
    std::vector<std::vector<Priced>> priced(n);
    for (std::size_t fi = 0; fi < n; ++fi) {
        const auto &f = p.functions[fi];
        for (const auto &o : prep.options[fi]) {
            const auto &ds = p.devices[o.device];
            double share = 0.0;
            if (needs_setup(ds, f.app_id)) {
                const double sharers = ds.device.kind == DeviceKind::FPGA ? static_cast<double>(app_count[f.app_id])
                                                                          : static_cast<double>(n);
                share = ds.device.startup_energy / sharers;
            }
            priced[fi].push_back({o.device, o.duration, o.term() + share});
        }
    }

    // Hard mode: on each device, everything due by deadline D must fit
    // between the device's earliest ready time and D.
    std::vector<std::vector<Micros>> thresholds(nd);
    std::vector<std::vector<double>> capacity(nd);
    std::vector<std::vector<std::size_t>> rank(n);
    if (hard) {
        for (std::size_t fi = 0; fi < n; ++fi)
            for (const auto &o : priced[fi]) thresholds[o.device].push_back(p.functions[fi].absolute_deadline());
        for (std::size_t d = 0; d < nd; ++d) {
            auto &t = thresholds[d];
            std::sort(t.begin(), t.end());
            t.erase(std::unique(t.begin(), t.end()), t.end());
            const auto &ds = p.devices[d];
            const Micros ready = std::max(p.now, ds.free_at) + (ds.powered ? 0 : ds.device.startup_latency);
            for (Micros dl : t) capacity[d].push_back(static_cast<double>(dl - ready));
        }
        for (std::size_t fi = 0; fi < n; ++fi)
            for (const auto &o : priced[fi]) {
                const auto &t = thresholds[o.device];
                rank[fi].push_back(static_cast<std::size_t>(
                    std::lower_bound(t.begin(), t.end(), p.functions[fi].absolute_deadline()) - t.begin()));
            }
    }

    std::vector<std::vector<double>> mu(nd), usage(nd), grad(nd);
    for (std::size_t d = 0; d < nd; ++d) {
        mu[d].assign(thresholds[d].size(), 0.0);
        usage[d].assign(thresholds[d].size(), 0.0);
        grad[d].assign(thresholds[d].size(), 0.0);
    }

    // Dual function and its subgradient at the current multipliers.
    auto dual = [&]() {
        std::vector<std::vector<double>> tail(nd);
        for (std::size_t d = 0; d < nd; ++d) {
            tail[d].assign(mu[d].size() + 1, 0.0);
            for (std::size_t k = mu[d].size(); k-- > 0;) tail[d][k] = tail[d][k + 1] + mu[d][k];
            std::fill(usage[d].begin(), usage[d].end(), 0.0);
        }
        double value = 0.0;
        for (std::size_t fi = 0; fi < n; ++fi) {
            double best = big;
            std::optional<std::size_t> pick;
            for (std::size_t j = 0; j < priced[fi].size(); ++j) {
                const auto &o = priced[fi][j];
                const double price = o.term + (hard ? static_cast<double>(o.duration) * tail[o.device][rank[fi][j]] : 0.0);
                if (price < best) {
                    best = price;
                    pick = j;
                }
            }
            value += best;
            if (pick && hard) usage[priced[fi][*pick].device][rank[fi][*pick]] += static_cast<double>(priced[fi][*pick].duration);
        }
        for (std::size_t d = 0; d < nd; ++d) {
            double cumulative = 0.0;
            for (std::size_t k = 0; k < mu[d].size(); ++k) {
                cumulative += usage[d][k];
                grad[d][k] = cumulative - capacity[d][k];
                value -= mu[d][k] * capacity[d][k];
            }
        }
        return value;
    };

    double best = dual();
    if (!hard) return best;
    auto violated = [&]() {
        for (std::size_t d = 0; d < nd; ++d)
            for (double g : grad[d])
                if (g > 0.0) return true;
        return false;
    };
    if (!violated()) return best;

    const Assignment h = heuristic_on_normalized(p, prep, nullptr);
    const double upper = h.total_cost + big * static_cast<double>(h.unplaced);
    double theta = 1.0;
    int stale = 0;
    double current = best;
    for (int iter = 0; iter < 500 && theta > 1e-4; ++iter) {
        double norm2 = 0.0;
        for (std::size_t d = 0; d < nd; ++d)
            for (std::size_t k = 0; k < mu[d].size(); ++k) {
                // Projected subgradient: components pinned at zero don't move.
                const double g = mu[d][k] > 0.0 || grad[d][k] > 0.0 ? grad[d][k] : 0.0;
                norm2 += g * g;
            }
        const double gap = upper - current;
        if (norm2 == 0.0 || gap <= 0.0) break;
        const double step = theta * gap / norm2;
        for (std::size_t d = 0; d < nd; ++d)
            for (std::size_t k = 0; k < mu[d].size(); ++k) mu[d][k] = std::max(0.0, mu[d][k] + step * grad[d][k]);
        current = dual();
        if (current > best + 1e-12 * std::abs(best)) {
            best = current;
            stale = 0;
        } else if (++stale >= 20) {
            theta *= 0.5;
            stale = 0;
        }
    }
    return best;
}

PlacementProblem scale_deadlines(const PlacementProblem &problem, double scale)
{
    if (!(scale >= 0.0)) throw std::domain_error("deadline scale must be >= 0");
    PlacementProblem p = problem;
    for (auto &f : p.functions)
        f.sla.deadline = std::max<Micros>(1, std::llround(static_cast<double>(f.sla.deadline) * scale));
    return p;
}

std::vector<SweepPoint> pareto_sweep(const PlacementProblem &problem, const std::vector<double> &scales)
{
    if (!std::is_sorted(scales.begin(), scales.end())) throw std::invalid_argument("deadline scales must be ascending");
    std::vector<SweepPoint> out;
    for (double s : scales) {
        const PlacementProblem scaled = scale_deadlines(problem, s);
        Assignment a = solve_exact(scaled);
        const Joules obj = a.objective(scaled);
        out.push_back({s, obj, std::move(a)});
    }
    return out;
}

} // namespace carbonsched
