#include <gtest/gtest.h>

#include <algorithm>
#include <limits>

#include "carbonsched/rng.hpp"
#include "carbonsched/scheduler.hpp"

using namespace carbonsched;

namespace {

MicroFunction fn(const std::string &id, Micros arrival, Micros deadline)
{
    MicroFunction f;
    f.id = id;
    f.app_id = "app";
    f.arrival = arrival;
    f.work = 1e6;
    f.speedup = {{"CPU", 1.0}};
    f.sla.deadline = deadline;
    return f;
}

DurationEstimator fixed(Micros d)
{
    return [d](const MicroFunction &) { return std::optional<Micros>(d); };
}

ScheduleWindow window(Micros start, Micros length)
{
    ScheduleWindow w;
    w.start = start;
    w.end = start + length;
    return w;
}

bool contains(const std::vector<std::string> &v, const std::string &id)
{
    return std::find(v.begin(), v.end(), id) != v.end();
}

} // namespace

TEST(Partition, SlackAgainstWindowLength)
{
    // best 100, window 1000: slack = deadline - 100.
    const std::vector<MicroFunction> pending = {fn("zero", 0, 100), fn("below", 0, 1099), fn("equal", 0, 1100),
                                                fn("late", 0, 50)};
    const auto r = partition(pending, window(0, 1000), fixed(100));
    EXPECT_EQ(r.admit, (std::vector<std::string>{"below", "late", "zero"}));
    EXPECT_EQ(r.defer, (std::vector<std::string>{"equal"}));
    EXPECT_EQ(r.infeasible, (std::vector<std::string>{"late"}));
}

TEST(Partition, UnrunnableFunctionsAdmittedAsInfeasible)
{
    const auto r = partition({fn("x", 0, 1'000'000)}, window(0, 1000),
                             [](const MicroFunction &) { return std::optional<Micros>(); });
    EXPECT_EQ(r.admit, std::vector<std::string>{"x"});
    EXPECT_EQ(r.infeasible, std::vector<std::string>{"x"});
}

TEST(Partition, RejectsEmptyWindow)
{
    EXPECT_THROW(partition({}, window(5, 0), fixed(1)), std::domain_error);
}

TEST(Partition, WaitsOnlyForGreenerReachableWindows)
{
    const auto f = fn("f", 0, 10'000);
    const CarbonIntensitySeries dropping({{0, 400}, {5000, 100}});
    EXPECT_TRUE(contains(partition({f}, window(0, 1000), fixed(100), &dropping).defer, "f"));

    const auto flat = CarbonIntensitySeries::constant(300);
    EXPECT_TRUE(contains(partition({f}, window(0, 1000), fixed(100), &flat).admit, "f"));

    // Green only after the latest feasible start.
    const CarbonIntensitySeries too_late({{0, 400}, {20'000, 50}});
    EXPECT_TRUE(contains(partition({f}, window(0, 1000), fixed(100), &too_late).admit, "f"));

    const CarbonIntensitySeries rising({{0, 100}, {3000, 500}});
    EXPECT_TRUE(contains(partition({f}, window(0, 1000), fixed(100), &rising).admit, "f"));
}

TEST(Partition, NeverDefersPastLatestFeasibleWindow)
{
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Micros w = 500 + static_cast<Micros>(rng.below(1500));
        std::vector<MicroFunction> all;
        for (int i = 0; i < 60; ++i)
            all.push_back(fn("f" + std::to_string(i), static_cast<Micros>(rng.below(50'000)),
                             1 + static_cast<Micros>(rng.below(20'000))));
        std::vector<IntensitySample> samples;
        for (Micros t = 0; t < 100'000; t += 2500) samples.push_back({t, rng.uniform(50, 500)});
        const CarbonIntensitySeries carbon(samples);
        const Micros best = 50 + static_cast<Micros>(rng.below(400));

        std::vector<MicroFunction> pending;
        std::map<std::string, Micros> admitted_at;
        std::size_t next = 0;
        std::sort(all.begin(), all.end(), [](const auto &a, const auto &b) { return a.arrival < b.arrival; });
        for (Micros start = 0; admitted_at.size() < all.size(); start += w) {
            while (next < all.size() && all[next].arrival <= start) pending.push_back(all[next++]);
            const auto r = partition(pending, window(start, w), fixed(best), trial % 2 ? &carbon : nullptr);
            for (const auto &id : r.admit) admitted_at[id] = start;
            std::erase_if(pending, [&](const MicroFunction &f) { return contains(r.admit, f.id); });
            ASSERT_LT(start, 1'000'000);
        }
        for (const auto &f : all) {
            const Micros latest = f.arrival + f.sla.deadline - best;
            const Micros first_window = (f.arrival + w - 1) / w * w;
            if (first_window <= latest) EXPECT_LE(admitted_at[f.id], latest) << f.id;
            else EXPECT_EQ(admitted_at[f.id], first_window) << f.id;
        }
    }
}

TEST(MinIntensity, Examples)
{
    const CarbonIntensitySeries s({{0, 300}, {1500, 100}, {2000, 400}});
    EXPECT_EQ(min_intensity(s, 0, 5000, 1000), 300); // starts 0,1000,2000,... skip the 100 dip
    EXPECT_EQ(min_intensity(s, 500, 5000, 1000), 100); // 1500 is a window start
    EXPECT_EQ(min_intensity(s, 0, 0, 1000), 300);
    EXPECT_TRUE(std::isinf(min_intensity(s, 10, 0, 1000)));
    EXPECT_THROW(min_intensity(s, 0, 10, 0), std::domain_error);
}

TEST(MinIntensity, MatchesWindowScan)
{
    Rng rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<IntensitySample> samples;
        Micros t = 0;
        for (int i = 0; i < 30; ++i) {
            samples.push_back({t, rng.uniform(0, 800)});
            t += 1 + static_cast<Micros>(rng.below(4000));
        }
        const CarbonIntensitySeries s(samples);
        const Micros w = 1 + static_cast<Micros>(rng.below(3000));
        const Micros from = static_cast<Micros>(rng.below(60'000));
        const Micros to = from + static_cast<Micros>(rng.below(60'000));
        double scan = std::numeric_limits<double>::infinity();
        for (Micros x = from; x <= to; x += w) scan = std::min(scan, intensity_at(s, x));
        EXPECT_EQ(min_intensity(s, from, to, w), scan);
    }
}

TEST(BestDuration, FastestDeviceAndMedium)
{
    ComputeDevice cpu;
    cpu.id = "cpu0";
    cpu.kind = DeviceKind::CPU;
    cpu.capacity = 1e9;
    ComputeDevice fpga = cpu;
    fpga.id = "fpga0";
    fpga.kind = DeviceKind::FPGA;
    StorageMedium dram;
    dram.id = "dram0";
    dram.access_latency_p50 = 1;
    dram.bandwidth = 1e10;
    dram.local_to = {"cpu0"};
    dram.remote_access_penalty = 50;
    StorageMedium ssd = dram;
    ssd.id = "ssd0";
    ssd.access_latency_p50 = 80;
    ssd.bandwidth = 1e9;
    ssd.local_to = {"cpu0", "fpga0"};

    auto f = fn("f", 0, 1000);
    f.work = 1e6; // 1000 us on CPU
    f.speedup = {{"CPU", 1.0}, {"FPGA", 4.0}};
    f.reads = {{"obj", 1e4}};
    const std::map<std::string, std::vector<std::string>> locations{{"obj", {"dram0", "ssd0"}}};
    // CPU: 1000 + 1 + 1 = 1002. FPGA: 250 + min(1 + 1 + 50, 80 + 10) = 302.
    EXPECT_EQ(best_duration(f, {cpu, fpga}, {dram, ssd}, locations), 302);
    EXPECT_EQ(best_duration(f, {cpu}, {dram, ssd}, locations), 1002);
    EXPECT_FALSE(best_duration(f, {cpu}, {dram, ssd}, {{"obj", {"nvm"}}}).has_value());
    f.speedup = {{"GPU", 2.0}};
    EXPECT_FALSE(best_duration(f, {cpu, fpga}, {dram, ssd}, locations).has_value());
}

TEST(Policies, NamesRoundTrip)
{
    for (const auto &name : policy_names()) EXPECT_EQ(to_string(parse_policy(name)), name);
    EXPECT_EQ(policy_names().size(), 5u);
    EXPECT_EQ(parse_solver_mode("exact"), SolverMode::Exact);
    EXPECT_THROW(parse_solver_mode("greedy"), InputError);
}

TEST(Policies, UnknownNameListsValidOnes)
{
    try {
        parse_policy("fastest");
        FAIL();
    } catch (const InputError &e) {
        const std::string msg = e.what();
        for (const auto &name : policy_names()) EXPECT_NE(msg.find(name), std::string::npos) << name;
    }
}
