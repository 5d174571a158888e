#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <sstream>

#include "carbonsched/rng.hpp"
#include "carbonsched/workload.hpp"

using namespace carbonsched;

namespace {

TraceSpec spec(double base, double burst, Micros duration, std::uint64_t seed)
{
    TraceSpec s;
    s.duration = duration;
    s.base_rate = base;
    s.burst_rate = burst;
    s.burst_duty = 0.25;
    s.burst_period = 100'000;
    s.seed = seed;
    s.app_mix = {{"a", 0.7}, {"b", 0.3}};
    AppProfile a;
    a.work_min = 1e5;
    a.work_max = 1e6;
    a.speedup = {{"CPU", 1.0}, {"FPGA", 3.0}};
    a.deadline_min = 1000;
    a.deadline_max = 9000;
    a.reads = {{"o1", 4096}};
    a.parent_probability = 0.4;
    AppProfile b;
    b.writes = {{"log", 128}};
    b.percentile = 0.95;
    b.energy_budget = 0.5;
    s.apps = {{"a", a}, {"b", b}};
    return s;
}

std::string serialize(const Trace &t)
{
    std::ostringstream out;
    write_trace(out, t);
    return out.str();
}

Trace parse(const std::string &text)
{
    std::istringstream in(text);
    return parse_trace(in);
}

} // namespace

TEST(GenerateTrace, ZeroDurationIsEmpty)
{
    EXPECT_TRUE(generate_trace(spec(1000, 1000, 0, 1)).empty());
}

TEST(GenerateTrace, SameSeedIsBitIdentical)
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto s = spec(2000, 8000, 200'000, seed);
        EXPECT_EQ(serialize(generate_trace(s)), serialize(generate_trace(s)));
    }
    EXPECT_NE(serialize(generate_trace(spec(2000, 8000, 200'000, 1))),
              serialize(generate_trace(spec(2000, 8000, 200'000, 2))));
}

TEST(GenerateTrace, SortedUniqueAndValid)
{
    const auto t = generate_trace(spec(3000, 20000, 300'000, 9));
    ASSERT_FALSE(t.empty());
    for (std::size_t i = 1; i < t.size(); ++i) EXPECT_LE(t[i - 1].arrival, t[i].arrival);
    EXPECT_TRUE(trace_issues(t).empty());
}

TEST(GenerateTrace, MeanRateWithinThreeSigma)
{
    const auto t = generate_trace(spec(1000, 1000, 10'000'000, 42));
    // Poisson count over 10 s at 1000/s: mean 10000, sigma 100.
    EXPECT_NEAR(static_cast<double>(t.size()), 10000.0, 300.0);
}

TEST(GenerateTrace, EqualRatesGivePlainPoisson)
{
    const auto t = generate_trace(spec(2000, 2000, 20'000'000, 5));
    ASSERT_GT(t.size(), 1000u);
    std::vector<double> gaps;
    for (std::size_t i = 1; i < t.size(); ++i) gaps.push_back(static_cast<double>(t[i].arrival - t[i - 1].arrival));
    const double mean = std::accumulate(gaps.begin(), gaps.end(), 0.0) / static_cast<double>(gaps.size());
    double var = 0.0;
    for (double g : gaps) var += (g - mean) * (g - mean);
    var /= static_cast<double>(gaps.size());
    // Exponential gaps: mean 500 us, coefficient of variation 1.
    EXPECT_NEAR(mean, 500.0, 15.0);
    EXPECT_NEAR(std::sqrt(var) / mean, 1.0, 0.05);
    // Memorylessness: the share of gaps above the mean is exp(-1).
    const auto above = std::count_if(gaps.begin(), gaps.end(), [&](double g) { return g > 500.0; });
    EXPECT_NEAR(static_cast<double>(above) / static_cast<double>(gaps.size()), std::exp(-1.0), 0.02);
}

TEST(GenerateTrace, BurstsRaiseTheRate)
{
    const auto t = generate_trace(spec(1000, 9000, 10'000'000, 3));
    std::size_t in_burst = 0;
    for (const auto &f : t)
        if (f.arrival % 100'000 < 25'000) ++in_burst;
    // Burst quarter at 9000/s vs base three quarters at 1000/s: 22500 vs 7500 expected.
    EXPECT_NEAR(static_cast<double>(in_burst), 22500.0, 600.0);
    EXPECT_NEAR(static_cast<double>(t.size() - in_burst), 7500.0, 300.0);
}

TEST(GenerateTrace, InvalidSpec)
{
    auto s = spec(1000, 1000, 1000, 1);
    s.app_mix["a"] = 0.5;
    EXPECT_THROW(generate_trace(s), ValidationError);
    s = spec(-1, 1000, 1000, 1);
    EXPECT_THROW(generate_trace(s), ValidationError);
}

TEST(ParseTrace, EmptyFile)
{
    EXPECT_TRUE(parse("").empty());
}

TEST(ParseTrace, RoundTripsRandomTraces)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t = generate_trace(spec(3000, 12000, 100'000, seed));
        EXPECT_EQ(parse(serialize(t)), t);
    }
}

TEST(ParseTrace, MalformedLineNamesTheLine)
{
    const auto t = generate_trace(spec(3000, 3000, 10'000, 1));
    ASSERT_GE(t.size(), 2u);
    std::string text = serialize(t);
    text += "{not json\n";
    try {
        parse(text);
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), t.size() + 1);
    }
}

TEST(ParseTrace, NegativeWorkNamesTheField)
{
    const std::string line =
        R"({"id":"x","app_id":"a","arrival_us":0,"work":-5,"speedup":{"CPU":1},"reads":[],"writes":[],"sla":{"deadline_us":100,"percentile":1}})";
    try {
        parse(line + "\n");
        FAIL();
    } catch (const InputError &e) {
        EXPECT_NE(std::string(e.what()).find("work"), std::string::npos);
    }
}

TEST(ParseTrace, UnsortedArrivalsRejected)
{
    auto t = generate_trace(spec(3000, 3000, 20'000, 1));
    ASSERT_GE(t.size(), 2u);
    std::swap(t.front().arrival, t.back().arrival);
    EXPECT_THROW(parse(serialize(t)), ValidationError);
}

TEST(ParseTrace, CyclicParentsRejected)
{
    Trace t;
    for (const char *id : {"a", "b", "c"}) {
        MicroFunction f;
        f.id = id;
        f.app_id = "x";
        f.work = 1;
        f.speedup = {{"CPU", 1}};
        f.sla.deadline = 10;
        t.push_back(f);
    }
    t[0].parent = "c";
    t[1].parent = "a";
    t[2].parent = "b";
    const auto cycle = find_parent_cycle(t);
    EXPECT_EQ(cycle.size(), 3u);
    try {
        parse(serialize(t));
        FAIL();
    } catch (const ValidationError &e) {
        bool named = false;
        for (const auto &issue : e.issues()) named = named || issue.find("cycle") != std::string::npos;
        EXPECT_TRUE(named);
    }
}

TEST(FunctionIssues, EveryBrokenFieldReported)
{
    MicroFunction f;
    f.id = "x";
    f.app_id = "a";
    f.work = 0;
    f.arrival = -1;
    f.speedup = {{"CPU", -2}};
    f.sla.deadline = 0;
    f.sla.percentile = 1.5;
    f.parent = "x";
    EXPECT_EQ(function_issues(f).size(), 6u);
}

TEST(Slack, Examples)
{
    MicroFunction f;
    f.arrival = 0;
    f.sla.deadline = 1000;
    EXPECT_EQ(slack(f, 200, 300), 500);
    EXPECT_EQ(slack(f, 700, 300), 0);
    EXPECT_EQ(slack(f, 800, 300), -100);
}

TEST(Slack, MatchesArithmetic)
{
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        MicroFunction f;
        f.arrival = static_cast<Micros>(rng.below(1'000'000));
        f.sla.deadline = 1 + static_cast<Micros>(rng.below(100'000));
        const Micros now = static_cast<Micros>(rng.below(1'200'000));
        const Micros best = static_cast<Micros>(rng.below(50'000));
        EXPECT_EQ(slack(f, now, best), (f.arrival + f.sla.deadline) - now - best);
    }
}

TEST(SpeedupOn, IdOverridesKind)
{
    MicroFunction f;
    f.speedup = {{"FPGA", 2.0}, {"fpga1", 5.0}};
    ComputeDevice d;
    d.kind = DeviceKind::FPGA;
    d.id = "fpga0";
    EXPECT_EQ(f.speedup_on(d), 2.0);
    d.id = "fpga1";
    EXPECT_EQ(f.speedup_on(d), 5.0);
    d.kind = DeviceKind::GPU;
    d.id = "gpu0";
    EXPECT_FALSE(f.speedup_on(d).has_value());
}
