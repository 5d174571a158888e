#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "carbonsched/hardware.hpp"
#include "carbonsched/rng.hpp"

using namespace carbonsched;

namespace {

ComputeDevice device(Watts peak, double idle_fraction = kDefaultIdleFraction)
{
    ComputeDevice d;
    d.id = "d";
    d.peak_power = peak;
    d.idle_fraction = idle_fraction;
    d.capacity = 1e9;
    return d;
}

} // namespace

TEST(PowerDraw, IdleIsHalfOfPeakByDefault)
{
    EXPECT_DOUBLE_EQ(kDefaultIdleFraction, 0.5);
    EXPECT_DOUBLE_EQ(power_draw(device(100), 0.0), 50.0);
}

TEST(PowerDraw, Examples)
{
    EXPECT_DOUBLE_EQ(power_draw(device(100), 1.0), 100.0);
    EXPECT_DOUBLE_EQ(power_draw(device(100), 0.5), 75.0);
}

TEST(PowerDraw, OutOfRangeUtilization)
{
    EXPECT_THROW(power_draw(device(100), -0.01), std::domain_error);
    EXPECT_THROW(power_draw(device(100), 1.01), std::domain_error);
    EXPECT_THROW(power_draw(device(100), std::nan("")), std::domain_error);
}

TEST(PowerDraw, MonotoneAndClampedOnRandomDevices)
{
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const auto d = device(rng.uniform(1, 500), rng.uniform(0, 1));
        EXPECT_EQ(power_draw(d, 0.0), d.idle_power());
        EXPECT_EQ(power_draw(d, 1.0), d.peak_power);
        double prev = power_draw(d, 0.0);
        for (int k = 1; k <= 20; ++k) {
            const double p = power_draw(d, k / 20.0);
            EXPECT_GE(p, prev);
            EXPECT_GE(p, d.idle_power());
            EXPECT_LE(p, d.peak_power);
            prev = p;
        }
    }
}

TEST(EnergyOver, Examples)
{
    const std::vector<LoadSegment> one = {{1'000'000, 1.0}};
    EXPECT_DOUBLE_EQ(energy_over(device(100), one), 100.0);
    EXPECT_EQ(energy_over(device(100), std::vector<LoadSegment>{}), 0.0);
}

TEST(EnergyOver, NegativeDuration)
{
    const std::vector<LoadSegment> bad = {{10, 0.5}, {-1, 0.5}};
    EXPECT_THROW(energy_over(device(100), bad), std::domain_error);
}

TEST(EnergyOver, MatchesPerSegmentSum)
{
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const auto d = device(rng.uniform(10, 300), rng.uniform(0.1, 0.9));
        std::vector<LoadSegment> segs;
        double expected = 0.0;
        for (int k = 0, n = static_cast<int>(rng.below(20)); k < n; ++k) {
            LoadSegment s{static_cast<Micros>(rng.below(5'000'000)), rng.uniform()};
            const double watts = d.idle_fraction * d.peak_power + (1 - d.idle_fraction) * d.peak_power * s.utilization;
            expected += watts * (static_cast<double>(s.duration) / 1e6);
            segs.push_back(s);
        }
        EXPECT_NEAR(energy_over(d, segs), expected, 1e-9 * (1 + expected));
    }
}

TEST(EnergyOver, InvariantUnderSplitting)
{
    Rng rng(3);
    for (int i = 0; i < 500; ++i) {
        const auto d = device(rng.uniform(10, 300));
        std::vector<LoadSegment> segs;
        for (int k = 0; k < 8; ++k) segs.push_back({static_cast<Micros>(1 + rng.below(1'000'000)), rng.uniform()});
        const double whole = energy_over(d, segs);
        auto split = segs;
        const auto at = rng.below(split.size());
        const Micros cut = static_cast<Micros>(rng.below(static_cast<std::uint64_t>(split[at].duration) + 1));
        split.insert(split.begin() + static_cast<long>(at) + 1, {split[at].duration - cut, split[at].utilization});
        split[at].duration = cut;
        EXPECT_NEAR(energy_over(d, split), whole, 1e-12 * whole);
    }
}

TEST(IntensityAt, Examples)
{
    const CarbonIntensitySeries one({{0, 500}});
    EXPECT_EQ(intensity_at(one, 10), 500);
    const CarbonIntensitySeries two({{0, 500}, {100, 100}});
    EXPECT_EQ(intensity_at(two, 99), 500);
    EXPECT_EQ(intensity_at(two, 100), 100);
}

TEST(IntensityAt, BeforeFirstSample)
{
    const CarbonIntensitySeries s({{100, 300}});
    EXPECT_THROW(intensity_at(s, 99), std::domain_error);
    EXPECT_THROW(intensity_at(CarbonIntensitySeries{}, 0), std::domain_error);
}

TEST(IntensityAt, RejectsBadSeries)
{
    EXPECT_THROW(CarbonIntensitySeries({{0, 1}, {0, 2}}), ValidationError);
    EXPECT_THROW(CarbonIntensitySeries({{10, 1}, {5, 2}}), ValidationError);
    EXPECT_THROW(CarbonIntensitySeries({{0, -1}}), ValidationError);
}

TEST(IntensityAt, MatchesLinearScan)
{
    Rng rng(4);
    for (int i = 0; i < 200; ++i) {
        std::vector<IntensitySample> samples;
        Micros t = static_cast<Micros>(rng.below(100));
        for (int k = 0, n = 1 + static_cast<int>(rng.below(30)); k < n; ++k) {
            samples.push_back({t, rng.uniform(0, 800)});
            t += 1 + static_cast<Micros>(rng.below(1000));
        }
        const CarbonIntensitySeries s(samples);
        for (int q = 0; q < 50; ++q) {
            const Micros at = samples.front().time + static_cast<Micros>(rng.below(static_cast<std::uint64_t>(t)));
            double expected = samples.front().intensity;
            for (const auto &smp : samples)
                if (smp.time <= at) expected = smp.intensity;
            EXPECT_EQ(intensity_at(s, at), expected);
        }
    }
}

TEST(EmbodiedCarbon, Examples)
{
    auto d = device(100);
    EXPECT_EQ(embodied_carbon(d, 5'000'000), 0.0);
    d.embodied_rate = 0.25;
    EXPECT_DOUBLE_EQ(embodied_carbon(d, 2'000'000), 0.5);
    EXPECT_THROW(embodied_carbon(d, -1), std::domain_error);
}

TEST(EmbodiedCarbon, CalibratedShareIsOneThird)
{
    EXPECT_DOUBLE_EQ(kDefaultEmbodiedShare, 1.0 / 3.0);
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        auto d = device(rng.uniform(10, 400), rng.uniform(0.2, 0.8));
        d.embodied_rate = calibrated_embodied_rate(d);
        // One hour at the reference point, recomputed from first principles.
        const double hours = 1.0;
        const double kwh = (d.idle_fraction * d.peak_power +
                            (1 - d.idle_fraction) * d.peak_power * kReferenceUtilization) *
                           hours / 1000.0;
        const double operational = kwh * kReferenceIntensity;
        const double embodied = embodied_carbon(d, static_cast<Micros>(hours * 3600e6));
        EXPECT_NEAR(embodied / (embodied + operational), 1.0 / 3.0, 0.01);
    }
}

TEST(Catalog, ValidationCollectsEveryIssue)
{
    Catalog c;
    auto d = device(-5);
    d.capacity = 0;
    c.devices = {d, device(10)};
    c.devices[1].id = "d";
    DataObject o;
    o.id = "o";
    o.size = 0;
    o.home = "nowhere";
    c.objects = {o};
    const auto issues = c.issues();
    EXPECT_GE(issues.size(), 4u);
    EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Catalog, Lookup)
{
    Catalog c;
    c.devices = {device(10)};
    EXPECT_NE(c.find_device("d"), nullptr);
    EXPECT_EQ(c.find_device("x"), nullptr);
    EXPECT_EQ(parse_device_kind("FPGA"), DeviceKind::FPGA);
    EXPECT_THROW(parse_device_kind("TPU"), InputError);
    EXPECT_EQ(parse_storage_tier("SSD"), StorageTier::SSD);
}
