#include <gtest/gtest.h>

#include <sstream>

#include "carbonsched/io.hpp"
#include "carbonsched/rng.hpp"
#include "support/fig6.hpp"

using namespace carbonsched;
using nlohmann::json;

namespace {

const std::filesystem::path kData = CARBONSCHED_DATA_DIR;

json device_doc()
{
    return json{{"id", "cpu0"},         {"kind", "CPU"},          {"peak_power", 150}, {"idle_fraction", 0.5},
                {"capacity", 1e9},      {"startup_latency", 0},   {"startup_energy", 0},
                {"embodied_rate", 0.001}};
}

json catalog_doc() { return json{{"devices", json::array({device_doc()})}, {"media", json::array()}, {"objects", json::array()}}; }

std::string issues_of(const ValidationError &e)
{
    std::string all;
    for (const auto &i : e.issues()) all += i + "\n";
    return all;
}

} // namespace

TEST(Catalog, ShippedCatalogLoads)
{
    const auto c = load_catalog(kData / "catalog.json");
    EXPECT_EQ(c.devices.size(), 5u);
    EXPECT_EQ(c.media.size(), 2u);
    EXPECT_TRUE(c.issues().empty());
    for (const auto &d : c.devices) {
        EXPECT_EQ(d.idle_fraction, 0.5);
        EXPECT_DOUBLE_EQ(d.embodied_rate, calibrated_embodied_rate(d));
    }
    EXPECT_EQ(object_locations(c).at("a1-o1"), (std::vector<std::string>{"dram0", "ssd0"}));
}

TEST(Catalog, RoundTripsThroughJson)
{
    const auto c = load_catalog(kData / "catalog.json");
    EXPECT_EQ(catalog_to_json(parse_catalog(catalog_to_json(c))), catalog_to_json(c));
}

TEST(Catalog, UnknownKeyRejected)
{
    auto doc = catalog_doc();
    doc["devices"][0]["turbo"] = true;
    try {
        parse_catalog(doc);
        FAIL();
    } catch (const ValidationError &e) {
        EXPECT_NE(issues_of(e).find("turbo"), std::string::npos);
    }
    doc = catalog_doc();
    doc["extra"] = 1;
    EXPECT_THROW(parse_catalog(doc), ValidationError);
}

TEST(Catalog, EmbodiedRateKeyword)
{
    auto doc = catalog_doc();
    doc["devices"][0]["embodied_rate"] = "calibrated";
    const auto c = parse_catalog(doc);
    EXPECT_DOUBLE_EQ(c.devices[0].embodied_rate, calibrated_embodied_rate(c.devices[0]));
    doc["devices"][0]["embodied_rate"] = "guess";
    EXPECT_THROW(parse_catalog(doc), ValidationError);
}

TEST(Catalog, ReportsEveryBrokenField)
{
    auto doc = catalog_doc();
    doc["devices"][0]["peak_power"] = -1;
    doc["devices"][0]["capacity"] = 0;
    try {
        parse_catalog(doc);
        FAIL();
    } catch (const ValidationError &e) {
        EXPECT_GE(e.issues().size(), 2u);
    }
}

TEST(Intensity, ParsesAndRoundTrips)
{
    std::istringstream in("t_us,g_per_kwh\n0,300\n\n50000,120.5\n");
    const auto s = parse_intensity_csv(in);
    ASSERT_EQ(s.samples().size(), 2u);
    EXPECT_EQ(s.samples()[1].time, 50'000);
    EXPECT_EQ(s.samples()[1].intensity, 120.5);
    std::ostringstream out;
    write_intensity_csv(out, s);
    std::istringstream back(out.str());
    EXPECT_EQ(parse_intensity_csv(back).samples(), s.samples());
}

TEST(Intensity, Errors)
{
    auto parse = [](const std::string &text) {
        std::istringstream in(text);
        return parse_intensity_csv(in);
    };
    EXPECT_THROW(parse("time,value\n0,1\n"), ParseError);
    EXPECT_THROW(parse("t_us,g_per_kwh\n"), InputError);
    try {
        parse("t_us,g_per_kwh\n0,1\n10,abc\n");
        FAIL();
    } catch (const ParseError &e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_THROW(parse("t_us,g_per_kwh\n0,1\n0,2\n"), ValidationError);
    EXPECT_THROW(load_intensity(kData / "missing.csv"), InputError);
}

TEST(Problem, JsonRoundTripPreservesSolution)
{
    Rng rng(31);
    for (int i = 0; i < 30; ++i) {
        const auto p = fig6::instance(rng, 1 + rng.below(6));
        const auto back = problem_from_json(problem_to_json(p));
        EXPECT_EQ(problem_to_json(back), problem_to_json(p));
        EXPECT_EQ(assignment_to_json(solve_exact(back)), assignment_to_json(solve_exact(p)));
    }
}

TEST(Telemetry, ParsesFeaturesAndIds)
{
    std::istringstream in("function_id,cpu_cycles,network_bytes,measured_j\nf1,1e9,0,50\nf2,2e9,100,101\n");
    const auto rows = parse_telemetry_csv(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].sample.function_id, "f1");
    EXPECT_EQ(rows[1].sample.features.at("network_bytes"), 100);
    EXPECT_EQ(rows[1].measured, 101);
    EXPECT_EQ(rows[0].sample.features.count("function_id"), 0u);
}

TEST(Telemetry, Errors)
{
    auto parse = [](const std::string &text) {
        std::istringstream in(text);
        return parse_telemetry_csv(in);
    };
    EXPECT_THROW(parse("cpu_cycles\n1\n"), ParseError);
    EXPECT_THROW(parse("a,a,measured_j\n1,2,3\n"), ParseError);
    EXPECT_THROW(parse("a,measured_j\n-1,3\n"), ParseError);
    EXPECT_THROW(parse("a,measured_j\n1\n"), ParseError);
}

TEST(Model, JsonRoundTrip)
{
    AttributionModel m;
    m.coefficients = {{"cpu_cycles", 5e-8}, {"network_bytes", 5e-9}};
    m.baseline = 0.25;
    const auto j = model_to_json(m, FitStatistics{10, 0.1, 0.2, 0.99});
    const auto back = model_from_json(j);
    EXPECT_EQ(back.coefficients, m.coefficients);
    EXPECT_EQ(back.baseline, m.baseline);
    EXPECT_EQ(j.at("fit").at("samples"), 10);
    EXPECT_THROW(model_from_json(json{{"coefficients", {{"x", -1.0}}}, {"baseline", 0}}), ValidationError);
    EXPECT_THROW(model_from_json(json{{"coefficients", json::object()}, {"baseline", 0}, {"bias", 1}}), ValidationError);
}

TEST(Config, LayersOverBaseAndResolvesPaths)
{
    RunConfig base;
    base.sim.window = 500;
    base.sim.seed = 9;
    const json doc = {{"trace", "t.jsonl"},         {"catalog", "/abs/cat.json"}, {"policy", "faas-baseline"},
                      {"window_length_us", 2000},   {"power_gating", true},       {"horizon_us", 10'000},
                      {"idle_attribution", "equal"}};
    const auto cfg = apply_config(base, doc, "/cfg/dir");
    EXPECT_EQ(cfg.trace, std::filesystem::path("/cfg/dir/t.jsonl"));
    EXPECT_EQ(cfg.catalog, std::filesystem::path("/abs/cat.json"));
    EXPECT_EQ(cfg.sim.policy, Policy::FaasBaseline);
    EXPECT_EQ(cfg.sim.window, 2000);
    EXPECT_EQ(cfg.sim.seed, 9u); // untouched keys keep the base value
    EXPECT_TRUE(cfg.sim.power_gating);
    EXPECT_EQ(cfg.sim.horizon, 10'000);
    EXPECT_EQ(cfg.sim.idle_attribution, IdlePolicy::Equal);
    EXPECT_EQ(cfg.output_dir, base.output_dir);
}

TEST(Config, RejectsUnknownKeysAndBadValues)
{
    EXPECT_THROW(apply_config({}, json{{"windw_length_us", 10}}, "."), ValidationError);
    EXPECT_THROW(apply_config({}, json{{"window_length_us", 0}}, "."), ValidationError);
    try {
        apply_config({}, json{{"policy", "fastest"}}, ".");
        FAIL();
    } catch (const ValidationError &e) {
        EXPECT_NE(issues_of(e).find("faas-baseline"), std::string::npos);
    }
}

TEST(Config, ShippedConfigApplies)
{
    const auto doc = parse_json(read_file(kData / "config.json"), "config.json");
    const auto cfg = apply_config({}, doc, kData);
    EXPECT_TRUE(std::filesystem::exists(cfg.trace));
    EXPECT_TRUE(std::filesystem::exists(cfg.catalog));
}

TEST(Json, SyntaxErrorNamesOrigin)
{
    try {
        parse_json("{\"a\": ", "broken.json");
        FAIL();
    } catch (const InputError &e) {
        EXPECT_NE(std::string(e.what()).find("broken.json"), std::string::npos);
    }
    EXPECT_THROW(read_file(kData / "nope.json"), InputError);
}
