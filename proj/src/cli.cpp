#include "carbonsched/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <future>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "carbonsched/engine.hpp"
#include "carbonsched/interchange.hpp"
#include "carbonsched/io.hpp"

namespace carbonsched {

namespace fs = std::filesystem;

namespace {

/// Flags shared by simulate and sweep. Unset optionals leave the config
/// file (or default) value alone.
struct RunFlags {
    std::string config;
    std::optional<std::string> trace, catalog, intensity, model, output_dir, policy, solver, sla_mode, idle;
    std::optional<Micros> window, horizon, cold_start, keep_alive;
    std::optional<double> penalty;
    std::optional<std::uint64_t> seed;
    std::optional<bool> power_gating, carbon_aware;
    bool record_wall_time = false;

    void attach(CLI::App *cmd)
    {
        cmd->add_option("-c,--config", config, "JSON run configuration");
        cmd->add_option("--trace", trace, "trace file (JSON lines)");
        cmd->add_option("--catalog", catalog, "device catalog (JSON)");
        cmd->add_option("--intensity", intensity, "carbon intensity CSV (t_us,g_per_kwh)");
        cmd->add_option("--model", model, "attribution model JSON (from `fit`)");
        cmd->add_option("-o,--output-dir", output_dir, "output directory");
        cmd->add_option("--policy", policy, "mufunction-exact | mufunction-heuristic | faas-baseline | round-robin | no-defer");
        cmd->add_option("--solver", solver, "exact | heuristic (used by no-defer)");
        cmd->add_option("--sla-mode", sla_mode, "hard | soft");
        cmd->add_option("--sla-penalty", penalty, "soft mode penalty, J per late microsecond");
        cmd->add_option("--idle-attribution", idle, "proportional | equal | operator-only");
        cmd->add_option("--window", window, "window length, microseconds");
        cmd->add_option("--horizon", horizon, "simulated horizon, microseconds");
        cmd->add_option("--seed", seed, "run seed");
        cmd->add_option("--cold-start", cold_start, "FaaS cold start, microseconds");
        cmd->add_option("--keep-alive", keep_alive, "FaaS container keep-alive, microseconds");
        cmd->add_option("--power-gating", power_gating, "gate devices idle for a whole window (true|false)");
        cmd->add_option("--carbon-aware", carbon_aware, "defer toward greener windows (true|false)");
        cmd->add_flag("--record-wall-time", record_wall_time, "include solver wall time in metrics.json");
    }

    /// defaults < CARBONSCHED_OUTDIR < config file < flags
    RunConfig resolve() const
    {
        RunConfig cfg;
        if (const char *env = std::getenv("CARBONSCHED_OUTDIR"); env && *env) cfg.output_dir = env;
        if (!config.empty()) {
            const fs::path p(config);
            cfg = apply_config(cfg, parse_json(read_file(p), p.string()), p.parent_path());
        }
        if (trace) cfg.trace = *trace;
        if (catalog) cfg.catalog = *catalog;
        if (intensity) cfg.intensity = fs::path(*intensity);
        if (model) cfg.model = fs::path(*model);
        if (output_dir) cfg.output_dir = *output_dir;
        auto &s = cfg.sim;
        if (policy) s.policy = parse_policy(*policy);
        if (solver) s.solver = parse_solver_mode(*solver);
        if (sla_mode) s.sla_mode = parse_sla_mode(*sla_mode);
        if (penalty) s.sla_penalty_j_per_us = *penalty;
        if (idle) s.idle_attribution = parse_idle_policy(*idle);
        if (window) s.window = *window;
        if (horizon) s.horizon = *horizon;
        if (seed) s.seed = *seed;
        if (cold_start) s.cold_start = *cold_start;
        if (keep_alive) s.keep_alive = *keep_alive;
        if (power_gating) s.power_gating = *power_gating;
        if (carbon_aware) s.carbon_aware = *carbon_aware;
        s.record_wall_time = record_wall_time;
        if (cfg.trace.empty()) throw InputError("no trace given (--trace or config key 'trace')");
        if (cfg.catalog.empty()) throw InputError("no catalog given (--catalog or config key 'catalog')");
        return cfg;
    }
};

struct Inputs {
    Trace trace;
    Catalog catalog;
    CarbonIntensitySeries intensity;
};

Inputs load_inputs(RunConfig &cfg)
{
    Inputs in;
    in.trace = load_trace(cfg.trace);
    in.catalog = load_catalog(cfg.catalog);
    in.intensity = cfg.intensity ? load_intensity(*cfg.intensity) : CarbonIntensitySeries::constant(kReferenceIntensity);
    if (cfg.model) cfg.sim.model = model_from_json(parse_json(read_file(*cfg.model), cfg.model->string()));
    return in;
}

std::string render(const auto &writer)
{
    std::ostringstream ss;
    writer(ss);
    return ss.str();
}

int cmd_simulate(const RunFlags &flags, std::ostream &out)
{
    RunConfig cfg = flags.resolve();
    const Inputs in = load_inputs(cfg);
    const SimResult r = simulate(in.trace, in.catalog, in.intensity, cfg.sim);
    const auto &dir = cfg.output_dir;
    write_file(dir / "metrics.json", render([&](std::ostream &o) { write_metrics_json(o, r.metrics, cfg.sim.record_wall_time); }));
    write_file(dir / "schedule.csv", render([&](std::ostream &o) { write_schedule_csv(o, r.schedule); }));
    write_file(dir / "provenance.csv", render([&](std::ostream &o) { write_provenance_csv(o, r); }));
    write_file(dir / "timeline.csv", render([&](std::ostream &o) { write_timeline_csv(o, r.timeline); }));
    out << "policy " << r.metrics.policy << ": energy " << format_double(r.metrics.total_energy) << " J, carbon "
        << format_double(r.metrics.total_carbon) << " g, violations " << r.metrics.sla_violations << " -> "
        << dir.string() << '\n';
    return kExitOk;
}

Trace scale_trace_deadlines(Trace t, double scale)
{
    for (auto &f : t) f.sla.deadline = std::max<Micros>(1, std::llround(static_cast<double>(f.sla.deadline) * scale));
    return t;
}

/// Worst observed latency (end - arrival) of the functions that ran.
double worst_latency(const Trace &trace, const SimResult &r)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < trace.size(); ++i)
        if (r.schedule[i].ran) worst = std::max(worst, static_cast<double>(r.schedule[i].end - trace[i].arrival));
    return worst;
}

struct SweepFlags {
    std::string axis;
    std::vector<double> scales;
    std::vector<std::string> series;
    std::vector<std::string> policies;
    bool scales_given = false, series_given = false, policies_given = false;
};

int cmd_sweep(const RunFlags &flags, SweepFlags sf, std::ostream &out)
{
    RunConfig cfg = flags.resolve();
    const Inputs in = load_inputs(cfg);

    struct Point {
        std::string label;
        Trace trace;
        CarbonIntensitySeries intensity;
        SimConfig sim;
    };
    std::vector<Point> points;
    if (sf.axis == "deadline") {
        if (sf.scales.empty()) throw InputError("deadline sweep needs --scales");
        if (!std::is_sorted(sf.scales.begin(), sf.scales.end())) throw InputError("--scales must be ascending");
        for (double s : sf.scales) {
            if (!(s > 0.0)) throw InputError("deadline scales must be > 0");
            points.push_back({format_double(s), scale_trace_deadlines(in.trace, s), in.intensity, cfg.sim});
        }
    } else if (sf.axis == "intensity") {
        if (sf.series.empty()) throw InputError("intensity sweep needs --series");
        for (const auto &p : sf.series) points.push_back({p, in.trace, load_intensity(p), cfg.sim});
    } else if (sf.axis == "policy") {
        if (sf.policies_given && sf.policies.empty()) throw InputError("policy sweep needs at least one --policies entry");
        const auto names = sf.policies_given ? sf.policies : policy_names();
        for (const auto &n : names) {
            SimConfig s = cfg.sim;
            s.policy = parse_policy(n);
            points.push_back({n, in.trace, in.intensity, s});
        }
    } else {
        throw InputError("unknown sweep axis '" + sf.axis + "' (expected deadline, intensity, policy)");
    }

    // Points are independent; results are collected in sweep order.
    std::vector<std::future<SimResult>> jobs;
    for (const auto &p : points)
        jobs.push_back(std::async(std::launch::async, [&p, &in] { return simulate(p.trace, in.catalog, p.intensity, p.sim); }));
    std::vector<SimResult> results;
    for (auto &j : jobs) results.push_back(j.get());

    std::ostringstream csv;
    const bool deadline = sf.axis == "deadline";
    csv << "index,axis,point,total_energy_j,total_carbon_g,sla_violations,worst_latency_us" << (deadline ? ",best_energy_j" : "")
        << '\n';
    std::vector<TradeoffPoint> cloud;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto &m = results[i].metrics;
        const double worst = worst_latency(points[i].trace, results[i]);
        csv << i << ',' << sf.axis << ',' << points[i].label << ',' << format_double(m.total_energy) << ','
            << format_double(m.total_carbon) << ',' << m.sla_violations << ',' << format_double(worst);
        if (deadline) {
            // A schedule that met tighter deadlines also meets looser ones, so
            // the eco-mode choice at each scale is the cheapest seen so far.
            best = std::min(best, m.total_energy);
            csv << ',' << format_double(best);
        }
        csv << '\n';
        cloud.push_back({points[i].label, m.total_energy, worst});
    }
    write_file(cfg.output_dir / "sweep.csv", csv.str());
    write_file(cfg.output_dir / "frontier.csv", render([&](std::ostream &o) { write_frontier_csv(o, cloud); }));
    out << points.size() << " sweep points -> " << cfg.output_dir.string() << '\n';
    return kExitOk;
}

int cmd_fit(const std::string &telemetry, const std::string &output, std::ostream &out)
{
    std::istringstream in(read_file(telemetry));
    std::vector<LabeledSample> samples;
    try {
        samples = parse_telemetry_csv(in);
    } catch (const ParseError &e) {
        throw InputError(telemetry + ": " + e.what());
    }
    const AttributionModel model = fit_model(samples);
    const FitStatistics st = fit_statistics(model, samples);
    write_file(output, model_to_json(model, st).dump(2) + "\n");
    out << "fitted " << model.coefficients.size() << " coefficients on " << st.samples << " samples (rmse "
        << format_double(st.rmse) << ") -> " << output << '\n';
    return kExitOk;
}

int cmd_gen_trace(const std::string &spec_path, std::optional<std::uint64_t> seed, const std::string &output,
                  std::ostream &out)
{
    TraceSpec spec = load_trace_spec(spec_path);
    if (seed) spec.seed = *seed;
    const Trace t = generate_trace(spec);
    write_file(output, render([&](std::ostream &o) { write_trace(o, t); }));
    out << t.size() << " functions -> " << output << '\n';
    return kExitOk;
}

struct ValidateFlags {
    std::string config, trace, catalog, intensity, spec, problem, model;
};

int cmd_validate(const ValidateFlags &v, std::ostream &out, std::ostream &err)
{
    std::vector<std::string> issues;
    std::size_t checked = 0;
    auto check = [&](const std::string &path, const std::string &what, const auto &fn) {
        if (path.empty()) return;
        ++checked;
        try {
            fn(path);
        } catch (const ValidationError &e) {
            for (const auto &i : e.issues()) issues.push_back(path + ": " + i);
        } catch (const InputError &e) {
            issues.push_back(path + ": " + e.what());
        }
        (void)what;
    };
    std::string trace = v.trace, catalog = v.catalog, intensity = v.intensity, model = v.model;
    check(v.config, "config", [&](const std::string &p) {
        RunConfig cfg = apply_config(RunConfig{}, parse_json(read_file(p), p), fs::path(p).parent_path());
        if (trace.empty() && !cfg.trace.empty()) trace = cfg.trace.string();
        if (catalog.empty() && !cfg.catalog.empty()) catalog = cfg.catalog.string();
        if (intensity.empty() && cfg.intensity) intensity = cfg.intensity->string();
        if (model.empty() && cfg.model) model = cfg.model->string();
    });
    check(trace, "trace", [](const std::string &p) {
        // Collect every problem instead of stopping at the first.
        std::istringstream in(read_file(p));
        std::string line;
        std::size_t n = 0;
        Trace t;
        std::vector<std::string> found;
        while (std::getline(in, line)) {
            ++n;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                t.push_back(parse_function(line, n));
            } catch (const InputError &e) {
                found.push_back(e.what());
            }
        }
        auto more = trace_issues(t);
        found.insert(found.end(), more.begin(), more.end());
        if (!found.empty()) throw ValidationError(std::move(found));
    });
    check(catalog, "catalog", [](const std::string &p) { load_catalog(p); });
    check(intensity, "intensity", [](const std::string &p) { load_intensity(p); });
    check(model, "model", [](const std::string &p) { model_from_json(parse_json(read_file(p), p)); });
    check(v.spec, "spec", [](const std::string &p) { load_trace_spec(p); });
    check(v.problem, "problem", [](const std::string &p) { problem_from_json(parse_json(read_file(p), p)); });
    if (checked == 0) throw InputError("nothing to validate; pass --config, --trace, --catalog, ...");
    if (!issues.empty()) {
        for (const auto &i : issues) err << "invalid: " << i << '\n';
        err << issues.size() << " problem(s) found\n";
        return kExitInput;
    }
    out << checked << " input(s) valid\n";
    return kExitOk;
}

int cmd_solve(const std::string &problem, const std::string &solver, const std::string &output, std::ostream &out)
{
    const PlacementProblem p = problem_from_json(parse_json(read_file(problem), problem));
    Assignment a;
    if (solver == "exact") a = solve_exact(p);
    else if (solver == "heuristic") a = solve_heuristic(p);
    else if (solver == "round-robin") a = solve_round_robin(p);
    else throw InputError("unknown solver '" + solver + "' (expected exact, heuristic, round-robin)");
    nlohmann::json j = assignment_to_json(a);
    j["objective_j"] = a.objective(p);
    j["lower_bound_j"] = lower_bound(p);
    const std::string text = j.dump(2) + "\n";
    if (output.empty()) out << text;
    else write_file(output, text);
    return kExitOk;
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err)
{
    CLI::App app{"Carbon-aware scheduling simulator for fine-grained datacenter functions", "carbonsched"};
    app.require_subcommand(1);

    RunFlags sim_flags, sweep_flags;
    auto *sim = app.add_subcommand("simulate", "run one simulation; writes metrics.json, schedule.csv, provenance.csv, timeline.csv");
    sim_flags.attach(sim);

    SweepFlags sf;
    auto *sweep = app.add_subcommand("sweep", "simulate along one axis; writes sweep.csv and frontier.csv");
    sweep_flags.attach(sweep);
    sweep->add_option("--axis", sf.axis, "deadline | intensity | policy")->required();
    auto *scales = sweep->add_option("--scales", sf.scales, "deadline multipliers, ascending")->delimiter(',');
    auto *series = sweep->add_option("--series", sf.series, "intensity CSV files")->delimiter(',');
    auto *pols = sweep->add_option("--policies", sf.policies, "policy names (default: all)")->delimiter(',');

    std::string telemetry, model_out;
    auto *fit = app.add_subcommand("fit", "fit an attribution model to telemetry");
    fit->add_option("--telemetry", telemetry, "telemetry CSV (feature columns + measured_j)")->required();
    fit->add_option("-o,--output", model_out, "model JSON path (default <outdir>/model.json)");

    std::string spec, trace_out;
    std::optional<std::uint64_t> gen_seed;
    auto *gen = app.add_subcommand("gen-trace", "generate a synthetic trace");
    gen->add_option("--spec", spec, "trace spec JSON")->required();
    gen->add_option("--seed", gen_seed, "override the trace spec seed");
    gen->add_option("-o,--output", trace_out, "trace path")->required();

    ValidateFlags vf;
    auto *val = app.add_subcommand("validate", "check inputs and report every problem");
    val->add_option("-c,--config", vf.config, "run configuration");
    val->add_option("--trace", vf.trace, "trace file");
    val->add_option("--catalog", vf.catalog, "device catalog");
    val->add_option("--intensity", vf.intensity, "intensity CSV");
    val->add_option("--spec", vf.spec, "trace spec");
    val->add_option("--problem", vf.problem, "placement problem dump");
    val->add_option("--model", vf.model, "attribution model");

    std::string problem, solver = "exact", solve_out;
    auto *solve = app.add_subcommand("solve", "solve a placement problem dump");
    solve->add_option("--problem", problem, "problem JSON")->required();
    solve->add_option("--solver", solver, "exact | heuristic | round-robin");
    solve->add_option("-o,--output", solve_out, "assignment JSON (default stdout)");

    try {
        app.parse(argc, const_cast<char **>(argv));
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << "error: usage: " << e.what() << '\n';
        return kExitInput;
    }
    sf.scales_given = scales->count() > 0;
    sf.series_given = series->count() > 0;
    sf.policies_given = pols->count() > 0;

    try {
        if (sim->parsed()) return cmd_simulate(sim_flags, out);
        if (sweep->parsed()) return cmd_sweep(sweep_flags, sf, out);
        if (fit->parsed()) {
            if (model_out.empty()) {
                const char *env = std::getenv("CARBONSCHED_OUTDIR");
                model_out = (fs::path(env && *env ? env : "out") / "model.json").string();
            }
            return cmd_fit(telemetry, model_out, out);
        }
        if (gen->parsed()) return cmd_gen_trace(spec, gen_seed, trace_out, out);
        if (val->parsed()) return cmd_validate(vf, out, err);
        if (solve->parsed()) return cmd_solve(problem, solver, solve_out, out);
    } catch (const ValidationError &e) {
        err << "error: validation:\n";
        for (const auto &i : e.issues()) err << "  " << i << '\n';
        return kExitInput;
    } catch (const InputError &e) {
        err << "error: input: " << e.what() << '\n';
        return kExitInput;
    } catch (const RankDeficientError &e) {
        err << "error: rank-deficient: " << e.what() << '\n';
        return kExitRuntime;
    } catch (const std::exception &e) {
        err << "error: runtime: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitInput;
}

} // namespace carbonsched
