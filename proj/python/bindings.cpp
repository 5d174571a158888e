#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "carbonsched/engine.hpp"
#include "carbonsched/interchange.hpp"
#include "carbonsched/io.hpp"

namespace py = pybind11;
using namespace carbonsched;

namespace {

nlohmann::json doc(const std::string &text, const char *what) { return parse_json(text, what); }

template <class Writer>
std::string render(Writer &&w)
{
    std::ostringstream out;
    w(out);
    return out.str();
}

std::vector<IntensitySample> samples_of(const std::vector<std::pair<Micros, double>> &pairs)
{
    std::vector<IntensitySample> out;
    for (const auto &[t, v] : pairs) out.push_back({t, v});
    return out;
}

py::dict outcome(const ServingOutcome &o)
{
    py::dict d;
    d["energy_j"] = o.energy;
    d["violations"] = o.violations;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "carbonsched core";

    // Later registrations are tried first, so derived types follow their base.
    auto &input_error = py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", input_error.ptr());
    py::register_exception<TieringError>(m, "TieringError", input_error.ptr());
    py::register_exception<RankDeficientError>(m, "RankDeficientError", PyExc_RuntimeError);

    m.def("power_draw", [](const std::string &device, double u) { return power_draw(device_from_json(doc(device, "device")), u); },
          py::arg("device_json"), py::arg("utilization"));

    m.def(
        "energy_over",
        [](const std::string &device, const std::vector<std::pair<Micros, double>> &segments) {
            std::vector<LoadSegment> segs;
            for (const auto &[d, u] : segments) segs.push_back({d, u});
            return energy_over(device_from_json(doc(device, "device")), segs);
        },
        py::arg("device_json"), py::arg("segments"));

    m.def(
        "embodied_carbon",
        [](const std::string &device, Micros duration) { return embodied_carbon(device_from_json(doc(device, "device")), duration); },
        py::arg("device_json"), py::arg("duration_us"));

    m.def(
        "intensity_at",
        [](const std::vector<std::pair<Micros, double>> &samples, Micros t) {
            return intensity_at(CarbonIntensitySeries(samples_of(samples)), t);
        },
        py::arg("samples"), py::arg("t_us"));

    m.def(
        "pareto_frontier",
        [](const std::vector<std::tuple<std::string, double, double>> &points) {
            std::vector<TradeoffPoint> in;
            for (const auto &[l, e, t] : points) in.push_back({l, e, t});
            std::vector<std::tuple<std::string, double, double>> out;
            for (const auto &p : pareto_frontier(std::move(in))) out.emplace_back(p.label, p.energy, p.tail_latency);
            return out;
        },
        py::arg("points"));

    m.def(
        "solve",
        [](const std::string &problem, const std::string &solver) {
            const PlacementProblem p = problem_from_json(doc(problem, "problem"));
            Assignment a;
            if (solver == "exact") a = solve_exact(p);
            else if (solver == "heuristic") a = solve_heuristic(p);
            else if (solver == "round-robin") a = solve_round_robin(p);
            else throw InputError("unknown solver '" + solver + "' (expected exact, heuristic, round-robin)");
            auto j = assignment_to_json(a);
            j["objective_j"] = a.objective(p);
            j["lower_bound_j"] = lower_bound(p);
            return j.dump();
        },
        py::arg("problem_json"), py::arg("solver") = "exact");

    m.def(
        "generate_trace",
        [](const std::string &spec) {
            const Trace t = generate_trace(parse_trace_spec(doc(spec, "spec")));
            return render([&](std::ostream &o) { write_trace(o, t); });
        },
        py::arg("spec_json"));

    m.def(
        "trace_issues",
        [](const std::string &jsonl) {
            std::istringstream in(jsonl);
            try {
                return trace_issues(parse_trace(in));
            } catch (const ValidationError &e) {
                return e.issues();
            }
        },
        py::arg("trace_jsonl"));

    m.def(
        "fit_model",
        [](const std::string &csv) {
            std::istringstream in(csv);
            const auto samples = parse_telemetry_csv(in);
            const auto model = fit_model(samples);
            return model_to_json(model, fit_statistics(model, samples)).dump();
        },
        py::arg("telemetry_csv"));

    m.def(
        "simulate",
        [](const std::string &trace, const std::string &catalog, const std::optional<std::string> &intensity,
           const std::string &config) {
            std::istringstream tin(trace);
            const Trace t = parse_trace(tin);
            const Catalog c = parse_catalog(doc(catalog, "catalog"));
            CarbonIntensitySeries series = CarbonIntensitySeries::constant(kReferenceIntensity);
            if (intensity) {
                std::istringstream iin(*intensity);
                series = parse_intensity_csv(iin);
            }
            const SimConfig cfg = apply_config(RunConfig{}, doc(config, "config"), ".").sim;
            SimResult r;
            {
                py::gil_scoped_release release;
                r = simulate(t, c, series, cfg);
            }
            py::dict out;
            out["metrics.json"] = render([&](std::ostream &o) { write_metrics_json(o, r.metrics); });
            out["schedule.csv"] = render([&](std::ostream &o) { write_schedule_csv(o, r.schedule); });
            out["provenance.csv"] = render([&](std::ostream &o) { write_provenance_csv(o, r); });
            out["timeline.csv"] = render([&](std::ostream &o) { write_timeline_csv(o, r.timeline); });
            return out;
        },
        py::arg("trace_jsonl"), py::arg("catalog_json"), py::arg("intensity_csv") = std::nullopt,
        py::arg("config_json") = "{}");

    m.def(
        "split_hybrid",
        [](const std::vector<std::pair<Micros, double>> &profile, Micros end, const std::string &cpu,
           const std::string &fpga, Micros deadline, double work, double cpu_speedup, double fpga_speedup,
           double baseline_percentile) {
            LoadProfile lp{samples_of(profile), end};
            SLA sla;
            sla.deadline = deadline;
            HybridOptions opt{work, cpu_speedup, fpga_speedup, baseline_percentile};
            const auto plan = split_hybrid(lp, device_from_json(doc(cpu, "cpu")), device_from_json(doc(fpga, "fpga")), sla, opt);
            py::list segments;
            for (const auto &s : plan.segments) segments.append(py::make_tuple(s.start, s.end, s.rate, s.fpga_rate, s.cpu_rate));
            py::dict out;
            out["baseline_rate"] = plan.baseline_rate;
            out["segments"] = segments;
            out["hybrid"] = outcome(plan.hybrid);
            out["cpu_only"] = outcome(plan.cpu_only);
            out["fpga_only"] = outcome(plan.fpga_only);
            return out;
        },
        py::arg("profile"), py::arg("end_us"), py::arg("cpu_json"), py::arg("fpga_json"), py::arg("deadline_us"),
        py::arg("work_per_request") = 1.0, py::arg("cpu_speedup") = 1.0, py::arg("fpga_speedup") = 1.0,
        py::arg("baseline_percentile") = 0.1);

    m.def(
        "tier_data",
        [](const std::string &catalog, const std::map<std::string, std::tuple<double, double, double>> &access,
           Micros deadline, std::optional<double> latency_bound, std::optional<double> energy_budget, double horizon_s,
           std::size_t exact_limit) {
            const Catalog c = parse_catalog(doc(catalog, "catalog"));
            std::map<std::string, AccessStats> stats;
            for (const auto &[id, a] : access) stats[id] = {std::get<0>(a), std::get<1>(a), std::get<2>(a)};
            SLA sla;
            sla.deadline = deadline;
            TieringOptions opt{latency_bound, energy_budget, horizon_s, exact_limit};
            const auto plan = tier_data(c.objects, stats, c.media, sla, opt);
            return py::make_tuple(plan.placement, plan.energy, plan.exact);
        },
        py::arg("catalog_json"), py::arg("access"), py::arg("deadline_us"), py::arg("latency_bound_us") = std::nullopt,
        py::arg("energy_budget_j") = std::nullopt, py::arg("horizon_s") = 1.0, py::arg("exact_limit") = 10);
}
