"""Carbon-aware placement and scheduling of fine-grained datacenter functions."""

import json

from . import _core
from ._core import InputError, RankDeficientError, TieringError, ValidationError

__all__ = [
    "InputError",
    "RankDeficientError",
    "TieringError",
    "ValidationError",
    "embodied_carbon",
    "energy_over",
    "fit_model",
    "generate_trace",
    "intensity_at",
    "pareto_frontier",
    "power_draw",
    "simulate",
    "solve",
    "split_hybrid",
    "tier_data",
    "trace_issues",
]


def _text(obj):
    return obj if isinstance(obj, str) else json.dumps(obj)


def power_draw(device, utilization):
    return _core.power_draw(_text(device), utilization)


def energy_over(device, segments):
    """segments: iterable of (duration_us, utilization)."""
    return _core.energy_over(_text(device), list(segments))


def embodied_carbon(device, duration_us):
    return _core.embodied_carbon(_text(device), duration_us)


def intensity_at(samples, t_us):
    """samples: iterable of (t_us, g_per_kwh), strictly increasing in time."""
    return _core.intensity_at(list(samples), t_us)


def pareto_frontier(points):
    """points: iterable of (label, energy_j, tail_us)."""
    return _core.pareto_frontier(list(points))


def solve(problem, solver="exact"):
    return json.loads(_core.solve(_text(problem), solver))


def generate_trace(spec):
    """Returns the trace as a list of function dicts."""
    return [json.loads(line) for line in _core.generate_trace(_text(spec)).splitlines() if line]


def _jsonl(trace):
    if isinstance(trace, str):
        return trace
    return "".join(json.dumps(f) + "\n" for f in trace)


def trace_issues(trace):
    return _core.trace_issues(_jsonl(trace))


def fit_model(telemetry_csv):
    return json.loads(_core.fit_model(telemetry_csv))


def simulate(trace, catalog, intensity_csv=None, config=None):
    """Runs one simulation; returns the four exports keyed by file name,
    with metrics.json already decoded."""
    out = _core.simulate(_jsonl(trace), _text(catalog), intensity_csv, _text(config or {}))
    out["metrics.json"] = json.loads(out["metrics.json"])
    return out


def split_hybrid(profile, end_us, cpu, fpga, deadline_us, **options):
    """profile: iterable of (t_us, requests_per_s)."""
    return _core.split_hybrid(list(profile), end_us, _text(cpu), _text(fpga), deadline_us, **options)


def tier_data(catalog, access, deadline_us, **options):
    """access: {object_id: (reads_per_s, writes_per_s, bytes_per_access)}.
    Returns (placement, energy_j, exact)."""
    return _core.tier_data(_text(catalog), dict(access), deadline_us, **options)
