"""Simulation configuration files (JSON or TOML) and their resolution.

A config names the graph, the grid, the model parameters, the time grid
and the initial perturbation::

    [graph]
    family = "tadpole"
    lengths = [10, 5]
    h = 0.1

    [model]
    a = 1.5
    b = 1.5
    chi = 0.6          # or chi_factor = 1.2, a multiple of chi* on this grid
    tau = 0

    [time]
    dt = 1e-3
    t_end = 200
    snapshot_every = 100
    positivity_guard = true

    [perturbation]
    mode = "random"    # eigenfunction | random | custom
    amplitude = 0.5
    seed = 7
    eigen_index = "critical"

Resolution turns symbolic entries (``chi_factor``, ``"critical"``, a missing
seed) into numbers, so a resolved config replays exactly.
"""

from __future__ import annotations

import copy
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import FAMILIES, Discretization, GraphError, MetricGraph, build_family, discretize
from .spectrum import OperatorMatrices, SpectrumResult, assemble, fem_spectrum
from .stability import ModelParams, StabilityError, chi_star, critical_lambda
from .simulate import Perturbation, SimConfig, SimulationError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SEED_ENV = "GRAPHTAXIS_SEED"

DEFAULTS = {
    "graph": {"h": 0.1},
    "model": {"a": 1.5, "b": 1.5, "tau": 1.0},
    "time": {"dt": 1e-3, "t_end": 10.0, "snapshot_every": 100, "positivity_guard": True},
    "perturbation": {"mode": "eigenfunction", "amplitude": 1e-4, "n_modes": 8},
    "output": {"fields": False},
}
ALLOWED = {
    "graph": {"family", "lengths", "file", "inline", "h"},
    "model": {"a", "b", "chi", "chi_factor", "tau"},
    "time": {"dt", "t_end", "snapshot_every", "positivity_guard"},
    "perturbation": {"mode", "amplitude", "eigen_index", "seed", "n_modes", "u0", "v0"},
    "output": {"fields"},
}


class ConfigError(ValueError):
    pass


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".toml":
            return tomllib.loads(text)
        return json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def env_seed() -> int | None:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def fresh_seed() -> int:
    return int(np.random.SeedSequence().entropy % 2**32)


def with_defaults(raw: dict) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a table/object")
    cfg = copy.deepcopy(DEFAULTS)
    for section, body in raw.items():
        if section not in ALLOWED:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - ALLOWED[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
        cfg[section].update(copy.deepcopy(body))
    return cfg


def graph_from_section(section: dict) -> MetricGraph:
    if "inline" in section:
        return MetricGraph.from_dict(section["inline"])
    if "file" in section:
        return MetricGraph.from_json(section["file"])
    family = section.get("family")
    if family is None:
        raise ConfigError("[graph] needs either 'family' + 'lengths' or 'file'")
    if family not in FAMILIES:
        raise ConfigError(f"unknown family {family!r}")
    return build_family(family, section.get("lengths", []))


def spectrum_past_critical(disc: Discretization, p: ModelParams, ops: OperatorMatrices | None = None) -> SpectrumResult:
    """FEM spectrum whose window reaches below ``-sqrt(a)``, enough to certify chi*."""
    lam_c = critical_lambda(p)
    n = int(disc.graph.total_length * math.sqrt(-lam_c) / math.pi * 1.5) + 2 * len(disc.graph.edges) + 6
    while True:
        n = min(n, disc.n_dofs)
        spec = fem_spectrum(disc, n, ops=ops)
        if spec.eigenvalues[-1] < lam_c or n == disc.n_dofs:
            return spec
        n *= 2


@dataclass
class ResolvedRun:
    config: dict
    graph: MetricGraph
    disc: Discretization
    ops: OperatorMatrices
    sim: SimConfig
    spectrum: SpectrumResult | None
    dump_fields: bool


def resolve(raw: dict, seed_override: int | None = None) -> ResolvedRun:
    """Fill defaults, compute symbolic entries, validate everything."""
    cfg = with_defaults(raw)
    try:
        graph = graph_from_section(cfg["graph"])
        if "file" in cfg["graph"]:
            cfg["graph"]["inline"] = graph.to_dict()
            del cfg["graph"]["file"]
        disc = discretize(graph, float(cfg["graph"]["h"]))
        model = cfg["model"]
        base = ModelParams(float(model["a"]), float(model["b"]), 0.0, float(model["tau"]))
    except (GraphError, StabilityError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    ops = assemble(disc)

    pert = cfg["perturbation"]
    needs_spec = "chi_factor" in model or pert.get("eigen_index") == "critical"
    spec = spectrum_past_critical(disc, base, ops) if needs_spec else None
    if "chi_factor" in model:
        if "chi" in model:
            raise ConfigError("give either model.chi or model.chi_factor, not both")
        model["chi"] = float(model.pop("chi_factor")) * chi_star(spec, base)[0]
    model.setdefault("chi", 0.0)
    if pert.get("eigen_index") == "critical":
        pert["eigen_index"] = chi_star(spec, base)[1]

    if pert["mode"] == "random":
        seed = seed_override if seed_override is not None else pert.get("seed")
        pert["seed"] = int(seed) if seed is not None else fresh_seed()
    try:
        params = ModelParams(float(model["a"]), float(model["b"]), float(model["chi"]), float(model["tau"]))
        t = cfg["time"]
        sim = SimConfig(
            params=params,
            dt=float(t["dt"]),
            t_end=float(t["t_end"]),
            snapshot_every=int(t["snapshot_every"]),
            positivity_guard=bool(t["positivity_guard"]),
            perturbation=Perturbation(
                mode=pert["mode"],
                amplitude=float(pert["amplitude"]),
                eigen_index=None if pert.get("eigen_index") is None else int(pert["eigen_index"]),
                seed=pert.get("seed"),
                n_modes=int(pert["n_modes"]),
                u0=None if pert.get("u0") is None else np.asarray(pert["u0"], dtype=float),
                v0=None if pert.get("v0") is None else np.asarray(pert["v0"], dtype=float),
            ),
        )
    except (SimulationError, StabilityError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return ResolvedRun(cfg, graph, disc, ops, sim, spec, bool(cfg["output"]["fields"]))
