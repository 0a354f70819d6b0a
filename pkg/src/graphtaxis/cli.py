"""Command-line interface.

Every subcommand turns its arguments into a plain config dict, runs a
handler on it and writes a manifest holding that dict, so
``graphtaxis replay <manifest>`` regenerates the same CSV bytes.

Exit codes: 0 success, 1 simulation not converged by the horizon,
2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, env_seed, fresh_seed, graph_from_section, load_config, resolve
from .graph import FAMILIES, GraphError, MetricGraph, discretize
from .manifest import RunManifest, atomic_write
from .simulate import SimulationAborted, SimulationError, Trajectory, classify, mass_ode_residual, run
from .spectrum import (
    SECULAR_FORMS,
    SpectrumError,
    SpectrumResult,
    fem_spectrum,
    max_relative_discrepancy,
    secular_first,
    secular_spectrum,
)
from .stability import (
    ModelParams,
    StabilityError,
    bifurcation_points,
    chi_star,
    instability_threshold,
    linearized_spectrum,
)
from .svg import chi_curve_svg

log = logging.getLogger("graphtaxis")

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3

FIGURE_CASES = (
    ("dumbbell", (10.0, 5.0, 1.0)),
    ("tadpole", (10.0, 5.0)),
    ("figure8", (10.0, 5.0)),
    ("star3", (10.0, 5.0, 1.0)),
)


class CommandResult:
    def __init__(self, outputs: list[str], seed: int | None = None, code: int = EXIT_OK):
        self.outputs, self.seed, self.code = outputs, seed, code


# --- shared helpers ---------------------------------------------------------


def _write(out: Path, name: str, text: str, outputs: list[str]) -> None:
    atomic_write(out / name, text)
    outputs.append(name)


def _family_args(section: dict) -> tuple[str, list[float]]:
    family = section.get("family")
    if family is None or family not in SECULAR_FORMS["kirchhoff"]:
        raise ConfigError("the secular method needs a named family (--family)")
    return family, list(section["lengths"])


def _fem_window(graph: MetricGraph, h: float, mass: str, lam_floor: float) -> SpectrumResult:
    """FEM eigenvalues at least down to ``lam_floor``."""
    disc = discretize(graph, h)
    n = int(graph.total_length * math.sqrt(-lam_floor) / math.pi * 1.5) + 2 * len(graph.edges) + 6
    while True:
        n = min(n, disc.n_dofs)
        spec = fem_spectrum(disc, n, mass=mass)
        if spec.eigenvalues[-1] < lam_floor or n == disc.n_dofs:
            return spec
        n *= 2


def _window_spectrum(cfg: dict, k_hi: float) -> SpectrumResult:
    graph = graph_from_section(cfg["graph"])
    if cfg["method"] == "secular":
        family, lengths = _family_args(cfg["graph"])
        return secular_spectrum(family, lengths, k_hi, form=cfg["form"])
    h = cfg["h"] or graph.min_length / 50
    spec = _fem_window(graph, h, cfg["mass"], -(k_hi**2))
    keep = spec.eigenvalues >= -(k_hi**2)
    # equal eigenvalues land on the same side of the cut
    return SpectrumResult(
        spec.eigenvalues[keep], spec.multiplicities[keep], spec.method, spec.total_length, label=spec.label
    )


def _counted_spectrum(cfg: dict, n: int, method: str) -> SpectrumResult:
    graph = graph_from_section(cfg["graph"])
    if method == "secular":
        family, lengths = _family_args(cfg["graph"])
        return secular_first(family, lengths, n, form=cfg["form"])
    disc = discretize(graph, cfg["h"] or graph.min_length / 50)
    if n > disc.n_dofs:
        raise ConfigError(f"k-max {n} exceeds the {disc.n_dofs} degrees of freedom")
    return fem_spectrum(disc, n, mass=cfg["mass"])


def _csv_text(header: list[str], rows, comments: dict | None = None) -> str:
    buf = io.StringIO()
    for k, v in (comments or {}).items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _g(x) -> str:
    return "" if x is None else f"{x:.15g}"


# --- spectrum ---------------------------------------------------------------


def cmd_spectrum(cfg: dict, out: Path) -> CommandResult:
    outputs: list[str] = []
    graph = graph_from_section(cfg["graph"])
    n, method = cfg["k_max"], cfg["method"]
    h = cfg["h"] or graph.min_length / 50
    specs = {}
    if method in ("fem", "both"):
        specs["fem"] = _counted_spectrum(cfg, n, "fem")
        _write(out, "spectrum_fem.csv", specs["fem"].to_csv({"h": f"{h:.12g}", "mass": cfg["mass"]}), outputs)
    if method in ("secular", "both"):
        specs["secular"] = _counted_spectrum(cfg, n, "secular")
        sec = specs["secular"]
        header = {"form": cfg["form"], "flags": len(sec.flags)}
        _write(out, "spectrum_secular.csv", sec.to_csv(header), outputs)
    for name, spec in specs.items():
        print(f"{name}: |Gamma|={spec.total_length:g} " + " ".join(f"{x:.8g}" for x in spec.eigenvalues))
    if method == "both":
        disc = max_relative_discrepancy(specs["secular"], specs["fem"], n)
        report = {
            "graph": graph.name,
            "n": n,
            "h": h,
            "mass": cfg["mass"],
            "form": cfg["form"],
            "max_relative_discrepancy": disc,
            "secular_flags": specs["secular"].flags,
        }
        _write(out, "crossval.json", json.dumps(report, indent=2) + "\n", outputs)
        print(f"max relative discrepancy (entries 1..{n - 1}): {disc:.3e}")
    return CommandResult(outputs)


# --- bifurcations / figures -------------------------------------------------


def bifurcation_table(cfg: dict) -> tuple[str, str, float, int]:
    """CSV text, SVG text, chi* and its ordinal for one graph."""
    p = ModelParams(cfg["a"], cfg["b"])
    k_hi = cfg["k_hi"] or max(3.0, 2.5 * p.a**0.25)
    spec = _window_spectrum(cfg, k_hi)
    value, index = chi_star(spec, p)
    points = bifurcation_points(spec, p)
    rows = [
        [
            bp.eigen_index,
            f"{bp.lam:.15g}",
            f"{bp.chi:.15g}",
            int(bp.simple),
            int(bp.injective),
            f"{bp.kernel_dir[0]:.15g}",
            f"{bp.kernel_dir[1]:.15g}",
        ]
        for bp in points
    ]
    comments = {
        "graph": spec.label,
        "a": f"{p.a:g}",
        "b": f"{p.b:g}",
        "method": cfg["method"],
        "chi_star": f"{value:.10g} index={index}",
        "k_hi": f"{k_hi:g}",
    }
    text = _csv_text(["eigen_index", "lambda", "chi", "simple", "injective", "ker_u", "ker_v"], rows, comments)
    svg = chi_curve_svg(spec.eigenvalues, points, p, value, index, title=f"{spec.label}, a={p.a:g}, b={p.b:g}")
    return text, svg, value, index


def cmd_bifurcations(cfg: dict, out: Path) -> CommandResult:
    outputs: list[str] = []
    text, svg, value, index = bifurcation_table(cfg)
    stem = cfg["prefix"]
    _write(out, f"{stem}.csv", text, outputs)
    _write(out, f"{stem}.svg", svg, outputs)
    print(f"chi_star={value:.10g} index={index}")
    return CommandResult(outputs)


def cmd_figures(cfg: dict, out: Path) -> CommandResult:
    outputs: list[str] = []
    for family, lengths in FIGURE_CASES:
        sub = {
            "graph": {"family": family, "lengths": list(lengths)},
            "a": cfg["a"],
            "b": cfg["b"],
            "method": cfg["method"],
            "form": cfg["form"],
            "k_hi": None,
            "h": None,
            "mass": "blended",
        }
        text, svg, value, index = bifurcation_table(sub)
        _write(out, f"fig_{family}.csv", text, outputs)
        _write(out, f"fig_{family}.svg", svg, outputs)
        print(f"{family}[{','.join(f'{x:g}' for x in lengths)}]: chi_star={value:.10g} index={index}")
    return CommandResult(outputs)


# --- linspec ----------------------------------------------------------------


def cmd_linspec(cfg: dict, out: Path) -> CommandResult:
    outputs: list[str] = []
    p = ModelParams(cfg["a"], cfg["b"], cfg["chi"], cfg["tau"])
    spec = _counted_spectrum(cfg, cfg["k_max"], cfg["method"])
    ls = linearized_spectrum(spec, p)
    comments = {
        "graph": spec.label,
        "a": f"{p.a:g}",
        "b": f"{p.b:g}",
        "chi": f"{p.chi:.15g}",
        "tau": f"{p.tau:g}",
        "max_real_part": f"{ls.max_real_part:.15g}",
        "threshold_in_window": f"{instability_threshold(spec, p):.15g}",
    }
    try:
        comments["chi_star"] = f"{chi_star(spec, p)[0]:.15g}"
    except StabilityError as exc:
        log.warning("chi* not certified: %s", exc)
    rows = []
    for i, lam in enumerate(ls.lambdas):
        mp = ls.mu_plus[i]
        mm = None if ls.mu_minus is None else ls.mu_minus[i]
        rows.append(
            [i, f"{lam:.15g}", _g(mp.real), _g(mp.imag), _g(None if mm is None else mm.real), _g(None if mm is None else mm.imag)]
        )
    header = ["index", "lambda", "mu_plus_re", "mu_plus_im", "mu_minus_re", "mu_minus_im"]
    _write(out, "linspec.csv", _csv_text(header, rows, comments), outputs)
    print(f"max Re mu = {ls.max_real_part:.6g} ({'unstable' if ls.max_real_part > 0 else 'stable'})")
    return CommandResult(outputs)


# --- simulate / sweep -------------------------------------------------------

TRAJECTORY_COLUMNS = ["t", "mass", "l2_dev", "min_u", "sup_dev"]


def trajectory_csv(traj) -> str:
    rows = [[_g(s.t), _g(s.mass), _g(s.l2_dev), _g(s.min_u), _g(s.sup_dev)] for s in traj]
    return _csv_text(TRAJECTORY_COLUMNS, rows)


def _simulate(raw: dict, seed_override: int | None) -> tuple[dict, Trajectory, dict, bool]:
    """Resolve and run; returns (resolved config, trajectory, summary, aborted)."""
    rr = resolve(raw, seed_override)
    aborted = False
    try:
        traj = run(rr.graph, rr.disc, rr.sim, ops=rr.ops, spectrum=rr.spectrum)
    except SimulationAborted as exc:
        traj, aborted = exc.states, True
        if not isinstance(traj, Trajectory):
            traj = Trajectory(traj, total_length=rr.graph.total_length)
        log.error("%s", exc)
    summary = classify(traj) if len(traj) else {"status": "aborted"}
    if aborted:
        summary["status"] = "aborted"
    summary["seed"] = rr.sim.perturbation.seed
    try:
        summary["mass_ode_residual"] = mass_ode_residual(traj, rr.sim.params)
    except SimulationError:
        summary["mass_ode_residual"] = None
    summary["chi"] = rr.sim.params.chi
    if rr.dump_fields:
        summary["_fields"] = {f"{s.t:.15g}": {"u": s.u.to_dict(), "v": s.v.to_dict()} for s in traj}
    return rr.config, traj, summary, aborted


def cmd_simulate(cfg: dict, out: Path) -> CommandResult:
    outputs: list[str] = []
    resolved, traj, summary, aborted = _simulate(cfg, env_seed())
    cfg.clear()
    cfg.update(resolved)
    fields = summary.pop("_fields", None)
    _write(out, "trajectory.csv", trajectory_csv(traj), outputs)
    _write(out, "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n", outputs)
    if fields is not None:
        _write(out, "fields.json", json.dumps(fields) + "\n", outputs)
    print(f"status={summary['status']} t_converged={summary.get('t_converged')} growth={summary.get('growth')}")
    code = EXIT_NUMERIC if aborted else (EXIT_OK if summary["status"] == "converged" else EXIT_NOT_CONVERGED)
    return CommandResult(outputs, summary["seed"], code)


def _set_dotted(cfg: dict, dotted: str, value) -> None:
    section, _, key = dotted.partition(".")
    if not key:
        raise ConfigError(f"sweep parameter must look like section.key, got {dotted!r}")
    cfg.setdefault(section, {})[key] = value
    if dotted == "model.chi":
        cfg[section].pop("chi_factor", None)
    if dotted == "model.chi_factor":
        cfg[section].pop("chi", None)


def _sweep_worker(job: tuple[int, dict]) -> tuple[int, dict, str]:
    i, raw = job
    try:
        _, traj, summary, _ = _simulate(raw, None)
    except (ConfigError, GraphError, StabilityError) as exc:
        return i, {"status": "config-error", "error": str(exc)}, ""
    summary.pop("_fields", None)
    return i, summary, trajectory_csv(traj)


def cmd_sweep(cfg: dict, out: Path) -> CommandResult:
    outputs: list[str] = []
    base = cfg["base"]
    values = cfg["values"] or [None]
    seeds = cfg["seeds"]
    if seeds is None:
        seed = env_seed()
        if seed is None:
            seed = base.get("perturbation", {}).get("seed")
        seeds = [seed if seed is not None else fresh_seed()]
        cfg["seeds"] = seeds
    jobs = []
    for value in values:
        for seed in seeds:
            raw = copy.deepcopy(base)
            if value is not None:
                _set_dotted(raw, cfg["param"], value)
            raw.setdefault("perturbation", {})["seed"] = seed
            jobs.append((len(jobs), raw))
    # resolve once up front so configuration errors surface before any work
    resolve(jobs[0][1])
    if cfg["jobs"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    else:
        results = [_sweep_worker(j) for j in jobs]

    rows, code = [], EXIT_OK
    for (i, summary, text), (_, raw) in zip(sorted(results, key=lambda r: r[0]), jobs):
        name = f"runs/run_{i:03d}.csv"
        if text:
            _write(out, name, text, outputs)
        status = summary["status"]
        if status in ("aborted", "config-error"):
            code = EXIT_NUMERIC if status == "aborted" else EXIT_USAGE
        value = values[i // len(seeds)]
        rows.append(
            [
                i,
                "" if value is None else f"{value:.15g}",
                raw["perturbation"]["seed"],
                status,
                _g(summary.get("t_converged")),
                summary.get("growth", ""),
                _g(summary.get("final_l2_dev")),
                _g(summary.get("final_sup_dev")),
                _g(summary.get("min_u")),
                _g(summary.get("mass_ode_residual")),
            ]
        )
    header = ["run", cfg["param"] or "value", "seed", "status", "t_converged", "growth",
              "final_l2_dev", "final_sup_dev", "min_u", "mass_ode_residual"]
    _write(out, "sweep.csv", _csv_text(header, rows), outputs)
    print(f"{len(rows)} runs: " + ", ".join(f"{r[3]}" for r in rows))
    return CommandResult(outputs, seeds[0] if len(seeds) == 1 else None, code)


HANDLERS = {
    "spectrum": cmd_spectrum,
    "bifurcations": cmd_bifurcations,
    "linspec": cmd_linspec,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "figures": cmd_figures,
}


# --- argument parsing -------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_graph_args(sp: argparse.ArgumentParser) -> None:
    g = sp.add_mutually_exclusive_group(required=True)
    g.add_argument("--family", choices=FAMILIES)
    g.add_argument("--graph", metavar="JSON", help="graph description file")
    sp.add_argument("--lengths", type=_float_list, help="comma-separated edge lengths for --family")


def _add_spectral_args(sp: argparse.ArgumentParser, default_method: str, methods) -> None:
    sp.add_argument("--method", choices=methods, default=default_method)
    sp.add_argument("--h", type=float, default=None, help="FEM grid spacing (default l_min/50)")
    sp.add_argument("--mass", choices=("consistent", "lumped", "blended"), default="blended",
                    help="FEM mass matrix (default blended, fourth order on uniform grids)")
    sp.add_argument("--form", choices=("kirchhoff", "literal"), default="kirchhoff",
                    help="secular equation variant")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="graphtaxis", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"graphtaxis {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("spectrum", help="Laplacian eigenvalues (FEM, secular or both)")
    _add_graph_args(sp)
    _add_spectral_args(sp, "fem", ("fem", "secular", "both"))
    sp.add_argument("--k-max", type=int, default=12, help="number of eigenvalues, counting multiplicity")

    sp = sub.add_parser("bifurcations", help="chi*, bifurcation table and chi(lambda) SVG")
    _add_graph_args(sp)
    _add_spectral_args(sp, "secular", ("fem", "secular"))
    sp.add_argument("--a", type=float, default=1.5)
    sp.add_argument("--b", type=float, default=1.5)
    sp.add_argument("--k-hi", type=float, default=None, help="wavenumber window (default max(3, 2.5 a^1/4))")
    sp.add_argument("--prefix", default="bifurcations", help="output file stem")

    sp = sub.add_parser("linspec", help="growth rates of the linearization at (a/b, a/b)")
    _add_graph_args(sp)
    _add_spectral_args(sp, "fem", ("fem", "secular"))
    sp.add_argument("--k-max", type=int, default=20)
    sp.add_argument("--a", type=float, default=1.5)
    sp.add_argument("--b", type=float, default=1.5)
    sp.add_argument("--chi", type=float, required=True)
    sp.add_argument("--tau", type=float, default=1.0)

    sp = sub.add_parser("simulate", help="run one simulation from a JSON/TOML config")
    sp.add_argument("config")

    sp = sub.add_parser("sweep", help="independent simulations over a parameter and/or seeds")
    sp.add_argument("config")
    sp.add_argument("--param", default=None, help="dotted config key, e.g. model.chi")
    sp.add_argument("--values", type=_float_list, default=None)
    sp.add_argument("--seeds", type=_int_list, default=None)
    sp.add_argument("--jobs", type=int, default=1)

    sp = sub.add_parser("figures", help="the four chi(lambda) figures with a=b=1.5")
    sp.add_argument("--a", type=float, default=1.5)
    sp.add_argument("--b", type=float, default=1.5)
    sp.add_argument("--method", choices=("fem", "secular"), default="secular")
    sp.add_argument("--form", choices=("kirchhoff", "literal"), default="kirchhoff")

    sp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    sp.add_argument("manifest")

    for name, p in sub.choices.items():
        p.add_argument("--out", default="." if name != "figures" else "figures", help="output directory")
    return ap


def _graph_section(args) -> dict:
    if args.graph is not None:
        return {"inline": MetricGraph.from_json(args.graph).to_dict()}
    if args.lengths is None:
        raise ConfigError("--family needs --lengths")
    return {"family": args.family, "lengths": args.lengths}


def config_from_args(args) -> dict:
    cmd = args.command
    if cmd in ("spectrum", "bifurcations", "linspec"):
        cfg = {"graph": _graph_section(args), "method": args.method, "h": args.h, "mass": args.mass, "form": args.form}
        if cmd == "spectrum":
            if args.k_max < 1:
                raise ConfigError("--k-max must be positive")
            cfg["k_max"] = args.k_max
        elif cmd == "bifurcations":
            cfg.update(a=args.a, b=args.b, k_hi=args.k_hi, prefix=args.prefix)
        else:
            cfg.update(k_max=args.k_max, a=args.a, b=args.b, chi=args.chi, tau=args.tau)
        return cfg
    if cmd == "simulate":
        return load_config(args.config)
    if cmd == "sweep":
        if (args.param is None) != (args.values is None):
            raise ConfigError("--param and --values go together")
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        return {"base": load_config(args.config), "param": args.param, "values": args.values,
                "seeds": args.seeds, "jobs": args.jobs}
    return {"a": args.a, "b": args.b, "method": args.method, "form": args.form}


def execute(command: str, cfg: dict, out: Path) -> int:
    """Run ``command`` on a config dict, write outputs and the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    result = HANDLERS[command](cfg, out)
    manifest = RunManifest(
        command=command,
        config=cfg,
        version=__version__,
        seed=result.seed,
        wall_time_s=round(time.perf_counter() - t0, 3),
        outputs=result.outputs,
    )
    manifest.write(out)
    return result.code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "replay":
            try:
                m = RunManifest.read(args.manifest)
            except (OSError, ValueError, TypeError) as exc:
                raise ConfigError(f"cannot read manifest {args.manifest}: {exc}") from exc
            if m.command not in HANDLERS:
                raise ConfigError(f"manifest names unknown command {m.command!r}")
            return execute(m.command, m.config, Path(args.out))
        cfg = config_from_args(args)
        return execute(args.command, cfg, Path(args.out))
    except SimulationAborted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, GraphError, StabilityError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SpectrumError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
