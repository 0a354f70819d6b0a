"""Time integration of the logistic Keller-Segel system on a metric graph.

Space: P1 elements on the shared-vertex grid (continuity is structural,
Kirchhoff flux balance is the natural condition of the weak form).
Time: IMEX Euler -- diffusion implicit, taxis and logistic reaction
explicit.  The weak taxis vector ``int chi u v' phi_i'`` and the reaction
vector ``M (u (a - b u))`` both sum against the constant to the right
values, so the discrete mass obeys
``mass_{n+1} = mass_n + dt * (a int u_n - b int u_n^2)`` exactly with
trapezoidal integrals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .graph import Discretization, GraphField, MetricGraph, integrate
from .spectrum import OperatorMatrices, SpectrumResult, assemble, fem_spectrum
from .stability import ModelParams

log = logging.getLogger(__name__)

PERTURBATION_MODES = ("eigenfunction", "random", "custom")


class SimulationError(RuntimeError):
    pass


class SimulationAborted(SimulationError):
    """Non-finite values appeared; ``states`` holds the trajectory up to the last good state."""

    def __init__(self, message: str, states: list):
        super().__init__(message)
        self.states = states


@dataclass
class Perturbation:
    mode: str = "eigenfunction"
    amplitude: float = 1e-4
    eigen_index: int | None = None
    seed: int | None = None
    n_modes: int = 8
    u0: np.ndarray | None = field(default=None, repr=False)
    v0: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in PERTURBATION_MODES:
            raise SimulationError(f"unknown perturbation mode {self.mode!r}")
        if not math.isfinite(self.amplitude):
            raise SimulationError("perturbation amplitude must be finite")


@dataclass
class SimConfig:
    params: ModelParams
    dt: float
    t_end: float
    snapshot_every: int = 100
    positivity_guard: bool = True
    perturbation: Perturbation = field(default_factory=Perturbation)
    cfl_safety: float = 0.5
    max_halvings: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise SimulationError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= 0:
            raise SimulationError(f"t_end must be non-negative, got {self.t_end}")
        if self.snapshot_every < 1:
            raise SimulationError("snapshot_every must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class SimState:
    t: float
    u: GraphField
    v: GraphField
    mass: float
    l2_dev: float
    min_u: float
    sup_dev: float

    @classmethod
    def from_arrays(cls, t: float, u: np.ndarray, v: np.ndarray, p: ModelParams, disc: Discretization) -> "SimState":
        w = disc.weights
        du = u - p.steady_state
        dv = v - p.steady_state
        return cls(
            t=float(t),
            u=GraphField(disc, u.copy()),
            v=GraphField(disc, v.copy()),
            mass=float(w @ u),
            l2_dev=float(math.sqrt(w @ (du * du) + w @ (dv * dv))),
            min_u=float(u.min()),
            sup_dev=float(max(np.abs(du).max(), np.abs(dv).max())),
        )


class Trajectory(list):
    """Snapshots of one run plus run-level bookkeeping."""

    def __init__(self, states=(), **meta):
        super().__init__(states)
        self.seed: int | None = meta.get("seed")
        self.positivity_violations: int = 0
        self.dt_halvings: int = 0
        self.total_length: float = meta.get("total_length", float("nan"))

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self])

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(s, name) for s in self])


# --- spatial operators ------------------------------------------------------


def taxis_vector(disc: Discretization, u: np.ndarray, v: np.ndarray, chi: float) -> np.ndarray:
    """Weak taxis term with entries ``int chi u v' phi_i'``.

    Vertex contributions vanish by the Kirchhoff condition, so there is no
    boundary term; the entries sum to zero.
    """
    left, right, h = disc.cell_left, disc.cell_right, disc.cell_h
    flux = chi * 0.5 * (u[left] + u[right]) * (v[right] - v[left]) / h
    n = disc.n_dofs
    return np.bincount(right, flux, n) - np.bincount(left, flux, n)


def elliptic_solve(ops: OperatorMatrices, u: np.ndarray, shift: float | None = None) -> np.ndarray:
    """Weak solution of ``-v'' + v = u`` with NK conditions.

    Constants are solved exactly: the system is solved for ``u - shift``
    (default ``u[0]``) and the shift added back.
    """
    solve = ops.factorized("elliptic", lambda: ops.stiffness + ops.mass)
    c = float(u[0]) if shift is None else shift
    return c + solve(ops.mass @ (u - c))


def taxis_dt_limit(disc: Discretization, v: np.ndarray, chi: float, safety: float) -> float:
    if chi == 0:
        return math.inf
    with np.errstate(invalid="ignore", over="ignore"):
        grad = np.abs(v[disc.cell_right] - v[disc.cell_left]) / disc.cell_h
    speed = chi * float(grad.max())
    return math.inf if speed == 0 else safety * disc.h_min / speed


def _advance(u, v, dt, p: ModelParams, ops: OperatorMatrices):
    """One IMEX step; returns the new ``(u, v)``.

    Works with deviations ``U = u - a/b`` and writes the reaction as
    ``u (a - b u) = -b u U``, so the constant state maps to an exactly zero
    right-hand side and stays put to the last bit.
    """
    with np.errstate(invalid="ignore", over="ignore"):
        return _advance_unchecked(u, v, dt, p, ops)


def _advance_unchecked(u, v, dt, p: ModelParams, ops: OperatorMatrices):
    # non-finite results are detected by the callers
    M, K = ops.mass, ops.stiffness
    s = p.steady_state
    U = u - s
    rhs = M @ (U - dt * p.b * u * U)
    if p.chi:
        rhs += dt * taxis_vector(ops.disc, u, v, p.chi)
    solve_u = ops.factorized(("u", dt), lambda: M + dt * K)
    U_new = solve_u(rhs)
    if p.tau == 0:
        return s + U_new, elliptic_solve(ops, s + U_new, shift=s)
    r = dt / p.tau
    solve_v = ops.factorized(("v", dt, p.tau), lambda: M + r * (K + M))
    V_new = solve_v(M @ ((v - s) + r * U))
    return s + U_new, s + V_new


def _check_state(state: SimState, p: ModelParams):
    if state.u.disc is not state.v.disc:
        raise SimulationError("u and v live on different discretizations")


def step_pp(state: SimState, cfg: SimConfig, ops: OperatorMatrices, dt: float | None = None) -> SimState:
    """Advance ``tau > 0`` by one step of size ``dt`` (default ``cfg.dt``)."""
    p = cfg.params
    if p.tau <= 0:
        raise SimulationError("step_pp needs tau > 0")
    _check_state(state, p)
    dt = cfg.dt if dt is None else dt
    u, v = _advance(state.u.values, state.v.values, dt, p, ops)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise SimulationAborted(f"non-finite values at t={state.t + dt:g}", [state])
    return SimState.from_arrays(state.t + dt, u, v, p, ops.disc)


def step_pe(state: SimState, cfg: SimConfig, ops: OperatorMatrices, dt: float | None = None) -> SimState:
    """Advance ``tau = 0``: elliptic solve for v, then the IMEX u-step."""
    p = cfg.params
    if p.tau != 0:
        raise SimulationError("step_pe needs tau = 0")
    _check_state(state, p)
    dt = cfg.dt if dt is None else dt
    v = elliptic_solve(ops, state.u.values, shift=p.steady_state)
    u, v = _advance(state.u.values, v, dt, p, ops)
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise SimulationAborted(f"non-finite values at t={state.t + dt:g}", [state])
    return SimState.from_arrays(state.t + dt, u, v, p, ops.disc)


# --- initial data -----------------------------------------------------------


def smooth_random_field(
    disc: Discretization, rng: np.random.Generator, n_modes: int, spectrum: SpectrumResult
) -> np.ndarray:
    """Sup-normalized combination of the lowest non-constant eigenfunctions
    with independent uniform(-1, 1) coefficients."""
    basis = spectrum.eigenfunctions[:, 1 : n_modes + 1]
    w = basis @ rng.uniform(-1.0, 1.0, basis.shape[1])
    peak = np.abs(w).max()
    return w / peak if peak > 0 else w


def initial_fields(disc: Discretization, cfg: SimConfig, ops: OperatorMatrices, spectrum: SpectrumResult | None = None):
    """Return ``(u0, v0, seed)``; ``v0`` already satisfies the elliptic
    constraint when ``tau = 0``."""
    p, pert = cfg.params, cfg.perturbation
    base = p.steady_state
    seed = None
    if pert.mode == "eigenfunction":
        k = pert.eigen_index
        if k is None:
            raise SimulationError("eigenfunction perturbation needs eigen_index")
        if spectrum is None or spectrum.disc is not disc or len(spectrum) <= k:
            spectrum = fem_spectrum(disc, k + 1, ops=ops)
        phi = spectrum.eigenfunctions[:, k]
        u0 = base + pert.amplitude * phi
        v0 = u0.copy()
    elif pert.mode == "random":
        seed = pert.seed
        rng = np.random.default_rng(seed)
        n = min(pert.n_modes + 1, disc.n_dofs)
        if spectrum is None or spectrum.disc is not disc or len(spectrum) < n:
            spectrum = fem_spectrum(disc, n, ops=ops)
        floor = 1e-3 * base
        u0 = np.maximum(base + pert.amplitude * smooth_random_field(disc, rng, pert.n_modes, spectrum), floor)
        v0 = np.maximum(base + pert.amplitude * smooth_random_field(disc, rng, pert.n_modes, spectrum), floor)
    else:
        if pert.u0 is None:
            raise SimulationError("custom perturbation needs u0")
        u0 = np.asarray(pert.u0, dtype=float).copy()
        v0 = u0.copy() if pert.v0 is None else np.asarray(pert.v0, dtype=float).copy()
        if u0.shape != (disc.n_dofs,) or v0.shape != (disc.n_dofs,):
            raise SimulationError(f"custom fields must have {disc.n_dofs} entries")
    if p.tau == 0:
        v0 = elliptic_solve(ops, u0, shift=base)
    return u0, v0, seed


# --- driver -----------------------------------------------------------------


def run(
    graph: MetricGraph,
    disc: Discretization,
    cfg: SimConfig,
    ops: OperatorMatrices | None = None,
    spectrum: SpectrumResult | None = None,
) -> Trajectory:
    """Integrate to ``cfg.t_end`` and return snapshots every
    ``cfg.snapshot_every`` steps (plus the initial and final state)."""
    if disc.graph is not graph and disc.graph != graph:
        raise SimulationError("discretization belongs to a different graph")
    ops = ops or assemble(disc)
    p = cfg.params
    u, v, seed = initial_fields(disc, cfg, ops, spectrum)
    traj = Trajectory(seed=seed, total_length=graph.total_length)
    traj.append(SimState.from_arrays(0.0, u, v, p, disc))
    n_steps = cfg.n_steps

    def substep(u, v, dt, depth):
        limit = taxis_dt_limit(disc, v, p.chi, cfg.cfl_safety)
        if dt > limit and depth < cfg.max_halvings:
            traj.dt_halvings += 1
            u, v = substep(u, v, dt / 2, depth + 1)
            return substep(u, v, dt / 2, depth + 1)
        u1, v1 = _advance(u, v, dt, p, ops)
        if cfg.positivity_guard and u1.min() <= 0 < u.min() and depth < cfg.max_halvings:
            traj.dt_halvings += 1
            u, v = substep(u, v, dt / 2, depth + 1)
            return substep(u, v, dt / 2, depth + 1)
        return u1, v1

    for n in range(1, n_steps + 1):
        u_new, v_new = substep(u, v, cfg.dt, 0)
        if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(v_new))):
            raise SimulationAborted(f"non-finite values at t={n * cfg.dt:g}", traj)
        if u_new.min() <= 0 < u.min():
            traj.positivity_violations += 1
            log.warning("u lost positivity at t=%g (min %.3e)", n * cfg.dt, u_new.min())
        u, v = u_new, v_new
        if n % cfg.snapshot_every == 0 or n == n_steps:
            traj.append(SimState.from_arrays(n * cfg.dt, u, v, p, disc))
    return traj


# --- diagnostics ------------------------------------------------------------


def mass_ode_residual(traj: list[SimState], p: ModelParams) -> float:
    """Largest defect of ``d/dt int u = a int u - b int u^2`` over interior
    snapshots, using central differences of the recorded mass.

    Needs at least three uniformly spaced snapshots; a shorter trailing
    interval (final partial block) is ignored.
    """
    states = list(traj)
    if len(states) >= 3:
        spacing = states[1].t - states[0].t
        if not math.isclose(states[-1].t - states[-2].t, spacing, rel_tol=1e-9, abs_tol=1e-12):
            states = states[:-1]
    if len(states) < 3:
        raise SimulationError("mass_ode_residual needs at least three uniformly spaced snapshots")
    t = np.array([s.t for s in states])
    gaps = np.diff(t)
    if not np.allclose(gaps, gaps[0], rtol=1e-9, atol=1e-12):
        raise SimulationError("snapshots are not uniformly spaced")
    mass = np.array([s.mass for s in states])
    rate = (mass[2:] - mass[:-2]) / (t[2:] - t[:-2])
    rhs = np.array([p.a * s.mass - p.b * integrate(GraphField(s.u.disc, s.u.values**2)) for s in states[1:-1]])
    return float(np.max(np.abs(rate - rhs)))


def convergence_time(traj: list[SimState], total_length: float, l2_tol: float | None = None, sup_tol: float = 1e-5) -> float | None:
    """Earliest snapshot time from which both deviation measures stay below
    tolerance until the end; ``None`` if the run never settles."""
    if l2_tol is None:
        l2_tol = 1e-6 * math.sqrt(total_length)
    t_conv = None
    for s in traj:
        ok = s.l2_dev < l2_tol and s.sup_dev < sup_tol
        if ok and t_conv is None:
            t_conv = s.t
        elif not ok:
            t_conv = None
    return t_conv


def classify(traj: Trajectory, growth_factor: float = 10.0) -> dict:
    """Summary used by the CLI: status, convergence time and growth flag."""
    t_conv = convergence_time(traj, traj.total_length)
    first, last = traj[0], traj[-1]
    growing = first.l2_dev > 0 and last.l2_dev > growth_factor * first.l2_dev
    return {
        "status": "converged" if t_conv is not None else "not-converged",
        "t_converged": t_conv,
        "growth": bool(growing),
        "final_l2_dev": last.l2_dev,
        "final_sup_dev": last.sup_dev,
        "min_u": float(min(s.min_u for s in traj)),
        "positivity_violations": traj.positivity_violations,
        "dt_halvings": traj.dt_halvings,
        "seed": traj.seed,
    }


def log_slope(traj: list[SimState], t0: float, t1: float) -> float:
    """Least-squares slope of ``log l2_dev`` over snapshots in ``[t0, t1]``."""
    t = np.array([s.t for s in traj])
    y = np.array([s.l2_dev for s in traj])
    sel = (t >= t0) & (t <= t1) & (y > 0)
    if sel.sum() < 2:
        raise SimulationError(f"fewer than two snapshots in [{t0}, {t1}]")
    return float(np.polyfit(t[sel], np.log(y[sel]), 1)[0])
