"""Neumann-Kirchhoff Laplacian spectra.

Two independent routes produce a :class:`SpectrumResult`:

* :func:`fem_spectrum` -- P1 finite elements on any metric graph, solving
  ``K x = nu M x``; continuity is structural and the Kirchhoff flux
  condition is the natural boundary condition of the weak form.
* :func:`secular_spectrum` -- roots of closed-form secular functions for
  the small graph families, located by grid bracketing and refined with
  Brent's method.

Eigenvalues follow the sign convention ``lambda = -k**2 <= 0`` and are
stored in descending order, repeated according to multiplicity, with
``lambda_0 = 0``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import bisect, brentq

from .graph import Discretization, GraphField, build_family, discretize

DENSE_LIMIT = 3000
DEDUP_RTOL = 1e-8


class SpectrumError(RuntimeError):
    """Eigensolver failure or an insufficient root window."""


def same_eigenvalue(x: float, y: float, rtol: float = DEDUP_RTOL) -> bool:
    return abs(x - y) < rtol * (1.0 + abs(x))


def cluster_multiplicities(values: np.ndarray, rtol: float = DEDUP_RTOL) -> np.ndarray:
    """Multiplicity of the cluster each (sorted) entry belongs to."""
    values = np.asarray(values, dtype=float)
    mult = np.ones(len(values), dtype=int)
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or not same_eigenvalue(values[start], values[i], rtol):
            mult[start:i] = i - start
            start = i
    return mult


@dataclass
class OperatorMatrices:
    """P1 stiffness and mass matrices over the global DOFs of ``disc``."""

    disc: Discretization
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    _factor_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def weights(self) -> np.ndarray:
        return self.disc.weights

    def factorized(self, key, build: Callable[[], sp.spmatrix]):
        """Cached sparse LU solve for a time-independent system matrix."""
        solve = self._factor_cache.get(key)
        if solve is None:
            solve = spla.factorized(sp.csc_matrix(build()))
            self._factor_cache[key] = solve
        return solve


def assemble(disc: Discretization) -> OperatorMatrices:
    left, right, h = disc.cell_left, disc.cell_right, disc.cell_h
    rows = np.concatenate([left, right, left, right])
    cols = np.concatenate([left, right, right, left])
    k_vals = np.concatenate([1 / h, 1 / h, -1 / h, -1 / h])
    m_vals = np.concatenate([h / 3, h / 3, h / 6, h / 6])
    n = disc.n_dofs
    K = sp.coo_matrix((k_vals, (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((m_vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    M.sum_duplicates()
    return OperatorMatrices(disc, K, M)


def mass_matrix(ops: OperatorMatrices, kind: str = "consistent") -> sp.csr_matrix:
    """Consistent, lumped (trapezoidal) or blended (their mean) mass matrix.

    On uniform grids the consistent mass overestimates ``|lambda|`` by a
    relative ``(kh)**2 / 12`` and the lumped mass underestimates it by the
    same amount; the mean cancels the ``h**2`` term.
    """
    if kind == "consistent":
        return ops.mass
    lumped = sp.diags(ops.weights).tocsr()
    if kind == "lumped":
        return lumped
    if kind == "blended":
        return ((ops.mass + lumped) * 0.5).tocsr()
    raise SpectrumError(f"unknown mass matrix kind {kind!r}")


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    multiplicities: np.ndarray
    method: str
    total_length: float
    eigenfunctions: np.ndarray | None = field(default=None, repr=False)
    disc: Discretization | None = field(default=None, repr=False)
    label: str | None = None
    flags: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.multiplicities = np.asarray(self.multiplicities, dtype=int)

    def __len__(self) -> int:
        return len(self.eigenvalues)

    @property
    def wavenumbers(self) -> np.ndarray:
        return np.sqrt(np.maximum(-self.eigenvalues, 0.0))

    def clusters(self) -> list[tuple[int, float, int]]:
        """``(first_index, eigenvalue, multiplicity)`` per distinct eigenvalue."""
        out = []
        i = 0
        while i < len(self.eigenvalues):
            m = int(self.multiplicities[i])
            out.append((i, float(self.eigenvalues[i]), m))
            i += max(m, 1)
        return out

    def eigenfunction(self, index: int) -> GraphField:
        if self.eigenfunctions is None or self.disc is None:
            raise SpectrumError(f"{self.method} spectrum carries no eigenfunctions")
        return GraphField(self.disc, self.eigenfunctions[:, index])

    def rows(self) -> list[tuple[int, float, int, str]]:
        return [
            (i, float(lam), int(m), self.method)
            for i, (lam, m) in enumerate(zip(self.eigenvalues, self.multiplicities))
        ]

    def to_csv(self, header: dict | None = None) -> str:
        buf = io.StringIO()
        meta = {"total_length": f"{self.total_length:.12g}"}
        if self.label:
            meta = {"graph": self.label, **meta}
        meta.update(header or {})
        for k, v in meta.items():
            buf.write(f"# {k}={v}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "lambda", "multiplicity", "method"])
        for i, lam, m, method in self.rows():
            writer.writerow([i, f"{lam:.15g}", m, method])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps(
            {
                "graph": self.label,
                "total_length": self.total_length,
                "method": self.method,
                "eigenvalues": self.eigenvalues.tolist(),
                "multiplicities": self.multiplicities.tolist(),
                "flags": self.flags,
            },
            indent=2,
        )


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fem_spectrum(
    disc: Discretization,
    k_max: int,
    ops: OperatorMatrices | None = None,
    cluster_rtol: float = DEDUP_RTOL,
    mass: str = "consistent",
) -> SpectrumResult:
    """Lowest ``k_max`` eigenpairs of the discrete NK Laplacian.

    Eigenvectors are orthonormal in the chosen mass inner product (see
    :func:`mass_matrix`) and sign-normalized so their largest entry is
    positive.
    """
    n = disc.n_dofs
    if not 1 <= k_max <= n:
        raise SpectrumError(f"k_max must lie in [1, {n}], got {k_max}")
    ops = ops or assemble(disc)
    M = mass_matrix(ops, mass)
    if n <= DENSE_LIMIT:
        nu, vecs = scipy.linalg.eigh(
            ops.stiffness.toarray(), M.toarray(), subset_by_index=[0, k_max - 1]
        )
    else:
        try:
            nu, vecs = spla.eigsh(
                ops.stiffness.tocsc(), k=k_max, M=M.tocsc(), sigma=-1.0, which="LM"
            )
        except spla.ArpackNoConvergence as exc:
            raise SpectrumError(
                f"ARPACK did not converge: {len(exc.eigenvalues)} of {k_max} eigenpairs"
            ) from exc
        order = np.argsort(nu)
        nu, vecs = nu[order], vecs[:, order]

    scale = max(1.0, abs(nu[-1]))
    if abs(nu[0]) > 1e-8 * scale:
        raise SpectrumError(f"lowest eigenvalue {nu[0]:.3e} is not zero; graph disconnected?")
    lam = -nu
    lam[0] = 0.0
    lam = np.minimum(lam, 0.0)
    vecs = _canonical_signs(vecs)
    return SpectrumResult(
        eigenvalues=lam,
        multiplicities=cluster_multiplicities(lam, cluster_rtol),
        method="fem",
        total_length=disc.graph.total_length,
        eigenfunctions=vecs,
        disc=disc,
        label=disc.graph.name,
    )


# --- secular functions ------------------------------------------------------
#
# Each function takes a wavenumber array ``k`` (real or complex) and the edge
# lengths in build_family order.  The "kirchhoff" set is obtained by matching
# edge solutions at the vertices; loop edges contribute their antisymmetric
# modes sin(l k / 2) = 0 as separate factors.


def _dumbbell(k, l1, l2, l3):
    s1, c1 = np.sin(l1 * k / 2), np.cos(l1 * k / 2)
    s3, c3 = np.sin(l3 * k / 2), np.cos(l3 * k / 2)
    bracket = (4 * s1 * s3 - c1 * c3) * np.sin(l2 * k) - 2 * np.cos(l2 * k) * np.sin((l1 + l3) * k / 2)
    return s1 * s3 * bracket


def _tadpole(k, l1, l2):
    s1, c1 = np.sin(l1 * k / 2), np.cos(l1 * k / 2)
    return s1 * (2 * s1 * np.cos(l2 * k) + c1 * np.sin(l2 * k))


def _figure8(k, l1, l2):
    return np.sin(l1 * k / 2) * np.sin(l2 * k / 2) * np.sin((l1 + l2) * k / 2)


def _star3(k, l1, l2, l3):
    s = [np.sin(l * k) for l in (l1, l2, l3)]
    c = [np.cos(l * k) for l in (l1, l2, l3)]
    return s[0] * c[1] * c[2] + c[0] * s[1] * c[2] + c[0] * c[1] * s[2]


def _interval(k, l1):
    return np.sin(l1 * k)


def _circle(k, l1):
    return np.sin(l1 * k / 2)


# Alternative closed forms that circulate for these families.  Only the
# figure-8 expression agrees with the vertex conditions; the others are kept
# so their roots can be compared against the FEM spectrum.
def _dumbbell_literal(k, l1, l2, l3):
    s1, c1 = np.sin(l1 * k / 2), np.cos(l1 * k / 2)
    s3, c3 = np.sin(l3 * k / 2), np.cos(l3 * k / 2)
    bracket = (4 * s1 * s3 - c1 * c3) * np.sin(l2 * k / 2) - 2 * np.cos(l2 * k / 2) * np.sin((l1 + l3) * k / 2)
    return s1 * s3 * bracket


def _tadpole_literal(k, l1, l2):
    return 2 * np.cos(l1 * k) * np.cos(l2 * k) - np.sin(l1 * k) * np.sin(l2 * k)


def _star3_literal(k, l1, l2, l3):
    s = [np.sin(l * k) for l in (l1, l2, l3)]
    c = [np.cos(l * k) for l in (l1, l2, l3)]
    return s[0] * c[1] * c[2] + c[0] * s[1] * s[2] + s[0] * s[1] * c[2]


SECULAR_FORMS: dict[str, dict[str, Callable]] = {
    "kirchhoff": {
        "interval": _interval,
        "circle": _circle,
        "dumbbell": _dumbbell,
        "tadpole": _tadpole,
        "figure8": _figure8,
        "star3": _star3,
    },
    "literal": {
        "dumbbell": _dumbbell_literal,
        "tadpole": _tadpole_literal,
        "figure8": _figure8,
        "star3": _star3_literal,
    },
}


def secular_function(family: str, lengths: Sequence[float], form: str = "kirchhoff") -> Callable:
    try:
        fn = SECULAR_FORMS[form][family]
    except KeyError:
        raise SpectrumError(f"no {form!r} secular function for family {family!r}") from None
    lengths = tuple(float(x) for x in lengths)
    return lambda k: fn(k, *lengths)


def _complex_step_derivative(f: Callable, k: float, step: float = 1e-30) -> float:
    return float(np.imag(f(k + 1j * step)) / step)


@dataclass(frozen=True)
class SecularRoot:
    k: float
    tangential: bool


def find_secular_roots(
    f: Callable, k_hi: float, dk: float, k_lo: float | None = None, zero_tol: float = 1e-9
) -> list[SecularRoot]:
    """All roots of ``f`` in ``(k_lo, k_hi]``.

    Sign changes between grid points are refined with Brent's method.
    Local minima of ``|f|`` without a sign change are refined as critical
    points of ``f`` (complex-step derivative); a critical value that flips
    sign hides a close root pair, a critical value below ``zero_tol`` is a
    tangential (even order) root.
    """
    if k_lo is None:
        k_lo = dk / 2
    n = max(2, int(math.ceil((k_hi - k_lo) / dk)) + 1)
    ks = np.linspace(k_lo, k_hi, n)
    fs = np.real(f(ks))
    roots: list[SecularRoot] = []

    def add(a, b):
        try:
            k = brentq(f, a, b, xtol=1e-14, maxiter=400)
        except RuntimeError:
            # odd-order degenerate roots are flat enough to stall Brent
            k = bisect(f, a, b, xtol=1e-14, maxiter=400)
        roots.append(SecularRoot(float(k), False))

    for i in range(n - 1):
        if fs[i] == 0.0:
            roots.append(SecularRoot(float(ks[i]), False))
        elif fs[i] * fs[i + 1] < 0:
            add(ks[i], ks[i + 1])
    if fs[-1] == 0.0:
        roots.append(SecularRoot(float(ks[-1]), False))

    fprime = lambda k: _complex_step_derivative(f, k)  # noqa: E731
    for i in range(1, n - 1):
        if fs[i] == 0.0 or fs[i - 1] * fs[i] <= 0 or fs[i] * fs[i + 1] <= 0:
            continue
        if not (abs(fs[i]) <= abs(fs[i - 1]) and abs(fs[i]) <= abs(fs[i + 1])):
            continue
        a, b = ks[i - 1], ks[i + 1]
        da, db = fprime(a), fprime(b)
        if da * db > 0:
            continue
        kc = brentq(fprime, a, b, xtol=1e-15) if da * db < 0 else (a if da == 0 else b)
        fc = float(np.real(f(kc)))
        if fc * fs[i] < 0:
            add(a, kc)
            add(kc, b)
        elif abs(fc) < zero_tol:
            roots.append(SecularRoot(float(kc), True))

    roots.sort(key=lambda r: r.k)
    merged: list[SecularRoot] = []
    for r in roots:
        if merged and abs(r.k - merged[-1].k) < 1e-10 * max(1.0, r.k):
            continue
        merged.append(r)
    return merged


def _reference_spectrum(graph, k_hi: float) -> SpectrumResult:
    """Blended-mass FEM spectrum resolving every wavenumber up to ``k_hi``."""
    disc = discretize(graph, min(graph.min_length / 50, 0.25 / k_hi))
    ops = assemble(disc)
    k_max = int(graph.total_length * k_hi / math.pi * 1.2) + 2 * len(graph.edges) + 10
    while True:
        k_max = min(k_max, disc.n_dofs)
        ref = fem_spectrum(disc, k_max, ops=ops, mass="blended")
        if ref.eigenvalues[-1] < -(k_hi**2) or k_max == disc.n_dofs:
            return ref
        k_max *= 2


def secular_spectrum(
    family: str,
    lengths: Sequence[float],
    k_hi: float,
    *,
    form: str = "kirchhoff",
    reference: SpectrumResult | str | None = "auto",
    count: int | None = None,
    match_rtol: float = 2e-2,
) -> SpectrumResult:
    """Spectrum from the family's secular equation with ``0 < k <= k_hi``.

    ``reference`` supplies multiplicities: each eigenvalue of a FEM
    spectrum in the window is assigned to the nearest secular root and the
    root's multiplicity is the number of eigenvalues it receives.
    ``"auto"`` computes a blended-mass FEM spectrum with
    ``h = min(l_min / 50, 0.25 / k_hi)``; ``None``
    keeps multiplicity one for crossing roots and two for tangential ones.
    Anything suspicious (tangential roots, roots without a FEM partner, FEM
    eigenvalues without a root) is recorded in ``flags``.

    ``count`` demands at least that many eigenvalues (with multiplicity,
    including zero); fewer raises :class:`SpectrumError`.
    """
    if k_hi <= 0:
        raise SpectrumError(f"k_hi must be positive, got {k_hi}")
    graph = build_family(family, lengths)
    f = secular_function(family, lengths, form)
    dk = math.pi / (20 * graph.max_length)
    roots = find_secular_roots(f, k_hi, dk)
    flags = [f"tangential root at k={r.k:.10g}" for r in roots if r.tangential]

    if isinstance(reference, str):
        if reference != "auto":
            raise SpectrumError(f"unknown reference {reference!r}")
        reference = _reference_spectrum(graph, k_hi * (1 + match_rtol))

    lam_roots = -np.array([r.k for r in roots]) ** 2
    mult = np.array([2 if r.tangential else 1 for r in roots], dtype=int)
    if reference is not None and len(roots):
        ref = reference.eigenvalues[1:]
        ref = ref[ref >= -(k_hi**2) * (1 + match_rtol)]
        counts = np.zeros(len(roots), dtype=int)
        for lam in ref:
            j = int(np.argmin(np.abs(lam_roots - lam)))
            if abs(lam - lam_roots[j]) <= match_rtol * abs(lam_roots[j]):
                counts[j] += 1
            elif lam >= -(k_hi**2):
                flags.append(f"reference eigenvalue {lam:.10g} has no secular root")
        for j, c in enumerate(counts):
            if c == 0:
                flags.append(f"secular root k={roots[j].k:.10g} has no reference eigenvalue")
            else:
                mult[j] = c

    eigenvalues = [0.0]
    multiplicities = [1]
    for lam, m in zip(lam_roots, mult):
        eigenvalues.extend([float(lam)] * int(m))
        multiplicities.extend([int(m)] * int(m))
    if count is not None and len(eigenvalues) < count:
        raise SpectrumError(
            f"window k <= {k_hi} holds {len(eigenvalues)} eigenvalues, {count} requested"
        )
    return SpectrumResult(
        eigenvalues=np.array(eigenvalues),
        multiplicities=np.array(multiplicities),
        method="secular",
        total_length=graph.total_length,
        label=graph.name,
        flags=flags,
    )


def max_relative_discrepancy(a: SpectrumResult, b: SpectrumResult, n: int) -> float:
    """Largest ``|a_i - b_i| / |b_i|`` over nonzero entries ``1..n-1``."""
    m = min(n, len(a), len(b))
    x, y = a.eigenvalues[1:m], b.eigenvalues[1:m]
    if len(x) == 0:
        return 0.0
    return float(np.max(np.abs(x - y) / np.abs(y)))


def secular_first(family: str, lengths: Sequence[float], n: int, form: str = "kirchhoff", **kwargs) -> SpectrumResult:
    """The first ``n`` eigenvalues (with multiplicity) from the secular equation.

    The window starts at the Weyl estimate ``k ~ pi n / |Gamma|`` and grows
    until it holds ``n`` eigenvalues.
    """
    graph = build_family(family, lengths)
    k_hi = math.pi * (n + 2 * len(graph.edges)) / graph.total_length * 1.2 + 0.1
    for _ in range(30):
        spec = secular_spectrum(family, lengths, k_hi, form=form, **kwargs)
        if len(spec) >= n:
            keep = slice(0, n)
            return replace(spec, eigenvalues=spec.eigenvalues[keep], multiplicities=spec.multiplicities[keep])
        k_hi *= 1.5
    raise SpectrumError(f"could not collect {n} secular eigenvalues for {family}")
