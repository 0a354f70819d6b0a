"""Linear stability of the constant state (a/b, a/b) and bifurcation points.

Everything here is a closed-form function of the Laplacian eigenvalues:
the chemotactic threshold curve ``chi(lambda)``, its minimum over the
spectrum, the growth rates of the linearized parabolic-parabolic and
parabolic-elliptic systems, and sufficient parameter conditions for global
convergence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .spectrum import DEDUP_RTOL, SpectrumResult


class StabilityError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    a: float
    b: float
    chi: float = 0.0
    tau: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise StabilityError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if not (self.chi >= 0 and self.tau >= 0):
            raise StabilityError(f"chi and tau must be non-negative, got chi={self.chi}, tau={self.tau}")

    @property
    def steady_state(self) -> float:
        return self.a / self.b

    @property
    def parabolic_elliptic(self) -> bool:
        return self.tau == 0

    def with_chi(self, chi: float) -> "ModelParams":
        return replace(self, chi=float(chi))


def chi_of_lambda(lam, p: ModelParams):
    """Chemotactic sensitivity at which the mode ``lam < 0`` loses stability."""
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr >= 0):
        raise StabilityError("chi(lambda) is defined for lambda < 0 only")
    out = p.b * (lam_arr - p.a) * (1 - lam_arr) / (p.a * lam_arr)
    return float(out) if out.ndim == 0 else out


def critical_lambda(p: ModelParams) -> float:
    """Minimizer of chi(lambda) on lambda < 0, namely ``-sqrt(a)``."""
    return -math.sqrt(p.a)


def chi_curve_minimum(p: ModelParams) -> float:
    """``min chi(lambda) = b (1 + sqrt(a))**2 / a`` over the whole half line."""
    return p.b * (1 + math.sqrt(p.a)) ** 2 / p.a


def chi_star(spec: SpectrumResult, p: ModelParams) -> tuple[float, int]:
    """Smallest chi(lambda) over the nonzero eigenvalues and its ordinal.

    chi(lambda) decreases on ``(-inf, -sqrt(a)]`` and increases on
    ``[-sqrt(a), 0)``, so once the window contains an eigenvalue below
    ``-sqrt(a)`` no eigenvalue outside it can do better.  Ties resolve to
    the smaller ordinal.
    """
    lam = spec.eigenvalues
    nonzero = np.flatnonzero(lam < 0)
    if len(nonzero) == 0:
        raise StabilityError("spectrum has no nonzero eigenvalue")
    if lam[nonzero].min() >= critical_lambda(p):
        raise StabilityError(
            f"eigenvalue window ends at {lam[nonzero].min():.6g}, "
            f"must extend below {critical_lambda(p):.6g} to certify chi*"
        )
    chis = chi_of_lambda(lam[nonzero], p)
    j = int(np.argmin(chis))
    return float(chis[j]), int(nonzero[j])


def kernel_matrix(lam: float, chi: float, p: ModelParams) -> np.ndarray:
    """Steady linearization restricted to one eigenmode.

    Acting on the amplitudes ``(u, v)`` of ``(u, v) * phi`` with
    ``Delta phi = lam * phi``; it is singular exactly when
    ``chi = chi(lam)``, with kernel spanned by ``(1 - lam, 1)``.
    """
    s = chi * p.a / p.b
    return np.array([[lam - p.a + s, -s], [1.0, lam - 1.0]])


@dataclass(frozen=True)
class BifurcationPoint:
    chi: float
    lam: float
    eigen_index: int
    multiplicity: int
    kernel_dir: tuple[float, float]
    simple: bool
    injective: bool

    @property
    def admissible(self) -> bool:
        return self.simple and self.injective

    def residual(self, p: ModelParams) -> float:
        return float(np.linalg.norm(kernel_matrix(self.lam, self.chi, p) @ np.array(self.kernel_dir)))


def bifurcation_points(spec: SpectrumResult, p: ModelParams, rtol: float = DEDUP_RTOL) -> list[BifurcationPoint]:
    """One point per distinct nonzero eigenvalue, sorted by chi then ordinal."""
    clusters = [(i, lam, m) for i, lam, m in spec.clusters() if lam < 0]
    chis = [chi_of_lambda(lam, p) for _, lam, _ in clusters]
    points = []
    for (i, lam, m), chi in zip(clusters, chis):
        clash = any(
            abs(chi - other) < rtol * (1 + abs(chi)) for j, other in enumerate(chis) if clusters[j][0] != i
        )
        direction = np.array([1 - lam, 1.0])
        direction /= np.linalg.norm(direction)
        points.append(
            BifurcationPoint(
                chi=chi,
                lam=lam,
                eigen_index=i,
                multiplicity=m,
                kernel_dir=(float(direction[0]), float(direction[1])),
                simple=m == 1,
                injective=not clash,
            )
        )
    points.sort(key=lambda bp: (bp.chi, bp.eigen_index))
    return points


@dataclass
class LinearizedSpectrum:
    lambdas: np.ndarray
    mu_plus: np.ndarray
    mu_minus: np.ndarray | None = None

    @property
    def max_real_part(self) -> float:
        parts = [np.real(self.mu_plus)]
        if self.mu_minus is not None:
            parts.append(np.real(self.mu_minus))
        return float(np.max(np.concatenate(parts)))

    def argmax(self) -> int:
        return int(np.argmax(np.real(self.mu_plus)))


def mu_pp(lam, p: ModelParams):
    """Both growth rates ``(mu_plus, mu_minus)`` of a mode when ``tau > 0``.

    Roots of ``tau mu^2 + (1 - (1 + tau) lam + a tau) mu
    + (a - lam)(1 - lam) + chi (a / b) lam = 0``; complex when the
    discriminant is negative.
    """
    if p.tau <= 0:
        raise StabilityError("mu_pp needs tau > 0")
    lam = np.asarray(lam, dtype=float)
    tau = p.tau
    beta = 1 - (1 + tau) * lam + p.a * tau
    gamma = (p.a - lam) * (1 - lam) + p.chi * (p.a / p.b) * lam
    root = np.sqrt((beta**2 - 4 * tau * gamma).astype(complex))
    return (-beta + root) / (2 * tau), (-beta - root) / (2 * tau)


def mu_pe(lam, p: ModelParams):
    """Growth rate of a mode when ``tau = 0``."""
    lam = np.asarray(lam, dtype=float)
    s = p.chi * p.a / p.b
    return lam - s / (1 - lam) - (p.a - s)


def determinant_residual(lam: float, mu: complex, p: ModelParams) -> complex:
    """``det(lam A + B - mu T)`` for the mode-wise linearized system."""
    A = np.array([[1.0, -p.chi * p.a / p.b], [0.0, 1.0]])
    B = np.array([[-p.a, 0.0], [1.0, -1.0]])
    T = np.diag([1.0, p.tau])
    m = lam * A + B - mu * T
    # explicit 2x2 formula; LU in np.linalg.det adds avoidable roundoff
    return complex(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])


def linearized_spectrum_pp(spec: SpectrumResult, p: ModelParams) -> LinearizedSpectrum:
    plus, minus = mu_pp(spec.eigenvalues, p)
    return LinearizedSpectrum(spec.eigenvalues.copy(), plus, minus)


def linearized_spectrum_pe(spec: SpectrumResult, p: ModelParams) -> LinearizedSpectrum:
    if p.tau != 0:
        raise StabilityError("linearized_spectrum_pe needs tau = 0")
    return LinearizedSpectrum(spec.eigenvalues.copy(), mu_pe(spec.eigenvalues, p).astype(complex))


def linearized_spectrum(spec: SpectrumResult, p: ModelParams) -> LinearizedSpectrum:
    return linearized_spectrum_pe(spec, p) if p.tau == 0 else linearized_spectrum_pp(spec, p)


def instability_threshold(spec: SpectrumResult, p: ModelParams, chi_hi: float | None = None, xtol: float = 1e-12) -> float:
    """Sensitivity at which the largest growth rate crosses zero.

    Found by root bracketing on chi; independent of :func:`chi_star`, which
    it should reproduce.
    """

    def growth(chi):
        return linearized_spectrum(spec, p.with_chi(chi)).max_real_part

    if chi_hi is None:
        chi_hi = 2 * chi_curve_minimum(p)
        while growth(chi_hi) <= 0:
            chi_hi *= 2
            if chi_hi > 1e12:
                raise StabilityError("no instability found")
    return float(brentq(growth, 0.0, chi_hi, xtol=xtol, rtol=4 * np.finfo(float).eps))


def kappa(p: ModelParams, C: float = 1.0) -> float:
    a, b, chi = p.a, p.b, p.chi
    return C * (
        2 * a**2 / b**2
        + a**2 * chi / b**2
        + a**2 * chi**2 / b**3
        + a**3 * chi**3 / b**4
        + a**4 * chi**4 / b**5
    )


def global_stability_pp(p: ModelParams, C: float = 1.0) -> bool:
    """Sufficient condition for global convergence when ``tau > 0``.

    ``C`` is a graph-dependent constant that is not known in closed form,
    so the answer is only as good as the caller's guess for it.
    """
    if p.chi == 0:
        return True
    k = kappa(p, C)
    margin = p.a - p.chi * k
    if margin <= 0:
        return False
    return p.b**2 / p.chi**2 > (p.a + p.chi * k) ** 2 / margin


def global_stability_pe(p: ModelParams) -> bool:
    """Global convergence window ``0 < chi < b/2`` when ``tau = 0``."""
    return 0 < p.chi < p.b / 2
