"""Neumann-Kirchhoff spectra, chemotaxis thresholds and logistic Keller-Segel
simulation on compact metric graphs."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    Discretization,
    GraphField,
    MetricGraph,
    build_family,
    discretize,
    integrate,
)
from .spectrum import OperatorMatrices, SpectrumResult, assemble, fem_spectrum, secular_spectrum  # noqa: E402
from .stability import (  # noqa: E402
    BifurcationPoint,
    LinearizedSpectrum,
    ModelParams,
    bifurcation_points,
    chi_of_lambda,
    chi_star,
    linearized_spectrum_pe,
    linearized_spectrum_pp,
)
from .simulate import Perturbation, SimConfig, SimState, mass_ode_residual, run  # noqa: E402

__all__ = [
    "BifurcationPoint",
    "Discretization",
    "GraphField",
    "LinearizedSpectrum",
    "MetricGraph",
    "ModelParams",
    "OperatorMatrices",
    "Perturbation",
    "SimConfig",
    "SimState",
    "SpectrumResult",
    "assemble",
    "bifurcation_points",
    "build_family",
    "chi_of_lambda",
    "chi_star",
    "discretize",
    "fem_spectrum",
    "integrate",
    "linearized_spectrum_pe",
    "linearized_spectrum_pp",
    "mass_ode_residual",
    "run",
    "secular_spectrum",
]
