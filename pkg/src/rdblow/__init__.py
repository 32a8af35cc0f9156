"""rdblow: pathwise blow-up laboratory for a stochastic non-local
reaction-diffusion equation driven by fractional Brownian motion.

Subsystems:

- ``fbm``: exact-covariance fractional Brownian motion synthesis and
  path functionals.
- ``spectral``: Dirichlet eigenpairs, heat semigroup, two-sided kernel
  envelope fit on interval/rectangle domains.
- ``solver``: method-of-lines integration of the transformed random PDE
  with numerical blow-up detection (compiled kernel when available).
- ``bounds``: per-path stopping-time bounds, existence certificates,
  barrier admissibility, comparison ODE.
- ``probability``: analytic blow-up-probability bounds versus Monte
  Carlo ensembles.
- ``config`` / ``harness`` / ``cli``: experiment orchestration.
"""

from .errors import ConfigurationError, DomainError, NumericalError, SolverFault
from .fbm import FbmPath, HurstParameter, TimeGrid, covariance, sample_path, sample_paths
from .solver import (HAVE_COMPILED, InitialDatum, ModelParams, SolutionTrace,
                     SolverControls, solve)
from .spectral import DomainSpec, SpectralBasis, build_basis

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DomainError", "NumericalError", "SolverFault",
    "FbmPath", "HurstParameter", "TimeGrid", "covariance", "sample_path",
    "sample_paths", "HAVE_COMPILED", "InitialDatum", "ModelParams",
    "SolutionTrace", "SolverControls", "solve", "DomainSpec", "SpectralBasis",
    "build_basis", "__version__",
]
