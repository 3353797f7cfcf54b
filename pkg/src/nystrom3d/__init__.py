"""High-order Nystrom solver for sound-soft acoustic scattering by smooth closed surfaces.

Modules
-------
geometry    overlapping stereographic charts, partition of unity, cut-off family
kernels     combined-field kernel and its smooth/singular splitting
trig        trigonometric polynomials on the torus, Hermite interpolation
quadrature  trapezoidal and grid-aligned polar quadrature
solver      discrete system, GMRES solve, reconstruction, potential evaluation
oracle      Mie series, adaptive cubature, loop-based reference operator
harness     experiment configuration, sweeps and reports
"""

from .errors import (ConfigError, DomainError, NotInOverlapError, NumericalError, NystromError,
                     OracleError, ParameterError, ProximityError, ResourceError, SingularityError,
                     SolverError)
from .geometry import Atlas, Chart, CutoffFamily, build_ellipsoid_atlas, build_sphere_atlas
from .kernels import KernelSplit, ScatteringParams
from .quadrature import PolarRule, make_polar_rule
from .solver import (DiscreteDensity, NystromOperator, NystromSolution, apply_operator,
                     assemble_dense, evaluate_potential, solve)

__version__ = "0.1.0"

__all__ = [
    "Atlas", "Chart", "CutoffFamily", "build_sphere_atlas", "build_ellipsoid_atlas",
    "KernelSplit", "ScatteringParams", "PolarRule", "make_polar_rule",
    "DiscreteDensity", "NystromOperator", "NystromSolution", "apply_operator", "assemble_dense",
    "evaluate_potential", "solve",
    "NystromError", "ParameterError", "DomainError", "NotInOverlapError", "SingularityError",
    "NumericalError", "SolverError", "ResourceError", "OracleError", "ConfigError",
    "ProximityError",
]
