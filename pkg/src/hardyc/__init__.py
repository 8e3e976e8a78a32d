"""Numerical verification of Hardy inequalities for periodic inverse-square potentials on cylinders."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .geometry import (
    CellCoords,
    LatticeConfig,
    ReducedCoords,
    embed,
    in_cylinder,
    reduced_coords,
)
from .potential import PoleError, eval_closed, eval_series, local_normalized
from .supersolution import (
    C1,
    SupersolutionParams,
    lambda_lower,
    optimal_alpha,
    ratio_neg_lap_phi_over_V_phi,
    theorem2_bounds,
    theorem35_constant,
)

__all__ = [
    "__version__",
    "CellCoords",
    "LatticeConfig",
    "ReducedCoords",
    "embed",
    "in_cylinder",
    "reduced_coords",
    "PoleError",
    "eval_closed",
    "eval_series",
    "local_normalized",
    "C1",
    "SupersolutionParams",
    "lambda_lower",
    "optimal_alpha",
    "ratio_neg_lap_phi_over_V_phi",
    "theorem2_bounds",
    "theorem35_constant",
]
