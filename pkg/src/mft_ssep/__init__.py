"""Quasi-potential toolkit for the boundary-driven symmetric exclusion chain
in weak contact with unequal reservoirs.

The package computes the static large-deviation cost of a density profile,
builds the optimal relaxation/excursion pair from the adjoint dynamics,
checks the dynamical and static costs against each other, and cross-validates
everything against an event-driven simulation of the particle system.
"""

from .numerics import (
    DensityProfile,
    Grid,
    Params,
    Path,
    Profile,
    make_grid,
    stationary_profile,
)
from .quasipotential import s, s0
from .rate_functional import verify_v_equals_s

__version__ = "0.1.0"

__all__ = [
    "DensityProfile",
    "Grid",
    "Params",
    "Path",
    "Profile",
    "__version__",
    "make_grid",
    "s",
    "s0",
    "stationary_profile",
    "verify_v_equals_s",
]
