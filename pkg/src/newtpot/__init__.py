"""newtpot: rapid evaluation of 2-D Newtonian potentials on triangle meshes.

The volume potential of a smooth density over each (possibly curved)
triangle is reduced, via an anti-Laplacian of the density and Green's third
identity, to single- and double-layer potentials on the element boundary.
Those are evaluated to near machine precision at any target, arbitrarily
close to or inside the element, with complex monomial recurrences
(Helsing-Ojala close evaluation); far targets use plain Gauss-Legendre
boundary quadrature and a hierarchical treecode.
"""

from .errors import (
    ConvergenceError,
    GeometryError,
    MeshFormatError,
    NewtpotError,
    OnBoundaryError,
    SolveError,
)

__all__ = [
    "ConvergenceError",
    "GeometryError",
    "MeshFormatError",
    "NewtpotError",
    "OnBoundaryError",
    "SolveError",
]

__version__ = "0.1.0"
