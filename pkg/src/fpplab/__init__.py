"""First-passage percolation and bond percolation on Poisson-Delaunay graphs.

Submodules
----------
geometry
    Poisson point sets, Delaunay triangulations and their Voronoi duals.
fpp
    Edge passage times, first-passage times and Monte Carlo estimators of
    the time constant and of the limiting shape.
percolation
    Bond percolation on both sides of the duality, rectangle crossings,
    threshold estimation and annulus circuits.
renormalization
    Full boxes, good boxes, disjoint good circuits and the deterministic
    checks that tie them to passage times.
harness
    Configuration, seeding, experiment dispatch and canonical output.
"""

from .errors import (ConfigError, DegenerateInputError, EmptyDomainError, InvalidParameterError,
                     InvalidVertexError, OutOfWindowError, PreconditionViolated)
from .rng import Lane, derive_seed

__version__ = "0.1.0"

__all__ = ["ConfigError", "DegenerateInputError", "EmptyDomainError", "InvalidParameterError",
           "InvalidVertexError", "OutOfWindowError", "PreconditionViolated", "Lane",
           "derive_seed", "__version__"]
