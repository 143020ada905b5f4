"""Numerical toolkit for the Abreu equation with degenerate boundary conditions.

Convex grid functions on cut-cell grids, the discrete Legendre transform, the
Abreu operator in primal, system and dual form, a continuation solver for the
perturbed boundary value problems, and checks of the a priori estimates.
"""

import os as _os

_threads = _os.environ.get("ABREU_THREADS")
if _threads:
    if _threads.isdigit() and int(_threads) > 0:
        for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            _os.environ.setdefault(_var, _threads)
    else:
        import warnings as _warnings

        _warnings.warn(f"ignoring ABREU_THREADS={_threads!r}: expected a positive integer", stacklevel=2)

__version__ = "0.1.0"

from .convex import (  # noqa: E402
    GridFunction,
    LegendrePair,
    Section,
    conjugate_at,
    legendre_transform,
    normalize_at,
    read_csv,
    section,
    write_csv,
)
from .domain import ConvexDomain, Grid, build_grid, load_domain  # noqa: E402
from .errors import *  # noqa: E402,F401,F403
from .estimates import BarrierSpec, EstimateReport  # noqa: E402
from .operator import abreu_dual, abreu_primal, abreu_system_residual, kahler_metric  # noqa: E402
from .solver import ContinuationTrace, SolverState, solve_bvp, t_continuation, theta_continuation  # noqa: E402

__all__ = [
    "BarrierSpec",
    "ContinuationTrace",
    "ConvexDomain",
    "EstimateReport",
    "Grid",
    "GridFunction",
    "LegendrePair",
    "Section",
    "SolverState",
    "abreu_dual",
    "abreu_primal",
    "abreu_system_residual",
    "build_grid",
    "conjugate_at",
    "kahler_metric",
    "legendre_transform",
    "load_domain",
    "normalize_at",
    "read_csv",
    "section",
    "solve_bvp",
    "t_continuation",
    "theta_continuation",
    "write_csv",
]
