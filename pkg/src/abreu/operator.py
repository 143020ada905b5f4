"""The Abreu operator in primal, system and dual (Legendre) form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stencil
from .convex import DEGENERATE_DET, GridFunction, ma_fields
from .domain import require_resolution
from .errors import DegenerateHessianError, NonPositiveError, ParameterRangeError


def as_field(grid, K):
    """Node values of ``K`` given as a constant, a callable or a GridFunction."""
    if isinstance(K, GridFunction):
        return K.values
    if callable(K):
        return np.asarray(K(grid.nodes), dtype=float).reshape(-1) * np.ones(grid.size)
    arr = np.asarray(K, dtype=float)
    if arr.ndim == 1:
        if arr.shape[0] != grid.size:
            raise ValueError(f"field has {arr.shape[0]} values for {grid.size} nodes")
        return arr
    return np.full(grid.size, float(arr))


def inverse_hessian(H):
    det = np.linalg.det(H)
    if np.any(det <= DEGENERATE_DET):
        raise DegenerateHessianError(f"min det = {det.min():.3e}")
    return stencil.cofactor_field(H) / det[:, None, None], det


def _divdiv(grid, M):
    """``sum_ij d_i d_j M^{ij}`` from interior second differences of each entry."""
    n = grid.n
    out = np.zeros(grid.size)
    for i in range(n):
        for j in range(i, n):
            D = stencil.interior_second_differences(grid, M[:, i, j])
            out += D[:, i, j] if i == j else 2.0 * D[:, i, j]
    return out


def abreu_primal(u):
    """``S(u) = -sum_ij d_i d_j u^{ij}``; NaN where the composed stencil leaves the grid.

    The inverse Hessian is formed from cubic-exact second differences so that
    the outer differentiation does not amplify the first-order truncation of
    the cut-cell stencil next to the boundary.
    """
    require_resolution(u.grid)
    H = stencil.hessian_field(u.grid, u.values, u.boundary, accurate=True)
    inv, _ = inverse_hessian(H)
    return GridFunction(u.grid, -_divdiv(u.grid, inv))


@dataclass(frozen=True)
class AbreuResidual:
    linear: np.ndarray
    constitutive: np.ndarray

    def norms(self, mask=None):
        lin = self.linear if mask is None else self.linear[mask]
        con = self.constitutive if mask is None else self.constitutive[mask]
        return {
            "sup_linear": float(np.max(np.abs(lin))),
            "sup_constitutive": float(np.max(np.abs(con))),
            "l2_linear": float(np.sqrt(np.mean(lin**2))),
            "l2_constitutive": float(np.sqrt(np.mean(con**2))),
        }

    @property
    def sup_linear(self):
        return float(np.max(np.abs(self.linear)))

    @property
    def sup_constitutive(self):
        return float(np.max(np.abs(self.constitutive)))

    @property
    def l2_linear(self):
        return float(np.sqrt(np.mean(self.linear**2)))

    @property
    def l2_constitutive(self):
        return float(np.sqrt(np.mean(self.constitutive**2)))


def abreu_system_residual(u, w, K, theta=0.0, accurate=False):
    """Residuals of ``sum U^{ij} w_ij = -K`` and ``det(D^2 u) w^{1-theta} = 1``.

    ``accurate`` selects the cubic-exact cut-cell stencil (see
    :func:`~abreu.stencil.accurate_second_difference_ops`).
    """
    if not 0.0 <= theta < 1.0:
        raise ParameterRangeError(f"theta={theta} outside [0, 1)")
    if np.any(w.values <= 0):
        raise NonPositiveError(f"w has minimum {w.values.min():.3e}")
    grid = u.grid
    H = stencil.hessian_field(grid, u.values, u.boundary, accurate)
    U = stencil.cofactor_field(H)
    A, B = stencil.weighted_operator(grid, U, accurate)
    wb = w.boundary if w.boundary is not None else np.zeros(grid.n_boundary)
    lin = A @ w.values + B @ wb + as_field(grid, K)
    det = np.linalg.det(H)
    con = det * w.values ** (1.0 - theta) - 1.0
    return AbreuResidual(linear=lin, constitutive=con)


def _erode(grid, mask):
    nb = grid.nbr.reshape(-1, grid.size)
    out = mask & np.all(nb >= 0, axis=0)
    out[out] = np.all(mask[nb[:, out]], axis=0)
    return out


def abreu_dual(f, valid=None):
    """``-sum f^{ij} d_i d_j log det(f_kl)`` on the dual grid.

    Accepts a :class:`~abreu.convex.LegendrePair` or a GridFunction on a dual
    grid.  With ``valid`` (a node mask, e.g. from
    :meth:`LegendrePair.smooth_mask`) only those nodes are differentiated and
    the rest are NaN; otherwise a degenerate Hessian anywhere raises.  NaN also
    marks nodes whose composed stencil leaves the window.
    """
    gf = getattr(f, "f", f)
    grid = gf.grid
    H = gf.hessian
    if valid is None:
        inv, det = inverse_hessian(H)
        logdet = np.log(det)
    else:
        valid = _erode(grid, np.asarray(valid, dtype=bool))
        inv = np.full_like(H, np.nan)
        logdet = np.full(grid.size, np.nan)
        iv, det = inverse_hessian(H[valid])
        inv[valid] = iv
        logdet[valid] = np.log(det)
    D = stencil.interior_second_differences(grid, logdet)
    return GridFunction(grid, -np.einsum("kij,kij->k", inv, D))


@dataclass(frozen=True)
class KahlerMetric:
    """Metric ``g = D^2 f`` on the dual grid with curvature and growth diagnostics."""

    g: np.ndarray
    min_eigenvalue: np.ndarray
    curvature: GridFunction
    radii: np.ndarray
    growth: np.ndarray
    growth_monotone: bool


def kahler_metric(f, bins=12):
    gf = getattr(f, "f", f)
    grid = gf.grid
    g = gf.hessian
    det = np.linalg.det(g)
    if np.any(det <= DEGENERATE_DET):
        raise DegenerateHessianError(f"dual Hessian degenerate, min det {det.min():.3e}")
    curv = abreu_dual(gf)
    # radial profile of f/|x| about the window centre
    pts, vals = gf.all_points, gf.all_values
    center = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    r = np.linalg.norm(pts - center, axis=1)
    rmax = np.min(0.5 * (pts.max(axis=0) - pts.min(axis=0)))
    edges = np.linspace(0.0, rmax, bins + 1)[1:]
    radii, growth = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (r > a) & (r <= b)
        if m.any():
            radii.append(0.5 * (a + b))
            growth.append(float(np.mean((vals[m] - vals.min()) / r[m])))
    growth = np.array(growth)
    half = len(growth) // 2
    monotone = bool(np.all(np.diff(growth[half:]) >= -1e-12))
    return KahlerMetric(
        g=g,
        min_eigenvalue=np.linalg.eigvalsh(g)[:, 0],
        curvature=curv,
        radii=np.array(radii),
        growth=growth,
        growth_monotone=monotone,
    )


__all__ = [
    "AbreuResidual",
    "KahlerMetric",
    "abreu_dual",
    "abreu_primal",
    "abreu_system_residual",
    "as_field",
    "kahler_metric",
    "ma_fields",
]
