"""Discrete calculus for convex grid functions.

Hessians, cofactors and Monge-Ampere fields, the brute-force Legendre
transform with its normal map, normalisation at a point and sections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from . import stencil
from .domain import ConvexDomain, build_grid
from .errors import DegenerateHessianError, NonPositiveError, NotNormalizedError, StencilIncompleteError

CONVEX_TOL = -1e-10
DEGENERATE_DET = 1e-14
TIE_TOL = 1e-12


def _evaluate(fn, pts):
    vals = np.asarray(fn(pts), dtype=float)
    if vals.shape == ():
        vals = np.full(len(pts), float(vals))
    return vals.reshape(len(pts))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values at the interior nodes of ``grid`` plus an optional boundary trace."""

    grid: object
    values: np.ndarray
    boundary: np.ndarray | None = None

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float).reshape(self.grid.size)
        object.__setattr__(self, "values", vals)
        if self.boundary is not None:
            b = np.asarray(self.boundary, dtype=float).reshape(self.grid.n_boundary)
            object.__setattr__(self, "boundary", b)

    @classmethod
    def from_function(cls, grid, fn):
        """Sample ``fn`` (vectorised over rows of an ``(P, n)`` array) at nodes and boundary points."""
        return cls(grid, _evaluate(fn, grid.nodes), _evaluate(fn, grid.bpoints))

    def replace(self, values=None, boundary=None):
        return GridFunction(
            self.grid,
            self.values if values is None else values,
            self.boundary if boundary is None else boundary,
        )

    @property
    def all_values(self):
        """Values at ``grid.all_points`` (nodes, then boundary points)."""
        if self.boundary is None:
            return self.values
        return np.concatenate([self.values, self.boundary])

    @property
    def all_points(self):
        return self.grid.all_points if self.boundary is not None else self.grid.nodes

    @cached_property
    def hessian(self):
        return stencil.hessian_field(self.grid, self.values, self.boundary)

    @cached_property
    def gradient(self):
        return stencil.gradient_field(self.grid, self.values, self.boundary)

    @cached_property
    def min_eigenvalue(self):
        return np.linalg.eigvalsh(self.hessian)[:, 0]

    def is_convex(self, tol=CONVEX_TOL):
        return bool(np.all(self.min_eigenvalue >= tol))

    def __add__(self, other):
        if isinstance(other, GridFunction):
            b = None if self.boundary is None or other.boundary is None else self.boundary + other.boundary
            return GridFunction(self.grid, self.values + other.values, b)
        b = None if self.boundary is None else self.boundary + other
        return GridFunction(self.grid, self.values + other, b)

    def __sub__(self, other):
        return self + (-1.0 * other)

    def __rmul__(self, c):
        b = None if self.boundary is None else c * self.boundary
        return GridFunction(self.grid, c * self.values, b)

    __mul__ = __rmul__

    @property
    def osc(self):
        v = self.all_values
        return float(v.max() - v.min())


def discrete_hessian(u, node):
    """Discrete Hessian of ``u`` at one interior node (index or lattice point)."""
    i = node if isinstance(node, (int, np.integer)) else u.grid.node_at(node)
    if u.boundary is None and u.grid.touches_boundary[i]:
        raise StencilIncompleteError(f"node {i} needs boundary values")
    return u.hessian[i].copy()


def cofactor(H):
    """Cofactor matrix ``U`` with ``U @ H = det(H) I``; ``[[1]]`` in 1-D."""
    H = np.asarray(H, dtype=float)
    n = H.shape[0]
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        return stencil.cofactor_field(H[None])[0]
    U = np.empty_like(H)
    for i in range(n):
        for j in range(n):
            minor = np.delete(np.delete(H, j, axis=0), i, axis=1)
            U[i, j] = (-1) ** (i + j) * np.linalg.det(minor)
    return U


def ma_fields(u):
    """``(det D^2 u, w = 1/det)`` at the interior nodes."""
    det = np.linalg.det(u.hessian)
    if np.any(det <= DEGENERATE_DET):
        i = int(np.argmin(det))
        raise DegenerateHessianError(f"det(D^2 u) = {det[i]:.3e} at node {i} {u.grid.nodes[i]}")
    return det, 1.0 / det


# ---------------------------------------------------------------------------
# Legendre transform


def _lex_order(points):
    return np.lexsort(points.T[::-1])


def conjugate_at(u, xs, base=None, chunk=None):
    """Brute-force conjugate ``f(x) = max_xi <x, xi - base> - u(xi)``.

    Returns ``(f, argmax)`` where ``argmax`` indexes ``u.all_points``; ties
    within ``TIE_TOL`` go to the lexicographically smallest primal point.
    ``chunk`` rows of ``xs`` are processed at a time; by default enough to
    keep each block near ``2**22`` entries.
    """
    pts = u.all_points
    vals = u.all_values
    order = _lex_order(pts)
    P = pts[order] - (0.0 if base is None else np.asarray(base, dtype=float))
    V = vals[order]
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if chunk is None:
        chunk = max(1, 2**22 // max(len(P), 1))
    f = np.empty(len(xs))
    arg = np.empty(len(xs), dtype=np.int64)
    for s in range(0, len(xs), chunk):
        block = xs[s : s + chunk] @ P.T - V
        m = block.max(axis=1)
        f[s : s + chunk] = m
        arg[s : s + chunk] = np.argmax(block >= (m - TIE_TOL)[:, None], axis=1)
    return f, order[arg]


def _aligned_window(lo, hi, h, min_cells=4):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    cells = np.maximum(np.ceil((hi - lo) / h - 1e-9).astype(int), min_cells)
    extra = cells * h - (hi - lo)
    lo = lo - 0.5 * extra
    return lo, lo + cells * h


@dataclass(frozen=True, eq=False)
class LegendrePair:
    """Conjugate ``f`` sampled on a rectangular dual grid.

    ``source[k]`` indexes ``primal.all_points`` and gives the maximiser for the
    ``k``-th dual point (dual nodes, then dual boundary points).
    """

    f: GridFunction
    source: np.ndarray
    primal: GridFunction
    base: np.ndarray
    refined: np.ndarray | None = None

    @property
    def dual_grid(self):
        return self.f.grid

    def evaluate(self, xs):
        return conjugate_at(self.primal, xs, self.base)[0]

    def source_points(self):
        return self.primal.all_points[self.source]

    def sample(self, values, xs):
        """Multilinear interpolation of a dual node field at points ``xs``.

        NaN outside the dual nodes' lattice box or where ``values`` is NaN.
        """
        from scipy.interpolate import RegularGridInterpolator

        grid = self.dual_grid
        lat = grid.lattice
        shape = lat.max(axis=0) + 2
        axes = [grid.origin[a] + grid.h * np.arange(shape[a]) for a in range(grid.n)]
        Z = np.full(tuple(shape), np.nan)
        Z[tuple(lat.T)] = values
        interp = RegularGridInterpolator(axes, Z, bounds_error=False, fill_value=np.nan)
        return interp(np.atleast_2d(np.asarray(xs, dtype=float)).reshape(-1, grid.n))

    def smooth_mask(self, standoff=3):
        """Dual nodes whose maximiser is an interior primal node at least
        ``standoff`` cells from the boundary (where ``f`` is smooth), and whose
        value was polished when the transform was refined."""
        src = self.source[: self.dual_grid.size]
        grid = self.primal.grid
        ok = src < grid.size
        ok[ok] = grid.node_distance[src[ok]] >= standoff * grid.h
        if self.refined is not None:
            ok &= self.refined[: self.dual_grid.size]
        return ok


def _fit_patches(u, radius=3, degree=5):
    """Least-squares polynomial fits of ``u`` on full lattice patches around each node.

    Returns coefficient array (NaN rows where the patch is incomplete) and the
    monomial exponents, in local coordinates scaled by ``h``.
    """
    grid = u.grid
    n = grid.n
    offs = np.stack(np.meshgrid(*[np.arange(-radius, radius + 1)] * n, indexing="ij"), -1).reshape(-1, n)
    expo = [e for e in np.ndindex(*([degree + 1] * n)) if sum(e) <= degree]
    V = np.stack([np.prod(offs.astype(float) ** np.array(e), axis=1) for e in expo], axis=1)
    pinv = np.linalg.pinv(V)
    lat = grid.lattice[:, None, :] + offs[None, :, :]
    shape = np.array(grid.index.shape)
    inside = np.all((lat >= 0) & (lat < shape), axis=2)
    idx = np.full(inside.shape, -1, dtype=np.int64)
    idx[inside] = grid.index[tuple(lat[inside].T)]
    ok = np.all(idx >= 0, axis=1)
    coef = np.full((grid.size, len(expo)), np.nan)
    coef[ok] = u.values[idx[ok]] @ pinv.T
    return coef, np.array(expo)


def _refine(u, xs, f, arg, base):
    """Polish brute-force values by maximising against a local polynomial model."""
    grid = u.grid
    coef, expo = _fit_patches(u)
    n, h = grid.n, grid.h
    node = arg < grid.size
    sel = np.flatnonzero(node)
    sel = sel[~np.isnan(coef[arg[sel], 0])]
    if len(sel) == 0:
        return f, np.zeros(len(f), dtype=bool)
    c = coef[arg[sel]]
    p = grid.nodes[arg[sel]]
    x = xs[sel]
    z = np.zeros((len(sel), n))

    def model(z):
        val = np.zeros(len(z))
        grad = np.zeros((len(z), n))
        hess = np.zeros((len(z), n, n))
        for m, e in enumerate(expo):
            e = np.array(e)
            val += c[:, m] * np.prod(z**e, axis=1)
            for a in range(n):
                if e[a] == 0:
                    continue
                ea = e.copy()
                ea[a] -= 1
                grad[:, a] += c[:, m] * e[a] * np.prod(z**ea, axis=1)
                for b in range(n):
                    if ea[b] == 0:
                        continue
                    eb = ea.copy()
                    eb[b] -= 1
                    hess[:, a, b] += c[:, m] * e[a] * ea[b] * np.prod(z**eb, axis=1)
        return val, grad / h, hess / h**2

    for _ in range(8):
        _, g, H = model(z)
        step = np.linalg.solve(H, (x - g)[..., None])[..., 0] / h
        z = z + np.clip(step, -1.0, 1.0)
    val, g, H = model(z)
    good = np.all(np.abs(z) <= 1.5, axis=1) & (np.linalg.eigvalsh(H)[:, 0] > 0)
    good &=np.max(np.abs(g - x), axis=1) <= 1e-9 * (1.0 + np.max(np.abs(x), axis=1))
    xi = p + h * z
    base = np.zeros(n) if base is None else base
    fr = np.einsum("ij,ij->i", x, xi - base) - val
    out = f.copy()
    upd = sel[good]
    out[upd] = np.maximum(f[upd], fr[good])
    done = np.zeros(len(f), dtype=bool)
    done[upd] = True
    return out, done


def legendre_transform(u, dual_h, window=None, base=None, refine=False):
    """Legendre transform of a convex grid function on a rectangular dual grid.

    The default window is the bounding box of the discrete gradients padded by
    one dual cell.  ``refine=True`` polishes each value with a local quintic model
    of ``u`` around the brute-force maximiser (used where smooth second
    differences of ``f`` are needed).
    """
    n = u.grid.n
    if window is None:
        g = u.gradient
        lo, hi = g.min(axis=0) - dual_h, g.max(axis=0) + dual_h
    else:
        lo, hi = (np.atleast_1d(np.asarray(w, dtype=float)) for w in window)
    lo, hi = _aligned_window(lo, hi, dual_h)
    dual = build_grid(ConvexDomain.rectangle(lo, hi), dual_h)
    base_arr = np.zeros(n) if base is None else np.asarray(base, dtype=float)
    xs = dual.all_points
    f, arg = conjugate_at(u, xs, base_arr)
    refined = None
    if refine:
        f, refined = _refine(u, xs, f, arg, base_arr)
    gf = GridFunction(dual, f[: dual.size], f[dual.size :])
    return LegendrePair(f=gf, source=arg, primal=u, base=base_arr, refined=refined)


def legendre_on_graph(u, base=None):
    """``f(grad u(xi)) = <grad u, xi - base> - u(xi)`` at each interior node."""
    x = u.gradient
    b = 0.0 if base is None else np.asarray(base, dtype=float)
    return np.einsum("ij,ij->i", x, u.grid.nodes - b) - u.values


# ---------------------------------------------------------------------------
# normalisation and sections


def _node_index(grid, p):
    if isinstance(p, (int, np.integer)):
        return int(p)
    return grid.node_at(p)


def normalize_at(u, p):
    """Subtract the discrete support plane at node ``p``."""
    i = _node_index(u.grid, p)
    a = u.gradient[i]
    b = u.values[i]
    pt = u.grid.nodes[i]
    plane_nodes = (u.grid.nodes - pt) @ a + b
    vals = u.values - plane_nodes
    vals[i] = 0.0
    bnd = None
    if u.boundary is not None:
        bnd = u.boundary - ((u.grid.bpoints - pt) @ a + b)
    return GridFunction(u.grid, vals, bnd)


@dataclass(frozen=True)
class Section:
    mask: np.ndarray
    compact: bool
    height: float
    center: int

    @property
    def size(self):
        return int(self.mask.sum())


def check_normalized(u, p, tol=1e-6):
    i = _node_index(u.grid, p)
    vmin = u.all_values.min()
    if abs(u.values[i]) > tol or vmin < -tol:
        raise NotNormalizedError(f"u(p)={u.values[i]:.3e}, min u={vmin:.3e}")
    return i


def section(u, p, b, tol=1e-6):
    """Nodes of ``S_u(p, b) = {u < b}``; ``compact`` is False when ``{u <= b}`` meets the boundary."""
    i = check_normalized(u, p, tol)
    mask = u.values < b
    if u.boundary is not None and u.grid.n_boundary:
        compact = bool(np.all(u.boundary > b))
    else:
        compact = bool(np.all(u.values[u.grid.touches_boundary] > b))
    return Section(mask=mask, compact=compact, height=float(b), center=i)


def gradient_legendre_ratio(u, d, base=None, pair=None, mask=None):
    """``sup |grad u|^2 / (d + f)^2`` over interior nodes, ``f`` at ``x = grad u``.

    ``f`` comes from the graph identity by default or from brute-force
    evaluation of ``pair`` when given.
    """
    x = u.gradient
    if pair is not None:
        f = pair.evaluate(x)
    else:
        f = legendre_on_graph(u, base)
    if mask is not None:
        x, f = x[mask], f[mask]
    den = d + f
    if np.any(den <= 0):
        raise NonPositiveError(f"d + f has minimum {den.min():.3e}")
    return float(np.max(np.sum(x**2, axis=1) / den**2))


# ---------------------------------------------------------------------------
# serialisation


def write_csv(u, path):
    """Write ``u`` as CSV plus a JSON sidecar header with the grid metadata."""
    path = Path(path)
    grid = u.grid
    pts = u.all_points
    vals = u.all_values
    kinds = ["node"] * grid.size + ["boundary"] * (len(vals) - grid.size)
    coord_cols = ",".join(f"xi{a + 1}" for a in range(grid.n))
    lines = [f"index,kind,{coord_cols},value"]
    for k, (pt, v) in enumerate(zip(pts, vals)):
        coords = ",".join(f"{c:.17g}" for c in pt)
        lines.append(f"{k},{kinds[k]},{coords},{v:.17g}")
    path.write_text("\n".join(lines) + "\n")
    header = {"domain": grid.domain.to_dict(), "h": grid.h, "n": grid.n, "nodes": grid.size, "boundary_points": len(vals) - grid.size}
    path.with_suffix(".json").write_text(json.dumps(header, indent=2, sort_keys=True) + "\n")


def read_csv(path, grid=None):
    path = Path(path)
    if grid is None:
        header = json.loads(path.with_suffix(".json").read_text())
        grid = build_grid(ConvexDomain.from_dict(header["domain"]), header["h"])
    data = np.genfromtxt(path, delimiter=",", skip_header=1, usecols=(-1,))
    data = np.atleast_1d(data)
    bnd = data[grid.size :] if len(data) > grid.size else None
    return GridFunction(grid, data[: grid.size], bnd)
