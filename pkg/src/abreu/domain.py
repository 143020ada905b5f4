"""Convex domains and structured cut-cell grids.

A :class:`ConvexDomain` is an interval, a disk, or a convex polygon (optionally
a 2-D Delzant polytope).  Polygons carry facet data ``l_A(xi) = a_A . xi - lam_A``
with ``l_A >= 0`` on the closed domain.

:func:`build_grid` lays a lattice of spacing ``h`` anchored at the lower corner
of the bounding box and classifies every lattice point as interior, boundary
(exactly on the boundary) or exterior.  For each interior node and each stencil
direction (the axes, plus the two diagonals in 2-D) it records the neighbour on
either side: another interior node, or the exact point where the ray leaves the
domain together with its cut fraction in (0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import GridError, GridTooCoarseError

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2

KINDS = ("interval", "disk", "polygon", "delzant-polytope")


def _primitive(vec):
    """Scale an (almost) integer 2-vector to a primitive integer vector, or return None."""
    r = np.rint(vec)
    if not np.allclose(vec, r, atol=1e-9) or not r.any():
        return None
    g = math.gcd(*(int(abs(c)) for c in r))
    return (r / g).astype(int)


@dataclass(frozen=True, eq=False)
class ConvexDomain:
    kind: str
    dim: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    center: np.ndarray | None = None
    radius: float | None = None
    vertices: np.ndarray | None = None
    normals: np.ndarray | None = None
    offsets: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GridError(f"unknown domain kind {self.kind!r}")
        for name in ("lo", "hi", "center", "vertices", "normals", "offsets"):
            val = getattr(self, name)
            if val is not None:
                arr = np.array(val, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if self.kind in ("polygon", "delzant-polytope"):
            verts = self.vertices
            if np.any(self.facet_values(verts) < -1e-9 * max(1.0, self.diam)):
                raise GridError("polygon is not convex: a vertex violates a facet inequality")
            if self.kind == "delzant-polytope" and not self.is_delzant():
                raise GridError("facet normals at some vertex are not a unimodular lattice basis")

    # ---- constructors -------------------------------------------------

    @classmethod
    def interval(cls, a, b):
        if not b > a:
            raise GridError("interval needs a < b")
        return cls("interval", 1, lo=[a], hi=[b])

    @classmethod
    def disk(cls, center=(0.0, 0.0), radius=1.0):
        if radius <= 0:
            raise GridError("disk radius must be positive")
        return cls("disk", 2, center=list(center), radius=float(radius))

    @classmethod
    def polygon(cls, vertices, delzant=False):
        """Convex polygon from its vertices (either orientation).

        Edge normals are made primitive integer vectors when the edge direction
        is integral; a Delzant polytope requires this for every edge.
        """
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GridError("polygon needs at least three 2-D vertices")
        signed_area = 0.5 * np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])
        if abs(signed_area) < 1e-14:
            raise GridError("degenerate polygon")
        if signed_area < 0:
            v = v[::-1]
        normals, offsets = [], []
        for k in range(len(v)):
            e = v[(k + 1) % len(v)] - v[k]
            a = np.array([-e[1], e[0]])
            prim = _primitive(a)
            if prim is not None:
                a = prim.astype(float)
            elif delzant:
                raise GridError("Delzant polytope edges must have rational directions")
            normals.append(a)
            offsets.append(a @ v[k])
        kind = "delzant-polytope" if delzant else "polygon"
        return cls(kind, 2, vertices=v, normals=normals, offsets=offsets)

    @classmethod
    def rectangle(cls, lo, hi, delzant=False):
        """Axis-aligned box; facets ordered xi_1 - lo_1, xi_2 - lo_2, hi_1 - xi_1, hi_2 - xi_2."""
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.size == 1:
            return cls.interval(float(lo[0]), float(hi[0]))
        verts = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]]
        normals = [[1, 0], [0, 1], [-1, 0], [0, -1]]
        offsets = [lo[0], lo[1], -hi[0], -hi[1]]
        kind = "delzant-polytope" if delzant else "polygon"
        return cls(kind, 2, vertices=verts, normals=normals, offsets=offsets)

    @classmethod
    def from_dict(cls, spec):
        kind = spec.get("kind")
        if kind == "interval":
            if "bounds" in spec:
                a, b = spec["bounds"]
            else:
                (a,), (b,) = spec["vertices"]
            return cls.interval(float(a), float(b))
        if kind == "disk":
            return cls.disk(spec.get("center", [0.0, 0.0]), spec.get("radius", 1.0))
        if kind in ("polygon", "delzant-polytope"):
            return cls.polygon(spec["vertices"], delzant=kind == "delzant-polytope")
        if kind == "rectangle":
            return cls.rectangle(spec["lo"], spec["hi"], delzant=spec.get("delzant", False))
        raise GridError(f"unknown domain kind {kind!r}")

    def to_dict(self):
        if self.kind == "interval":
            return {"kind": "interval", "vertices": [[float(self.lo[0])], [float(self.hi[0])]]}
        if self.kind == "disk":
            return {"kind": "disk", "center": self.center.tolist(), "radius": self.radius}
        return {"kind": self.kind, "vertices": self.vertices.tolist()}

    # ---- geometry -----------------------------------------------------

    @property
    def is_polytope(self):
        return self.kind in ("polygon", "delzant-polytope")

    @cached_property
    def bbox(self):
        if self.kind == "interval":
            return self.lo.copy(), self.hi.copy()
        if self.kind == "disk":
            return self.center - self.radius, self.center + self.radius
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @cached_property
    def diam(self):
        if self.kind == "interval":
            return float(self.hi[0] - self.lo[0])
        if self.kind == "disk":
            return 2.0 * self.radius
        v = self.vertices
        return float(np.max(np.linalg.norm(v[:, None, :] - v[None, :, :], axis=-1)))

    @cached_property
    def volume(self):
        if self.kind == "interval":
            return self.diam
        if self.kind == "disk":
            return math.pi * self.radius**2
        v = self.vertices
        return float(0.5 * abs(np.sum(v[:, 0] * np.roll(v[:, 1], -1) - np.roll(v[:, 0], -1) * v[:, 1])))

    @cached_property
    def circumradius(self):
        """Radius of an enclosing ball (exact for interval and disk)."""
        if self.kind == "interval":
            return 0.5 * self.diam
        if self.kind == "disk":
            return self.radius
        c = 0.5 * (self.bbox[0] + self.bbox[1])
        return float(np.max(np.linalg.norm(self.vertices - c, axis=1)))

    def facet_values(self, xi):
        """Evaluate every ``l_A(xi) = a_A . xi - lam_A``; shape ``(..., d)``."""
        if not self.is_polytope:
            raise GridError("facet values are defined for polygonal domains only")
        xi = np.asarray(xi, dtype=float)
        return xi @ self.normals.T - self.offsets

    def level(self, pts):
        """Signed level-set function: negative inside, zero on the boundary."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "interval":
            x = pts[:, 0]
            return np.maximum(self.lo[0] - x, x - self.hi[0])
        if self.kind == "disk":
            return np.linalg.norm(pts - self.center, axis=1) - self.radius
        scale = np.linalg.norm(self.normals, axis=1)
        return np.max(-self.facet_values(pts) / scale, axis=1)

    def contains(self, pts, tol=1e-12):
        return self.level(pts) <= tol

    def distance_to_boundary(self, pts):
        """Exact Euclidean distance for interior points of a convex domain."""
        return np.maximum(-self.level(pts), 0.0)

    def ray_exit(self, p, d):
        """Smallest ``s > 0`` with ``p + s d`` on the boundary (``p`` inside)."""
        p = np.asarray(p, dtype=float)
        d = np.asarray(d, dtype=float)
        if self.kind == "interval":
            return float((self.hi[0] - p[0]) / d[0] if d[0] > 0 else (self.lo[0] - p[0]) / d[0])
        if self.kind == "disk":
            q = p - self.center
            a = d @ d
            b = 2.0 * (q @ d)
            c = q @ q - self.radius**2
            return float((-b + math.sqrt(max(b * b - 4 * a * c, 0.0))) / (2 * a))
        ad = self.normals @ d
        lv = self.facet_values(p)
        mask = ad < -1e-15
        return float(np.min(lv[mask] / -ad[mask]))

    def outward_normal(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "interval":
            mid = 0.5 * (self.lo[0] + self.hi[0])
            return np.array([1.0 if q[0] >= mid else -1.0])
        if self.kind == "disk":
            v = q - self.center
            return v / np.linalg.norm(v)
        scale = np.linalg.norm(self.normals, axis=1)
        dist = np.abs(self.facet_values(q)) / scale
        on = dist <= dist.min() + 1e-10 * max(1.0, self.diam)
        n = -(self.normals[on] / scale[on, None]).sum(axis=0)
        return n / np.linalg.norm(n)

    # ---- polytope combinatorics --------------------------------------

    @cached_property
    def vertex_facets(self):
        """For each vertex, the indices of the facets through it."""
        tol = 1e-9 * max(1.0, self.diam)
        vals = self.facet_values(self.vertices)
        return [tuple(np.flatnonzero(np.abs(row) <= tol)) for row in vals]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_facets(self):
        return len(self.offsets)

    @cached_property
    def facet_vertex_counts(self):
        counts = np.zeros(self.n_facets, dtype=int)
        for fs in self.vertex_facets:
            counts[list(fs)] += 1
        return counts

    @property
    def vertex_ratio(self):
        """``min_A v_A / v`` (the ratio L of the polytope barrier bound)."""
        return float(self.facet_vertex_counts.min() / self.n_vertices)

    def is_delzant(self):
        for fs in self.vertex_facets:
            if len(fs) != 2:
                return False
            a = [_primitive(self.normals[k]) for k in fs]
            if a[0] is None or a[1] is None:
                return False
            if abs(int(a[0][0]) * int(a[1][1]) - int(a[0][1]) * int(a[1][0])) != 1:
                return False
        return True


def load_domain(path):
    """Read a domain description file (JSON)."""
    with open(Path(path)) as fh:
        spec = json.load(fh)
    return ConvexDomain.from_dict(spec)


def _directions(n):
    if n == 1:
        return np.array([[1.0]]), np.array([[1]])
    lat = np.array([[1, 0], [0, 1], [1, 1], [1, -1]])
    return lat / np.linalg.norm(lat, axis=1)[:, None], lat


@dataclass(frozen=True, eq=False)
class Grid:
    """Cut-cell lattice over a convex domain.

    ``nbr[k, side, i]`` is the neighbour node of node ``i`` along direction
    ``k`` (side 0 = minus, 1 = plus) or -1; in that case ``bnd[k, side, i]``
    indexes ``bpoints`` and ``frac[k, side, i]`` is the cut fraction of the
    lattice step ``steps[k]``.
    """

    domain: ConvexDomain
    h: float
    origin: np.ndarray
    labels: np.ndarray
    index: np.ndarray
    lattice: np.ndarray
    nodes: np.ndarray
    bpoints: np.ndarray
    bnormals: np.ndarray
    directions: np.ndarray
    lattice_dirs: np.ndarray
    steps: np.ndarray
    nbr: np.ndarray
    bnd: np.ndarray
    frac: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.domain.dim

    @property
    def size(self):
        return len(self.nodes)

    @property
    def n_boundary(self):
        return len(self.bpoints)

    @property
    def n_dirs(self):
        return len(self.directions)

    @cached_property
    def all_points(self):
        """Interior nodes followed by boundary points."""
        return np.vstack([self.nodes, self.bpoints])

    @cached_property
    def node_distance(self):
        return self.domain.distance_to_boundary(self.nodes)

    @cached_property
    def touches_boundary(self):
        """Nodes with at least one stencil arm ending on the boundary."""
        return np.any(self.nbr < 0, axis=(0, 1))

    def label_at(self, point):
        """Classification of the lattice point nearest to ``point``."""
        idx = np.rint((np.asarray(point, dtype=float) - self.origin) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.labels.shape):
            return EXTERIOR
        return int(self.labels[tuple(idx)])

    def node_at(self, point):
        """Index of the interior node at ``point`` (must be a lattice point)."""
        idx = np.rint((np.asarray(point, dtype=float) - self.origin) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= self.labels.shape) or self.index[tuple(idx)] < 0:
            raise GridError(f"no interior node at {point}")
        return int(self.index[tuple(idx)])

    def nearest_node(self, point):
        d = np.linalg.norm(self.nodes - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))

    def interior_counts_per_axis(self):
        """Maximum number of interior nodes on any lattice line, per axis."""
        inner = self.labels == INTERIOR
        return [int(inner.sum(axis=ax).max()) for ax in range(self.n)]

    def standoff(self, cells=2):
        """Mask of nodes at least ``cells`` lattice steps from the boundary."""
        return self.node_distance >= cells * self.h - 1e-12 * self.h

    def full_stencil(self, depth=1):
        """Nodes whose stencil neighbours are interior out to ``depth`` rings."""
        nb = self.nbr.reshape(-1, self.size)
        ok = np.all(nb >= 0, axis=0)
        for _ in range(depth - 1):
            nxt = ok.copy()
            nxt[ok] = np.all(ok[nb[:, ok]], axis=0)
            ok = nxt
        return ok


def require_resolution(grid, min_nodes=5):
    """Reject grids too coarse for the composed (fourth-order) stencils."""
    counts = grid.interior_counts_per_axis()
    if min(counts) < min_nodes:
        raise GridTooCoarseError(
            f"grid has {counts} interior nodes per axis; need at least {min_nodes} for fourth-order stencils"
        )


def build_grid(domain, h):
    """Lay a lattice of spacing ``h`` over ``domain`` and classify its nodes."""
    h = float(h)
    if not h > 0:
        raise GridError("grid spacing must be positive")
    if h > domain.diam / 4 + 1e-12 * domain.diam:
        raise GridError(f"h={h} exceeds diam/4={domain.diam / 4}")
    n = domain.dim
    lo, hi = domain.bbox
    shape = tuple(int(math.floor((hi[a] - lo[a]) / h + 1e-9)) + 1 for a in range(n))
    axes = [lo[a] + h * np.arange(shape[a]) for a in range(n)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    tol = 1e-12 * max(1.0, domain.diam)
    lev = domain.level(mesh)
    labels = np.full(len(mesh), EXTERIOR, dtype=np.int8)
    labels[lev < -tol] = INTERIOR
    labels[np.abs(lev) <= tol] = BOUNDARY
    labels = labels.reshape(shape)

    lat_all = np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1).reshape(-1, n)
    inner = labels.reshape(-1) == INTERIOR
    lattice = lat_all[inner]
    nodes = mesh[inner]
    if len(nodes) == 0:
        raise GridTooCoarseError("grid has no interior nodes")
    index = np.full(shape, -1, dtype=np.int64)
    index[tuple(lattice.T)] = np.arange(len(nodes))

    units, lat_dirs = _directions(n)
    steps = h * np.linalg.norm(lat_dirs, axis=1)
    K, N = len(units), len(nodes)
    nbr = np.full((K, 2, N), -1, dtype=np.int64)
    bnd = np.full((K, 2, N), -1, dtype=np.int64)
    frac = np.ones((K, 2, N))

    bpts, bkeys = [], {}

    def add_bpoint(q, key=None):
        if key is not None and key in bkeys:
            return bkeys[key]
        bpts.append(q)
        if key is not None:
            bkeys[key] = len(bpts) - 1
        return len(bpts) - 1

    for k in range(K):
        for side, sgn in ((0, -1), (1, 1)):
            tgt = lattice + sgn * lat_dirs[k]
            inside = np.all((tgt >= 0) & (tgt < np.array(shape)), axis=1)
            lab = np.full(N, EXTERIOR, dtype=np.int8)
            lab[inside] = labels[tuple(tgt[inside].T)]
            idx_in = np.flatnonzero(lab == INTERIOR)
            nbr[k, side, idx_in] = index[tuple(tgt[idx_in].T)]
            for i in np.flatnonzero(lab == BOUNDARY):
                key = tuple(tgt[i])
                bnd[k, side, i] = add_bpoint(mesh[np.ravel_multi_index(key, shape)], key)
            for i in np.flatnonzero(lab == EXTERIOR):
                s = domain.ray_exit(nodes[i], sgn * units[k])
                f = min(max(s / steps[k], 0.0), 1.0)
                if f <= 0.0:
                    raise GridError("interior node lies on the boundary")
                frac[k, side, i] = f
                bnd[k, side, i] = add_bpoint(nodes[i] + sgn * units[k] * s)

    bpoints = np.array(bpts, dtype=float).reshape(-1, n)
    bnormals = np.array([domain.outward_normal(q) for q in bpoints]).reshape(-1, n)
    arrays = [nodes, lattice, bpoints, bnormals, labels, index, nbr, bnd, frac, units, lat_dirs, steps]
    for arr in arrays:
        arr.setflags(write=False)
    origin = np.asarray(lo, dtype=float).copy()
    origin.setflags(write=False)
    return Grid(
        domain=domain,
        h=h,
        origin=origin,
        labels=labels,
        index=index,
        lattice=lattice,
        nodes=nodes,
        bpoints=bpoints,
        bnormals=bnormals,
        directions=units,
        lattice_dirs=lat_dirs,
        steps=steps,
        nbr=nbr,
        bnd=bnd,
        frac=frac,
    )


def facet_values(domain, xi):
    """``l_A(xi)`` for all facets of a polygonal domain."""
    return domain.facet_values(xi)
