"""Perturbation-and-continuation solver for the Abreu boundary value problems.

The fourth-order problem is split into the pair

    sum_ij U^{ij} w_ij = -K,      det D^2 u = w^{-(1 - theta)},

with ``u = phi`` and ``w = psi`` (or ``w = t``) on the boundary.  Each outer
sweep solves the linear equation for ``w`` with the cofactor matrix of the
current ``u`` frozen, then the Dirichlet Monge-Ampere problem for ``u`` by a
damped Newton iteration.  Continuation drives ``theta`` or ``t`` to zero along
a fixed decreasing schedule with warm starts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from . import stencil
from .convex import CONVEX_TOL, GridFunction
from .domain import ConvexDomain, Grid, build_grid, require_resolution
from .errors import (
    DegenerateHessianError,
    LineSearchFailed,
    MaxIterationsError,
    NonPositiveError,
    OuterIterationStalled,
    ParameterRangeError,
    SingularSystemError,
    SolverError,
)
from .operator import abreu_system_residual, as_field

logger = logging.getLogger(__name__)

DEFAULT_TOL = {1: (1e-8, 1e-6), 2: (1e-6, 1e-4)}


def _boundary_values(grid, data):
    """Boundary trace from a constant, a callable or a GridFunction."""
    if isinstance(data, GridFunction):
        return data.boundary
    if callable(data):
        return np.asarray(data(grid.bpoints), dtype=float).reshape(grid.n_boundary) * np.ones(grid.n_boundary)
    return np.full(grid.n_boundary, float(data))


def _solve(A, b, what):
    x = spla.spsolve(A.tocsc(), b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"{what}: singular linear system")
    return x


def linearized_solve(u, K, bc, accurate=False):
    """Solve ``sum U^{ij}(D^2 u) w_ij = -K`` with ``w = bc`` on the boundary."""
    grid = u.grid
    wb = _boundary_values(grid, bc)
    if np.any(wb <= 0):
        raise NonPositiveError("boundary data for w must be positive")
    H = stencil.hessian_field(grid, u.values, u.boundary, accurate)
    A, B = stencil.weighted_operator(grid, stencil.cofactor_field(H), accurate)
    rhs = -as_field(grid, K) - B @ wb
    return GridFunction(grid, _solve(A, rhs, "linearized_solve"), wb)


@dataclass
class NewtonReport:
    iterations: int
    residuals: list
    halvings: int


def ma_solve(rhs, phi, u0, tol=None, max_iter=100, max_halvings=40, report=None, accurate=False):
    """Damped Newton for ``det D^2 u = rhs`` with ``u = phi`` on the boundary.

    Steps are halved until the discrete Hessian stays positive semidefinite
    and the sup-norm residual decreases.
    """
    grid = u0.grid
    target = as_field(grid, rhs)
    if np.any(target <= 0):
        raise NonPositiveError("Monge-Ampere right-hand side must be positive")
    tol = DEFAULT_TOL[grid.n][0] if tol is None else tol
    ub = _boundary_values(grid, phi)
    u = GridFunction(grid, u0.values.copy(), ub)

    def residual(v):
        H = stencil.hessian_field(grid, v, ub, accurate)
        return H, np.linalg.det(H) - target

    H, r = residual(u.values)
    rn = float(np.max(np.abs(r)))
    history = [rn]
    halvings = 0
    for it in range(max_iter):
        if rn <= tol:
            break
        J, _ = stencil.weighted_operator(grid, stencil.cofactor_field(H), accurate)
        du = _solve(J, -r, "ma_solve")
        lam = 1.0
        for k in range(max_halvings + 1):
            trial = u.values + lam * du
            Ht, rt = residual(trial)
            rtn = float(np.max(np.abs(rt)))
            if np.linalg.eigvalsh(Ht)[:, 0].min() >= CONVEX_TOL and rtn < rn:
                break
            lam *= 0.5
        else:
            raise LineSearchFailed("line search failed", halvings=max_halvings, residual=rn, iteration=it)
        halvings += k
        u = GridFunction(grid, trial, ub)
        H, r, rn = Ht, rt, rtn
        history.append(rn)
    else:
        if rn > tol:
            raise MaxIterationsError("max iterations", iterations=max_iter, residual=rn)
    if report is not None:
        report.iterations = len(history) - 1
        report.residuals = history
        report.halvings = halvings
    return u


@dataclass
class SolverState:
    u: GridFunction
    w: GridFunction
    theta: float
    K: object
    phi: object
    psi: object
    t: float | None = None
    sweeps: int = 0
    newton_iterations: int = 0
    history: list = field(default_factory=list)

    @property
    def grid(self):
        return self.u.grid

    def residual(self):
        return abreu_system_residual(self.u, self.w, self.K, self.theta)

    @property
    def det(self):
        return np.linalg.det(self.u.hessian)

    def near_boundary_gradient(self):
        g = self.u.gradient[self.grid.touches_boundary]
        return float(np.max(np.linalg.norm(g, axis=1)))

    def summary(self):
        res = self.residual()
        det = self.det
        return {
            "theta": self.theta,
            "t": self.t,
            "sweeps": self.sweeps,
            "newton_iterations": self.newton_iterations,
            "osc_u": self.u.osc,
            "min_u": float(self.u.all_values.min()),
            "max_u": float(self.u.all_values.max()),
            "min_w": float(self.w.values.min()),
            "max_w": float(self.w.values.max()),
            "boundary_w_min": float(self.w.boundary.min()),
            "boundary_w_max": float(self.w.boundary.max()),
            "min_det": float(det.min()),
            "max_det": float(det.max()),
            "near_boundary_grad": self.near_boundary_gradient(),
            **res.norms(),
        }


def _as_grid(domain, h):
    if isinstance(domain, Grid):
        return domain
    if isinstance(domain, ConvexDomain):
        if h is None:
            raise ParameterRangeError("grid spacing h required with a ConvexDomain")
        return build_grid(domain, h)
    raise TypeError(f"expected Grid or ConvexDomain, got {type(domain).__name__}")


def convex_bump(domain):
    """Strictly convex quadratic that is non-positive on the domain."""
    if domain.kind == "interval":
        a, b = domain.lo[0], domain.hi[0]
        return lambda p: (p[:, 0] - a) * (p[:, 0] - b)
    if domain.kind == "disk":
        c, R = domain.center, domain.radius
        return lambda p: np.sum((p - c) ** 2, axis=1) - R**2
    c = 0.5 * (domain.bbox[0] + domain.bbox[1])
    R = domain.circumradius
    return lambda p: np.sum((p - c) ** 2, axis=1) - R**2


def initial_guess(grid, phi, eps=0.1):
    """``phi`` plus a small convex bump vanishing on (or outside) the boundary."""
    q = convex_bump(grid.domain)
    vals = _boundary_values_at(grid.nodes, phi) + eps * q(grid.nodes)
    return GridFunction(grid, vals, _boundary_values(grid, phi))


def _boundary_values_at(pts, data):
    if callable(data):
        return np.asarray(data(pts), dtype=float).reshape(len(pts)) * np.ones(len(pts))
    return np.full(len(pts), float(data))


def _check_K(grid, K):
    k = as_field(grid, K)
    if np.any(k <= 0):
        raise ParameterRangeError(f"K must be bounded below by a positive constant (min K = {k.min():.3e})")


def solve_bvp(
    domain,
    K,
    phi,
    psi,
    theta=0.0,
    *,
    h=None,
    u0=None,
    tol=None,
    inner_tol=None,
    max_sweeps=200,
    stall_window=10,
    t=None,
):
    """Outer alternation for the perturbed problem; returns a converged :class:`SolverState`.

    ``psi`` is the boundary value of ``w`` (a positive constant ``t`` for the
    degenerate family).  ``domain`` is a Grid, or a ConvexDomain with ``h``.
    """
    grid = _as_grid(domain, h)
    require_resolution(grid)
    if not 0.0 <= theta < 1.0:
        raise ParameterRangeError(f"theta={theta} outside [0, 1)")
    _check_K(grid, K)
    inner_default, outer_default = DEFAULT_TOL[grid.n]
    tol = outer_default if tol is None else tol
    inner_tol = inner_default if inner_tol is None else inner_tol
    if t is None and not callable(psi) and not isinstance(psi, GridFunction):
        t = float(psi)

    u = initial_guess(grid, phi) if u0 is None else GridFunction(grid, u0.values, _boundary_values(grid, phi))
    history = []
    newton_total = 0
    for sweep in range(1, max_sweeps + 1):
        try:
            w = linearized_solve(u, K, psi)
            if np.any(w.values <= 0):
                raise NonPositiveError(f"w lost positivity (min {w.values.min():.3e})")
            rep = NewtonReport(0, [], 0)
            u = ma_solve(w.values ** (-(1.0 - theta)), phi, u, tol=inner_tol, report=rep)
        except SolverError as exc:
            exc.context.update(sweep=sweep, theta=theta, t=t)
            raise
        except (NonPositiveError, DegenerateHessianError) as exc:
            raise SolverError(str(exc), sweep=sweep, theta=theta, t=t) from exc
        newton_total += rep.iterations
        res = abreu_system_residual(u, w, K, theta)
        err = max(res.sup_linear, res.sup_constitutive)
        history.append(err)
        logger.debug("sweep %d theta=%g t=%s residual %.3e (%d newton)", sweep, theta, t, err, rep.iterations)
        if res.sup_linear <= tol and res.sup_constitutive <= tol:
            break
        if len(history) > stall_window:
            old = history[-stall_window - 1]
            if err > 0.99 * old:
                raise OuterIterationStalled(
                    "outer iteration stalled", sweep=sweep, residual=err, theta=theta, t=t
                )
    else:
        raise MaxIterationsError("max outer sweeps", sweeps=max_sweeps, residual=history[-1], theta=theta, t=t)
    return SolverState(
        u=u, w=w, theta=theta, K=K, phi=phi, psi=psi, t=t, sweeps=sweep, newton_iterations=newton_total, history=history
    )


# ---------------------------------------------------------------------------
# continuation


@dataclass(frozen=True)
class TraceEntry:
    param: float
    state: SolverState
    summary: dict
    checks: dict


@dataclass
class ContinuationTrace:
    kind: str
    entries: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def params(self):
        return [e.param for e in self.entries]

    @property
    def final(self):
        return self.entries[-1].state

    def column(self, key):
        return np.array([e.summary[key] for e in self.entries])

    def to_dict(self):
        return {
            "kind": self.kind,
            "flags": list(self.flags),
            "entries": [{"param": e.param, "summary": e.summary, "checks": e.checks} for e in self.entries],
        }


def _check_schedule(schedule, positive):
    s = [float(x) for x in schedule]
    if not s:
        raise ParameterRangeError("empty schedule")
    if any(b >= a for a, b in zip(s, s[1:])):
        raise ParameterRangeError(f"schedule must be strictly decreasing: {s}")
    if positive and s[-1] <= 0:
        raise ParameterRangeError("t schedule must stay positive")
    if not positive and (s[-1] < 0 or s[0] >= 1):
        raise ParameterRangeError("theta schedule must lie in [0, 1)")
    return s


def lemma31_upper(theta, C0, n, Kmax, diam):
    """Upper bound ``e^2 C0^{(n-1) theta} [5 max|K| diam^2]^n`` for ``w``."""
    return math.e**2 * C0 ** ((n - 1) * theta) * (5.0 * Kmax * diam**2) ** n


def theta_continuation(domain, K, phi, psi, theta_schedule=(1e-1, 1e-2, 1e-3, 0.0), *, h=None, **kw):
    """Warm-started solves along a decreasing ``theta`` schedule ending at 0."""
    grid = _as_grid(domain, h)
    sched = _check_schedule(theta_schedule, positive=False)
    psi_b = _boundary_values(grid, psi)
    C0 = max(psi_b.max(), 1.0 / psi_b.min()) * (1.0 + 1e-12)
    Kmax = float(np.max(np.abs(as_field(grid, K))))
    trace = ContinuationTrace("theta")
    u0 = None
    for th in sched:
        try:
            st = solve_bvp(grid, K, phi, psi, th, u0=u0, **kw)
        except SolverError as exc:
            exc.context.setdefault("theta", th)
            raise
        u0 = st.u
        upper = lemma31_upper(th, C0, grid.n, Kmax, grid.domain.diam)
        summ = st.summary()
        checks = {
            "w_lower": float(psi_b.min()),
            "w_lower_ok": bool(summ["min_w"] >= psi_b.min() - 1e-9),
            "w_upper": upper,
            "w_upper_ok": bool(summ["max_w"] <= upper),
            "C0": C0,
        }
        trace.entries.append(TraceEntry(th, st, summ, checks))
    return trace


def compact_mask(grid, fraction=0.5):
    """Nodes farther than ``fraction`` of the maximal boundary distance from the boundary."""
    d = grid.node_distance
    return d >= fraction * d.max()


def t_continuation(domain, K, phi, t_schedule=(1e-1, 1e-2, 1e-3, 1e-4), *, h=None, **kw):
    """Solve the degenerate family ``w = t`` on the boundary for decreasing ``t``."""
    grid = _as_grid(domain, h)
    sched = _check_schedule(t_schedule, positive=True)
    n = grid.n
    R = grid.domain.circumradius
    inner = compact_mask(grid)
    trace = ContinuationTrace("t")
    u0 = None
    prev = None
    diffs = []
    for t in sched:
        try:
            st = solve_bvp(grid, K, phi, t, 0.0, u0=u0, t=t, **kw)
        except SolverError as exc:
            exc.context.setdefault("t", t)
            raise
        u0 = st.u
        summ = st.summary()
        envelope = R * (1.0 / t) ** (1.0 / n)
        diff = None if prev is None else float(np.max(np.abs(st.u.values[inner] - prev.values[inner])))
        checks = {
            "gradient_envelope": envelope,
            "gradient_ok": bool(summ["near_boundary_grad"] <= envelope),
            "boundary_w_exact": bool(np.all(st.w.boundary == t)),
            "interior_change": diff,
        }
        if diff is not None:
            diffs.append(diff)
        trace.entries.append(TraceEntry(t, st, summ, checks))
        prev = st.u
    if any(b > a for a, b in zip(diffs, diffs[1:])):
        trace.flags.append("interior convergence not observed")
    return trace


def energy_balance(state):
    """Integration-by-parts diagnostics for a converged ``theta = 0`` state.

    Returns ``lhs = -int K (u - phi)``, ``volume_term = int w U^{ij}(u-phi)_ij``,
    ``bound = n |Omega|`` and, in 1-D, the boundary flux so that
    ``lhs = -flux + volume_term``.
    """
    grid = state.grid
    u, w = state.u, state.w
    phi_nodes = _boundary_values_at(grid.nodes, state.phi)
    phi_gf = GridFunction(grid, phi_nodes, _boundary_values(grid, state.phi))
    diff = u - phi_gf
    Kv = as_field(grid, state.K)
    weight = _quadrature_weights(grid)
    lhs = -float(np.sum(weight * Kv * diff.values))
    U = stencil.cofactor_field(u.hessian)
    vol = float(np.sum(weight * w.values * np.einsum("kij,kij->k", U, diff.hessian)))
    out = {"lhs": lhs, "volume_term": vol, "bound": grid.n * grid.domain.volume}
    if grid.n == 1:
        flux = 0.0
        for b in range(grid.n_boundary):
            xb = grid.bpoints[b, 0]
            gamma = grid.bnormals[b, 0]
            flux += w.boundary[b] * _one_sided_slope(grid, diff, b) * gamma
        out["flux"] = flux
    return out


def _quadrature_weights(grid):
    """Node weights of the composite trapezoid/box rule on the cut-cell grid."""
    if grid.n == 1:
        hm = grid.frac[0, 0] * grid.h
        hp = grid.frac[0, 1] * grid.h
        return 0.5 * (hm + hp)
    return np.full(grid.size, grid.h**2) * (grid.domain.volume / (grid.size * grid.h**2))


def _one_sided_slope(grid, v, b):
    """Second-order one-sided derivative at 1-D boundary point ``b``."""
    xb = grid.bpoints[b, 0]
    order = np.argsort(np.abs(grid.nodes[:, 0] - xb))[:2]
    x = np.concatenate([[xb], grid.nodes[order, 0]])
    y = np.concatenate([[v.boundary[b]], v.values[order]])
    coef = np.polyfit(x - xb, y, 2)
    return coef[1]
