"""Constants, inequalities and barrier functions from the a priori estimates.

Every check returns an :class:`EstimateReport`.  Lemmas whose constants are
existential (the section bounds, the boundary determinant bound) are verified
as finite fitted constants, optionally compared across a grid refinement.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import stencil
from .convex import GridFunction, check_normalized, legendre_on_graph, section
from .domain import ConvexDomain, build_grid
from .errors import DomainContainmentError, ParameterRangeError, SectionNotCompactError
from .operator import as_field

PASS, FAIL, NOT_APPLICABLE = "pass", "fail", "not applicable"


@dataclass(frozen=True)
class EstimateReport:
    """Outcome of one inequality check.

    ``verdict`` is ``"pass"`` exactly when ``observed`` satisfies the
    inequality against ``constant``; ``margin`` is signed so that a
    non-negative margin means the inequality holds.
    """

    name: str
    inputs: dict
    constant: float | None
    observed: float | None
    verdict: str
    margin: float | None = None
    notes: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.verdict == PASS

    def to_dict(self):
        d = asdict(self)
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _verdict(ok):
    return PASS if ok else FAIL


# ---------------------------------------------------------------------------
# determinant bounds


def d1_constant(K_max, diam, n):
    """Lower bound ``d1 = (4 K_max diam^2 / n)^{-n}`` for ``det D^2 u``."""
    if K_max <= 0 or diam <= 0 or n < 1:
        raise ParameterRangeError("d1 needs K_max > 0, diam > 0 and n >= 1")
    return (4.0 * K_max * diam**2 / n) ** (-n)


def check_det_lower(u, K, domain=None, slack=0.9):
    """``min det D^2 u >= slack * d1`` over interior nodes."""
    grid = u.grid
    domain = grid.domain if domain is None else domain
    k = as_field(grid, K)
    inputs = {"K_max": float(k.max()), "K_min": float(k.min()), "diam": domain.diam, "n": grid.n, "slack": slack}
    det = np.linalg.det(u.hessian)
    observed = float(det.min())
    if k.min() <= 0:
        return EstimateReport("lemma 2.1", inputs, None, observed, NOT_APPLICABLE, notes="K is not bounded below by a positive constant")
    d1 = d1_constant(float(k.max()), domain.diam, grid.n)
    margin = observed - slack * d1
    return EstimateReport("lemma 2.1", inputs, d1, observed, _verdict(margin >= 0), margin)


def check_det_upper_section(u, p, C, b, refined=None, tol=0.10):
    """Observed ``max det`` on the half section ``S_u(p, C/2)``.

    The constant is existential; the check passes when the maximum is finite
    and, if ``refined`` (the same function on a finer grid, normalised at the
    same point) is given, agrees with it to within ``tol`` relative.
    """
    inputs = {"p": np.asarray(p, dtype=float), "C": C, "b": b}
    sec = section(u, p, C)
    if not sec.compact:
        raise SectionNotCompactError(f"closed section of height {C} meets the boundary")
    closed = u.values <= C
    x2 = np.sum(u.gradient[closed] ** 2, axis=1)
    if x2.max() > b:
        return EstimateReport(
            "lemma 2.2", inputs, None, None, NOT_APPLICABLE, notes=f"sum x_k^2 reaches {x2.max():.4g} > b"
        )
    half = u.values < 0.5 * C
    observed = float(np.linalg.det(u.hessian[half]).max())
    ok = math.isfinite(observed)
    extra = {}
    if refined is not None:
        r = check_det_upper_section(refined, p, C, b)
        extra["refined_observed"] = r.observed
        extra["relative_change"] = abs(r.observed - observed) / observed
        ok = ok and extra["relative_change"] <= tol
    return EstimateReport("lemma 2.2", inputs, observed, observed, _verdict(ok), 0.0, extra=extra)


def weighted_det_functional(u, p, C, d=1.0):
    """``sup exp(-4C/(C-u)) det D^2 u / (d+f)^{2n}`` over the section ``S_u(p, C)``.

    ``f`` is the Legendre transform relative to ``p`` evaluated on the graph.
    """
    sec = section(u, p, C)
    if not sec.compact:
        raise SectionNotCompactError(f"closed section of height {C} meets the boundary")
    grid = u.grid
    m = sec.mask
    f = legendre_on_graph(u, base=grid.nodes[sec.center])[m]
    if np.any(d + f <= 0):
        raise ParameterRangeError("d + f must be positive on the section")
    weight = np.exp(-4.0 * C / (C - u.values[m]))
    det = np.linalg.det(u.hessian[m])
    return float(np.max(weight * det / (d + f) ** (2 * grid.n)))


def weighted_det_2d(u, r, d=1.0):
    """``sup (r^2 - |xi|^2)^2 det D^2 u / (d+f)^4`` over the disk ``|xi| < r``."""
    grid = u.grid
    if grid.n != 2:
        raise ParameterRangeError("weighted_det_2d is two-dimensional")
    dom = grid.domain
    ring = r * np.stack([np.cos(np.linspace(0, 2 * np.pi, 721)), np.sin(np.linspace(0, 2 * np.pi, 721))], axis=1)
    if not np.all(dom.contains(ring)):
        raise DomainContainmentError(f"disk of radius {r} about the origin is not inside the domain")
    rho2 = np.sum(grid.nodes**2, axis=1)
    m = rho2 < r**2
    f = legendre_on_graph(u)[m]
    if np.any(d + f <= 0):
        raise ParameterRangeError("d + f must be positive on the disk")
    det = np.linalg.det(u.hessian[m])
    return float(np.max((r**2 - rho2[m]) ** 2 * det / (d + f) ** 4))


def cone_gradient_bound(u, t, R=None):
    """``max |grad u|`` at boundary-adjacent nodes against ``R (1/t)^{1/n}``."""
    grid = u.grid
    R = grid.domain.circumradius if R is None else R
    bound = R * (1.0 / t) ** (1.0 / grid.n)
    g = np.linalg.norm(u.gradient[grid.touches_boundary], axis=1)
    observed = float(g.max())
    return EstimateReport(
        "eq 3.5", {"t": t, "R": R, "n": grid.n}, bound, observed, _verdict(observed <= bound), bound - observed
    )


def boundary_det_lower(u, domain=None, alpha=0.25, form="dist"):
    """Fit the smallest ``b1`` with ``det D^2 u >= 1 / (b1 rho^alpha)``.

    ``rho`` is the distance to the boundary (``form="dist"``) or the product
    of the facet values of a polytope (``form="facets"``, the polytope
    statement).  The report passes when the fitted ``b1`` is finite.
    """
    grid = u.grid
    domain = grid.domain if domain is None else domain
    if form == "dist":
        rho = domain.distance_to_boundary(grid.nodes)
    elif form == "facets":
        if not domain.is_polytope:
            raise ParameterRangeError("facet form needs a polytope domain")
        rho = np.prod(domain.facet_values(grid.nodes), axis=1)
    else:
        raise ParameterRangeError(f"unknown form {form!r}")
    det = np.linalg.det(u.hessian)
    b1 = float(np.max(1.0 / (det * rho**alpha)))
    where = int(np.argmax(1.0 / (det * rho**alpha)))
    ok = math.isfinite(b1) and b1 > 0
    name = "lemma 2.7" if form == "dist" else "lemma 2.6"
    return EstimateReport(
        name,
        {"alpha": alpha, "form": form},
        b1,
        b1,
        _verdict(ok),
        0.0,
        extra={"argmax_node": grid.nodes[where], "argmax_rho": float(rho[where])},
    )


def uniform_osc_bound(trace, window=3, rel=0.05):
    """``d4``-proxy: the largest oscillation along a t-trace, stable over the last entries."""
    osc = np.array([e.state.u.osc for e in trace.entries])
    last = osc[-window:]
    spread = float((last.max() - last.min()) / last.max())
    return EstimateReport(
        "d4 uniform bound",
        {"window": window, "rel": rel, "params": list(trace.params)},
        float(osc.max()),
        float(osc[-1]),
        _verdict(spread <= rel),
        rel - spread,
        extra={"osc": osc},
    )


def lemma31_report(state, C0=None):
    """Lemma 3.1's two-sided bound on ``w`` for one solver state."""
    from .solver import lemma31_upper

    grid = state.grid
    psi = state.w.boundary
    C0 = max(psi.max(), 1.0 / psi.min()) * (1 + 1e-12) if C0 is None else C0
    Kmax = float(np.max(np.abs(as_field(grid, state.K))))
    upper = lemma31_upper(state.theta, C0, grid.n, Kmax, grid.domain.diam)
    lo_ok = state.w.values.min() >= psi.min() - 1e-9
    hi = float(state.w.values.max())
    return EstimateReport(
        "lemma 3.1",
        {"theta": state.theta, "C0": C0, "K_max": Kmax, "diam": grid.domain.diam},
        upper,
        hi,
        _verdict(lo_ok and hi <= upper),
        upper - hi,
        extra={"w_min": float(state.w.values.min()), "boundary_min": float(psi.min())},
    )


# ---------------------------------------------------------------------------
# maximum principle


def maximum_principle_compare(lower, upper, atol=1e-10):
    """Comparison on a common grid.

    Hypotheses: ``det D^2 lower >= det D^2 upper`` at every node and
    ``lower <= upper`` on the boundary trace.  Conclusion checked:
    ``lower <= upper`` at every node.  A failed hypothesis gives "not
    applicable" rather than a verdict.
    """
    grid = lower.grid
    if upper.grid is not grid:
        raise ParameterRangeError("functions must share a grid")
    da = np.linalg.det(lower.hessian)
    db = np.linalg.det(upper.hessian)
    hyp_det = bool(np.all(da >= db - atol))
    hyp_bnd = bool(np.all(lower.boundary <= upper.boundary + atol))
    gap = upper.values - lower.values
    observed = float(gap.min())
    inputs = {"nodes": grid.size}
    extra = {"det_hypothesis": hyp_det, "boundary_hypothesis": hyp_bnd}
    if not (hyp_det and hyp_bnd):
        return EstimateReport("maximum principle", inputs, 0.0, observed, NOT_APPLICABLE, observed, extra=extra)
    return EstimateReport("maximum principle", inputs, 0.0, observed, _verdict(observed >= -atol), observed, extra=extra)


def log_edge_comparison(u, r=0.3, alpha=None, side="left"):
    """Compare a 1-D solution with the log-edge barrier near one endpoint.

    In the local coordinate ``s`` (distance to the chosen endpoint) the
    barrier is ``-s (-log s)^alpha + s (-log r)^alpha`` on ``(0, r)``.  The
    solution is shifted by the affine function that matches the barrier at
    ``s = eps`` and ``s = r``; ``eps`` is the smallest grid multiple for which
    the determinant hypothesis holds on the whole overlap ``[eps, r]``.  The
    comparison itself is :func:`maximum_principle_compare`.
    """
    grid = u.grid
    if grid.n != 1:
        raise ParameterRangeError("log_edge_comparison is one-dimensional")
    if not 0 < r < math.exp(-1):
        raise ParameterRangeError("need 0 < r < 1/e")
    alpha = 0.25 if alpha is None else alpha
    a, b = grid.domain.lo[0], grid.domain.hi[0]
    h = grid.h
    x = grid.nodes[:, 0]
    s_nodes = x - a if side == "left" else b - x
    k_r = int(round(r / h))
    if abs(k_r * h - r) > 1e-9 * max(1.0, r):
        raise ParameterRangeError(f"r={r} is not a multiple of the grid spacing {h}")
    by_cell = {int(round(s / h)): i for i, s in enumerate(s_nodes)}

    def barrier(s):
        return log_edge_value(np.asarray(s, dtype=float).reshape(-1, 1), 1.0, r, alpha)

    for k_eps in range(1, k_r - 4):
        cells = np.arange(k_eps + 1, k_r)
        sub_s = cells * h
        ends = np.array([k_eps * h, k_r * h])
        uv = u.values[[by_cell[c] for c in cells]]
        ub = u.values[[by_cell[k_eps], by_cell[k_r]]]
        # affine match at both ends
        slope = ((barrier(ends[1:])[0] - ub[1]) - (barrier(ends[:1])[0] - ub[0])) / (ends[1] - ends[0])
        icpt = barrier(ends[:1])[0] - ub[0] - slope * ends[0]
        v_nodes = uv + slope * sub_s + icpt
        v_ends = ub + slope * ends + icpt
        # second differences on the uniform overlap
        full_v = np.concatenate([[v_ends[0]], v_nodes, [v_ends[1]]])
        full_b = barrier(np.concatenate([[ends[0]], sub_s, [ends[1]]]))
        dv = np.diff(full_v, 2) / h**2
        db = np.diff(full_b, 2) / h**2
        if np.all(dv >= db):
            break
    else:
        return EstimateReport("maximum principle (log-edge)", {"r": r, "alpha": alpha}, None, None, NOT_APPLICABLE, notes="no overlap region satisfies the determinant hypothesis")
    sub = build_grid(ConvexDomain.interval(k_eps * h, k_r * h), h)
    order = np.argsort(sub.nodes[:, 0])
    vals_v = np.empty(sub.size)
    vals_b = np.empty(sub.size)
    vals_v[order] = v_nodes
    vals_b[order] = barrier(sub_s)
    bpts = sub.bpoints[:, 0]
    bv = np.where(bpts < 0.5 * (ends[0] + ends[1]), v_ends[0], v_ends[1])
    lower = GridFunction(sub, vals_v, bv)
    upper = GridFunction(sub, vals_b, barrier(bpts))
    rep = maximum_principle_compare(lower, upper)
    return EstimateReport(
        "maximum principle (log-edge)",
        {"r": r, "alpha": alpha, "side": side},
        rep.constant,
        rep.observed,
        rep.verdict,
        rep.margin,
        extra={**rep.extra, "eps": k_eps * h, "nodes": sub.size},
    )


# ---------------------------------------------------------------------------
# barriers


@dataclass(frozen=True)
class BarrierSpec:
    kind: str
    alpha: float
    c: float | None = None
    r: float | None = None
    polytope: ConvexDomain | None = None

    def __post_init__(self):
        if self.kind not in ("polytope-power", "log-edge", "cone-comparison"):
            raise ParameterRangeError(f"unknown barrier kind {self.kind!r}")
        if self.alpha <= 0:
            raise ParameterRangeError("alpha must be positive")
        if self.kind == "polytope-power":
            P = self.polytope
            if P is None or not P.is_polytope:
                raise ParameterRangeError("polytope-power barrier needs a polytope")
            bound = min(1.0 / (2 * P.n_facets), 2.0 * P.vertex_ratio / P.dim)
            if self.alpha >= bound:
                raise ParameterRangeError(f"alpha={self.alpha} must be below min(1/(2d), 2L/n) = {bound:.6g}")
        if self.kind == "log-edge":
            if self.r is None or not 0 < self.r < math.exp(-1):
                raise ParameterRangeError("log-edge barrier needs 0 < r < 1/e")
            if self.c is None or self.c <= 0:
                raise ParameterRangeError("log-edge barrier needs c > 0")


@dataclass(frozen=True)
class BarrierResult:
    spec: BarrierSpec
    u: GridFunction
    diagnostics: dict
    reports: list


def power_hessian_y(y, alpha):
    """Hessian of ``g = -(y_1 ... y_d)^alpha`` in the ``y`` variables, shape ``(..., d, d)``."""
    y = np.asarray(y, dtype=float)
    g = -np.prod(y**alpha, axis=-1)
    inv = 1.0 / y
    G = alpha**2 * g[..., None, None] * inv[..., :, None] * inv[..., None, :]
    d = y.shape[-1]
    idx = np.arange(d)
    G[..., idx, idx] = -alpha * (1 - alpha) * g[..., None] * inv**2
    return G


def principal_minor_matrix(y, alpha):
    """``[(delta_AB / 2 - alpha) / (y_A y_B)]``."""
    y = np.asarray(y, dtype=float)
    k = y.shape[-1]
    return (0.5 * np.eye(k) - alpha) / (y[..., :, None] * y[..., None, :])


def principal_minor_det(y, alpha):
    """Closed form ``(1 / (y_1..y_k)^2) 2^{-k} (1 - 2 k alpha)``."""
    y = np.asarray(y, dtype=float)
    k = y.shape[-1]
    return (1.0 - 2 * k * alpha) / (2.0**k * np.prod(y, axis=-1) ** 2)


def quadratic_form_gap(y, h, alpha):
    """``sum g_AB h_A h_B - (-alpha g / 2) sum h_A^2 / y_A^2`` (non-negative by the lemma)."""
    y = np.asarray(y, dtype=float)
    G = power_hessian_y(y, alpha)
    g = -np.prod(y**alpha, axis=-1)
    lhs = np.einsum("...a,...ab,...b->...", h, G, h)
    rhs = -0.5 * alpha * g * np.sum((h / y) ** 2, axis=-1)
    return lhs - rhs


def polytope_barrier(domain, alpha, h=1 / 64):
    """``u = -(l_1 ... l_d)^alpha`` on a Delzant polytope with Hessian diagnostics.

    The analytic Hessian is ``A^T G A`` with ``A`` the facet normals and ``G``
    from :func:`power_hessian_y`.  Diagnostics: positive definiteness (analytic
    and discrete) and the fitted constant ``c`` in
    ``det >= c / (l_1 ... l_d)^{2L - n alpha}``.
    """
    spec = BarrierSpec("polytope-power", alpha, polytope=domain)
    grid = build_grid(domain, h)
    normals = np.asarray(domain.normals, dtype=float)

    def fn(p):
        y = np.clip(domain.facet_values(p), 0.0, None)
        return -np.prod(y**alpha, axis=1)

    u = GridFunction.from_function(grid, fn)
    y = domain.facet_values(grid.nodes)
    H = np.einsum("ai,kab,bj->kij", normals, power_hessian_y(y, alpha), normals)
    eig = np.linalg.eigvalsh(H)[:, 0]
    det = np.linalg.det(H)
    L = domain.vertex_ratio
    expo = 2 * L - grid.n * alpha
    c = float(np.min(det * np.prod(y, axis=1) ** expo))
    disc_eig = u.min_eigenvalue
    reports = [
        EstimateReport("lemma 2.4", {"alpha": alpha}, 0.0, float(eig.min()), _verdict(eig.min() > 0), float(eig.min())),
        EstimateReport(
            "lemma 2.5",
            {"alpha": alpha, "L": L, "exponent": expo},
            c,
            c,
            _verdict(c > 0),
            c,
        ),
    ]
    diag = {
        "min_eig_analytic": float(eig.min()),
        "min_eig_discrete": float(disc_eig.min()),
        "c_fit": c,
        "exponent": expo,
        "L": L,
    }
    return BarrierResult(spec, u, diag, reports)


def log_edge_value(xi, c, r, alpha):
    """``-(xi_1 - c|xi'|^2)(-log xi_1)^alpha + xi_1 (-log r)^alpha``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    x1 = xi[:, 0]
    q = c * np.sum(xi[:, 1:] ** 2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = -np.log(x1)
        val = -(x1 - q) * A**alpha + x1 * (-math.log(r)) ** alpha
    return np.where(x1 == 0, 0.0, val)


def log_edge_hessian(xi, c, alpha):
    """Analytic Hessian of the log-edge barrier at points ``xi`` (``xi_1 > 0``)."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n = xi.shape[1]
    x1 = xi[:, 0]
    rest = xi[:, 1:]
    q = c * np.sum(rest**2, axis=1)
    A = -np.log(x1)
    H = np.zeros((len(xi), n, n))
    H[:, 0, 0] = (
        alpha / (A ** (1 - alpha) * x1)
        + alpha * q / (A ** (1 - alpha) * x1**2)
        + alpha * (1 - alpha) / (A ** (2 - alpha) * x1)
        - alpha * (1 - alpha) * q / (A ** (2 - alpha) * x1**2)
    )
    off = -2 * c * alpha * rest / (A ** (1 - alpha) * x1)[:, None]
    H[:, 0, 1:] = off
    H[:, 1:, 0] = off
    for k in range(1, n):
        H[:, k, k] = 2 * c * A**alpha
    return H


def log_edge_det_bound(xi, c, alpha):
    """Upper bound ``alpha (2c)^{n-1} / ((-log xi_1)^{1 - n alpha} xi_1)``."""
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    n = xi.shape[1]
    x1 = xi[:, 0]
    return alpha * (2 * c) ** (n - 1) / ((-np.log(x1)) ** (1 - n * alpha) * x1)


def log_edge_barrier(c, r, alpha=None, n=2, h=1 / 200):
    """Log-edge barrier on ``Delta(c, r) = {c|xi'|^2 < xi_1 < r}`` with diagnostics.

    Nodes are those of the bounding rectangle lying strictly inside
    ``Delta(c, r)``; values elsewhere are NaN.  The determinant bound is
    checked nodewise with the discrete Hessian at nodes whose stencil stays
    in ``Delta(c, r)``, both literally and with a factor of two.
    """
    alpha = 1.0 / (2 * (n + 1)) if alpha is None else alpha
    spec = BarrierSpec("log-edge", alpha, c=c, r=r)
    if n == 1:
        dom = ConvexDomain.interval(0.0, r)
    else:
        half = math.sqrt(r / c)
        dom = ConvexDomain.rectangle([0.0] + [-half] * (n - 1), [r] + [half] * (n - 1))
    grid = build_grid(dom, h)
    pts = grid.nodes
    inside = (pts[:, 0] > c * np.sum(pts[:, 1:] ** 2, axis=1)) & (pts[:, 0] < r)
    vals = np.full(grid.size, np.nan)
    vals[inside] = log_edge_value(pts[inside], c, r, alpha)
    bvals = log_edge_value(grid.bpoints, c, r, alpha)
    u = GridFunction(grid, vals, bvals)

    # nodes whose whole stencil lies in Delta(c, r)
    nb = grid.nbr.reshape(-1, grid.size)
    ok = inside & np.all(nb >= 0, axis=0)
    ok[ok] = np.all(inside[nb[:, ok]], axis=0)
    H = stencil.hessian_field(grid, np.nan_to_num(vals), np.nan_to_num(bvals))[ok]
    det = np.linalg.det(H)
    bound = log_edge_det_bound(pts[ok], c, alpha)
    ratio = det / bound
    Ha = log_edge_hessian(pts[inside], c, alpha)
    eig = np.linalg.eigvalsh(Ha)[:, 0]
    sub_e = pts[inside, 0] < math.exp(-1)
    value0 = float(log_edge_value(np.zeros((1, n)), c, r, alpha)[0])
    reports = [
        EstimateReport("log-edge u(0)", {"c": c, "r": r}, 0.0, value0, _verdict(value0 == 0.0), -abs(value0)),
        EstimateReport(
            "log-edge convexity",
            {"alpha": alpha},
            0.0,
            float(eig[sub_e].min()),
            _verdict(eig[sub_e].min() > 0),
            float(eig[sub_e].min()),
        ),
        EstimateReport(
            "eq 3.12",
            {"alpha": alpha, "c": c, "h": h},
            1.0,
            float(ratio.max()),
            _verdict(ratio.max() <= 1.0),
            float(1.0 - ratio.max()),
            notes="nodewise det / bound",
        ),
        EstimateReport(
            "eq 3.12 (factor 2)",
            {"alpha": alpha, "c": c, "h": h},
            2.0,
            float(ratio.max()),
            _verdict(ratio.max() <= 2.0),
            float(2.0 - ratio.max()),
            notes="nodewise det / bound against twice the bound",
        ),
    ]
    diag = {
        "nodes": int(ok.sum()),
        "max_ratio": float(ratio.max()),
        "min_ratio": float(ratio.min()),
        "fraction_violating": float(np.mean(ratio > 1.0)),
        "min_eig_analytic": float(eig[sub_e].min()),
    }
    return BarrierResult(spec, u, diag, reports)
