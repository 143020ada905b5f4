"""Command-line front end: ``abreu solve | continuate | verify | legendre | metric | selftest``.

Every run writes a deterministic artifact tree under ``--out``::

    fields/*.csv      grid functions (17 significant digits) with JSON sidecars
    residuals.json    residual norms per solve
    trace.json        continuation summaries
    estimates.json    verification reports
    manifest.json     the echoed configuration and package version

Exit status: 0 on success, 2 for configuration errors, 3 for solver failures
and 4 when a requested verification fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import shutil
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .convex import GridFunction, legendre_transform, normalize_at, read_csv, write_csv
from .domain import ConvexDomain, build_grid, load_domain
from .errors import AbreuError, SolverError
from .estimates import (
    FAIL,
    EstimateReport,
    boundary_det_lower,
    check_det_lower,
    check_det_upper_section,
    cone_gradient_bound,
    lemma31_report,
    uniform_osc_bound,
    weighted_det_2d,
    weighted_det_functional,
)
from .expr import ExpressionError, parse_field
from .operator import abreu_dual, kahler_metric
from .solver import SolverState, solve_bvp, t_continuation, theta_continuation

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    domain: dict
    K: str
    phi: str
    h: float
    out: str
    t: float | None = None
    psi: str | None = None
    theta: float = 0.0
    t_schedule: list | None = None
    theta_schedule: list | None = None
    tol: float | None = None
    inner_tol: float | None = None
    seed: int = 0

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad manifest config: {exc}") from None

    def validate(self):
        if not (isinstance(self.h, (int, float)) and self.h > 0):
            raise ConfigError("h must be positive")
        for name in ("t_schedule", "theta_schedule"):
            s = getattr(self, name)
            if s is not None and any(b >= a for a, b in zip(s, s[1:])):
                raise ConfigError(f"{name} must be strictly decreasing")
        if self.t_schedule is not None and min(self.t_schedule) <= 0:
            raise ConfigError("t schedule must be positive")
        if self.theta_schedule is not None and (min(self.theta_schedule) < 0 or max(self.theta_schedule) >= 1):
            raise ConfigError("theta schedule must lie in [0, 1)")
        if self.t is not None and self.t <= 0:
            raise ConfigError("t must be positive")
        if not 0 <= self.theta < 1:
            raise ConfigError("theta must lie in [0, 1)")


# ---------------------------------------------------------------------------
# helpers


def _dump(path, obj):
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _schedule(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad schedule {text!r}") from None


def _problem(cfg):
    try:
        domain = ConvexDomain.from_dict(cfg.domain)
        K = parse_field(cfg.K)
        phi = parse_field(cfg.phi)
        psi = parse_field(cfg.psi) if cfg.psi is not None else None
        grid = build_grid(domain, cfg.h)
    except (ExpressionError, AbreuError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return grid, K, phi, psi


def _prepare_out(out):
    out = Path(out)
    if out.exists():
        for sub in ("fields",):
            if (out / sub).exists():
                shutil.rmtree(out / sub)
    (out / "fields").mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg, out):
    _dump(out / "manifest.json", {"config": cfg.to_dict(), "version": __version__, "tool": "abreu"})


def _solver_kw(cfg):
    kw = {}
    if cfg.tol is not None:
        kw["tol"] = cfg.tol
    if cfg.inner_tol is not None:
        kw["inner_tol"] = cfg.inner_tol
    return kw


def _residual_record(state):
    r = state.residual().norms()
    r["history"] = state.history
    r["sweeps"] = state.sweeps
    return r


# ---------------------------------------------------------------------------
# commands


def run_solve(cfg):
    grid, K, phi, psi = _problem(cfg)
    bc = psi if psi is not None else cfg.t
    if bc is None:
        raise ConfigError("solve needs --t or --psi")
    state = solve_bvp(grid, K, phi, bc, cfg.theta, t=cfg.t, **_solver_kw(cfg))
    out = _prepare_out(cfg.out)
    write_csv(state.u, out / "fields" / "u.csv")
    write_csv(state.w, out / "fields" / "w.csv")
    _dump(out / "residuals.json", [_residual_record(state)])
    _dump(out / "trace.json", {"kind": "single", "flags": [], "entries": [{"param": cfg.t if cfg.t is not None else cfg.theta, "summary": state.summary(), "checks": {}}]})
    _manifest(cfg, out)
    return EXIT_OK


def run_continuate(cfg):
    grid, K, phi, psi = _problem(cfg)
    kw = _solver_kw(cfg)
    if cfg.t_schedule is not None:
        trace = t_continuation(grid, K, phi, cfg.t_schedule, **kw)
    elif cfg.theta_schedule is not None:
        bc = psi if psi is not None else cfg.t
        if bc is None:
            raise ConfigError("theta continuation needs --psi or --t")
        trace = theta_continuation(grid, K, phi, bc, cfg.theta_schedule, **kw)
    else:
        raise ConfigError("continuate needs --t-schedule or --theta-schedule")
    out = _prepare_out(cfg.out)
    for k, e in enumerate(trace.entries):
        write_csv(e.state.u, out / "fields" / f"entry_{k:02d}_u.csv")
        write_csv(e.state.w, out / "fields" / f"entry_{k:02d}_w.csv")
    _dump(out / "residuals.json", [_residual_record(e.state) for e in trace.entries])
    _dump(out / "trace.json", trace.to_dict())
    _manifest(cfg, out)
    return EXIT_OK


def load_run(run):
    """Rebuild the solver states of a run directory as ``(config, [SolverState])``."""
    run = Path(run)
    try:
        manifest = json.loads((run / "manifest.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read manifest in {run}: {exc}") from None
    cfg = RunConfig.from_dict(manifest["config"])
    grid, K, phi, psi = _problem(cfg)
    fields = run / "fields"
    if (fields / "u.csv").exists():
        pairs = [("u.csv", "w.csv", cfg.t, cfg.theta)]
    else:
        n = len(sorted(fields.glob("entry_*_u.csv")))
        if cfg.t_schedule is not None:
            pairs = [(f"entry_{k:02d}_u.csv", f"entry_{k:02d}_w.csv", cfg.t_schedule[k], 0.0) for k in range(n)]
        else:
            pairs = [(f"entry_{k:02d}_u.csv", f"entry_{k:02d}_w.csv", cfg.t, cfg.theta_schedule[k]) for k in range(n)]
    states = []
    for fu, fw, t, theta in pairs:
        u = read_csv(fields / fu, grid)
        w = read_csv(fields / fw, grid)
        states.append(SolverState(u=u, w=w, theta=theta, K=K, phi=phi, psi=psi if psi is not None else t, t=t))
    if not states:
        raise ConfigError(f"no fields in {fields}")
    return cfg, states


class _Trace:
    def __init__(self, states):
        self.entries = [type("E", (), {"state": s})() for s in states]
        self.params = [s.t for s in states]


def _section_inputs(u):
    p = int(np.argmin(u.values))
    un = normalize_at(u, p)
    C = 0.5 * float(un.boundary.min())
    closed = un.values <= C
    b = float(np.sum(un.gradient[closed] ** 2, axis=1).max()) * (1 + 1e-9)
    return p, un, C, b


def _lemma(lid, states):
    s = states[-1]
    u = s.u
    n = u.grid.n
    if lid == "2.1":
        return check_det_lower(u, s.K)
    if lid == "2.2":
        p, un, C, b = _section_inputs(u)
        return check_det_upper_section(un, p, C, b)
    if lid == "2.3":
        p, un, C, _ = _section_inputs(u)
        val = weighted_det_functional(un, p, C)
        return EstimateReport("lemma 2.3", {"C": C, "d": 1.0}, val, val, "pass" if math.isfinite(val) else FAIL, 0.0)
    if lid == "2.3.a":
        if n != 2:
            return EstimateReport("lemma 2.3.a", {}, None, None, "not applicable", notes="two-dimensional only")
        r = 0.5 * float(u.grid.domain.distance_to_boundary(np.zeros((1, 2)))[0])
        val = weighted_det_2d(u, r)
        return EstimateReport("lemma 2.3.a", {"r": r, "d": 1.0}, val, val, "pass" if math.isfinite(val) else FAIL, 0.0)
    if lid == "2.7":
        return boundary_det_lower(u, alpha=0.9 / (2 * (n + 1)))
    if lid == "3.1":
        return lemma31_report(s)
    if lid == "3.5":
        if s.t is None:
            return EstimateReport("eq 3.5", {}, None, None, "not applicable", notes="needs a t-problem run")
        return cone_gradient_bound(u, s.t)
    if lid == "d4":
        return uniform_osc_bound(_Trace(states))
    raise ConfigError(f"unknown lemma id {lid!r}")


LEMMAS = ("2.1", "2.2", "2.3", "2.3.a", "2.7", "3.1", "3.5", "d4")


def run_verify(run, lemmas, out=None):
    cfg, states = load_run(run)
    reports = [_lemma(lid.strip(), states) for lid in lemmas]
    out = Path(run if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    _dump(out / "estimates.json", [r.to_dict() for r in reports])
    print(f"{'check':<24} {'verdict':<15} {'constant':>14} {'observed':>14}")
    for r in reports:
        c = "-" if r.constant is None else f"{r.constant:.6g}"
        o = "-" if r.observed is None else f"{r.observed:.6g}"
        print(f"{r.name:<24} {r.verdict:<15} {c:>14} {o:>14}")
    return EXIT_VERIFY if any(r.verdict == FAIL for r in reports) else EXIT_OK


def _source_function(args):
    if args.run:
        _, states = load_run(args.run)
        return states[-1].u
    if not (args.domain and args.phi and args.h):
        raise ConfigError("give --run or all of --domain, --phi, --h")
    grid = build_grid(_load_domain(args.domain), args.h)
    phi = parse_field(args.phi)
    if not callable(phi):
        raise ConfigError("phi must be an expression")
    return GridFunction.from_function(grid, phi)


def _window(args, n):
    if args.window is None:
        return None
    return (np.full(n, -args.window), np.full(n, args.window))


def run_legendre(args):
    u = _source_function(args)
    pair = legendre_transform(u, args.dual_h, window=_window(args, u.grid.n), refine=args.refine)
    out = _prepare_out(args.out)
    write_csv(pair.f, out / "fields" / "f.csv")
    _dump(
        out / "legendre.json",
        {
            "dual_h": args.dual_h,
            "dual_nodes": pair.dual_grid.size,
            "window": [pair.dual_grid.domain.bbox[0], pair.dual_grid.domain.bbox[1]],
            "refined": bool(args.refine),
            "smooth_nodes": int(pair.smooth_mask().sum()),
        },
    )
    return EXIT_OK


def run_metric(args):
    u = _source_function(args)
    pair = legendre_transform(u, args.dual_h, window=_window(args, u.grid.n), refine=True)
    mask = pair.smooth_mask()
    curv = abreu_dual(pair, valid=mask)
    g = pair.f.hessian
    eig = np.linalg.eigvalsh(g)[:, 0]
    ok = np.isfinite(curv.values)
    report = {
        "dual_h": args.dual_h,
        "min_metric_eigenvalue": float(eig[mask].min()) if mask.any() else None,
        "curvature_nodes": int(ok.sum()),
        "curvature_min": float(curv.values[ok].min()) if ok.any() else None,
        "curvature_max": float(curv.values[ok].max()) if ok.any() else None,
        "completeness_indicator": "growth of f/|x| toward the window edge (an indicator only)",
    }
    try:
        km = kahler_metric(pair.f)
        report.update(growth=km.growth, growth_radii=km.radii, growth_monotone=km.growth_monotone)
    except AbreuError as exc:
        report["growth_error"] = str(exc)
    out = _prepare_out(args.out)
    write_csv(curv, out / "fields" / "curvature.csv")
    _dump(out / "metric.json", report)
    return EXIT_OK


def run_selftest(seed=0):
    from .estimates import power_hessian_y, principal_minor_det, principal_minor_matrix, d1_constant

    rng = np.random.default_rng(seed)
    rows = []
    rows.append(("d1 closed form", d1_constant(1, 1, 2) == 0.25 and d1_constant(2, 1, 1) == 0.125))
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(1, 7))
        alpha = rng.uniform(0, 1 / (2 * k))
        y = rng.uniform(1e-3, 2.0, size=k)
        direct = np.linalg.det(principal_minor_matrix(y, alpha))
        closed = principal_minor_det(y, alpha)
        worst = max(worst, abs(direct - closed) / abs(closed))
    rows.append(("principal-minor identity", worst <= 1e-12))
    pd = True
    for _ in range(1000):
        d = int(rng.integers(1, 7))
        alpha = rng.uniform(0, 1 / (2 * d))
        pd &= bool(np.linalg.eigvalsh(power_hessian_y(rng.uniform(1e-3, 2.0, size=d), alpha))[0] > 0)
    rows.append(("power barrier convexity", pd))
    grid = build_grid(ConvexDomain.interval(-1, 1), 1 / 100)
    st = solve_bvp(grid, 2.0, lambda p: np.full(len(p), math.log(2)), 0.1)
    rows.append(("1-D closed form", float(np.abs(st.w.values - (1.1 - grid.nodes[:, 0] ** 2)).max()) <= 1e-6))
    for name, ok in rows:
        print(f"{name:<28} {'pass' if ok else 'fail'}")
    return EXIT_OK if all(ok for _, ok in rows) else EXIT_VERIFY


# ---------------------------------------------------------------------------
# argument parsing


def _load_domain(path):
    try:
        return load_domain(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad domain file {path}: {exc}") from None


def _add_problem(p):
    p.add_argument("--domain", help="domain JSON file")
    p.add_argument("--K", help="curvature: const:<value> or expr:<expression>")
    p.add_argument("--phi", help="boundary data: const:<value> or expr:<expression>")
    p.add_argument("--h", type=float, help="grid spacing")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tol", type=float, default=None, help="outer residual tolerance")
    p.add_argument("--inner-tol", type=float, default=None, help="Newton residual tolerance")
    p.add_argument("--from-manifest", default=None, help="reuse the configuration of a previous run")


def build_parser():
    ap = argparse.ArgumentParser(prog="abreu", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="one boundary value problem")
    _add_problem(p)
    p.add_argument("--t", type=float, default=None, help="boundary value of w")
    p.add_argument("--psi", default=None, help="boundary field for w instead of --t")
    p.add_argument("--theta", type=float, default=0.0)

    p = sub.add_parser("continuate", help="warm-started schedule in t or theta")
    _add_problem(p)
    p.add_argument("--t-schedule", type=_schedule, default=None)
    p.add_argument("--theta-schedule", type=_schedule, default=None)
    p.add_argument("--t", type=float, default=None, help="boundary value of w for a theta schedule")
    p.add_argument("--psi", default=None)

    p = sub.add_parser("verify", help="check estimates on a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--lemmas", default="2.1,3.1,3.5", help=f"comma list from {', '.join(LEMMAS)}")
    p.add_argument("--out", default=None, help="where to write estimates.json (default: the run)")

    for name, helptext in (("legendre", "discrete Legendre transform"), ("metric", "dual metric and curvature")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--run", default=None)
        p.add_argument("--domain", default=None)
        p.add_argument("--phi", default=None)
        p.add_argument("--h", type=float, default=None)
        p.add_argument("--dual-h", type=float, required=True)
        p.add_argument("--window", type=float, default=None, help="half-width of a centred dual window")
        p.add_argument("--out", required=True)
        if name == "legendre":
            p.add_argument("--refine", action="store_true")

    p = sub.add_parser("selftest", help="quick internal consistency battery")
    p.add_argument("--seed", type=int, default=0)
    return ap


def config_from_args(args):
    if args.from_manifest:
        try:
            data = json.loads(Path(args.from_manifest).read_text())["config"]
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigError(f"cannot read manifest: {exc}") from None
        cfg = RunConfig.from_dict(data)
        cfg.out = args.out
        cfg.command = args.command
        return cfg
    missing = [k for k in ("domain", "K", "phi", "h") if getattr(args, k) is None]
    if missing:
        raise ConfigError("missing " + ", ".join("--" + m for m in missing))
    domain = _load_domain(args.domain)
    cfg = RunConfig(
        command=args.command,
        domain=domain.to_dict(),
        K=args.K,
        phi=args.phi,
        h=args.h,
        out=args.out,
        t=args.t,
        psi=args.psi,
        theta=getattr(args, "theta", 0.0),
        t_schedule=getattr(args, "t_schedule", None),
        theta_schedule=getattr(args, "theta_schedule", None),
        tol=args.tol,
        inner_tol=args.inner_tol,
    )
    cfg.validate()
    return cfg


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command in ("solve", "continuate"):
            cfg = config_from_args(args)
            return run_solve(cfg) if args.command == "solve" else run_continuate(cfg)
        if args.command == "verify":
            return run_verify(args.run, [s for s in args.lemmas.split(",") if s.strip()], args.out)
        if args.command == "legendre":
            return run_legendre(args)
        if args.command == "metric":
            return run_metric(args)
        return run_selftest(args.seed)
    except ConfigError as exc:
        print(f"abreu: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"abreu: solver failure (continuation_solver): {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AbreuError as exc:
        print(f"abreu: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
