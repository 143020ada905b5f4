import math

import numpy as np
import pytest

from abreu.convex import GridFunction
from abreu.domain import ConvexDomain, build_grid
from abreu.errors import (
    LineSearchFailed,
    MaxIterationsError,
    NonPositiveError,
    ParameterRangeError,
    SolverError,
)
from abreu.solver import (
    NewtonReport,
    compact_mask,
    energy_balance,
    initial_guess,
    lemma31_upper,
    linearized_solve,
    ma_solve,
    solve_bvp,
    t_continuation,
    theta_continuation,
)
from conftest import LOG2, half_square_norm
from oracles import minimax_offset_error, u_exact, u_theta, w_exact


def _strictly_convex(grid):
    return GridFunction.from_function(grid, lambda p: np.cosh(p[:, 0]) + 0.3 * p[:, 0] ** 4)


# ---------------------------------------------------------------------------
# linearized_solve


@pytest.mark.parametrize("t", [0.5, 0.01])
def test_linearized_solve_one_dimensional_exact(grid_1d, t):
    w = linearized_solve(_strictly_convex(grid_1d), 2.0, t)
    assert np.abs(w.values - w_exact(grid_1d.nodes[:, 0], t)).max() < 1e-10


def test_linearized_solve_constant_data(disk_grid_coarse):
    u = GridFunction.from_function(disk_grid_coarse, lambda p: np.sum(p**2, axis=1) + p[:, 0] ** 4)
    w = linearized_solve(u, 0.0, 1.0)
    assert np.allclose(w.values, 1.0)


def test_linearized_solve_disk_laplacian(unit_disk):
    g = build_grid(unit_disk, 1 / 32)
    u = GridFunction.from_function(g, half_square_norm)
    w = linearized_solve(u, 4.0, 0.5)
    assert np.abs(w.values - (1.5 - np.sum(g.nodes**2, axis=1))).max() < 1e-10


def test_linearized_solve_maximum_principle(unit_disk):
    g = build_grid(unit_disk, 1 / 16)
    u = GridFunction.from_function(g, lambda p: np.exp(p[:, 0]) + p[:, 1] ** 2)
    w = linearized_solve(u, lambda p: 1.0 + p[:, 0] ** 2, 0.2)
    assert w.values.min() >= 0.2


def test_linearized_solve_rejects_nonpositive_data(grid_1d):
    with pytest.raises(NonPositiveError):
        linearized_solve(_strictly_convex(grid_1d), 2.0, 0.0)


# ---------------------------------------------------------------------------
# ma_solve


def test_ma_solve_square_paraboloid(unit_square):
    g = build_grid(unit_square, 1 / 16)
    u = ma_solve(1.0, half_square_norm, initial_guess(g, half_square_norm))
    assert np.abs(u.values - half_square_norm(g.nodes)).max() < 1e-8


def test_ma_solve_one_dimensional_rhs(grid_1d):
    t = 0.5
    x = grid_1d.nodes[:, 0]
    phi = float(u_exact(1.0, t))
    rep = NewtonReport(0, [], 0)
    u = ma_solve(1.0 / w_exact(x, t), phi, initial_guess(grid_1d, phi), report=rep)
    assert np.abs(u.hessian[:, 0, 0] - 1.0 / w_exact(x, t)).max() < 1e-8
    assert np.abs(u.values - u_exact(x, t)).max() < 1e-4
    assert rep.iterations >= 1 and rep.residuals[-1] <= 1e-8


def test_ma_solve_constant_rhs(grid_1d):
    u = ma_solve(4.0, 2.0, initial_guess(grid_1d, 2.0))
    assert np.abs(u.values - 2 * grid_1d.nodes[:, 0] ** 2).max() < 1e-8


def test_ma_solve_errors(grid_1d):
    u0 = initial_guess(grid_1d, 2.0)
    with pytest.raises(NonPositiveError):
        ma_solve(-1.0, 2.0, u0)
    with pytest.raises(MaxIterationsError):
        ma_solve(4.0, 2.0, u0, max_iter=1, tol=1e-300)
    with pytest.raises(LineSearchFailed):
        ma_solve(4.0, 2.0, u0, max_halvings=0, tol=0.0)


# ---------------------------------------------------------------------------
# solve_bvp


@pytest.fixture(scope="module")
def state_t05(interval):
    return solve_bvp(interval, 2.0, LOG2, 0.5, h=1 / 100)


def test_solve_bvp_one_dimensional(state_t05):
    x = state_t05.grid.nodes[:, 0]
    assert np.abs(state_t05.w.values - w_exact(x, 0.5)).max() < 1e-10
    assert state_t05.w.values[state_t05.grid.node_at((0.0,))] == pytest.approx(1.5)
    assert np.abs(state_t05.u.hessian[:, 0, 0] * state_t05.w.values - 1).max() < 1e-6
    res = state_t05.residual()
    assert res.sup_linear <= 1e-6 and res.sup_constitutive <= 1e-6


def test_solve_bvp_theta_half(interval, state_t05):
    g = state_t05.grid
    st = solve_bvp(g, 2.0, LOG2, 0.5, theta=0.5)
    x = g.nodes[:, 0]
    assert np.abs(st.w.values - state_t05.w.values).max() < 1e-8
    assert np.abs(st.u.hessian[:, 0, 0] - st.w.values ** -0.5).max() < 1e-6
    i0 = g.node_at((0.0,))
    assert st.u.values[i0] == pytest.approx(u_theta([0.0], 0.5, 0.5)[0], abs=1e-4)
    assert st.u.values[i0] != pytest.approx(state_t05.u.values[i0], abs=1e-3)


def test_solve_bvp_disk_residuals_decrease(unit_disk):
    g = build_grid(unit_disk, 1 / 16)
    st = solve_bvp(g, 4.0, half_square_norm, 1.0, u0=GridFunction.from_function(g, half_square_norm))
    h = np.array(st.history)
    assert np.all(np.diff(h) < 0)
    assert h[-1] <= 1e-4


def test_solve_bvp_summary_keys(state_t05):
    s = state_t05.summary()
    for key in ("osc_u", "min_w", "max_w", "boundary_w_min", "min_det", "near_boundary_grad", "sup_linear"):
        assert key in s
    assert s["boundary_w_min"] == s["boundary_w_max"] == 0.5


def test_warm_start_converges_quickly(unit_disk):
    g = build_grid(unit_disk, 1 / 16)
    st = solve_bvp(g, 1.0, half_square_norm, 0.05)
    again = solve_bvp(g, 1.0, half_square_norm, 0.05, u0=st.u)
    assert again.sweeps <= 2


@pytest.mark.parametrize("K", [0.0, -1.0])
def test_solve_bvp_rejects_nonpositive_K(interval, K):
    with pytest.raises(ParameterRangeError):
        solve_bvp(interval, K, LOG2, 0.1, h=0.05)


def test_solve_bvp_rejects_theta(interval):
    with pytest.raises(ParameterRangeError):
        solve_bvp(interval, 2.0, LOG2, 0.1, theta=1.0, h=0.05)


def test_solve_bvp_requires_h(interval):
    with pytest.raises(ParameterRangeError):
        solve_bvp(interval, 2.0, LOG2, 0.1)


def test_solve_bvp_max_sweeps_context(unit_disk):
    g = build_grid(unit_disk, 1 / 8)
    with pytest.raises(SolverError) as info:
        solve_bvp(g, 1.0, half_square_norm, 0.05, max_sweeps=1, tol=1e-14)
    assert info.value.context["sweeps"] == 1
    assert "theta" in str(info.value)


# ---------------------------------------------------------------------------
# continuation


def test_theta_continuation_one_dimensional(grid_1d):
    tr = theta_continuation(grid_1d, 2.0, LOG2, 0.1, (0.5, 0.1, 0.0))
    assert tr.params == [0.5, 0.1, 0.0]
    w = [e.state.w.values for e in tr.entries]
    assert max(np.abs(a - w[0]).max() for a in w) < 1e-8
    assert all(e.checks["w_upper_ok"] and e.checks["w_lower_ok"] for e in tr.entries)
    assert tr.final.theta == 0.0


def test_theta_continuation_singleton_matches_direct(grid_1d):
    tr = theta_continuation(grid_1d, 2.0, LOG2, 0.1, (0.0,))
    direct = solve_bvp(grid_1d, 2.0, LOG2, 0.1)
    assert len(tr.entries) == 1
    assert np.abs(tr.final.u.values - direct.u.values).max() < 1e-10


def test_theta_continuation_disk_bounds(unit_disk):
    tr = theta_continuation(unit_disk, 1.0, half_square_norm, 0.2, (0.5, 0.1, 0.0), h=1 / 16)
    for e in tr.entries:
        assert e.checks["w_lower_ok"] and e.checks["w_upper_ok"]
        assert e.summary["max_w"] <= e.checks["w_upper"]


@pytest.mark.parametrize("sched", [(0.1, 0.2), (), (1.0, 0.0), (0.5, -0.1)])
def test_theta_schedule_validation(grid_1d, sched):
    with pytest.raises(ParameterRangeError):
        theta_continuation(grid_1d, 2.0, LOG2, 0.1, sched)


def test_lemma31_upper_formula():
    assert lemma31_upper(0.0, 3.0, 2, 1.0, 2.0) == pytest.approx(math.e**2 * 400)
    assert lemma31_upper(0.5, 4.0, 2, 1.0, 1.0) == pytest.approx(math.e**2 * 2 * 25)


@pytest.fixture(scope="module")
def t_trace_1d(interval):
    return t_continuation(interval, 2.0, LOG2, (1e-1, 1e-2, 1e-3, 1e-4), h=1 / 100)


def test_t_continuation_one_dimensional(t_trace_1d):
    tr = t_trace_1d
    assert all(e.checks["boundary_w_exact"] and e.checks["gradient_ok"] for e in tr.entries)
    grads = tr.column("near_boundary_grad")
    assert np.all(np.diff(grads) > 0)
    assert tr.flags == []
    g = tr.final.grid
    i = g.node_at((0.9,))
    assert tr.final.u.hessian[i, 0, 0] == pytest.approx(1 / (0.19 + 1e-4), rel=1e-3)
    x = g.nodes[:, 0]
    inner = np.abs(x) <= 0.9
    assert minimax_offset_error(tr.final.u.values[inner], u_exact(x[inner], 1e-4)) < 1e-4


def test_t_continuation_singleton(interval):
    tr = t_continuation(interval, 2.0, LOG2, (1.0,), h=1 / 50)
    assert len(tr.entries) == 1
    assert tr.entries[0].checks["interior_change"] is None
    assert tr.entries[0].checks["gradient_envelope"] == 1.0


def test_t_schedule_must_stay_positive(interval):
    with pytest.raises(ParameterRangeError):
        t_continuation(interval, 2.0, LOG2, (0.1, 0.0), h=0.05)


def test_trace_serialises(t_trace_1d):
    d = t_trace_1d.to_dict()
    assert d["kind"] == "t" and len(d["entries"]) == 4
    assert d["entries"][0]["param"] == 0.1


def test_compact_mask(unit_disk):
    g = build_grid(unit_disk, 1 / 16)
    m = compact_mask(g)
    assert g.node_distance[m].min() >= 0.5 * g.node_distance.max()


# ---------------------------------------------------------------------------
# energy identity


@pytest.mark.parametrize("t", [0.5, 0.01])
def test_energy_balance_one_dimensional(grid_1d_fine, t):
    st = solve_bvp(grid_1d_fine, 2.0, LOG2, t)
    e = energy_balance(st)
    assert e["lhs"] == pytest.approx(e["volume_term"] - e["flux"], abs=5e-3)
    assert e["lhs"] <= -e["flux"] + e["bound"] + 5e-3


def test_energy_balance_disk(unit_disk):
    st = solve_bvp(unit_disk, 1.0, half_square_norm, 0.1, h=1 / 32)
    e = energy_balance(st)
    assert e["volume_term"] <= e["bound"]
    assert "flux" not in e
