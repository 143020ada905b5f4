import math

import numpy as np
import pytest

from abreu.convex import (
    GridFunction,
    cofactor,
    discrete_hessian,
    gradient_legendre_ratio,
    legendre_on_graph,
    legendre_transform,
    ma_fields,
    normalize_at,
    read_csv,
    section,
    write_csv,
)
from abreu.domain import ConvexDomain, build_grid
from abreu.errors import DegenerateHessianError, NotNormalizedError, StencilIncompleteError
from conftest import half_square_norm, profile_function
from oracles import u_limit


@pytest.fixture(scope="module")
def square_grid():
    return build_grid(ConvexDomain.rectangle([-1, -1], [1, 1]), 1 / 16)


def test_discrete_hessian_quadratics(square_grid):
    u = GridFunction.from_function(square_grid, half_square_norm)
    v = GridFunction.from_function(square_grid, lambda p: p[:, 0] * p[:, 1])
    for node in (0, (0.0, 0.0), (0.5, -0.25)):
        assert np.allclose(discrete_hessian(u, node), np.eye(2), atol=1e-10)
        assert np.allclose(discrete_hessian(v, node), [[0, 1], [1, 0]], atol=1e-10)


def test_discrete_hessian_closed_form_profile(interval):
    g = build_grid(interval, 0.01)
    u = profile_function(g)
    assert discrete_hessian(u, (0.0,))[0, 0] == pytest.approx(1.0, abs=1e-4)


def test_discrete_hessian_needs_boundary(disk_grid_coarse):
    u = GridFunction(disk_grid_coarse, np.zeros(disk_grid_coarse.size))
    i = int(np.flatnonzero(disk_grid_coarse.touches_boundary)[0])
    with pytest.raises(StencilIncompleteError):
        discrete_hessian(u, i)


@pytest.mark.parametrize(
    "H, U",
    [
        ([[2, 0], [0, 3]], [[3, 0], [0, 2]]),
        ([[1, 0], [0, 1]], [[1, 0], [0, 1]]),
        ([[2, 1], [1, 2]], [[2, -1], [-1, 2]]),
        ([[5.0]], [[1.0]]),
    ],
)
def test_cofactor_examples(H, U):
    C = cofactor(np.array(H, float))
    assert np.allclose(C, U)
    assert np.allclose(C @ np.array(H), np.linalg.det(np.array(H, float)) * np.eye(len(H)))


def test_cofactor_3d():
    rng = np.random.default_rng(0)
    M = rng.normal(size=(3, 3))
    H = M @ M.T + np.eye(3)
    assert np.allclose(cofactor(H) @ H, np.linalg.det(H) * np.eye(3))


def test_ma_fields_paraboloid(square_grid):
    det, w = ma_fields(GridFunction.from_function(square_grid, half_square_norm))
    assert np.allclose(det, 1.0) and np.allclose(w, 1.0)


@pytest.mark.parametrize("xi0, w_expected", [(0.0, 1.0), (0.5, 0.75)])
def test_ma_fields_profile(interval, xi0, w_expected):
    g = build_grid(interval, 1 / 200)
    u = profile_function(g)
    det, w = ma_fields(u)
    i = g.node_at((xi0,))
    assert w[i] == pytest.approx(w_expected, abs=1e-4)


def test_ma_fields_degenerate(square_grid):
    with pytest.raises(DegenerateHessianError):
        ma_fields(GridFunction.from_function(square_grid, lambda p: p[:, 0] ** 2))


def test_legendre_of_paraboloid(square_grid):
    u = GridFunction.from_function(square_grid, half_square_norm)
    pair = legendre_transform(u, 1 / 16)
    x = pair.dual_grid.nodes
    inside = np.all(np.abs(x) <= 1 - 1 / 16, axis=1)
    err = np.abs(pair.f.values - 0.5 * np.sum(x**2, axis=1))[inside]
    assert err.max() <= 1 / 16


def test_legendre_of_linear_is_support_function(unit_square):
    g = build_grid(unit_square, 1 / 16)
    a = np.array([0.3, -0.2])
    u = GridFunction.from_function(g, lambda p: p @ a)
    pair = legendre_transform(u, 0.1, window=([-1, -1], [2, 2]))
    f_a, f_a1 = pair.evaluate(np.array([a, a + [1, 0]]))
    assert f_a == pytest.approx(0.0, abs=1e-12)
    assert f_a1 == pytest.approx(1.0, abs=1e-12)


def test_legendre_profile_value(grid_1d_fine):
    g = grid_1d_fine
    u = profile_function(g)
    x = 0.5 * math.log(3)
    pair = legendre_transform(u, 0.05)
    exact = 0.5 * x - u_limit(0.5)
    assert pair.evaluate([[x]])[0] == pytest.approx(exact, abs=1e-4)
    assert exact == pytest.approx(0.14384, abs=1e-5)
    assert pair.evaluate([[0.0]])[0] == pytest.approx(-u.all_values.min(), abs=1e-12)


def test_legendre_tie_break_lexicographic(unit_square):
    g = build_grid(unit_square, 0.25)
    u = GridFunction(g, np.zeros(g.size), np.zeros(g.n_boundary))
    pair = legendre_transform(u, 0.25, window=([-0.5, -0.5], [0.5, 0.5]))
    src = pair.source_points()
    k = np.flatnonzero(np.all(np.isclose(pair.dual_grid.all_points, 0.0), axis=1))
    # every primal point attains the max at x = 0; the smallest one wins
    assert len(k) == 1 and np.allclose(src[k[0]], [0.0, 0.0])


def test_legendre_on_graph_matches_brute_force(unit_disk):
    g = build_grid(unit_disk, 1 / 32)
    u = GridFunction.from_function(g, lambda p: 0.5 * np.sum(p**2, axis=1) + 0.1 * np.sum(p**2, axis=1) ** 2)
    pair = legendre_transform(u, 0.05)
    m = g.standoff(3)
    on_graph = legendre_on_graph(u)[m]
    brute = pair.evaluate(u.gradient[m])
    assert np.abs(on_graph - brute).max() < 5e-3


def test_sample_interpolates_linear_fields(unit_square):
    g = build_grid(unit_square, 1 / 16)
    u = GridFunction.from_function(g, half_square_norm)
    pair = legendre_transform(u, 0.1)
    vals = pair.dual_grid.nodes @ np.array([1.0, 2.0])
    pts = np.array([[0.33, 0.41], [0.5, 0.55]])
    assert np.allclose(pair.sample(vals, pts), pts @ [1.0, 2.0])
    assert np.isnan(pair.sample(vals, [[50.0, 50.0]])).all()


def test_normalize_examples(unit_disk):
    g = build_grid(unit_disk, 1 / 8)
    u = GridFunction.from_function(g, half_square_norm)
    u0 = normalize_at(u, (0.0, 0.0))
    assert np.allclose(u0.all_values, u.all_values)
    up = normalize_at(u, (0.5, 0.0))
    expected = half_square_norm(g.all_points) - 0.5 * (g.all_points[:, 0] - 0.5) - 0.125
    assert np.allclose(up.all_values, expected, atol=1e-12)
    lin = GridFunction.from_function(g, lambda p: 2 * p[:, 0] - p[:, 1] + 3)
    assert np.allclose(normalize_at(lin, 3).all_values, 0.0, atol=1e-12)


def test_section_paraboloid():
    g = build_grid(ConvexDomain.rectangle([-1, -1], [1, 1]), 1 / 16)
    u = GridFunction.from_function(g, half_square_norm)
    s = section(u, (0.0, 0.0), 0.125)
    r = np.linalg.norm(g.nodes[s.mask], axis=1)
    assert s.compact and r.max() < 0.5
    assert s.size == np.sum(np.linalg.norm(g.nodes, axis=1) < 0.5)
    s_big = section(u, (0.0, 0.0), 10.0)
    assert s_big.size == g.size and not s_big.compact


def test_section_profile_symmetric(grid_1d):
    g = grid_1d
    u = profile_function(g)
    s = section(u, (0.0,), 0.1)
    xs = g.nodes[s.mask, 0]
    assert xs.min() == pytest.approx(-xs.max())
    end = xs.max()
    slope = abs(np.log((1 + end) / (1 - end))) / 2
    assert abs(u_limit(end) - 0.1) <= g.h * slope


def test_section_requires_normalization(grid_1d):
    u = GridFunction.from_function(grid_1d, lambda p: p[:, 0] ** 2 + 1)
    with pytest.raises(NotNormalizedError):
        section(u, (0.0,), 0.5)


def test_gradient_legendre_ratio_disk(unit_disk):
    g = build_grid(unit_disk, 1 / 64)
    u = GridFunction.from_function(g, half_square_norm)
    ratio = gradient_legendre_ratio(u, 1.0)
    assert ratio == pytest.approx(4 / 9, abs=0.02)
    assert ratio <= 4 / 9 + 1e-12
    ratios = [gradient_legendre_ratio(u, d) for d in (1, 10, 100, 1000)]
    assert all(a > b for a, b in zip(ratios, ratios[1:]))


def test_csv_round_trip(tmp_path, unit_disk):
    g = build_grid(unit_disk, 1 / 8)
    u = GridFunction.from_function(g, lambda p: np.exp(p[:, 0]) + p[:, 1] ** 2)
    write_csv(u, tmp_path / "u.csv")
    v = read_csv(tmp_path / "u.csv")
    assert v.grid.size == g.size
    assert np.array_equal(v.all_values, u.all_values)


def test_grid_function_arithmetic(disk_grid_coarse):
    u = GridFunction.from_function(disk_grid_coarse, half_square_norm)
    v = 2.0 * u - u + 1.0
    assert np.allclose(v.all_values, u.all_values + 1.0)
    assert u.is_convex()
    assert u.osc == pytest.approx(0.5)
