"""Randomised properties checked with hypothesis."""

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from abreu.convex import GridFunction, conjugate_at, legendre_transform, normalize_at
from abreu.domain import ConvexDomain, build_grid
from abreu.estimates import power_hessian_y, principal_minor_det, principal_minor_matrix
from abreu.solver import linearized_solve
from abreu.stencil import cofactor_field

SQUARE = build_grid(ConvexDomain.rectangle([-1, -1], [1, 1]), 1 / 16)
DISK = build_grid(ConvexDomain.disk((0, 0), 1), 1 / 16)

settings.register_profile("abreu", deadline=None, max_examples=30, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("abreu")


@st.composite
def spd2(draw):
    a = draw(st.floats(0.3, 3.0))
    c = draw(st.floats(0.3, 3.0))
    b = draw(st.floats(-0.9, 0.9)) * np.sqrt(a * c)
    return np.array([[a, b], [b, c]])


def _quadratic(grid, A, g=(0.0, 0.0)):
    g = np.asarray(g)
    return GridFunction.from_function(grid, lambda p: 0.5 * np.einsum("ij,jk,ik->i", p, A, p) + p @ g)


@given(A=spd2(), x=st.tuples(st.floats(-2, 2), st.floats(-2, 2)))
def test_fenchel_young(A, x):
    u = _quadratic(SQUARE, A)
    x = np.array([x])
    f, arg = conjugate_at(u, x)
    xi = u.all_points
    # f(x) + u(xi) >= <x, xi> everywhere, with equality at the maximiser
    assert np.all(f[0] + u.all_values >= xi @ x[0] - 1e-12)
    assert f[0] + u.all_values[arg[0]] == pytest.approx(xi[arg[0]] @ x[0], abs=1e-12)


@given(A=spd2())
def test_conjugate_below_continuous_conjugate(A):
    # the discrete max runs over fewer points, so it never exceeds the exact conjugate
    u = _quadratic(SQUARE, A)
    pair = legendre_transform(u, 0.25)
    x = pair.dual_grid.nodes
    exact = 0.5 * np.einsum("ij,jk,ik->i", x, np.linalg.inv(A), x)
    assert np.all(pair.f.values <= exact + 1e-12)


@given(A=spd2(), g=st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_normalized_function_is_nonnegative(A, g):
    u = _quadratic(DISK, A, g)
    un = normalize_at(u, int(DISK.size // 2))
    assert un.all_values.min() >= -1e-12


@given(H=spd2())
def test_cofactor_inverts(H):
    U = cofactor_field(H[None])[0]
    assert np.allclose(U @ H, np.linalg.det(H) * np.eye(2), atol=1e-12)


@given(
    k=st.integers(1, 6),
    frac=st.floats(0.0, 0.999),
    data=st.data(),
)
def test_principal_minor_identity(k, frac, data):
    alpha = frac / (2 * k)
    y = np.array(data.draw(st.lists(st.floats(1e-2, 2.0), min_size=k, max_size=k)))
    direct = np.linalg.det(principal_minor_matrix(y, alpha))
    closed = principal_minor_det(y, alpha)
    assert abs(direct - closed) <= 1e-12 * max(1.0, abs(closed))


@given(
    d=st.integers(1, 6),
    frac=st.floats(1e-3, 0.999),
    data=st.data(),
)
def test_power_barrier_hessian_positive(d, frac, data):
    alpha = frac / (2 * d)
    y = np.array(data.draw(st.lists(st.floats(1e-2, 2.0), min_size=d, max_size=d)))
    assert np.linalg.eigvalsh(power_hessian_y(y, alpha))[0] > 0


@given(
    A=spd2(),
    K=st.floats(0.1, 5.0),
    t=st.floats(1e-3, 1.0),
)
def test_linearized_solve_maximum_principle(A, K, t):
    u = _quadratic(DISK, A)
    w = linearized_solve(u, K, t)
    assert w.values.min() >= t - 1e-12
