"""Sparse finite-difference operators on a cut-cell :class:`~abreu.domain.Grid`.

Every operator acts on a pair ``(v, vb)``: values at the interior nodes and
values at the grid's boundary points.  Second derivatives along each stencil
direction use the three-point non-uniform formula, so arms that end on the
boundary use the exact cut point.  In 2-D the mixed derivative is the half
difference of the two diagonal second derivatives, which reduces to the usual
four-point cross stencil away from the boundary.
"""

import numpy as np
import scipy.sparse as sp

from .errors import StencilIncompleteError


def _arm_lengths(grid, k):
    hm = grid.frac[k, 0] * grid.steps[k]
    hp = grid.frac[k, 1] * grid.steps[k]
    return hm, hp


def _assemble(grid, k, cm, ci, cp):
    N, M = grid.size, grid.n_boundary
    rows = np.arange(N)
    A_r, A_c, A_v = [rows], [rows], [ci]
    B_r, B_c, B_v = [], [], []
    for side, coef in ((0, cm), (1, cp)):
        nb = grid.nbr[k, side]
        inn = nb >= 0
        A_r.append(rows[inn])
        A_c.append(nb[inn])
        A_v.append(coef[inn])
        B_r.append(rows[~inn])
        B_c.append(grid.bnd[k, side][~inn])
        B_v.append(coef[~inn])
    A = sp.csr_matrix((np.concatenate(A_v), (np.concatenate(A_r), np.concatenate(A_c))), shape=(N, N))
    B = sp.csr_matrix((np.concatenate(B_v), (np.concatenate(B_r), np.concatenate(B_c))), shape=(N, M))
    return A, B


def second_difference_ops(grid):
    """Per direction, ``(A, B)`` with ``D_k v = A v + B vb``."""
    if "d2" not in grid._cache:
        ops = []
        for k in range(grid.n_dirs):
            hm, hp = _arm_lengths(grid, k)
            cp = 2.0 / (hp * (hm + hp))
            cm = 2.0 / (hm * (hm + hp))
            ops.append(_assemble(grid, k, cm, -(cp + cm), cp))
        grid._cache["d2"] = ops
    return grid._cache["d2"]


def _moment_weights(x):
    """Weights ``c`` with ``sum c_m x_m^p = 2 delta_{p2}`` for each row of offsets ``x``."""
    m = x.shape[1]
    V = np.stack([x**p for p in range(m)], axis=1)
    rhs = np.zeros((len(x), m))
    rhs[:, 2] = 2.0
    return np.linalg.solve(V, rhs[..., None])[..., 0]


def accurate_second_difference_ops(grid):
    """Cubic-exact second differences along each direction.

    Where exactly one arm is cut by the boundary, the opposite arm is extended
    by one more point (the next node, or the next cut point), giving a
    four-point formula with O(h^2) truncation instead of the O(h) of the
    three-point non-uniform formula.  Used for evaluating derived quantities
    of a given field; the solver keeps the monotone three-point stencil.
    """
    if "d2acc" in grid._cache:
        return grid._cache["d2acc"]
    base = second_difference_ops(grid)
    N, M = grid.size, grid.n_boundary
    ops = []
    for k in range(grid.n_dirs):
        A0, B0 = base[k]
        step = grid.steps[k]
        cut = grid.nbr[k] < 0
        one = cut[0] ^ cut[1]
        rows = np.flatnonzero(one)
        if rows.size == 0:
            ops.append((A0, B0))
            continue
        A = A0.tolil()
        B = B0.tolil()
        for i in rows:
            A.rows[i] = []
            A.data[i] = []
            B.rows[i] = []
            B.data[i] = []
        A = A.tocsr()
        B = B.tocsr()
        # offsets and targets for each row: cut side point, centre, near, far
        x = np.zeros((rows.size, 4))
        tgt = np.zeros((rows.size, 4), dtype=int)
        isb = np.zeros((rows.size, 4), dtype=bool)
        for r, i in enumerate(rows):
            cs = 0 if cut[0, i] else 1
            os_ = 1 - cs
            sc = -1.0 if cs == 0 else 1.0
            x[r, 0] = sc * grid.frac[k, cs, i] * step
            tgt[r, 0] = grid.bnd[k, cs, i]
            isb[r, 0] = True
            tgt[r, 1] = i
            j = grid.nbr[k, os_, i]
            x[r, 2] = -sc * step
            tgt[r, 2] = j
            jj = grid.nbr[k, os_, j]
            if jj >= 0:
                x[r, 3] = -2.0 * sc * step
                tgt[r, 3] = jj
            else:
                x[r, 3] = -sc * (step + grid.frac[k, os_, j] * step)
                tgt[r, 3] = grid.bnd[k, os_, j]
                isb[r, 3] = True
        c = _moment_weights(x)
        rr = np.repeat(rows, 4)
        cc, tt, bb = c.ravel(), tgt.ravel(), isb.ravel()
        A = A + sp.csr_matrix((cc[~bb], (rr[~bb], tt[~bb])), shape=(N, N))
        B = B + sp.csr_matrix((cc[bb], (rr[bb], tt[bb])), shape=(N, M))
        ops.append((A.tocsr(), B.tocsr()))
    grid._cache["d2acc"] = ops
    return ops


def gradient_ops(grid):
    """Per axis, ``(G, Gb)`` for the second-order non-uniform centred first difference."""
    if "d1" not in grid._cache:
        ops = []
        for k in range(grid.n):
            hm, hp = _arm_lengths(grid, k)
            cp = hm / (hp * (hm + hp))
            cm = -hp / (hm * (hm + hp))
            ops.append(_assemble(grid, k, cm, (hp - hm) / (hm * hp), cp))
        grid._cache["d1"] = ops
    return grid._cache["d1"]


def hessian_ops(grid, accurate=False):
    """``ops[i][j] = (A, B)`` for the Hessian entry ``(i, j)``."""
    key = "hess_acc" if accurate else "hess"
    if key not in grid._cache:
        d2 = accurate_second_difference_ops(grid) if accurate else second_difference_ops(grid)
        if grid.n == 1:
            ops = [[d2[0]]]
        else:
            mixed = (0.5 * (d2[2][0] - d2[3][0]), 0.5 * (d2[2][1] - d2[3][1]))
            ops = [[d2[0], mixed], [mixed, d2[1]]]
        grid._cache[key] = ops
    return grid._cache[key]


def _boundary_or_fail(grid, vb):
    if vb is None:
        if grid.touches_boundary.any():
            raise StencilIncompleteError("boundary trace required for nodes next to the boundary")
        return np.zeros(grid.n_boundary)
    return vb


def hessian_field(grid, v, vb, accurate=False):
    """Discrete Hessian at every interior node, shape ``(N, n, n)``."""
    vb = _boundary_or_fail(grid, vb)
    ops = hessian_ops(grid, accurate)
    n = grid.n
    H = np.empty((grid.size, n, n))
    for i in range(n):
        for j in range(i, n):
            A, B = ops[i][j]
            H[:, i, j] = A @ v + B @ vb
            H[:, j, i] = H[:, i, j]
    return H


def gradient_field(grid, v, vb):
    vb = _boundary_or_fail(grid, vb)
    return np.stack([G @ v + Gb @ vb for G, Gb in gradient_ops(grid)], axis=1)


def cofactor_field(H):
    """Cofactor (adjugate) matrices of a stack of symmetric 1x1 or 2x2 matrices."""
    n = H.shape[-1]
    if n == 1:
        return np.ones_like(H)
    U = np.empty_like(H)
    U[..., 0, 0] = H[..., 1, 1]
    U[..., 1, 1] = H[..., 0, 0]
    U[..., 0, 1] = -H[..., 0, 1]
    U[..., 1, 0] = -H[..., 1, 0]
    return U


def weighted_operator(grid, coef, accurate=False):
    """Assemble ``sum_ij coef^{ij} D_ij`` for a field of symmetric matrices.

    With ``coef`` the cofactor of the Hessian of ``u`` this is both the
    linearised Monge-Ampere operator acting on ``w`` and the Jacobian of
    ``det D^2 u``.
    """
    ops = hessian_ops(grid, accurate)
    n = grid.n
    A = sp.csr_matrix((grid.size, grid.size))
    B = sp.csr_matrix((grid.size, grid.n_boundary))
    for i in range(n):
        for j in range(n):
            Ai, Bi = ops[i][j]
            D = sp.diags(coef[:, i, j])
            A = A + D @ Ai
            B = B + D @ Bi
    return A.tocsr(), B.tocsr()


def interior_second_differences(grid, field_values):
    """Second differences of a node field using interior neighbours only.

    Returns ``(N, n, n)`` with NaN at nodes whose stencil reaches the boundary.
    Used to differentiate derived fields (inverse Hessian entries, log det)
    that have no boundary trace.
    """
    d2 = second_difference_ops(grid)
    ok = grid.full_stencil(1)
    out = np.full((grid.size, grid.n, grid.n), np.nan)
    vb = np.zeros(grid.n_boundary)
    D = [A @ field_values + B @ vb for A, B in d2]
    if grid.n == 1:
        out[:, 0, 0] = D[0]
    else:
        out[:, 0, 0] = D[0]
        out[:, 1, 1] = D[1]
        out[:, 0, 1] = out[:, 1, 0] = 0.5 * (D[2] - D[3])
    out[~ok] = np.nan
    return out
