"""The log-edge barrier and its determinant bound.

The barrier on {c |xi'|^2 < xi_1 < r} is

    u(xi) = -(xi_1 - c |xi'|^2) (-log xi_1)^alpha + xi_1 (-log r)^alpha.

It vanishes at the origin and is convex for xi_1 < 1/e.  The published
determinant bound alpha (2c)^(n-1) / ((-log xi_1)^(1 - n alpha) xi_1) is
exceeded everywhere by a factor between 1 and 2.  Writing A = -log xi_1, the
exact two-dimensional ratio is

    det / bound = 1 + (1 - alpha)/A + (c xi_2^2 / xi_1)(1 - (1 + alpha)/A).

The factor is harmless for how the bound is used (only the order in xi_1
matters) so the package reports the literal check and a factor-two check.

Run:  python3 demos/log_edge_barrier.py
"""

import numpy as np

from abreu.estimates import log_edge_barrier, log_edge_det_bound, log_edge_hessian, log_edge_value


def main():
    c, r, alpha = 1.0, 0.3, 1 / 6
    xi = np.array([[0.1, 0.0]])
    print(f"u(0.1, 0)            = {log_edge_value(xi, c, r, alpha)[0]:.5f}")
    det = np.linalg.det(log_edge_hessian(xi, c, alpha))[0]
    bound = log_edge_det_bound(xi, c, alpha)[0]
    A = -np.log(0.1)
    print(f"det D^2 u at (0.1,0) = {det:.4f}")
    print(f"printed bound there  = {bound:.4f}")
    print(f"ratio                = {det / bound:.4f}   formula 1 + (1-alpha)/A = {1 + (1 - alpha) / A:.4f}")
    print()
    for h in (1 / 50, 1 / 100, 1 / 200):
        res = log_edge_barrier(c, r, alpha, h=h)
        d = res.diagnostics
        verdicts = ", ".join(f"{rep.name}: {rep.verdict}" for rep in res.reports)
        print(f"h=1/{round(1 / h):<4d} nodes {d['nodes']:6d}  det/bound in [{d['min_ratio']:.3f}, {d['max_ratio']:.3f}]  {verdicts}")
    print()
    print("Every node violates the literal bound and every node satisfies twice the bound.")


if __name__ == "__main__":
    main()
