"""Independent numerical solver for the reduced margin problems.

Used by the tests as an oracle against the closed-form coefficient
expressions: an interior-point pass (cvxpy/Clarabel) seeds the active set,
then a whitened minimum-norm polish solves the equality-constrained KKT
system to machine precision and verifies multiplier signs. Nothing here
shares code with the closed forms under test.
"""

from __future__ import annotations

import math

import cvxpy as cp
import numpy as np

from imbalance_lab.instances import ProblemInstance


def _min_norm_refine(p_diag, G, h, x0, max_rounds=40):
    """Exact min x' diag(p) x s.t. Gx >= h, seeded with approximate x0."""
    rt = np.sqrt(p_diag)
    Gt = G / rt[None, :]
    row_norm = np.linalg.norm(Gt, axis=1)
    Gn, hn = Gt / row_norm[:, None], h / row_norm
    z = x0 * rt
    active = (Gn @ z - hn) < 1e-3
    for _ in range(max_rounds):
        idx = np.flatnonzero(active)
        z, *_ = np.linalg.lstsq(Gn[idx], hn[idx], rcond=None)
        mu, *_ = np.linalg.lstsq(Gn[idx].T, 2.0 * z, rcond=None)
        slack = Gn @ z - hn
        viol = slack < -1e-11
        drop = np.zeros(G.shape[0], dtype=bool)
        drop[idx[mu < -1e-11]] = True
        if not viol.any() and not drop.any():
            return z / rt, True
        active = (active | viol) & ~drop
        if not active.any():
            return z / rt, bool(not viol.any())
    return z / rt, False


def _assemble(instance: ProblemInstance, delta, rho, kind):
    """Variables x = [vec(alpha row-major), (b)]; rows Gx >= h."""
    c = instance.c
    N = instance.sizes
    xi = instance.xi
    delta = np.asarray(delta, dtype=np.float64)
    with_bias = not math.isinf(rho)
    nv = c * c + (c if with_bias else 0)
    p_diag = np.tile(N**2 * xi, c)
    if with_bias:
        p_diag = np.concatenate([p_diag, np.full(c, rho)])
    rows, rhs = [], []
    for y in range(c):
        for k in range(c):
            if k == y:
                continue
            g = np.zeros(nv)
            if kind == "cdt":
                g[y * c + y] = N[y] * xi[y] / delta[y]
                g[k * c + y] = -N[y] * xi[y] / delta[k]
                rhs.append(1.0)
            else:
                g[y * c + y] = N[y] * xi[y]
                g[k * c + y] = -N[y] * xi[y]
                if with_bias:
                    g[c * c + y] = 1.0
                    g[c * c + k] = -1.0
                rhs.append(delta[y])
            rows.append(g)
    return p_diag, np.asarray(rows), np.asarray(rhs)


def solve_reduced(instance: ProblemInstance, delta, rho, kind="ma"):
    """Oracle solve of the reduced problem; returns (alpha, bias).

    Requires rho > 0 or rho = inf (the whitening needs a positive-definite
    objective).
    """
    if not math.isinf(rho) and rho <= 0:
        raise ValueError("oracle handles rho > 0 or rho = inf")
    if kind == "cdt" and not math.isinf(rho):
        raise ValueError("reduced CDT oracle is bias-free")
    c = instance.c
    p_diag, G, h = _assemble(instance, delta, rho, kind)
    x = cp.Variable(p_diag.size)
    prob = cp.Problem(
        cp.Minimize(cp.sum(cp.multiply(p_diag, cp.square(x)))), [G @ x >= h]
    )
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        raise RuntimeError(f"oracle interior-point pass failed: {prob.status}")
    sol, certified = _min_norm_refine(p_diag, G, h, np.asarray(x.value))
    if not certified:
        raise RuntimeError("oracle polish did not certify optimality")
    alpha = sol[: c * c].reshape(c, c)
    bias = sol[c * c :] if sol.size > c * c else np.zeros(c)
    return alpha, bias
