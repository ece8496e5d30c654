"""Dimension-to-infinity simplifications of the score statistics.

Under the model scaling, xi_i tends to 1/N_i and the only surviving finite-d
effect is a sqrt(d)-amplified difference term that appears whenever a bias is
learned (rho < inf). For hyperparameter vectors held fixed as d grows, that
term either cancels at first order (leaving a finite second-order limit) or
diverges, saturating the affected pairwise error at 0 or 1. First-order
cancellation is detected up to 1e-12 relative tolerance.
"""

from __future__ import annotations

import math

import numpy as np

from .analytic import ApproxCoefficients, ScoreStatistics
from .instances import ProblemInstance

__all__ = [
    "ma_limit_statistics",
    "la_limit_statistics",
    "cdt_limit_statistics",
    "limit_score_statistics",
]

_CANCEL_RTOL = 1e-12


def _signed_inf(first_order: float, scale: float) -> float | None:
    """The sqrt(d)-amplified term's limit: +-inf, or None if it cancels."""
    if abs(first_order) <= _CANCEL_RTOL * max(scale, 1.0):
        return None
    return -math.inf if first_order > 0 else math.inf


def ma_limit_statistics(instance: ProblemInstance, delta, rho: float) -> ScoreStatistics:
    """Limit score statistics for margin adjustment with a fixed delta vector.

    With T_i = delta_i N_i, a learned bias (rho < inf) diverges on any pair
    with T_k != T_y; on balanced pairs the second-order term survives.
    """
    delta = np.asarray(delta, dtype=np.float64)
    c = instance.c
    N = instance.sizes
    s = instance.signals
    T = delta * N
    nu = np.zeros((c, c))
    sigma = np.zeros((c, c, c))
    if math.isinf(rho):
        for y in range(c):
            rivals = np.array([k for k in range(c) if k != y])
            nu[y, rivals] = s[y] * T[y]
            sub = np.full((c - 1, c - 1), delta[y] ** 2 * N[y])
            sub[np.diag_indices_from(sub)] += delta[rivals] ** 2 * N[rivals]
            sigma[y][np.ix_(rivals, rivals)] = sub
        return ScoreStatistics(nu=nu, sigma=sigma)

    n_tot = float(np.sum(N))
    denom = n_tot + rho
    shrink = (n_tot + 2.0 * rho) / denom**2
    for y in range(c):
        D = T - T[y]  # first-order bias-difference coefficient, per rival
        for k in range(c):
            if k == y:
                continue
            inf_val = _signed_inf(D[k], max(T[y], T[k]))
            if inf_val is not None:
                nu[y, k] = inf_val
            else:
                second = (delta[k] * N[k] ** 2 * s[k] - delta[y] * N[y] ** 2 * s[y])
                nu[y, k] = s[y] * T[y] + second / denom
        rivals = np.array([j for j in range(c) if j != y])
        sub = np.full((c - 1, c - 1), delta[y] ** 2 * N[y])
        sub[np.diag_indices_from(sub)] += delta[rivals] ** 2 * N[rivals]
        sub -= shrink * np.outer(D[rivals], D[rivals])
        sigma[y][np.ix_(rivals, rivals)] = sub
    return ScoreStatistics(nu=nu, sigma=sigma)


def la_limit_statistics(instance: ProblemInstance, iota, rho: float) -> ScoreStatistics:
    """Limit score statistics for logit adjustment with a fixed iota vector.

    The learned-bias divergence of the underlying max-margin solution cancels
    only when iota_y - iota_k = (N_y - N_k) / (sum_i N_i + rho); otherwise
    the (y, k) mean saturates.
    """
    iota = np.asarray(iota, dtype=np.float64)
    c = instance.c
    N = instance.sizes
    s = instance.signals
    nu = np.zeros((c, c))
    sigma = np.zeros((c, c, c))

    if math.isinf(rho):
        for y in range(c):
            for k in range(c):
                if k == y:
                    continue
                inf_val = _signed_inf(iota[y] - iota[k], abs(iota[y]) + abs(iota[k]))
                nu[y, k] = s[y] * N[y] if inf_val is None else inf_val
            rivals = np.array([j for j in range(c) if j != y])
            sub = np.full((c - 1, c - 1), N[y])
            sub[np.diag_indices_from(sub)] += N[rivals]
            sigma[y][np.ix_(rivals, rivals)] = sub
        return ScoreStatistics(nu=nu, sigma=sigma)

    n_tot = float(np.sum(N))
    denom = n_tot + rho
    shrink = (n_tot + 2.0 * rho) / denom**2
    p_sum = float(np.sum(N**2 * s))
    for y in range(c):
        D = N - N[y]
        for k in range(c):
            if k == y:
                continue
            first = D[k] / denom + (iota[y] - iota[k])
            scale = (N[y] + N[k]) / denom + abs(iota[y]) + abs(iota[k])
            inf_val = _signed_inf(first, scale)
            if inf_val is not None:
                nu[y, k] = inf_val
            else:
                drift = (-(N[k] ** 2 * s[k] - N[y] ** 2 * s[y]) * denom + D[k] * p_sum) / denom**2
                nu[y, k] = s[y] * N[y] * (1.0 + D[k] / denom) - drift
        rivals = np.array([j for j in range(c) if j != y])
        sub = np.full((c - 1, c - 1), N[y])
        sub[np.diag_indices_from(sub)] += N[rivals]
        sub -= shrink * np.outer(D[rivals], D[rivals])
        sigma[y][np.ix_(rivals, rivals)] = sub
    return ScoreStatistics(nu=nu, sigma=sigma)


def cdt_limit_statistics(instance: ProblemInstance, delta) -> ScoreStatistics:
    """Limit score statistics for class-dependent temperature (no bias).

    Finite for every positive delta; obtained by sending xi_i to 1/N_i in
    the finite-d expressions.
    """
    delta = np.asarray(delta, dtype=np.float64)
    c = instance.c
    N = instance.sizes
    s = instance.signals
    total = float(np.sum(delta**2))
    nu = np.zeros((c, c))
    sigma = np.zeros((c, c, c))
    for y in range(c):
        # u[k, z]: limit of (alpha[y, z] - alpha[k, z]), row k = rival.
        u = np.zeros((c, c))
        for k in range(c):
            if k == y:
                continue
            ind = np.zeros(c)
            ind[y] = total
            ind[k] -= total
            u[k] = delta * (ind + delta * (delta[k] - delta[y])) / total
        nu[y] = u[:, y] * N[y] * s[y]
        sigma[y] = (u * N[None, :]) @ u.T
    return ScoreStatistics(nu=nu, sigma=sigma)


def limit_score_statistics(
    instance: ProblemInstance, coeffs: ApproxCoefficients
) -> ScoreStatistics:
    """Dispatch the limit statistics for a coefficient object's method.

    Hyperparameter vectors are interpreted as dimension-independent.
    """
    if coeffs.method in ("ma", "mm"):
        delta = coeffs.delta if coeffs.delta is not None else np.ones(instance.c)
        return ma_limit_statistics(instance, delta, coeffs.rho)
    if coeffs.method == "la":
        iota = coeffs.iota if coeffs.iota is not None else np.zeros(instance.c)
        return la_limit_statistics(instance, iota, coeffs.rho)
    if coeffs.method == "cdt":
        return cdt_limit_statistics(instance, coeffs.delta)
    raise ValueError(f"unknown method {coeffs.method!r}")
