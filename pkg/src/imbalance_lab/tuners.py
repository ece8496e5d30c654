"""Near-optimal hyperparameters, worst-class error bounds, class-size profiles.

The worst-class error lower bound (WCELB) of a method is the maximum over
ordered class pairs of the limiting pairwise error. For margin adjustment and
logit adjustment the closed-form minimizers delta_star and iota_star are
known, along with the value they attain; general hyperparameter vectors are
evaluated through the limit score statistics (treating the vector as
dimension-independent, so a learned bias saturates mismatched pairs at
error 1).
"""

from __future__ import annotations

import math

import numpy as np

from .instances import ProblemInstance
from .limits import cdt_limit_statistics, la_limit_statistics, ma_limit_statistics
from .analytic import pairwise_error
from .qfunc import q_function, q_inverse

__all__ = [
    "ma_delta_star",
    "la_iota_star",
    "wcelb_mm",
    "wcelb_ma",
    "wcelb_ma_opt",
    "wcelb_la",
    "wcelb_la_opt",
    "cdt_limit_worst_error",
    "cdt_failure_instance",
    "exp_longtail_profile",
    "geometric_profile",
    "LONGTAIL_10_LISTED",
    "LONGTAIL_10_MODIFIED",
]

# Ten-class profiles as listed for the real-feature experiments. The first is
# the literal long-tail sequence (note it deviates from exp_longtail_profile's
# formula at the majority end); the second inflates the middle classes.
LONGTAIL_10_LISTED = (5, 8, 13, 23, 38, 64, 107, 179, 299, 500)
LONGTAIL_10_MODIFIED = (5, 100, 120, 140, 160, 180, 200, 220, 300, 500)


def ma_delta_star(instance: ProblemInstance, rho: float) -> np.ndarray:
    """Margin vector minimizing the limiting worst-class error of MA.

    delta_star_i = xi_i / (||mu_i||^2 + 2 / (M + rho)),  M = sum_j 1/xi_j.

    At rho = inf the correction term vanishes and delta_star_i = xi_i /
    ||mu_i||^2, proportional to 1/(s_i N_i) in the limit; for rho < inf it
    tends to be proportional to 1/N_i. Any positive rescaling of the vector
    yields the same predictor.
    """
    rho = float(rho)
    xi = instance.xi
    mu2 = instance.mu_norm_sq
    if math.isinf(rho):
        return xi / mu2
    M = float(np.sum(1.0 / xi))
    return xi / (mu2 + 2.0 / (M + rho))


def la_iota_star(instance: ProblemInstance, rho: float) -> np.ndarray:
    """Bias correction minimizing the limiting worst-class error of LA.

    iota_star_y = (2 + ||mu_y||^2 (M_minus_y + rho)) / (2 xi_y (M + rho)),
    the exact minimizer when all signal strengths are equal; proportional to
    N_y in the limit for rho < inf. At rho = inf the expression degenerates
    to ||mu_y||^2 / (2 xi_y).
    """
    rho = float(rho)
    xi = instance.xi
    mu2 = instance.mu_norm_sq
    if math.isinf(rho):
        return mu2 / (2.0 * xi)
    M = float(np.sum(1.0 / xi))
    m_minus = M - 1.0 / xi
    return (2.0 + mu2 * (m_minus + rho)) / (2.0 * xi * (M + rho))


def _max_pairwise(stats) -> float:
    worst = 0.0
    for y in range(stats.c):
        for k in range(stats.c):
            if k != y:
                worst = max(worst, pairwise_error(stats, y, k))
    return worst


def wcelb_ma(instance: ProblemInstance, delta, rho: float) -> float:
    """Limiting worst-class lower bound of MA at a fixed margin vector."""
    return _max_pairwise(ma_limit_statistics(instance, delta, rho))


def wcelb_mm(instance: ProblemInstance, rho: float) -> float:
    """Limiting worst-class lower bound of maximum margin.

    Without bias this is max over pairs of Q(s_y sqrt(N_y) / sqrt(1 + N_k/N_y));
    with a learned bias it saturates at 1 whenever two class sizes differ.
    """
    return wcelb_ma(instance, np.ones(instance.c), rho)


def wcelb_ma_opt(instance: ProblemInstance, rho: float) -> float:
    """Worst-class lower bound of MA at its optimal margins.

    Two branches: without bias the pairwise term is
    Q(1 / sqrt(1/(s_y^2 N_y) + 1/(s_k^2 N_k))); with a learned bias it is
    Q((s_y + s_k) / (2 sqrt(1/N_y + 1/N_k))), the value reached by margins
    recomputed at every dimension (not by freezing one margin vector).
    """
    rho = float(rho)
    N = instance.sizes
    s = instance.signals
    worst = 0.0
    for y in range(instance.c):
        for k in range(y + 1, instance.c):
            if math.isinf(rho):
                arg = 1.0 / math.sqrt(1.0 / (s[y] ** 2 * N[y]) + 1.0 / (s[k] ** 2 * N[k]))
            else:
                arg = (s[y] + s[k]) / (2.0 * math.sqrt(1.0 / N[y] + 1.0 / N[k]))
            worst = max(worst, float(q_function(arg)))
    return worst


def wcelb_la(instance: ProblemInstance, iota, rho: float) -> float:
    """Limiting worst-class lower bound of LA.

    iota may be a fixed vector (evaluated through the limit statistics) or
    the string "star", meaning the optimal dimension-dependent correction,
    whose value has the closed form of wcelb_la_opt.
    """
    if isinstance(iota, str):
        if iota != "star":
            raise ValueError(f"unknown iota spec {iota!r}")
        return wcelb_la_opt(instance, rho)
    return _max_pairwise(la_limit_statistics(instance, iota, rho))


def wcelb_la_opt(instance: ProblemInstance, rho: float) -> float:
    """Worst-class lower bound of LA at the optimal bias correction.

    For each pair, with T(i\\j) = 2 N_i + Nbar_{ij} + rho and Nbar the total
    size of the remaining classes:

        Q( (s_y N_y T(k\\y) + s_k N_k T(y\\k) - |s_y - s_k| N_y N_k)
           / (2 sqrt((N_k - N_y)^2 Nbar + N_y T(k\\y)^2 + N_k T(y\\k)^2)) )

    The expression is exact as a minimizer only for equal signal strengths.
    """
    rho = float(rho)
    N = instance.sizes
    s = instance.signals
    n_tot = float(np.sum(N))
    worst = 0.0
    for y in range(instance.c):
        for k in range(y + 1, instance.c):
            if math.isinf(rho):
                arg = (s[y] * N[y] + s[k] * N[k]) / (2.0 * math.sqrt(N[y] + N[k]))
            else:
                nbar = n_tot - N[y] - N[k]
                t_ky = 2.0 * N[k] + nbar + rho
                t_yk = 2.0 * N[y] + nbar + rho
                num = s[y] * N[y] * t_ky + s[k] * N[k] * t_yk - abs(s[y] - s[k]) * N[y] * N[k]
                den = 2.0 * math.sqrt(
                    (N[k] - N[y]) ** 2 * nbar + N[y] * t_ky**2 + N[k] * t_yk**2
                )
                arg = num / den
            worst = max(worst, float(q_function(arg)))
    return worst


def cdt_limit_worst_error(instance: ProblemInstance, delta) -> float:
    """Limiting worst-class lower bound of CDT at a fixed temperature vector."""
    return _max_pairwise(cdt_limit_statistics(instance, delta))


def cdt_failure_instance(
    epsilon: float, c: int, size_cap: int = 10_000_000
) -> tuple[tuple[int, ...], tuple[float, ...]]:
    """Construct (N, s) on which CDT fails while optimal MA succeeds.

    Sets s_y = 2 Q^{-1}(epsilon/c) / sqrt(N_y) with N_1 = 1 and the
    recurrence

        N_i = ceil(max(1, c^2/4) N_{i-1} (2 Q^{-1}(eps/c) / Q^{-1}(1/2 - eps))^2 + 1).

    On the result, every temperature vector leaves the limiting CDT
    worst-class bound above 1/2 - epsilon while the optimal-margin MA bound
    stays below epsilon. Sizes above size_cap raise (epsilon too small to
    realize at desk scale).
    """
    if not (0.0 < epsilon < 0.5):
        raise ValueError(f"epsilon must be in (0, 0.5), got {epsilon}")
    if c < 3:
        raise ValueError("the construction needs at least 3 classes")
    q_tail = q_inverse(epsilon / c)
    q_half = q_inverse(0.5 - epsilon)
    growth = max(1.0, c * c / 4.0) * (2.0 * q_tail / q_half) ** 2
    sizes = [1]
    for _ in range(1, c):
        nxt = math.ceil(growth * sizes[-1] + 1.0)
        if nxt > size_cap:
            raise ValueError(
                f"class size {nxt} exceeds cap {size_cap}; increase epsilon"
            )
        sizes.append(int(nxt))
    signals = tuple(2.0 * q_tail / math.sqrt(n) for n in sizes)
    return tuple(sizes), signals


def exp_longtail_profile(c: int, n_max: int, ratio: float) -> tuple[int, ...]:
    """Exponential long-tail class sizes N_i = n_max * ratio^(-(c - i + 1)/c).

    Rounded to the nearest integer with a floor of 1. Note the stated formula
    leaves the top class at n_max * ratio^(-1/c), short of n_max; use
    geometric_profile for a profile anchored at both endpoints.
    """
    if c < 1 or n_max < 1 or ratio < 1:
        raise ValueError("need c >= 1, n_max >= 1, ratio >= 1")
    out = []
    for i in range(1, c + 1):
        raw = n_max * ratio ** (-(c - i + 1) / c)
        out.append(max(1, round(raw)))
    return tuple(out)


def geometric_profile(c: int, n_max: int, ratio: float) -> tuple[int, ...]:
    """Geometric class sizes from n_max/ratio up to exactly n_max.

    N_i = (n_max / ratio) * ratio^((i - 1)/(c - 1)), rounded, so the realized
    majority/minority ratio equals the requested one after rounding of the
    minority size.
    """
    if c < 2 or n_max < 1 or ratio < 1:
        raise ValueError("need c >= 2, n_max >= 1, ratio >= 1")
    n_min = n_max / ratio
    out = [max(1, round(n_min * ratio ** ((i - 1) / (c - 1)))) for i in range(1, c)]
    out.append(int(n_max))
    return tuple(out)
