"""Closed-form expected-kernel coefficients and analytical error estimates.

Replacing the training Gram matrix by its expectation collapses each margin
problem to c x c coefficients alpha (every point becomes a support vector
whose weight depends only on its class) and a bias vector. The resulting
predictor's per-class score differences are Gaussian; their mean nu and
covariance Sigma (the score statistics) determine every misclassification
probability:

    pairwise error y->k   = Q(nu[k] / sqrt(Sigma[k, k]))
    class error y         = 1 - P(N(nu, Sigma) >= 0)   (Monte Carlo)
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from . import _rng
from .instances import ProblemInstance
from .qfunc import q_function

__all__ = [
    "ApproxCoefficients",
    "ScoreStatistics",
    "reduced_kernel",
    "ma_coefficients",
    "mm_coefficients",
    "la_coefficients",
    "cdt_coefficients",
    "ma_tightness_margin",
    "reduced_qp_coefficients",
    "ma_approximation_coefficients",
    "score_statistics",
    "pairwise_error",
    "pairwise_matrix",
    "class_error_mc",
    "per_class_errors_mc",
    "AnalyticReport",
    "analytic_error_report",
]

Method = Literal["mm", "ma", "la", "cdt"]

RHO_INF = math.inf


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if math.isnan(rho) or rho < 0:
        raise ValueError(f"rho must be in [0, inf], got {rho}")
    return rho


def _check_positive_vector(v, c: int, name: str) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (c,):
        raise ValueError(f"{name} must have length {c}")
    if not np.all(v > 0):
        raise ValueError(f"{name} must be strictly positive, got {v}")
    return v


@dataclass(frozen=True)
class ApproxCoefficients:
    """Reduced coefficients of the expected-kernel predictor.

    alpha[y, i] is the weight that class-y's classifier places on the sum of
    class-i training points; bias is the accompanying intercept vector.
    """

    method: Method
    alpha: np.ndarray
    bias: np.ndarray
    rho: float
    delta: np.ndarray | None = None
    iota: np.ndarray | None = None

    @property
    def c(self) -> int:
        return self.alpha.shape[0]


def reduced_kernel(instance: ProblemInstance) -> np.ndarray:
    """Diagonal c x c expected Gram matrix of the class-sum vectors.

    Entry (i, i) is N_i^2 xi_i; distinct classes are uncorrelated because
    their means are orthogonal.
    """
    return np.diag(instance.sizes**2 * instance.xi)


def ma_coefficients(instance: ProblemInstance, delta, rho: float) -> ApproxCoefficients:
    """Closed-form margin-adjustment coefficients under the expected kernel.

    With r_i = delta_i / xi_i and M = sum_i 1/xi_i:

        alpha[y, i] = (delta_i / (N_i xi_i)) (1{i=y} - 1/c)
                      + sum_j (r_j - r_y) / (c N_i xi_i (M + rho))
        bias[y]     = sum_j (r_y - r_j) / (c (M + rho))

    At rho = inf the bias is fixed to zero and the correction term vanishes.
    The formula assumes every margin constraint is active at the optimum;
    ma_tightness_margin reports when that holds.
    """
    rho = _check_rho(rho)
    c = instance.c
    delta = _check_positive_vector(delta, c, "delta")
    xi = instance.xi
    sizes = instance.sizes
    base = (delta / (sizes * xi))[None, :] * (np.eye(c) - 1.0 / c)
    if math.isinf(rho):
        alpha = base
        bias = np.zeros(c)
    else:
        M = float(np.sum(1.0 / xi))
        r = delta / xi
        corr = (np.sum(r) - c * r) / (c * (M + rho))  # per-row y
        alpha = base + corr[:, None] / (sizes * xi)[None, :]
        bias = (c * r - np.sum(r)) / (c * (M + rho))
    return ApproxCoefficients(method="ma", alpha=alpha, bias=bias, rho=rho, delta=delta)


def mm_coefficients(instance: ProblemInstance, rho: float) -> ApproxCoefficients:
    """Maximum-margin coefficients: margin adjustment with unit margins."""
    coeffs = ma_coefficients(instance, np.ones(instance.c), rho)
    return ApproxCoefficients(
        method="mm", alpha=coeffs.alpha, bias=coeffs.bias, rho=coeffs.rho
    )


def la_coefficients(instance: ProblemInstance, rho: float, iota) -> ApproxCoefficients:
    """Post-hoc logit adjustment: the MM solution with bias shifted by -iota."""
    iota = np.asarray(iota, dtype=np.float64)
    if iota.shape != (instance.c,):
        raise ValueError(f"iota must have length {instance.c}")
    mm = mm_coefficients(instance, rho)
    return ApproxCoefficients(
        method="la", alpha=mm.alpha, bias=mm.bias - iota, rho=mm.rho, iota=iota
    )


def cdt_coefficients(instance: ProblemInstance, delta) -> ApproxCoefficients:
    """Class-dependent-temperature coefficients (bias fixed to zero).

    alpha[y, i] = (delta_i / (N_i xi_i)) (1{i=y} - delta_y delta_i / sum_j delta_j^2).
    Holds for every positive delta: all margin constraints are active and the
    implied multipliers are nonnegative.
    """
    c = instance.c
    delta = _check_positive_vector(delta, c, "delta")
    total = float(np.sum(delta**2))
    shape = np.eye(c) - np.outer(delta, delta) / total
    alpha = (delta / (instance.sizes * instance.xi))[None, :] * shape
    return ApproxCoefficients(
        method="cdt", alpha=alpha, bias=np.zeros(c), rho=RHO_INF, delta=delta
    )


def ma_tightness_margin(instance: ProblemInstance, delta, rho: float) -> float:
    """Nonnegative iff the MA closed form solves the reduced margin problem.

    Returns min over ordered pairs (y, k) of delta_y + c * bias_k, the signed
    margin of the smallest implied KKT multiplier. Negative values mean some
    constraints go slack at the true optimum and the closed form overshoots.
    """
    coeffs = ma_coefficients(instance, delta, rho)
    c = instance.c
    vals = [
        coeffs.delta[y] + c * coeffs.bias[k]
        for y in range(c)
        for k in range(c)
        if k != y
    ]
    return float(min(vals))


def _reduced_rows(instance: ProblemInstance, delta: np.ndarray, rho: float, kind: str):
    """Constraint rows of the reduced problem over x = [vec(alpha), b]."""
    c = instance.c
    N = instance.sizes
    xi = instance.xi
    with_bias = not math.isinf(rho)
    nv = c * c + (c if with_bias else 0)
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
    return np.asarray(rows), np.asarray(rhs)


def reduced_qp_coefficients(
    instance: ProblemInstance, delta, rho: float, kind: str = "ma"
) -> ApproxCoefficients:
    """Numerically exact solution of the reduced margin problem.

    Solves the c x c problem under the diagonal expected class-sum kernel by
    an active-set iteration in whitened coordinates, seeded from the closed
    form; each iterate solves the equality-constrained subproblem by
    minimum-norm least squares, so the certified result carries machine
    precision. Needs rho > 0 or rho = inf (the bias must carry weight).
    """
    rho = _check_rho(rho)
    if rho == 0.0:
        raise ValueError("reduced QP solver needs rho > 0 or rho = inf")
    c = instance.c
    delta = _check_positive_vector(delta, c, "delta")
    if kind == "cdt":
        seed = cdt_coefficients(instance, delta)
    else:
        seed = ma_coefficients(instance, delta, rho)
    with_bias = not math.isinf(rho)
    p_diag = np.tile(instance.sizes**2 * instance.xi, c)
    x0 = seed.alpha.reshape(-1)
    if with_bias:
        p_diag = np.concatenate([p_diag, np.full(c, rho)])
        x0 = np.concatenate([x0, seed.bias])
    G, h = _reduced_rows(instance, delta, rho, kind)

    rt = np.sqrt(p_diag)
    Gt = G / rt[None, :]
    norms = np.linalg.norm(Gt, axis=1)
    Gn, hn = Gt / norms[:, None], h / norms
    z = x0 * rt
    scale = max(1.0, float(np.abs(hn).max()))
    active = (Gn @ z - hn) < 1e-9 * scale
    for _ in range(40):
        idx = np.flatnonzero(active)
        z, *_ = np.linalg.lstsq(Gn[idx], hn[idx], rcond=None)
        mu, *_ = np.linalg.lstsq(Gn[idx].T, 2.0 * z, rcond=None)
        slack = Gn @ z - hn
        viol = slack < -1e-12 * scale
        drop = np.zeros(G.shape[0], dtype=bool)
        drop[idx[mu < -1e-12]] = True
        if not viol.any() and not drop.any():
            x = z / rt
            alpha = x[: c * c].reshape(c, c)
            bias = x[c * c :] if with_bias else np.zeros(c)
            return ApproxCoefficients(
                method=seed.method, alpha=alpha, bias=bias, rho=rho,
                delta=delta, iota=seed.iota,
            )
        active = (active | viol) & ~drop
    raise RuntimeError("reduced-problem active-set iteration did not settle")


def ma_approximation_coefficients(
    instance: ProblemInstance, delta, rho: float
) -> ApproxCoefficients:
    """Expected-kernel MA coefficients, exact for every positive delta.

    Uses the closed form where its all-constraints-active hypothesis holds
    (ma_tightness_margin >= 0, always true at rho = inf) and the numerically
    exact reduced-problem solution elsewhere.
    """
    rho = _check_rho(rho)
    if math.isinf(rho) or ma_tightness_margin(instance, delta, rho) >= 0.0:
        return ma_coefficients(instance, delta, rho)
    return reduced_qp_coefficients(instance, delta, rho, kind="ma")


@dataclass(frozen=True)
class ScoreStatistics:
    """Per-class score-difference Gaussians.

    nu[y, k] is the mean advantage of the true class y over class k on
    class-y inputs; sigma[y] is the c x c covariance of those differences.
    Row and column y of sigma[y] are zero, as is nu[y, y].
    """

    nu: np.ndarray
    sigma: np.ndarray

    @property
    def c(self) -> int:
        return self.nu.shape[0]


def score_statistics(
    instance: ProblemInstance, coeffs: ApproxCoefficients
) -> ScoreStatistics:
    """Expected score statistics of a reduced-coefficient predictor.

    nu[y, k]      = ((alpha[y, y] - alpha[k, y]) N_y ||mu_y||^2 + b_y - b_k) / sigma
    sigma[y][k, l] = sum_z (alpha[y, z] - alpha[k, z]) (alpha[y, z] - alpha[l, z]) N_z^2 xi_z
    """
    c = instance.c
    if coeffs.c != c:
        raise ValueError("coefficient shape does not match instance")
    inv_sigma = math.sqrt(instance.d)
    weights = instance.sizes**2 * instance.xi
    nu = np.zeros((c, c))
    sigma = np.zeros((c, c, c))
    for y in range(c):
        diff = coeffs.alpha[y][None, :] - coeffs.alpha  # diff[k, z]
        nu[y] = (
            diff[:, y] * instance.sizes[y] * instance.mu_norm_sq[y]
            + coeffs.bias[y]
            - coeffs.bias
        ) * inv_sigma
        sigma[y] = (diff * weights[None, :]) @ diff.T
    return ScoreStatistics(nu=nu, sigma=sigma)


def pairwise_error(stats: ScoreStatistics, y: int, k: int) -> float:
    """Probability that class k outscores the true class y.

    Degenerate zero-variance coordinates resolve by the sign of the mean.
    """
    if y == k:
        raise ValueError("pairwise error requires k != y")
    mean = stats.nu[y, k]
    var = stats.sigma[y][k, k]
    if var <= 0.0:
        return 0.0 if mean > 0 else (1.0 if mean < 0 else 0.5)
    if math.isinf(mean):
        return 0.0 if mean > 0 else 1.0
    return float(q_function(mean / math.sqrt(var)))


def pairwise_matrix(stats: ScoreStatistics) -> np.ndarray:
    """All pairwise errors; entry (y, k) for k != y, zero diagonal."""
    c = stats.c
    out = np.zeros((c, c))
    for y in range(c):
        for k in range(c):
            if k != y:
                out[y, k] = pairwise_error(stats, y, k)
    return out


def _mvn_factor(sigma: np.ndarray) -> np.ndarray:
    """Sampling factor L with L L^T = sigma via symmetric eigendecomposition.

    Eigenvalues in [-1e-10 * trace, 0) are clamped to zero (numerically
    semidefinite input); anything more negative is rejected.
    """
    sym = 0.5 * (sigma + sigma.T)
    vals, vecs = np.linalg.eigh(sym)
    floor = -1e-10 * max(np.trace(sym), 1e-300)
    if vals.min() < floor:
        raise ValueError(
            f"covariance is not positive semidefinite (min eigenvalue {vals.min():g})"
        )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


_MC_BLOCK = 10_000  # fixed quantum: results never depend on how work is split


def _mc_blocks(
    stats: ScoreStatistics, y: int, n_samples: int, seed: int
):
    """Yield blocked score-difference draws for class y.

    Each block of at most _MC_BLOCK draws comes from its own substream, so
    n_samples determines the draws exactly regardless of scheduling. Yields
    (draw matrix over finite rival coordinates, rival class indices kept).
    Divergent coordinates are resolved before sampling: -inf means a rival
    wins almost surely (signalled by yielding None), +inf coordinates never
    go negative and are dropped.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rivals = np.array([k for k in range(stats.c) if k != y])
    mean = stats.nu[y][rivals]
    cov = stats.sigma[y][np.ix_(rivals, rivals)]
    if np.any(np.isneginf(mean)):
        yield None, rivals
        return
    keep = np.flatnonzero(np.isfinite(mean))
    if keep.size == 0:
        yield np.zeros((n_samples, 0)), rivals[keep]
        return
    L = _mvn_factor(cov[np.ix_(keep, keep)])
    done = 0
    block = 0
    while done < n_samples:
        m = min(_MC_BLOCK, n_samples - done)
        g = _rng.substream(seed, _rng.MC_ERROR, y, block)
        yield g.standard_normal((m, keep.size)) @ L.T + mean[keep], rivals[keep]
        done += m
        block += 1


def class_error_mc(
    stats: ScoreStatistics, y: int, n_samples: int = 10_000, seed: int = 0
) -> float:
    """Monte-Carlo class error: fraction of draws from N(nu, Sigma) with a
    negative coordinate among the c - 1 rival classes.

    The y-th coordinate is the self-difference (identically zero) and is
    excluded from the sign test. Deterministic in (n_samples, seed); draws
    are split into fixed-size blocks with independent substreams, so the
    result does not depend on evaluation order.
    """
    bad = 0
    for draws, _ in _mc_blocks(stats, y, n_samples, seed):
        if draws is None:
            return 1.0
        bad += int(np.count_nonzero((draws < 0.0).any(axis=1)))
    return bad / n_samples


def per_class_errors_mc(
    stats: ScoreStatistics, n_samples: int = 10_000, seed: int = 0
) -> np.ndarray:
    return np.array(
        [class_error_mc(stats, y, n_samples, seed) for y in range(stats.c)]
    )


def confusion_probabilities_mc(
    stats: ScoreStatistics, n_samples: int = 10_000, seed: int = 0
) -> np.ndarray:
    """Row-stochastic matrix P[y, k] = P(predict k | class y), by Monte Carlo.

    A class-y draw predicts y when all rival score differences are
    nonnegative, otherwise the rival with the most negative difference.
    Shares its draws with class_error_mc, so row y's off-diagonal mass is
    exactly that function's value at the same (n_samples, seed).
    """
    c = stats.c
    out = np.zeros((c, c))
    for y in range(c):
        counts = np.zeros(c)
        for draws, kept in _mc_blocks(stats, y, n_samples, seed):
            if draws is None:
                # a rival wins almost surely; the most dominant one takes all
                counts[kept[np.argmin(stats.nu[y][kept])]] = n_samples
                break
            if draws.shape[1] == 0:
                counts[y] += draws.shape[0]
                continue
            worst = np.argmin(draws, axis=1)
            lose = draws[np.arange(draws.shape[0]), worst] < 0.0
            pred = np.where(lose, kept[worst], y)
            counts += np.bincount(pred, minlength=c)
        out[y] = counts / n_samples
    return out


@dataclass(frozen=True)
class AnalyticReport:
    """Per-class, pairwise and worst-class analytical errors."""

    method: Method
    rho: float
    per_class_error: np.ndarray
    pairwise: np.ndarray
    worst_class_error: float
    mode: str
    delta: np.ndarray | None = None
    iota: np.ndarray | None = None

    def to_dict(self) -> dict:
        def _vec(v):
            return None if v is None else [float(x) for x in v]

        return {
            "method": self.method,
            "delta": _vec(self.delta),
            "iota": _vec(self.iota),
            "rho": "inf" if math.isinf(self.rho) else float(self.rho),
            "per_class_error": _vec(self.per_class_error),
            "pairwise": [[float(x) for x in row] for row in self.pairwise],
            "worst_class_error": float(self.worst_class_error),
            "mode": self.mode,
        }

    def to_json(self, path: str | Path | None = None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text


def analytic_error_report(
    instance: ProblemInstance,
    coeffs: ApproxCoefficients,
    mode: Literal["finite-d", "limit"] = "finite-d",
    n_samples: int = 10_000,
    seed: int = 0,
) -> AnalyticReport:
    """Evaluate the analytical error of a reduced-coefficient predictor.

    finite-d mode works from the instance's own score statistics. limit mode
    substitutes the dimension-to-infinity simplifications for the method's
    hyperparameters (treated as dimension-independent vectors); mean entries
    that diverge saturate the affected probabilities at 0 or 1.
    """
    if mode == "finite-d":
        stats = score_statistics(instance, coeffs)
    elif mode == "limit":
        from .limits import limit_score_statistics

        stats = limit_score_statistics(instance, coeffs)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    per_class = per_class_errors_mc(stats, n_samples=n_samples, seed=seed)
    return AnalyticReport(
        method=coeffs.method,
        rho=coeffs.rho,
        per_class_error=per_class,
        pairwise=pairwise_matrix(stats),
        worst_class_error=float(per_class.max()),
        mode=mode,
        delta=coeffs.delta,
        iota=coeffs.iota,
    )
