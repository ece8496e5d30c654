"""Exact margin problems on training data, in primal or kernelized form.

The maximum-margin family minimizes ||W||_F^2 + rho ||b||^2 subject to
per-point margin constraints; class-dependent temperature rescales each
class's score by 1/delta before differencing. Both are strictly convex QPs
whose solutions live in the span of the data, so everything is solved in
kernel coordinates (beta per class) and mapped back to weights on demand.

Solving is delegated to cvxpy (Clarabel); optimality is certified here by
recomputing the KKT residuals from the returned primal and dual variables,
independent of the solver's own reporting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import cvxpy as cp
import numpy as np

from .instances import Dataset

__all__ = [
    "MarginProblem",
    "KKTReport",
    "KernelSolution",
    "Predictor",
    "InfeasibleProblemError",
    "CertificationError",
    "solve_kernel",
    "solve_primal",
    "predict",
    "decision_scores",
    "training_error",
    "save_predictor_json",
    "load_predictor_json",
]

KKT_TOL = 1e-8

_TIGHT = dict(tol_gap_abs=1e-11, tol_gap_rel=1e-11, tol_feas=1e-11, max_iter=500)
_BACKOFF = dict(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10, max_iter=2000,
                static_regularization_constant=1e-9)


class InfeasibleProblemError(RuntimeError):
    """Raised when the margin constraint system has no solution.

    Carries `violations`, a list of (row, rival_class, shortfall) triples at
    the least-infeasible point of the phase-1 relaxation.
    """

    def __init__(self, message: str, violations: list[tuple[int, int, float]]):
        super().__init__(message)
        self.violations = violations


class CertificationError(RuntimeError):
    """Raised when a solver result fails the independent KKT check."""


@dataclass(frozen=True)
class MarginProblem:
    """Margin problem family: kind, per-class margins, bias coupling rho.

    kind "mm" forces unit margins; "ma" uses delta as the target margin of
    each true class; "cdt" rescales scores by 1/delta with unit margins.
    rho = inf fixes the bias at zero; rho = 0 leaves it unpenalized (the
    solver then pins the gauge with a sum-zero constraint).
    """

    kind: Literal["mm", "ma", "cdt"]
    delta: tuple[float, ...]
    rho: float

    def __post_init__(self) -> None:
        if self.kind not in ("mm", "ma", "cdt"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if any(not (v > 0) for v in self.delta):
            raise ValueError("delta must be positive")
        if self.kind == "mm" and any(v != 1.0 for v in self.delta):
            raise ValueError("maximum margin requires unit margins")
        if math.isnan(self.rho) or self.rho < 0:
            raise ValueError(f"rho must be in [0, inf], got {self.rho}")

    @classmethod
    def max_margin(cls, c: int, rho: float) -> "MarginProblem":
        return cls(kind="mm", delta=(1.0,) * c, rho=rho)

    @classmethod
    def margin_adjust(cls, delta, rho: float) -> "MarginProblem":
        return cls(kind="ma", delta=tuple(float(v) for v in delta), rho=rho)

    @classmethod
    def class_temperature(cls, delta, rho: float = math.inf) -> "MarginProblem":
        return cls(kind="cdt", delta=tuple(float(v) for v in delta), rho=rho)

    @property
    def c(self) -> int:
        return len(self.delta)


@dataclass(frozen=True)
class KKTReport:
    """Relative KKT residuals recomputed from primal and dual variables."""

    feasibility: float
    stationarity: float
    bias_stationarity: float
    complementarity: float
    dual_feasibility: float

    @property
    def max_residual(self) -> float:
        return max(
            self.feasibility,
            self.stationarity,
            self.bias_stationarity,
            self.complementarity,
            self.dual_feasibility,
        )


@dataclass(frozen=True)
class KernelSolution:
    """Kernelized solution: beta[i, y] weights point i in classifier y."""

    beta: np.ndarray
    bias: np.ndarray
    problem: MarginProblem
    kkt: KKTReport
    duals: np.ndarray
    train_error: float


@dataclass(frozen=True)
class Predictor:
    """Linear predictor W (d x c), bias b; argmax scoring, ties to the
    smallest class index. beta stores the kernel coefficients when known."""

    W: np.ndarray
    b: np.ndarray
    beta: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def c(self) -> int:
        return self.W.shape[1]


def _factor_psd(K: np.ndarray) -> np.ndarray:
    """Return F (r x N) with F^T F = K, clamping roundoff-negative modes."""
    vals, vecs = np.linalg.eigh(0.5 * (K + K.T))
    top = max(vals.max(), 0.0)
    if vals.min() < -1e-8 * max(top, 1.0):
        raise ValueError(f"kernel is not PSD (min eigenvalue {vals.min():g})")
    keep = vals > 1e-14 * max(top, 1.0)
    return (vecs[:, keep] * np.sqrt(vals[keep])).T


def _margin_rhs(problem: MarginProblem, y: np.ndarray) -> np.ndarray:
    n = y.size
    c = problem.c
    if problem.kind == "cdt":
        rhs = np.ones((n, c))
    else:
        rhs = np.repeat(np.asarray(problem.delta)[y][:, None], c, axis=1)
    rhs[np.arange(n), y] = 0.0  # self-pair rows are identically 0 >= 0
    return rhs


def _constraint_gaps(
    problem: MarginProblem, K: np.ndarray, y: np.ndarray, beta: np.ndarray, bias: np.ndarray
) -> np.ndarray:
    """lhs - rhs of every (point, rival) margin constraint; >= 0 if feasible."""
    scores = K @ beta + bias[None, :]
    if problem.kind == "cdt":
        scores = scores / np.asarray(problem.delta)[None, :]
    true = scores[np.arange(y.size), y]
    return true[:, None] - scores - _margin_rhs(problem, y)


def _kkt_report(
    problem: MarginProblem,
    K: np.ndarray,
    y: np.ndarray,
    beta: np.ndarray,
    bias: np.ndarray,
    lam: np.ndarray,
    rho: float | None = None,
) -> KKTReport:
    n, c = lam.shape
    rho = problem.rho if rho is None else rho
    delta = np.asarray(problem.delta)
    rhs_scale = max(1.0, float(np.max(_margin_rhs(problem, y))))

    gaps = _constraint_gaps(problem, K, y, beta, bias)
    feas = max(0.0, float(-gaps.min())) / rhs_scale

    inv = (1.0 / delta) if problem.kind == "cdt" else np.ones(c)
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    G = onehot * (lam.sum(axis=1) * inv[y])[:, None] - lam * inv[None, :]

    resid_B = 2.0 * (K @ beta) - K @ G
    stat_scale = max(1.0, float(np.abs(2.0 * K @ beta).max()))
    stat = float(np.abs(resid_B).max()) / stat_scale

    if math.isinf(rho):
        bias_stat = 0.0
    else:
        h = G.sum(axis=0)
        if rho == 0.0:
            bias_stat = float(np.abs(h - h.mean()).max()) / max(1.0, float(np.abs(h).max()))
        else:
            bias_stat = float(np.abs(2.0 * rho * bias - h).max()) / max(
                1.0, float(np.abs(h).max())
            )

    comp = float(np.abs(lam * gaps).max()) / rhs_scale
    dual = max(0.0, float(-lam.min())) / max(1.0, float(lam.max()))
    return KKTReport(feas, stat, bias_stat, comp, dual)


def _phase_one_violations(
    problem: MarginProblem, K: np.ndarray, y: np.ndarray
) -> list[tuple[int, int, float]]:
    """Minimize the largest constraint shortfall; list what stays violated."""
    n = y.size
    c = problem.c
    B = cp.Variable((n, c))
    t = cp.Variable(nonneg=True)
    expr = K @ B
    if not math.isinf(problem.rho):
        bias = cp.Variable(c)
        expr = expr + cp.reshape(bias, (1, c), order="C")
    if problem.kind == "cdt":
        expr = expr @ np.diag(1.0 / np.asarray(problem.delta))
    true = cp.sum(cp.multiply(expr, _onehot(y, c)), axis=1)
    lhs = cp.reshape(true, (n, 1), order="C") @ np.ones((1, c)) - expr
    rhs = _margin_rhs(problem, y)
    prob = cp.Problem(cp.Minimize(t), [lhs >= rhs - t])
    prob.solve(solver=cp.CLARABEL)
    if prob.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return []
    gaps = np.asarray(lhs.value) - rhs
    bad = np.argwhere(gaps < -1e-9)
    return [(int(i), int(k), float(-gaps[i, k])) for i, k in bad]


def _onehot(y: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros((y.size, c))
    out[np.arange(y.size), y] = 1.0
    return out


def _constraint_rows(problem: MarginProblem, F: np.ndarray, y: np.ndarray):
    """Whitened constraint system of the kernel margin QP.

    With K = F^T F, substituting z_y = F beta_y turns the objective into
    ||Z||_F^2 (+ rho ||b||^2) and constraint (i, k) into a sparse row over
    [vec(Z), sqrt(rho) b]. Returns (G, h, pairs); the self-pair rows are
    omitted. For rho = 0 the bias block is unwhitened and carries no cost.
    """
    n = y.size
    c = problem.c
    r = F.shape[0]
    delta = np.asarray(problem.delta)
    inv = (1.0 / delta) if problem.kind == "cdt" else np.ones(c)
    with_bias = not math.isinf(problem.rho)
    bias_w = math.sqrt(problem.rho) if (with_bias and problem.rho > 0) else 1.0
    nv = r * c + (c if with_bias else 0)
    rows, rhs, pairs = [], [], []
    rhs_val = _margin_rhs(problem, y)
    for i in range(n):
        yi = y[i]
        fi = F[:, i]
        for k in range(c):
            if k == yi:
                continue
            g = np.zeros(nv)
            g[yi * r : (yi + 1) * r] = inv[yi] * fi
            g[k * r : (k + 1) * r] -= inv[k] * fi
            if with_bias:
                g[r * c + yi] += inv[yi] / bias_w
                g[r * c + k] -= inv[k] / bias_w
            rows.append(g)
            rhs.append(rhs_val[i, k])
            pairs.append((i, k))
    return np.asarray(rows), np.asarray(rhs), pairs


def _polish_kernel_solution(
    problem: MarginProblem,
    K: np.ndarray,
    F: np.ndarray,
    y: np.ndarray,
    beta0: np.ndarray,
    bias0: np.ndarray,
    max_rounds: int = 60,
):
    """Refine an approximate solution to machine-precision KKT.

    Identifies the active set from the seed, solves the equality-constrained
    problem exactly by minimum-norm least squares in whitened coordinates,
    and iterates dropping negative-multiplier constraints / adding violated
    ones. Returns (beta, bias, duals) or None when no certificate emerges.
    """
    n = y.size
    c = problem.c
    r = F.shape[0]
    with_bias = not math.isinf(problem.rho)
    bias_w = math.sqrt(problem.rho) if (with_bias and problem.rho > 0) else 1.0
    G, h, pairs = _constraint_rows(problem, F, y)
    norms = np.linalg.norm(G, axis=1)
    norms[norms == 0] = 1.0
    Gn, hn = G / norms[:, None], h / norms

    z0 = (F @ beta0).T.ravel()
    if with_bias:
        z0 = np.concatenate([z0, bias_w * bias0])
    scale = max(1.0, float(np.abs(hn).max()))
    active = (Gn @ z0 - hn) < 1e-4 * scale

    sum_zero = with_bias and problem.rho == 0.0
    extra = np.zeros((1, z0.size))
    if sum_zero:
        extra[0, r * c :] = 1.0

    x = z0
    for _ in range(max_rounds):
        idx = np.flatnonzero(active)
        A = Gn[idx]
        b = hn[idx]
        if sum_zero:
            A = np.vstack([A, extra])
            b = np.concatenate([b, [0.0]])
        x, *_ = np.linalg.lstsq(A, b, rcond=None)
        mu, *_ = np.linalg.lstsq(A.T, 2.0 * x, rcond=None)
        slack = Gn @ x - hn
        viol = slack < -1e-12 * scale
        drop = np.zeros(G.shape[0], dtype=bool)
        drop[idx[mu[: idx.size] < -1e-12]] = True
        if not viol.any() and not drop.any():
            Z = x[: r * c].reshape(c, r).T
            beta, *_ = np.linalg.lstsq(F, Z, rcond=None)
            bias = x[r * c :] / bias_w if with_bias else np.zeros(c)
            lam = np.zeros((n, c))
            for j, m in zip(idx, mu[: idx.size]):
                i, k = pairs[j]
                lam[i, k] = max(m, 0.0) / norms[j]
            return beta, bias, lam
        active = (active | viol) & ~drop
        if not active.any():
            return None  # margin RHS is positive; an empty active set is bogus
    return None


def solve_kernel(
    K: np.ndarray,
    y: np.ndarray,
    problem: MarginProblem,
    kkt_tol: float = KKT_TOL,
) -> KernelSolution:
    """Solve the kernelized margin QP and certify its KKT conditions.

    The problem is pre-scaled by the largest kernel diagonal so conditioning
    does not depend on feature norms; the returned beta is unscaled. Raises
    InfeasibleProblemError for unsatisfiable constraints (with a report of
    the worst offenders) and CertificationError when no solver pass reaches
    the requested relative KKT tolerance.
    """
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n = y.size
    c = problem.c
    if K.shape != (n, n):
        raise ValueError("kernel and labels disagree")
    if y.min() < 0 or y.max() >= c:
        raise ValueError("labels out of range for the margin problem")

    # Margin vectors are scale free (multiplying delta rescales the solution
    # linearly); center their spread around 1 for conditioning and undo below.
    d_scale = math.sqrt(max(problem.delta) * min(problem.delta))
    problem_s = MarginProblem(
        kind=problem.kind,
        delta=tuple(v / d_scale for v in problem.delta),
        rho=problem.rho,
    )
    scale2 = max(float(np.max(np.diag(K))), 1e-30)
    Ks = K / scale2
    rho_s = problem.rho if math.isinf(problem.rho) else problem.rho * scale2
    F = _factor_psd(Ks)

    B = cp.Variable((n, c))
    objective = cp.sum_squares(F @ B)
    constraints = []
    if math.isinf(problem_s.rho):
        bias = None
        scores = Ks @ B
    else:
        bias = cp.Variable(c)
        scores = Ks @ B + cp.reshape(bias, (1, c), order="C")
        if problem_s.rho == 0.0:
            constraints.append(cp.sum(bias) == 0)
        else:
            objective = objective + rho_s * cp.sum_squares(bias)
    if problem_s.kind == "cdt":
        scores = scores @ np.diag(1.0 / np.asarray(problem_s.delta))
    true = cp.sum(cp.multiply(scores, _onehot(y, c)), axis=1)
    lhs = cp.reshape(true, (n, 1), order="C") @ np.ones((1, c)) - scores
    rhs = _margin_rhs(problem_s, y)
    margin_con = lhs >= rhs
    constraints.append(margin_con)

    prob = cp.Problem(cp.Minimize(objective), constraints)
    last_exc: Exception | None = None
    solution = None
    attempts = (
        (cp.CLARABEL, _TIGHT),
        (cp.CLARABEL, _BACKOFF),
        (cp.CLARABEL, {}),
        (cp.CVXOPT, {}),  # slow, but survives conditioning Clarabel rejects
    )
    for solver, settings in attempts:
        try:
            prob.solve(solver=solver, **settings)
        except cp.error.SolverError as exc:
            last_exc = exc
            continue
        if prob.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            viol = _phase_one_violations(problem_s, Ks, y)
            raise InfeasibleProblemError(
                f"margin constraints are infeasible ({len(viol)} unsatisfiable)", viol
            )
        if prob.status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            beta_s = np.asarray(B.value)
            bias_s = np.zeros(c) if bias is None else np.asarray(bias.value)
            lam = np.asarray(margin_con.dual_value)
            lam = np.maximum(lam, 0.0)
            report = _kkt_report(problem_s, Ks, y, beta_s, bias_s, lam, rho=rho_s)
            candidate = (beta_s, bias_s, lam, report)
            if solution is None or report.max_residual < solution[3].max_residual:
                solution = candidate
            if report.max_residual <= kkt_tol:
                break
            # active-set polish rescues ill-conditioned margins exactly
            scaled_rho_problem = MarginProblem(
                kind=problem_s.kind, delta=problem_s.delta, rho=rho_s
            )
            polished = _polish_kernel_solution(
                scaled_rho_problem, Ks, F, y, beta_s, bias_s
            )
            if polished is not None:
                pb, pbias, plam = polished
                p_report = _kkt_report(problem_s, Ks, y, pb, pbias, plam, rho=rho_s)
                if p_report.max_residual < solution[3].max_residual:
                    solution = (pb, pbias, plam, p_report)
                if p_report.max_residual <= kkt_tol:
                    break
    if solution is None:
        raise CertificationError(f"solver failed: {last_exc}")
    beta_s, bias_s, lam, report = solution
    if report.max_residual > kkt_tol:
        raise CertificationError(
            f"KKT residual {report.max_residual:.3e} exceeds tolerance {kkt_tol:.1e}"
        )

    beta = beta_s * (d_scale / scale2)
    bias_out = bias_s * d_scale
    scores = K @ beta + bias_out[None, :]
    err = float(np.mean(np.argmax(scores, axis=1) != y))
    return KernelSolution(
        beta=beta,
        bias=bias_out,
        problem=problem,
        kkt=report,
        duals=lam,
        train_error=err,
    )


def solve_primal(dataset: Dataset, problem: MarginProblem) -> Predictor:
    """Solve the margin problem on raw features and return weights.

    Works through the linear-kernel dual (the minimizer lies in the data
    span), then re-verifies the recovered weights against the primal margin
    constraints directly.
    """
    if problem.c != dataset.c:
        raise ValueError("problem and dataset class counts disagree")
    sol = solve_kernel(dataset.X @ dataset.X.T, dataset.y, problem)
    W = dataset.X.T @ sol.beta
    scores = dataset.X @ W + sol.bias[None, :]
    gaps = _primal_gaps(problem, scores, dataset.y)
    rhs_scale = max(1.0, float(np.max(_margin_rhs(problem, dataset.y))))
    if gaps.min() < -1e-6 * rhs_scale:
        raise CertificationError(
            f"primal margin violation {-gaps.min():.3e} after weight recovery"
        )
    return Predictor(
        W=W,
        b=sol.bias,
        beta=sol.beta,
        meta={
            "kind": problem.kind,
            "delta": list(problem.delta),
            "rho": problem.rho,
            "train_error": sol.train_error,
            "kkt_max_residual": sol.kkt.max_residual,
        },
    )


def _primal_gaps(problem: MarginProblem, scores: np.ndarray, y: np.ndarray) -> np.ndarray:
    if problem.kind == "cdt":
        scores = scores / np.asarray(problem.delta)[None, :]
    true = scores[np.arange(y.size), y]
    return true[:, None] - scores - _margin_rhs(problem, y)


def decision_scores(predictor: Predictor, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return X @ predictor.W + predictor.b[None, :]


def predict(predictor: Predictor, X: np.ndarray) -> np.ndarray:
    """argmax labels; np.argmax breaks ties toward the smallest class index."""
    return np.argmax(decision_scores(predictor, X), axis=1)


def training_error(predictor: Predictor, dataset: Dataset) -> float:
    """Fraction of training points whose argmax differs from the label.

    Zero for feasible MM/MA solutions; possibly positive for multiclass CDT,
    whose constraints do not force correct argmax predictions.
    """
    return float(np.mean(predict(predictor, dataset.X) != dataset.y))


def save_predictor_json(predictor: Predictor, path: str | Path) -> None:
    payload = {
        "W": [[float(v) for v in row] for row in predictor.W],
        "b": [float(v) for v in predictor.b],
        "meta": {
            k: ("inf" if isinstance(v, float) and math.isinf(v) else v)
            for k, v in predictor.meta.items()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_predictor_json(path: str | Path) -> Predictor:
    payload = json.loads(Path(path).read_text())
    meta = dict(payload.get("meta", {}))
    if meta.get("rho") == "inf":
        meta["rho"] = math.inf
    return Predictor(
        W=np.asarray(payload["W"], dtype=np.float64),
        b=np.asarray(payload["b"], dtype=np.float64),
        meta=meta,
    )
