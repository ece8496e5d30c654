"""Gradient descent on the separable-classification losses.

Training runs on bias-extended features: when a bias is learned with
coupling rho, each point gains a constant coordinate 1/sqrt(rho), which makes
plain single-rate gradient descent equivalent to penalizing rho ||b||^2 in
the limiting margin problem. On separable data the iterates' loss decays to
zero while ||W|| grows without bound; only the direction converges, toward
the matching margin-problem solution.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .instances import Dataset
from .margin import Predictor

__all__ = [
    "LossSpec",
    "TrajectoryPoint",
    "Trajectory",
    "DivergenceError",
    "loss_value",
    "gd_train",
    "direction_cosine",
    "save_trajectory_csv",
]


class DivergenceError(RuntimeError):
    """Loss blew up; carries the last finite iterate as `predictor`."""

    def __init__(self, message: str, predictor: Predictor):
        super().__init__(message)
        self.predictor = predictor


@dataclass(frozen=True)
class LossSpec:
    """Loss family and hyperparameters.

    kind "ce" needs nothing extra; "ma"/"cdt" take per-class delta (> 0);
    "la" takes the additive logit offsets iota. rho is the squared ratio of
    weight to bias learning rates; rho = inf trains without a bias.
    """

    kind: Literal["ce", "ma", "cdt", "la"]
    delta: tuple[float, ...] | None = None
    iota: tuple[float, ...] | None = None
    rho: float = math.inf

    def __post_init__(self) -> None:
        if self.kind in ("ma", "cdt"):
            if self.delta is None or any(not (v > 0) for v in self.delta):
                raise ValueError(f"{self.kind} loss needs positive delta")
        if self.kind == "la" and self.iota is None:
            raise ValueError("la loss needs iota")
        if math.isnan(self.rho) or self.rho <= 0:
            raise ValueError("rho must be positive (inf to disable the bias)")


def _margins(spec: LossSpec, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Per-point logit gaps u with loss = logsumexp(u) per row, u[y] = 0."""
    n = z.shape[0]
    zy = z[np.arange(n), y]
    if spec.kind == "ce":
        return z - zy[:, None]
    if spec.kind == "la":
        iota = np.asarray(spec.iota)
        u = (z + iota[None, :]) - (zy + iota[y])[:, None]
        return u
    if spec.kind == "ma":
        d = np.asarray(spec.delta)[y]
        return (z - zy[:, None]) / d[:, None]
    if spec.kind == "cdt":
        d = np.asarray(spec.delta)
        return z / d[None, :] - (zy / d[y])[:, None]
    raise ValueError(spec.kind)


def _loss_and_residual(
    spec: LossSpec, z: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean loss and d(loss)/dz, both in one softmax pass."""
    n, c = z.shape
    u = _margins(spec, z, y)
    m = u.max(axis=1, keepdims=True)
    e = np.exp(u - m)
    tot = e.sum(axis=1, keepdims=True)
    loss = float(np.mean(np.log(tot).ravel() + m.ravel()))
    p = e / tot
    if spec.kind == "ce":
        r = p.copy()
        r[np.arange(n), y] -= 1.0
    elif spec.kind == "la":
        r = p.copy()
        r[np.arange(n), y] -= 1.0
    elif spec.kind == "ma":
        d = np.asarray(spec.delta)[y]
        r = p.copy()
        r[np.arange(n), y] -= 1.0
        r /= d[:, None]
    else:  # cdt
        d = np.asarray(spec.delta)
        r = p / d[None, :]
        r[np.arange(n), y] -= 1.0 / d[y]
    return loss, r / n


def loss_value(dataset: Dataset, spec: LossSpec, predictor: Predictor) -> float:
    """Mean loss of a predictor on a dataset (log(c) at the zero predictor
    for cross entropy)."""
    z = dataset.X @ predictor.W + predictor.b[None, :]
    loss, _ = _loss_and_residual(spec, z, dataset.y)
    return loss


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    loss: float
    train_error: float
    w_norm: float
    cosine_to_reference: float


@dataclass(frozen=True)
class Trajectory:
    points: list[TrajectoryPoint]
    predictor: Predictor
    losses: np.ndarray = field(default_factory=lambda: np.zeros(0))  # loss at every step
    snapshots: list[tuple[int, Predictor]] = field(default_factory=list)

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]


def _checkpoints(steps: int) -> list[int]:
    marks = {0, steps}
    k = 1
    while k < steps:
        marks.add(k)
        k *= 2
    return sorted(marks)


def _to_predictor(V: np.ndarray, d: int, rho: float, meta: dict) -> Predictor:
    if math.isinf(rho):
        return Predictor(W=V.copy(), b=np.zeros(V.shape[1]), meta=meta)
    return Predictor(W=V[:d].copy(), b=V[d] / math.sqrt(rho), meta=meta)


def gd_train(
    dataset: Dataset,
    spec: LossSpec,
    steps: int,
    step_rule: Literal["polyak", "fixed"] = "polyak",
    polyak_factor: float = 0.05,
    reference: Predictor | None = None,
    keep_snapshots: bool = False,
) -> Trajectory:
    """Run full-batch gradient descent from zero initialization.

    step_rule "polyak" uses eta_t = factor * loss / ||grad||^2, which tracks
    the exponential loss decay without tuning; "fixed" uses 0.9 / beta with
    beta the loss smoothness bound max_i (||x_i||^2 + 1/rho) / min(delta)^2.
    The trajectory is recorded at geometrically spaced checkpoints. Raises
    DivergenceError (with the last finite iterate) if the loss blows up.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    X = dataset.X
    y = dataset.y
    n, d = X.shape
    c = dataset.c
    rho = spec.rho
    if not math.isinf(rho):
        Xe = np.hstack([X, np.full((n, 1), 1.0 / math.sqrt(rho))])
    else:
        Xe = X
    V = np.zeros((Xe.shape[1], c))
    meta = {"loss": spec.kind, "step_rule": step_rule}

    if step_rule == "fixed":
        norms = np.sum(X**2, axis=1)
        if not math.isinf(rho):
            norms = norms + 1.0 / rho
        dmin = 1.0 if spec.delta is None else float(min(spec.delta))
        eta_fixed = 0.9 * dmin**2 / float(norms.max())
    elif step_rule != "polyak":
        raise ValueError(f"unknown step rule {step_rule!r}")

    marks = _checkpoints(steps)
    points: list[TrajectoryPoint] = []
    snapshots: list[tuple[int, Predictor]] = []
    losses: list[float] = []

    def record(step: int, loss: float) -> None:
        pred = _to_predictor(V, d, rho, meta)
        z = X @ pred.W + pred.b[None, :]
        err = float(np.mean(np.argmax(z, axis=1) != y))
        cos = math.nan if reference is None else direction_cosine(pred, reference, rho)
        points.append(TrajectoryPoint(step, loss, err, float(np.linalg.norm(V)), cos))
        if keep_snapshots:
            snapshots.append((step, pred))

    loss0 = None
    V_prev = V
    for t in range(steps + 1):
        z = Xe @ V
        loss, resid = _loss_and_residual(spec, z, y)
        if not math.isfinite(loss) or (loss0 is not None and loss > 1e3 * loss0 + 1e3):
            raise DivergenceError(
                f"loss diverged at step {t} ({loss:g}); reduce the step size",
                _to_predictor(V_prev, d, rho, meta),
            )
        if loss0 is None:
            loss0 = loss
        losses.append(loss)
        if t in marks or t == steps:
            record(t, loss)
        if t == steps:
            break
        grad = Xe.T @ resid
        g2 = float(np.sum(grad * grad))
        if g2 == 0.0:
            # loss underflowed to exact zero; iterates are frozen from here
            for mark in marks:
                if mark > t:
                    record(mark, loss)
            losses.extend([loss] * (steps - t))
            break
        eta = polyak_factor * loss / g2 if step_rule == "polyak" else eta_fixed
        V_prev = V
        V = V - eta * grad

    return Trajectory(
        points=points,
        predictor=_to_predictor(V, d, rho, meta),
        losses=np.asarray(losses),
        snapshots=snapshots,
    )


def direction_cosine(p1: Predictor, p2: Predictor, rho: float = 1.0) -> float:
    """Cosine between weight-bias concatenations.

    Biases enter on the bias-extended-feature scale, i.e. as sqrt(rho) * b,
    matching the geometry under which gradient descent converges to the
    margin solution; at rho = inf only the weights are compared.
    """
    def flat(p: Predictor) -> np.ndarray:
        if math.isinf(rho):
            return p.W.ravel()
        return np.concatenate([p.W.ravel(), math.sqrt(rho) * p.b])

    a, b = flat(p1), flat(p2)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def save_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss", "train_error", "cosine_to_reference", "w_norm"])
        for p in traj.points:
            writer.writerow(
                [p.step, f"{p.loss:.17g}", f"{p.train_error:.17g}",
                 f"{p.cosine_to_reference:.17g}", f"{p.w_norm:.17g}"]
            )
