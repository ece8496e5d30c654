"""RBF-kernel classification on externally extracted feature files.

Features arrive as CSV (same format as the dataset interchange); the
pipeline subsamples a class-size profile, builds the RBF Gram matrix, solves
the kernelized margin problem and scores a held-out test set through the
train/test cross kernel. The "distance from theory" diagnostic measures how
close a kernel is to the class-block-plus-identity shape that the analytic
approximation assumes.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import _rng
from .evaluation import ErrorReport, evaluate_scores
from .instances import Dataset, load_dataset_csv
from .margin import MarginProblem, solve_kernel

__all__ = [
    "load_features",
    "subsample_profile",
    "rbf_kernel",
    "rbf_cross",
    "distance_from_theory",
    "kernel_classify",
]


def load_features(path: str | Path, c: int | None = None, normalize: bool = False) -> Dataset:
    """Load a feature CSV, optionally scaling every row to unit norm.

    Validation (header shape, per-row arity, label range) happens in the
    CSV reader; rows are kept in file order.
    """
    ds = load_dataset_csv(path, c=c)
    if not normalize:
        return ds
    norms = np.linalg.norm(ds.X, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("cannot normalize zero feature rows")
    return Dataset(ds.X / norms, ds.y, c=ds.c)


def subsample_profile(dataset: Dataset, sizes, seed: int) -> Dataset:
    """Deterministic per-class subsample without replacement."""
    sizes = [int(v) for v in sizes]
    if len(sizes) != dataset.c:
        raise ValueError(f"profile needs {dataset.c} sizes, got {len(sizes)}")
    picks = []
    for k, n_k in enumerate(sizes):
        rows = dataset.class_indices(k)
        if n_k < 1 or n_k > rows.size:
            raise ValueError(
                f"class {k + 1} has {rows.size} rows, cannot take {n_k}"
            )
        g = _rng.substream(seed, _rng.SUBSAMPLE, k)
        picks.append(np.sort(g.choice(rows, size=n_k, replace=False)))
    order = np.concatenate(picks)
    return Dataset(dataset.X[order], dataset.y[order], c=dataset.c)


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    aa = np.sum(A * A, axis=1)[:, None]
    bb = np.sum(B * B, axis=1)[None, :]
    return np.maximum(aa + bb - 2.0 * (A @ B.T), 0.0)


def rbf_kernel(X: np.ndarray, zeta: float) -> np.ndarray:
    """K[i, j] = exp(-||x_i - x_j||^2 / (2 zeta^2)); unit diagonal."""
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    K = np.exp(-_sq_dists(X, X) / (2.0 * zeta * zeta))
    np.fill_diagonal(K, 1.0)
    return 0.5 * (K + K.T)


def rbf_cross(X_train: np.ndarray, X_test: np.ndarray, zeta: float) -> np.ndarray:
    """Train-by-test RBF cross kernel (rows index training points)."""
    if not zeta > 0:
        raise ValueError("zeta must be positive")
    return np.exp(-_sq_dists(X_train, X_test) / (2.0 * zeta * zeta))


def distance_from_theory(K: np.ndarray, labels: np.ndarray) -> float:
    """Frobenius residual of the best fit K ~ a1 * B + a2 * I.

    B is the same-class indicator matrix. Solved by the 2 x 2 normal
    equations over span{B, I}; when every class is a singleton B equals I
    and the fit degenerates to a1 = 0.
    """
    K = np.asarray(K, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = labels.size
    if K.shape != (n, n):
        raise ValueError("kernel and labels disagree")
    B = (labels[:, None] == labels[None, :]).astype(np.float64)
    bb = float(np.sum(B))          # <B, B>: B is 0/1
    bi = float(n)                  # <B, I>: diagonal of B is all ones
    kb = float(np.sum(K * B))
    ki = float(np.trace(K))
    if bb == bi:  # B == I (all classes singletons)
        a1, a2 = 0.0, ki / n
    else:
        gram = np.array([[bb, bi], [bi, float(n)]])
        a1, a2 = np.linalg.solve(gram, np.array([kb, ki]))
    resid = K - a1 * B - a2 * np.eye(n)
    return float(np.linalg.norm(resid))


def kernel_classify(
    train: Dataset,
    test: Dataset,
    zeta: float,
    problem: MarginProblem,
) -> ErrorReport:
    """RBF margin classification: Gram solve, cross-kernel scoring, metrics."""
    if train.d != test.d:
        raise ValueError("train and test dimensions disagree")
    sol = solve_kernel(rbf_kernel(train.X, zeta), train.y, problem)
    scores = rbf_cross(train.X, test.X, zeta).T @ sol.beta + sol.bias[None, :]
    return evaluate_scores(scores, test.y, test.c)
