"""Problem instances and the Gaussian-mixture data generator.

An instance fixes the class count c, ambient dimension d, per-class training
sizes N_i and signal strengths s_i. The generative model places the class
mean mu_i on the i-th basis direction (or a random orthonormal frame) with
squared norm s_i / sqrt(d), and adds isotropic noise of variance 1/d per
coordinate. The effective per-class kernel scale is

    xi_i = s_i / sqrt(d) + 1 / N_i,

which drives every closed-form expression downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _rng

__all__ = [
    "ProblemInstance",
    "Dataset",
    "make_instance",
    "sample_train",
    "sample_test",
    "kernel_matrix",
    "expected_kernel",
    "kernel_concentration",
    "save_dataset_csv",
    "load_dataset_csv",
]


@dataclass(frozen=True)
class ProblemInstance:
    """Immutable description of one classification problem.

    Labels are 0-based internally; the CSV interchange format is 1-based.
    """

    c: int
    d: int
    N: tuple[int, ...]
    s: tuple[float, ...]
    seed: int
    random_frame: bool = False

    def __post_init__(self) -> None:
        if self.c < 2:
            raise ValueError(f"need at least 2 classes, got c={self.c}")
        if self.d < self.c:
            raise ValueError(f"dimension d={self.d} must be >= class count c={self.c}")
        if len(self.N) != self.c or len(self.s) != self.c:
            raise ValueError("N and s must have length c")
        if any(n < 1 for n in self.N):
            raise ValueError(f"per-class sizes must be positive, got {self.N}")
        if any(not (v > 0) for v in self.s):
            raise ValueError(f"signal strengths must be positive, got {self.s}")

    @property
    def sigma2(self) -> float:
        """Per-coordinate noise variance, 1/d."""
        return 1.0 / self.d

    @property
    def n_train(self) -> int:
        return int(sum(self.N))

    @property
    def sizes(self) -> np.ndarray:
        return np.asarray(self.N, dtype=np.float64)

    @property
    def signals(self) -> np.ndarray:
        return np.asarray(self.s, dtype=np.float64)

    @property
    def mu_norm_sq(self) -> np.ndarray:
        """Squared mean norms s_i / sqrt(d)."""
        return self.signals / math.sqrt(self.d)

    @property
    def xi(self) -> np.ndarray:
        """Effective kernel scales s_i/sqrt(d) + 1/N_i."""
        return self.mu_norm_sq + 1.0 / self.sizes

    def frame(self) -> np.ndarray:
        """Orthonormal d x c frame carrying the class means.

        The first c standard basis vectors by default; a seeded random
        orthonormal frame when random_frame is set. Results are identical
        in distribution either way (rotation invariance).
        """
        if not self.random_frame:
            F = np.zeros((self.d, self.c))
            F[: self.c, :] = np.eye(self.c)
            return F
        g = _rng.substream(self.seed, _rng.FRAME)
        Q, R = np.linalg.qr(g.standard_normal((self.d, self.c)))
        return Q * np.sign(np.diag(R))

    def means(self) -> np.ndarray:
        """Class means as a d x c matrix, column i = mu_i."""
        return self.frame() * np.sqrt(self.mu_norm_sq)


def make_instance(
    c: int,
    d: int,
    N: tuple[int, ...] | list[int],
    s: tuple[float, ...] | list[float],
    seed: int,
    random_frame: bool = False,
) -> ProblemInstance:
    """Validate parameters and build a ProblemInstance."""
    return ProblemInstance(
        c=int(c),
        d=int(d),
        N=tuple(int(n) for n in N),
        s=tuple(float(v) for v in s),
        seed=int(seed),
        random_frame=bool(random_frame),
    )


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with 0-based labels, rows grouped arbitrarily."""

    X: np.ndarray
    y: np.ndarray
    c: int = field(default=0)

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be n x d and y a matching label vector")
        if X.shape[0] == 0:
            raise ValueError("empty dataset")
        c = int(self.c) if self.c else int(y.max()) + 1
        if y.min() < 0 or y.max() >= c:
            raise ValueError("labels out of range")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "c", c)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def class_indices(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.y == k)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.c)

    def class_sums(self) -> np.ndarray:
        """Per-class feature sums as a c x d matrix (row i = xbar_i)."""
        out = np.zeros((self.c, self.d))
        np.add.at(out, self.y, self.X)
        return out


def _sample(instance: ProblemInstance, counts: np.ndarray, purpose: int, seed: int) -> Dataset:
    mu = instance.means()  # d x c
    sigma = math.sqrt(instance.sigma2)
    blocks = []
    labels = []
    for k, n_k in enumerate(counts):
        g = _rng.substream(seed, purpose, k)
        noise = g.standard_normal((int(n_k), instance.d))
        blocks.append(mu[:, k][None, :] + sigma * noise)
        labels.append(np.full(int(n_k), k, dtype=np.int64))
    return Dataset(np.vstack(blocks), np.concatenate(labels), c=instance.c)


def sample_train(instance: ProblemInstance) -> Dataset:
    """Draw the training set: N_i rows for class i, grouped by class.

    Deterministic in (instance, instance.seed); each class draws from its
    own noise stream.
    """
    return _sample(instance, np.asarray(instance.N), _rng.TRAIN_NOISE, instance.seed)


def sample_test(instance: ProblemInstance, per_class: int, seed: int) -> Dataset:
    """Draw a balanced test set with per_class rows for every class."""
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    counts = np.full(instance.c, int(per_class))
    return _sample(instance, counts, _rng.TEST_NOISE, seed)


def kernel_matrix(dataset: Dataset) -> np.ndarray:
    """Gram matrix K[i, j] = <x_i, x_j>."""
    K = dataset.X @ dataset.X.T
    return 0.5 * (K + K.T)


def expected_kernel(instance: ProblemInstance) -> np.ndarray:
    """Expectation of the training Gram matrix under the mixture model.

    E K[i, j] = ||mu_{y_i}||^2 1{y_i = y_j} + sigma^2 d 1{i = j}, laid out
    for the canonical class-grouped row order of sample_train.
    """
    labels = np.repeat(np.arange(instance.c), instance.N)
    same = labels[:, None] == labels[None, :]
    EK = np.where(same, instance.mu_norm_sq[labels][None, :], 0.0)
    EK[np.diag_indices_from(EK)] += instance.sigma2 * instance.d
    return EK


def kernel_concentration(dataset: Dataset, instance: ProblemInstance) -> float:
    """Operator norm of K - E K, a concentration diagnostic.

    E K is built from the dataset's own labels, so partial datasets work.
    Shrinks like sqrt(N/d) as the dimension grows, which is what makes the
    expected-kernel approximation accurate in high dimension.
    """
    if dataset.c != instance.c or dataset.d != instance.d:
        raise ValueError("dataset and instance shapes disagree")
    labels = dataset.y
    same = labels[:, None] == labels[None, :]
    EK = np.where(same, instance.mu_norm_sq[labels][None, :], 0.0)
    EK[np.diag_indices_from(EK)] += instance.sigma2 * instance.d
    diff = kernel_matrix(dataset) - EK
    eig = np.linalg.eigvalsh(diff)
    return float(np.max(np.abs(eig)))


# CSV interchange: header "label,f0,...,f{d-1}", 1-based integer labels,
# floats at 17 significant digits (round-trip exact for float64).


def save_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    path = Path(path)
    with path.open("w") as fh:
        fh.write("label," + ",".join(f"f{j}" for j in range(dataset.d)) + "\n")
        for i in range(dataset.n):
            row = ",".join(f"{v:.17g}" for v in dataset.X[i])
            fh.write(f"{dataset.y[i] + 1},{row}\n")


def load_dataset_csv(path: str | Path, c: int | None = None) -> Dataset:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if not cols or cols[0] != "label" or any(
            name != f"f{j}" for j, name in enumerate(cols[1:])
        ):
            raise ValueError(f"{path}: malformed header {header!r}")
        d = len(cols) - 1
        if d < 1:
            raise ValueError(f"{path}: no feature columns")
        labels = []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != d + 1:
                raise ValueError(
                    f"{path}:{lineno}: expected {d + 1} fields, got {len(parts)}"
                )
            try:
                lab = int(parts[0])
                vals = [float(v) for v in parts[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: unparsable row") from exc
            if lab < 1:
                raise ValueError(f"{path}:{lineno}: labels are 1-based, got {lab}")
            labels.append(lab - 1)
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    y = np.asarray(labels, dtype=np.int64)
    n_classes = int(y.max()) + 1 if c is None else int(c)
    if y.max() >= n_classes:
        raise ValueError(f"{path}: label {y.max() + 1} exceeds class count {n_classes}")
    return Dataset(np.asarray(rows, dtype=np.float64), y, c=n_classes)
