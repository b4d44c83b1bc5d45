"""Numeric helpers shared by every other module.

RBF kernel with its first derivatives, the median bandwidth heuristic,
a PSD matrix square root, and a seeded random stream.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ALGORITHM = "PCG64"


class DimensionError(ValueError):
    pass


def as_matrix(X) -> np.ndarray:
    """Return ``X`` as a finite 2-D float64 array (1-D input becomes one column)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DimensionError(f"expected a 2-D array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix contains non-finite entries")
    return X


@dataclass(frozen=True)
class RbfKernel:
    """k(x, y) = exp(-|x - y|^2 / (2 h^2))."""

    bandwidth: float

    def __post_init__(self):
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")

    @classmethod
    def from_data(cls, X) -> "RbfKernel":
        return cls(median_heuristic(X))

    def gram(self, X, Y) -> np.ndarray:
        return np.exp(-pairwise_sq_dists(X, Y) / (2.0 * self.bandwidth**2))


def _vec_pair(x, y):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def rbf_eval(x, y, k: RbfKernel) -> float:
    x, y = _vec_pair(x, y)
    r2 = float(np.sum((x - y) ** 2))
    return float(np.exp(-r2 / (2.0 * k.bandwidth**2)))


def rbf_grad_x(x, y, k: RbfKernel) -> np.ndarray:
    x, y = _vec_pair(x, y)
    return -(x - y) / k.bandwidth**2 * rbf_eval(x, y, k)


def rbf_grad_y(x, y, k: RbfKernel) -> np.ndarray:
    x, y = _vec_pair(x, y)
    return (x - y) / k.bandwidth**2 * rbf_eval(x, y, k)


def rbf_cross_trace(x, y, k: RbfKernel) -> float:
    """tr(d^2 k / dx dy^T)."""
    x, y = _vec_pair(x, y)
    h2 = k.bandwidth**2
    r2 = float(np.sum((x - y) ** 2))
    return (x.size / h2 - r2 / h2**2) * rbf_eval(x, y, k)


def pairwise_sq_dists(X, Y) -> np.ndarray:
    X = as_matrix(X)
    Y = as_matrix(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"column mismatch: {X.shape[1]} vs {Y.shape[1]}")
    d2 = np.sum(X**2, 1)[:, None] + np.sum(Y**2, 1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(d2, 0.0)


def median_heuristic(X) -> float:
    """Median pairwise distance over distinct pairs, divided by sqrt(2)."""
    X = as_matrix(X)
    n = X.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least 2 rows")
    iu = np.triu_indices(n, k=1)
    diff = X[iu[0]] - X[iu[1]]
    med = float(np.median(np.sqrt(np.sum(diff**2, axis=1))))
    if med <= 0.0:
        # all points coincide; any positive bandwidth is equally valid
        return 1.0
    return med / np.sqrt(2.0)


def psd_sqrt(M, sym_tol: float = 1e-10, neg_tol: float = 1e-6) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix via eigendecomposition."""
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"expected a square matrix, got {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if np.max(np.abs(M - M.T), initial=0.0) > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    if w.size and w.min() < -neg_tol * scale:
        raise ValueError(f"matrix is not PSD (eigenvalue {w.min():.3e})")
    w = np.where(w < 1e-10 * scale, 0.0, w)
    S = (V * np.sqrt(w)) @ V.T
    return 0.5 * (S + S.T)


class RngStream:
    """A named, seeded random stream. One consumer per stream."""

    def __init__(self, seed: int, algorithm: str = ALGORITHM, *, _seedseq=None):
        if algorithm != ALGORITHM:
            raise ValueError(f"unsupported RNG algorithm {algorithm!r}")
        self.seed = int(seed)
        self.algorithm = algorithm
        self._seedseq = _seedseq if _seedseq is not None else np.random.SeedSequence(self.seed)
        self.gen = np.random.Generator(np.random.PCG64(self._seedseq))

    def child(self, name: str) -> "RngStream":
        """Independent sub-stream keyed by ``name``; same (seed, name) gives the same stream."""
        key = [int(b) for b in name.encode()]
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(self._seedseq.spawn_key) + tuple(key))
        return RngStream(self.seed, self.algorithm, _seedseq=ss)

    def normal(self, size) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self.gen.uniform(low, high, size)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self.gen.integers(low, high, size)

    def choice(self, n, size, replace=True) -> np.ndarray:
        return self.gen.choice(n, size=size, replace=replace)

    def permutation(self, n) -> np.ndarray:
        return self.gen.permutation(n)

    def get_state(self) -> dict:
        return self.gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self.gen.bit_generator.state = state
