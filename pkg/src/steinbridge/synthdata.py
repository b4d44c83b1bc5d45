"""Gaussian-mixture benchmarks (Two-Circle, Two-Spiral) and data ablations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

TWO_CIRCLE_VARIANCE = 0.2
TWO_SPIRAL_VARIANCE = 0.5
NOISE_SCALE = 2.0
NOISE_GRID = (40, 100, 160, 300, 400, 600, 800, 1000)
SUBSAMPLE_GRID = (100, 200, 300, 500, 700, 1000, 2000)


@dataclass(frozen=True)
class GaussianMixture:
    """Uniformly weighted mixture of isotropic Gaussians with a shared variance."""

    means: np.ndarray
    variance: float

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "means", means)
        if means.shape[0] < 1:
            raise ValueError("mixture needs at least one component")
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    def log_density(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        d2 = np.sum((X[:, None, :] - self.means[None, :, :]) ** 2, axis=2)
        log_norm = -0.5 * self.dim * np.log(2 * np.pi * self.variance) - np.log(self.n_components)
        return logsumexp(-0.5 * d2 / self.variance, axis=1) + log_norm

    def density(self, X) -> np.ndarray:
        return np.exp(self.log_density(X))

    def sample(self, n: int, rng) -> np.ndarray:
        return sample(self, n, rng)


def two_circle_mixture() -> GaussianMixture:
    inner = [(4 * np.cos(2 * np.pi * k / 8), 4 * np.sin(2 * np.pi * k / 8)) for k in range(1, 9)]
    outer = [(8 * np.cos(2 * np.pi * k / 16), 8 * np.sin(2 * np.pi * k / 16)) for k in range(1, 17)]
    return GaussianMixture(np.array(inner + outer), TWO_CIRCLE_VARIANCE)


def spiral_parameter() -> np.ndarray:
    return 2 * np.pi / 3 + np.linspace(0.0, 0.5, 50) * 2 * np.pi


def two_spiral_mixture() -> GaussianMixture:
    c = spiral_parameter()
    arm1 = np.stack([-c * np.cos(c), c * np.sin(c)], axis=1)
    arm2 = np.stack([c * np.cos(c), -c * np.sin(c)], axis=1)
    return GaussianMixture(np.concatenate([arm1, arm2]), TWO_SPIRAL_VARIANCE)


def sample(m: GaussianMixture, n: int, rng) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    comp = rng.integers(0, m.n_components, size=n)
    return m.means[comp] + m.std * rng.normal((n, m.dim))


def density(m: GaussianMixture, X) -> np.ndarray:
    return m.density(X)


def add_noise(X, n_noise: int, rng, scale: float = NOISE_SCALE) -> np.ndarray:
    """Append ``n_noise`` draws from N(0, scale * I) and shuffle the rows.

    ``scale`` is a covariance multiplier, so each axis has std sqrt(scale).
    """
    X = np.asarray(X, dtype=np.float64)
    if n_noise < 0:
        raise ValueError("n_noise must be non-negative")
    noise = np.sqrt(scale) * rng.normal((n_noise, X.shape[1]))
    out = np.concatenate([X, noise])
    return out[rng.permutation(out.shape[0])]


def subsample(X, n: int, rng) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if n > X.shape[0] or n < 0:
        raise ValueError(f"cannot draw {n} rows from {X.shape[0]}")
    return X[rng.choice(X.shape[0], n, replace=False)]


MIXTURES = {"two-circle": two_circle_mixture, "two-spiral": two_spiral_mixture}


def get_mixture(name: str) -> GaussianMixture:
    try:
        return MIXTURES[name]()
    except KeyError:
        raise ValueError(f"unknown dataset {name!r}; choose from {sorted(MIXTURES)}") from None
