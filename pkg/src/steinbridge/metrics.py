"""Sample-quality and density-estimation metrics for the mixture benchmarks."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from .numkit import RbfKernel, median_heuristic, pairwise_sq_dists
from .synthdata import GaussianMixture

MEDIAN_MAX_ROWS = 1000
FLOOR = 1e-12


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    resolution: int = 300

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(float(v) for v in self.lo))
        object.__setattr__(self, "hi", tuple(float(v) for v in self.hi))
        if len(self.lo) != len(self.hi) or any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError("grid bounds need lo < hi on every axis")
        if self.resolution < 2:
            raise ValueError("grid resolution must be >= 2")

    @classmethod
    def square(cls, half_width: float, resolution: int = 300) -> "GridSpec":
        return cls((-half_width, -half_width), (half_width, half_width), resolution)

    def points(self) -> np.ndarray:
        axes = [np.linspace(a, b, self.resolution) for a, b in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


# means' extent plus a 6-std margin, rounded up
DEFAULT_GRIDS = {"two-circle": GridSpec.square(11.0), "two-spiral": GridSpec.square(10.0)}

# distance thresholds read with sigma as the variance value; "std" reads it as sqrt(variance)
HSR_THRESHOLDS = {
    "variance": {"two-circle": 0.2, "two-spiral": 2.5},
    "std": {"two-circle": 0.2**0.5, "two-spiral": 5.0 * 0.5**0.5},
}


def default_hsr_threshold(dataset: str, reading: str = "variance") -> float:
    try:
        return HSR_THRESHOLDS[reading][dataset]
    except KeyError:
        raise ValueError(f"no default hsr threshold for {dataset!r} under reading {reading!r}") from None


def grid_covers(g: GridSpec, m: GaussianMixture, n_std: float = 6.0) -> bool:
    lo = m.means.min(axis=0) - n_std * m.std
    hi = m.means.max(axis=0) + n_std * m.std
    return bool(np.all(np.asarray(g.lo) <= lo) and np.all(np.asarray(g.hi) >= hi))


@dataclass(frozen=True)
class AucSpec:
    negatives_per_center: int = 10
    radius: float | None = None  # None: 3 * mixture std

    def __post_init__(self):
        if self.negatives_per_center < 1:
            raise ValueError("need at least one negative per center")
        if self.radius is not None and not self.radius > 0:
            raise ValueError("radius must be positive")


def default_kernel(X, Y) -> RbfKernel:
    """Median heuristic on the pooled sample (evenly thinned to at most 1000 rows)."""
    pooled = np.concatenate([np.atleast_2d(X), np.atleast_2d(Y)])
    if pooled.shape[0] > MEDIAN_MAX_ROWS:
        idx = np.linspace(0, pooled.shape[0] - 1, MEDIAN_MAX_ROWS).round().astype(int)
        pooled = pooled[idx]
    return RbfKernel(median_heuristic(pooled))


def mmd(X, Y, k: RbfKernel | None = None) -> float:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[0] < 1 or Y.shape[0] < 1:
        raise ValueError("mmd needs non-empty samples")
    if k is None:
        k = default_kernel(X, Y)
    c = -0.5 / k.bandwidth**2
    kxx = np.exp(c * pairwise_sq_dists(X, X)).mean()
    kyy = np.exp(c * pairwise_sq_dists(Y, Y)).mean()
    kxy = np.exp(c * pairwise_sq_dists(X, Y)).mean()
    return float(np.sqrt(max(0.0, kxx - 2.0 * kxy + kyy)))


def nearest_mean_distance(X, m: GaussianMixture) -> np.ndarray:
    return np.sqrt(pairwise_sq_dists(X, m.means).min(axis=1))


def hsr(X, m: GaussianMixture, threshold: float) -> float:
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    return float(np.mean(nearest_mean_distance(X, m) < threshold))


def modes_covered(X, m: GaussianMixture, radius: float) -> np.ndarray:
    """Boolean per component: some sample lies within ``radius`` of its mean."""
    return np.sqrt(pairwise_sq_dists(m.means, X).min(axis=1)) < radius


def _log_density_fn(est):
    if isinstance(est, GaussianMixture):
        return est.log_density
    if hasattr(est, "energy"):
        return lambda X: -est.energy(X)
    if callable(est):
        return est
    raise TypeError(f"cannot get a density from {type(est).__name__}")


def _grid_log_probs(logd: np.ndarray) -> np.ndarray:
    if not np.any(np.isfinite(logd)) or np.all(logd == -np.inf):
        raise ValueError("estimated density has no mass on the grid")
    return logd - logsumexp(logd)


def kl_js(logp: np.ndarray, logq: np.ndarray):
    """KL(p||q) and JS(p, q) for normalized log-probability vectors on a grid."""
    p, q = np.exp(logp), np.exp(logq)
    lp = np.log(np.maximum(p, FLOOR))
    lq = np.log(np.maximum(q, FLOOR))
    kld = float(np.sum(p * (lp - lq)))
    mix = 0.5 * (p + q)
    lm = np.log(np.maximum(mix, FLOOR))
    jsd = float(0.5 * np.sum(p * (lp - lm)) + 0.5 * np.sum(q * (lq - lm)))
    return kld, jsd


def grid_divergences(true_density, estimator, g: GridSpec):
    """(KL(true || est), JS(true, est)) with both densities normalized over the grid."""
    pts = g.points()
    logp = _grid_log_probs(_log_density_fn(true_density)(pts))
    logq = _grid_log_probs(_log_density_fn(estimator)(pts))
    return kl_js(logp, logq)


def auc_from_scores(pos, neg) -> float:
    """Mann-Whitney AUC; ties count one half."""
    pos, neg = np.asarray(pos, dtype=np.float64), np.asarray(neg, dtype=np.float64)
    ranks = rankdata(np.concatenate([pos, neg]), method="average")
    n_p, n_n = pos.size, neg.size
    return float((ranks[:n_p].sum() - n_p * (n_p + 1) / 2.0) / (n_p * n_n))


def auc_negatives(m: GaussianMixture, spec: AucSpec, rng) -> np.ndarray:
    radius = spec.radius if spec.radius is not None else 3.0 * m.std
    k, d = m.n_components, m.dim
    n = spec.negatives_per_center
    # uniform in a d-ball: direction uniform on the sphere, radius ~ R * U^(1/d)
    u = rng.normal((k * n, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, (k * n, 1)) ** (1.0 / d)
    return np.repeat(m.means, n, axis=0) + r * u


def density_auc(estimator, m: GaussianMixture, spec: AucSpec, rng) -> float:
    logd = _log_density_fn(estimator)
    neg = auc_negatives(m, spec, rng)
    return auc_from_scores(logd(m.means), logd(neg))


METRIC_COLUMNS = ("iteration", "mmd", "hsr", "kld", "jsd", "auc")
