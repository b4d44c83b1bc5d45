"""Statistical distances used by the trainer.

Each estimator has a graph-building ``*_t`` form (used for training) and a
plain-array wrapper.  The kernel Stein discrepancy is written out in the
score form: s_p(x) = grad_x log p(x) = -grad_x E(x).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import engine as ad
from .autodiff.engine import Tensor
from .numkit import RbfKernel

JS_CLAMP = 1e-7


@dataclass(frozen=True)
class GpConfig:
    weight: float = 10.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("gradient-penalty weight must be non-negative")


# --- kernel Stein discrepancy ----------------------------------------------

def ksd_t(S: Tensor, X: Tensor, bandwidth: float, vstat: bool = False) -> Tensor:
    """Mean of u_p(x_i, x_j) over ordered pairs i != j (or all pairs if ``vstat``)."""
    S, X = ad.tensor(S), ad.tensor(X)
    n, d = X.shape
    if S.shape != (n, d):
        raise ValueError(f"score shape {S.shape} does not match samples {X.shape}")
    if n < 2 and not vstat:
        raise ValueError("KSD U-statistic needs at least 2 samples")
    h2 = float(bandwidth) ** 2
    diff = X.reshape(n, 1, d) - X.reshape(1, n, d)
    D = (diff * diff).sum(axis=2)
    K = ad.exp(D * (-0.5 / h2))
    ss = S @ S.T
    # s_i . grad_{x'} k  and  s_j . grad_x k, both carrying a factor k
    s_dk = (S.reshape(n, 1, d) * diff).sum(axis=2) * (1.0 / h2)
    dk_s = (S.reshape(1, n, d) * diff).sum(axis=2) * (-1.0 / h2)
    tr = D * (-1.0 / h2**2) + d / h2
    M = (ss + s_dk + dk_s + tr) * K
    if vstat:
        return M.sum() * (1.0 / n**2)
    mask = 1.0 - np.eye(n)
    return (M * mask).sum() * (1.0 / (n * (n - 1)))


def ksd_u_stat(score, X, k: RbfKernel, vstat: bool = False) -> float:
    score = np.asarray(score, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X, score = X[:, None], score.reshape(-1, 1)
    with ad.no_grad():
        return float(ksd_t(score, X, k.bandwidth, vstat).data)


# --- neural Stein discrepancy -------------------------------------------------

def stein_operator_t(S: Tensor, F: Tensor, divF: Tensor) -> Tensor:
    """Per-row A_p f(x) = s_p(x) . f(x) + div f(x)."""
    return (S * F).sum(axis=1) + divF


def neural_stein_obj(score, f_values, f_divergence) -> float:
    score = np.atleast_2d(np.asarray(score, dtype=np.float64))
    f_values = np.atleast_2d(np.asarray(f_values, dtype=np.float64))
    f_divergence = np.asarray(f_divergence, dtype=np.float64).reshape(-1)
    if score.shape != f_values.shape or f_divergence.shape[0] != score.shape[0]:
        raise ValueError("score, critic values and divergences disagree in shape")
    return float(np.mean(np.sum(score * f_values, axis=1) + f_divergence))


def divergence_t(F: Tensor, X: Tensor, create_graph=True, allow_piecewise=False) -> Tensor:
    """Exact trace of dF/dX per row using one input-gradient pass per output column."""
    n, d = X.shape
    if F.shape != (n, d):
        raise ValueError(f"critic output {F.shape} is not {n}x{d}")
    total = None
    for j in range(d):
        gj = ad.grad(F[:, j].sum(), X, create_graph=create_graph, allow_piecewise=allow_piecewise)
        col = gj[:, j]
        total = col if total is None else total + col
    return total


def divergence_of_critic(f, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    Xt = Tensor(X, requires_grad=True)
    F = f.value_t(f.params, Xt)
    return divergence_t(F, Xt, create_graph=False, allow_piecewise=True).data


# --- Wasserstein dual with gradient penalty ---------------------------------

def gradient_penalty_t(critic, leaves, X_hat: np.ndarray) -> Tensor:
    Xh = Tensor(X_hat, requires_grad=True)
    out = critic.value_t(leaves, Xh)
    g = ad.grad(out.sum(), Xh, create_graph=True, allow_piecewise=True)
    norm = ad.sqrt((g * g).sum(axis=1) + 1e-12)
    return ((norm - 1.0) ** 2).mean()


def interpolates(X_real, X_fake, rng) -> np.ndarray:
    eps = rng.uniform(0.0, 1.0, (X_real.shape[0], 1))
    return eps * X_real + (1.0 - eps) * X_fake


def wasserstein_critic_loss_t(critic, leaves, X_real, X_fake, gp: GpConfig, X_hat=None) -> Tensor:
    """mean d(x) - mean d(x~) - weight * GP (to be maximized)."""
    loss = critic.value_t(leaves, X_real).mean() - critic.value_t(leaves, X_fake).mean()
    if gp.weight > 0:
        loss = loss - gp.weight * gradient_penalty_t(critic, leaves, X_hat)
    return loss


def wasserstein_losses(critic, X_real, X_fake, gp: GpConfig, rng):
    """Returns (critic_loss, generator_term) as floats."""
    X_real = np.asarray(X_real, dtype=np.float64)
    X_fake = np.asarray(X_fake, dtype=np.float64)
    if X_real.shape[0] == 0 or X_fake.shape[0] == 0:
        raise ValueError("empty batch")
    if X_real.shape[1] != X_fake.shape[1]:
        raise ValueError("real and fake batches differ in width")
    X_hat = interpolates(X_real, X_fake, rng) if gp.weight > 0 else None
    leaves = [Tensor(a) for a in critic.params.arrays]
    loss = wasserstein_critic_loss_t(critic, leaves, X_real, X_fake, gp, X_hat)
    gen = -float(np.mean(critic(X_fake)))
    return float(loss.data), gen


# --- Jensen-Shannon / vanilla GAN -------------------------------------------

def js_disc_loss_t(disc, leaves, X_real, X_fake) -> Tensor:
    d_real = ad.clip(disc.value_t(leaves, X_real), JS_CLAMP, 1.0 - JS_CLAMP)
    d_fake = ad.clip(disc.value_t(leaves, X_fake), JS_CLAMP, 1.0 - JS_CLAMP)
    return ad.log(d_real).mean() + ad.log(1.0 - d_fake).mean()


def js_gen_loss_t(d_fake: Tensor) -> Tensor:
    """Non-saturating generator loss -mean log D(x~)."""
    return -ad.log(ad.clip(d_fake, JS_CLAMP, 1.0 - JS_CLAMP)).mean()


def js_losses_from_probs(p_real, p_fake):
    p_real = np.clip(np.asarray(p_real, dtype=np.float64), JS_CLAMP, 1.0 - JS_CLAMP)
    p_fake = np.clip(np.asarray(p_fake, dtype=np.float64), JS_CLAMP, 1.0 - JS_CLAMP)
    disc = float(np.mean(np.log(p_real)) + np.mean(np.log1p(-p_fake)))
    gen = float(-np.mean(np.log(p_fake)))
    return disc, gen


def js_losses(discriminator, X_real, X_fake):
    if discriminator.mode != "js":
        raise ValueError("js_losses needs a critic in js mode")
    return js_losses_from_probs(discriminator(X_real), discriminator(X_fake))
