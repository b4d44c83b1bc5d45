"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def init(cls, n: int, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, lr, beta1, beta2, eps)

    def to_dict(self) -> dict:
        return {
            "m": self.m.tolist(), "v": self.v.tolist(), "t": self.t,
            "lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps,
        }

    @classmethod
    def from_dict(cls, d) -> "AdamState":
        return cls(np.asarray(d["m"], float), np.asarray(d["v"], float), int(d["t"]),
                   d["lr"], d["beta1"], d["beta2"], d["eps"])


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray):
    """One descent step on ``params`` along ``grad``. Returns (state, params); inputs untouched."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError(f"length mismatch: params {params.shape}, grad {grad.shape}, state {state.m.shape}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    mhat = m / (1.0 - state.beta1**t)
    vhat = v / (1.0 - state.beta2**t)
    new = params - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return AdamState(m, v, t, state.lr, state.beta1, state.beta2, state.eps), new
