"""Optimization-dynamics lab: 1-D toy games, bilinear games with an
affiliated variable, and projected alternate SGD on quadratic games.

All gradients here are closed-form.  Step functions are plain arithmetic,
so their state fields may be floats or equally-shaped numpy arrays (one
entry per independent run), which keeps parameter sweeps vectorized.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numkit import psd_sqrt

BRIDGE_OPTIMUM = (0.0, 1.0, -1.0)  # (psi, theta, phi)
TINY = 1e-280


@dataclass
class Toy1DState:
    psi: float
    theta: float
    phi: float = 0.0
    eta: float = 0.1
    lam1: float = 1.0
    lam2: float = 1.0

    def vector(self) -> np.ndarray:
        return np.array([self.psi, self.theta, self.phi], dtype=np.float64)


@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, k)
    columns: tuple
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.states.shape[0]

    def rows(self):
        T = len(self)
        for t in range(T):
            row = {"iteration": t}
            row.update({c: float(v) for c, v in zip(self.columns, self.states[t])})
            for k, v in self.diagnostics.items():
                row[k] = float(v[t]) if t < len(v) else float("nan")
            yield row


# --- 1-D games -------------------------------------------------------------

def wgan_1d_step(s: Toy1DState) -> Toy1DState:
    """Alternate SGD on psi - psi*theta: theta descends first, then psi ascends."""
    return reg_1d_step(s, 0.0)


def reg_1d_step(s: Toy1DState, lam) -> Toy1DState:
    """Alternate SGD on psi - psi*theta - lam*(theta^2 - theta)."""
    theta = s.theta - s.eta * (-s.psi - lam * (2.0 * s.theta - 1.0))
    psi = s.psi + s.eta * (1.0 - theta)
    return replace(s, psi=psi, theta=theta)


def bridge_grads(psi, theta, phi, lam1, lam2):
    """Partial derivatives of psi - psi*theta + lam1/2 (1+phi)^2 + lam2/2 (theta+phi)^2."""
    d_psi = 1.0 - theta
    d_theta = -psi + lam2 * (theta + phi)
    d_phi = lam1 * (1.0 + phi) + lam2 * (theta + phi)
    return d_psi, d_theta, d_phi


def bridge_1d_step(s: Toy1DState, order: str = "proof") -> Toy1DState:
    """One three-block alternate step (psi ascends, phi and theta descend).

    ``order="proof"`` updates psi, then phi, then theta (each block sees the
    freshest values); ``order="main"`` updates phi, then theta, then psi.
    """
    eta, l1, l2 = s.eta, s.lam1, s.lam2
    psi, theta, phi = s.psi, s.theta, s.phi
    if order == "proof":
        psi = psi + eta * (1.0 - theta)
        phi = phi - eta * (l1 * (1.0 + phi) + l2 * (theta + phi))
        theta = theta - eta * (-psi + l2 * (theta + phi))
    elif order == "main":
        phi = phi - eta * (l1 * (1.0 + phi) + l2 * (theta + phi))
        theta = theta - eta * (-psi + l2 * (theta + phi))
        psi = psi + eta * (1.0 - theta)
    else:
        raise ValueError(f"unknown update order {order!r}")
    return replace(s, psi=psi, theta=theta, phi=phi)


def reduced_1d_step(psi, phi, theta, step, alpha=1.0, phi_coeff=0.5):
    """Alternate step on theta*psi + alpha*(theta^2/2 + theta*phi + phi_coeff*phi^2).

    ``phi_coeff=1`` is the shifted bridge game at lam1 = lam2 = 1;
    ``phi_coeff=0.5`` is the per-singular-value game of the bilinear reduction.
    """
    psi = psi + step * theta
    phi = phi - step * alpha * (theta + 2.0 * phi_coeff * phi)
    theta = theta - step * (psi + alpha * (theta + phi))
    return psi, phi, theta


def bridge_sq_norm(psi, theta, phi):
    """N = psi^2 + (theta - 1)^2 + (phi + 1)^2."""
    return psi**2 + (theta - 1.0) ** 2 + (phi + 1.0) ** 2


def prop1_bound(eta):
    return 1.0 - eta**2 * (1.0 - eta) ** 2


def run_1d(step_fn, s: Toy1DState, steps: int) -> Trajectory:
    out = np.empty((steps + 1, 3))
    out[0] = s.psi, s.theta, s.phi
    for t in range(steps):
        s = step_fn(s)
        out[t + 1] = s.psi, s.theta, s.phi
    n = bridge_sq_norm(out[:, 0], out[:, 1], out[:, 2])
    dist2 = out[:, 0] ** 2 + (out[:, 1] - 1.0) ** 2
    ratio = np.full(steps + 1, np.nan)
    ok = n[:-1] > TINY
    ratio[1:][ok] = n[1:][ok] / n[:-1][ok]
    return Trajectory(out, ("psi", "theta", "phi"), {"N": n, "dist2_psi_theta": dist2, "ratio": ratio})


def va_schedule(lam0: float, half_life: int | None = 500):
    """|lambda| halved every ``half_life`` steps; ``None`` keeps it fixed."""
    if half_life is None:
        return lambda t: lam0
    return lambda t: lam0 * 0.5 ** (t // half_life)


def va_anneal_1d(psi0=1.0, theta0=0.0, eta=0.1, lam0=-0.5, half_life=500, steps=10_000, schedule=None) -> Trajectory:
    """Regularized 1-D game with a decaying |lambda| (variational annealing)."""
    sched = schedule or va_schedule(lam0, half_life)
    s = Toy1DState(psi0, theta0, 0.0, eta)
    out = np.empty((steps + 1, 2))
    lams = np.empty(steps + 1)
    out[0] = psi0, theta0
    for t in range(steps):
        lams[t] = sched(t)
        s = reg_1d_step(s, lams[t])
        out[t + 1] = s.psi, s.theta
    lams[steps] = sched(steps)
    dist = np.sqrt(out[:, 0] ** 2 + (out[:, 1] - 1.0) ** 2)
    return Trajectory(out, ("psi", "theta"), {"lambda": lams, "dist": dist})


def is_nonconvergent(dist: np.ndarray, window: int = 1000, factor: float = 0.5) -> bool:
    """True if the distance does not shrink over the final ``window`` steps.

    The tail counts as non-convergent when the distance at the end is still
    at least ``factor`` times the distance at the start of the window.
    """
    tail = np.asarray(dist)[-window - 1:]
    return bool(tail[-1] >= factor * tail[0] and tail.min() > 0.0)


def tail_rate(n: np.ndarray, floor_rel: float = 1e-20) -> float:
    """Per-step geometric rate of ``n`` over the second half of its resolvable range."""
    n = np.asarray(n, dtype=np.float64)
    good = np.nonzero(n > max(n[0] * floor_rel, TINY))[0]
    last = int(good[-1])
    first = last // 2
    if last == first:
        return float("nan")
    return float((n[last] / n[first]) ** (1.0 / (last - first)))


def verify_prop1(etas, n_starts=10, steps=1000, seed=0, order="proof", tol=1e-9, box=2.0) -> dict:
    """Simulate the bridge game at lam1 = lam2 = 1 from random starts for each eta.

    Reports, per eta, the largest single-step ratio N_{t+1}/N_t, the tail
    geometric rate, and the final distance to (0, 1, -1).  ``per_step_ok``
    checks every ratio against 1 - eta^2 (1 - eta)^2 + tol; ``rate_ok`` checks
    the tail rate against the same bound.
    """
    rng = np.random.default_rng(seed)
    etas = np.asarray(list(etas), dtype=np.float64)
    if np.any((etas <= 0) | (etas >= 1)):
        raise ValueError("every eta must lie in (0, 1)")
    starts = rng.uniform(-box, box, (n_starts, 3))
    E = np.repeat(etas, n_starts)
    S = np.tile(starts, (etas.size, 1))
    s = Toy1DState(S[:, 0].copy(), S[:, 1].copy(), S[:, 2].copy(), E, 1.0, 1.0)
    N = np.empty((steps + 1, E.size))
    N[0] = bridge_sq_norm(s.psi, s.theta, s.phi)
    for t in range(steps):
        s = bridge_1d_step(s, order)
        N[t + 1] = bridge_sq_norm(s.psi, s.theta, s.phi)
    valid = N[:-1] > TINY
    ratios = np.where(valid, N[1:] / np.where(valid, N[:-1], 1.0), 0.0)
    report = {"order": order, "steps": steps, "n_starts": n_starts, "etas": {}}
    for i, eta in enumerate(etas):
        cols = slice(i * n_starts, (i + 1) * n_starts)
        bound = prop1_bound(eta)
        r = ratios[:, cols]
        worst = np.unravel_index(int(np.argmax(r)), r.shape)
        rates = [tail_rate(N[:, j]) for j in range(cols.start, cols.stop)]
        final = float(np.sqrt(N[-1, cols].max()))
        report["etas"][f"{eta:.4g}"] = {
            "eta": float(eta),
            "bound": float(bound),
            "max_step_ratio": float(r.max()),
            "worst_step": int(worst[0]),
            "worst_start": int(worst[1]),
            "per_step_ok": bool(r.max() <= bound + tol),
            "tail_rate": float(np.nanmax(rates)),
            "rate_ok": bool(np.nanmax(rates) <= bound + tol),
            "final_distance": final,
        }
    return report


# --- bilinear games with an affiliated variable -------------------------------

@dataclass
class BilinearSystem:
    """F = theta^T A psi - b^T theta - c^T psi plus alpha/2 (theta+phi)^T B (theta+phi)."""

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    alpha: float = 1.0
    B: np.ndarray = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=np.float64))
        r = self.A.shape[0]
        if self.A.shape != (r, r):
            raise ValueError("A must be square")
        self.b = np.asarray(self.b, dtype=np.float64).reshape(r)
        self.c = np.asarray(self.c, dtype=np.float64).reshape(r)
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if np.linalg.cond(self.A) >= 1e8:
            raise np.linalg.LinAlgError("A is singular or badly conditioned")
        AAt = self.A @ self.A.T
        if self.B is None:
            self.B = psd_sqrt(AAt)
        if np.max(np.abs(self.B @ self.B - AAt)) > 1e-8 * max(1.0, np.max(np.abs(AAt))):
            raise ValueError("B does not square to A A^T")

    @property
    def r(self) -> int:
        return self.A.shape[0]

    @property
    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.A, compute_uv=False)

    def grads(self, psi, theta, phi):
        g_psi = self.A.T @ theta - self.c
        g_theta = self.A @ psi - self.b + self.alpha * self.B @ (theta + phi)
        g_phi = self.alpha * self.B @ (theta + phi)
        return g_psi, g_theta, g_phi


def bilinear_optimum(sys: BilinearSystem):
    psi = np.linalg.solve(sys.A, sys.b)
    theta = np.linalg.solve(sys.A.T, sys.c)
    phi = -theta
    if max(np.max(np.abs(sys.A @ psi - sys.b)), np.max(np.abs(sys.A.T @ theta - sys.c))) > 1e-8 * max(
        1.0, np.max(np.abs(sys.b)), np.max(np.abs(sys.c))
    ):
        raise np.linalg.LinAlgError("optimum residual too large")
    return psi, theta, phi


def bilinear_affiliated_step(sys: BilinearSystem, state, eta):
    """psi ascends with old values, phi descends with new psi, theta descends last."""
    psi, theta, phi = (np.asarray(v, dtype=np.float64) for v in state)
    psi = psi + eta * (sys.A.T @ theta - sys.c)
    phi = phi - eta * sys.alpha * sys.B @ (theta + phi)
    theta = theta - eta * (sys.A @ psi - sys.b + sys.alpha * sys.B @ (theta + phi))
    return psi, theta, phi


def run_bilinear(sys: BilinearSystem, state, eta, steps):
    out = np.empty((steps + 1, 3, sys.r))
    out[0] = state
    for t in range(steps):
        state = bilinear_affiliated_step(sys, state, eta)
        out[t + 1] = state
    return out


def svd_reduced_run(sys: BilinearSystem, state, eta, steps):
    """Simulate the r decoupled 1-D games and map them back to original coordinates."""
    U, sig, Vt = np.linalg.svd(sys.A)
    psi_s, theta_s, phi_s = bilinear_optimum(sys)
    psi, theta, phi = (np.asarray(v, dtype=np.float64) for v in state)
    p = Vt @ (psi - psi_s)
    q = U.T @ (phi - phi_s)
    th = U.T @ (theta - theta_s)
    out = np.empty((steps + 1, 3, sys.r))
    out[0] = psi, theta, phi
    for t in range(steps):
        p, q, th = reduced_1d_step(p, q, th, eta * sig, sys.alpha, 0.5)
        out[t + 1] = psi_s + Vt.T @ p, theta_s + U @ th, phi_s + U @ q
    return out


def affiliated_rate_readings(sys: BilinearSystem, eta: float) -> dict:
    """(1 - e1 + e2^2)(1 + e2 - e1^2) under both printed assignments of (e1, e2)."""
    s = sys.singular_values
    smin, smax = float(s.min()), float(s.max())

    def rate(e1, e2):
        return (1 - e1 + e2**2) * (1 + e2 - e1**2)

    return {
        "statement": rate(eta * smin, eta * smax),  # e1 = eta*s_min, e2 = eta*s_max
        "proof": rate(eta * smax, eta * smin),  # e1 = eta*s_max, e2 = eta*s_min
    }


def verify_thm4(sys: BilinearSystem, eta: float, steps: int = 20_000, seed: int = 0, start=None) -> dict:
    """Run affiliated alternate SGD and compare its tail contraction with both rate readings."""
    if eta * sys.singular_values.max() >= 1:
        raise ValueError("need eta * sigma_max < 1")
    opt = bilinear_optimum(sys)
    if start is None:
        rng = np.random.default_rng(seed)
        start = tuple(o + rng.uniform(-1, 1, sys.r) for o in opt)
    traj = run_bilinear(sys, start, eta, steps)
    d2 = np.sum((traj - np.stack(opt)[None]) ** 2, axis=(1, 2))
    if not np.all(np.isfinite(d2)) or d2[-1] > 1e12 * max(d2[0], 1.0):
        raise FloatingPointError("affiliated SGD diverged")
    measured = tail_rate(d2) if eta > 0 else 1.0
    rates = affiliated_rate_readings(sys, eta)
    holds = {k: bool(measured <= v + 1e-12) for k, v in rates.items()}
    return {
        "eta": float(eta),
        "singular_values": sys.singular_values.tolist(),
        "measured_rate": float(measured),
        "rates": rates,
        "holds": holds,
        "passed": bool(measured <= max(rates.values()) + 1e-12),
        "final_distance": float(np.sqrt(d2[-1])),
    }


# --- projected alternate SGD on quadratic games --------------------------------

@dataclass
class QuadGame:
    """F = 1/2 dt'P dt - 1/2 dp'R dp + dt'C dp and H = 1/2 [dt; df]' Q [dt; df],

    where dt, dp, df are offsets of theta, psi, phi from the common optimum.
    Boxes are (lo, hi) arrays per block.
    """

    P: np.ndarray
    R: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    theta_star: np.ndarray
    psi_star: np.ndarray
    phi_star: np.ndarray
    eta: float
    box_theta: tuple
    box_psi: tuple
    box_phi: tuple

    def __post_init__(self):
        for name in ("theta", "psi", "phi"):
            lo, hi = (np.asarray(v, dtype=np.float64) for v in getattr(self, f"box_{name}"))
            if np.any(lo > hi):
                raise ValueError(f"empty box for {name}")
            star = getattr(self, f"{name}_star")
            if np.any(star < lo) or np.any(star > hi):
                raise ValueError(f"optimum of {name} lies outside its box")
        if self.mu <= 0:
            raise ValueError("game is not strongly convex-concave")

    @property
    def f_jacobian(self) -> np.ndarray:
        return np.block([[self.P, self.C], [-self.C.T, self.R]])

    @property
    def mu(self) -> float:
        """Smallest monotonicity modulus of the stacked operators f and h."""
        Jf = self.f_jacobian
        mu_f = np.linalg.eigvalsh(0.5 * (Jf + Jf.T)).min()
        mu_h = np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T)).min()
        return float(min(mu_f, mu_h))

    @property
    def in_guarantee_range(self) -> bool:
        return 1.0 / (2 * self.mu) < self.eta < 1.0 / self.mu

    def block_contractions(self) -> tuple:
        """Largest squared singular values of the unprojected block maps I - eta*J."""
        n_f = self.f_jacobian.shape[0]
        n_h = self.Q.shape[0]
        sf = np.linalg.norm(np.eye(n_f) - self.eta * self.f_jacobian, 2) ** 2
        sh = np.linalg.norm(np.eye(n_h) - self.eta * self.Q, 2) ** 2
        return float(sf), float(sh)

    def h(self, theta, phi):
        g = self.Q @ np.concatenate([theta - self.theta_star, phi - self.phi_star])
        k = theta.size
        return g[:k], g[k:]

    def f(self, theta, psi):
        dt, dp = theta - self.theta_star, psi - self.psi_star
        return self.P @ dt + self.C @ dp, -(-self.R @ dp + self.C.T @ dt)


def project_box(x, box):
    lo, hi = box
    return np.clip(x, lo, hi)


def projected_alt_sgd(game: QuadGame, start, iterations: int) -> Trajectory:
    """Alternate projected steps: (theta, phi) on H, then (theta, psi) on F."""
    theta, psi, phi = (np.asarray(v, dtype=np.float64).copy() for v in start)
    k = theta.size
    eta = game.eta
    states = np.empty((iterations + 1, 3 * k))
    states[0] = np.concatenate([theta, psi, phi])
    for t in range(iterations):
        gt, gf = game.h(theta, phi)
        theta = project_box(theta - eta * gt, game.box_theta)
        phi = project_box(phi - eta * gf, game.box_phi)
        gt, gp = game.f(theta, psi)
        theta = project_box(theta - eta * gt, game.box_theta)
        psi = project_box(psi - eta * gp, game.box_psi)
        states[t + 1] = np.concatenate([theta, psi, phi])
    star = np.concatenate([game.theta_star, game.psi_star, game.phi_star])
    d2 = np.sum((states - star) ** 2, axis=1)
    cols = tuple(f"theta{i}" for i in range(k)) + tuple(f"psi{i}" for i in range(k)) + tuple(
        f"phi{i}" for i in range(k))
    return Trajectory(states, cols, {"dist2": d2})


def thm3_factor(game: QuadGame) -> float:
    return 2.0 - 2.0 * game.eta * game.mu


def verify_thm3(game: QuadGame, start, iterations: int = 50, factor: float | None = None) -> dict:
    """Check |w_t - w*|^2 <= factor^t |w_0 - w*|^2 at every step.

    ``factor`` defaults to 2 - 2 eta mu with mu the exact modulus of the game.
    """
    traj = projected_alt_sgd(game, start, iterations)
    d2 = traj.diagnostics["dist2"]
    rho = thm3_factor(game) if factor is None else float(factor)
    t = np.arange(d2.size)
    envelope = rho**t * d2[0]
    slack = d2 - envelope
    bad = np.nonzero(slack > 1e-12 * max(d2[0], 1.0))[0]
    return {
        "mu": game.mu,
        "eta": game.eta,
        "factor": rho,
        "in_guarantee_range": game.in_guarantee_range,
        "block_contractions": game.block_contractions(),
        "passed": bool(bad.size == 0),
        "first_violation": int(bad[0]) if bad.size else None,
        "final_dist2": float(d2[-1]),
    }


def _rand_spd(rng, k, lo, hi):
    Qm, _ = np.linalg.qr(rng.normal(size=(k, k)))
    return (Qm * rng.uniform(lo, hi, k)) @ Qm.T


def random_quad_game(rng, dim=3, mu=1.0, coupling=0.5, box=2.0) -> QuadGame:
    """Quadratic game whose monotonicity modulus is exactly ``mu``.

    Block curvatures lie in [mu, 1.5 mu] and the bilinear coupling has
    spectral norm ``coupling * mu``; the optimum sits inside the box.
    """
    P = _rand_spd(rng, dim, mu, 1.5 * mu)
    R = _rand_spd(rng, dim, mu, 1.5 * mu)
    Q = _rand_spd(rng, 2 * dim, mu, 1.5 * mu)
    # pin the smallest eigenvalues at exactly mu
    for M in (P, R, Q):
        w, V = np.linalg.eigh(M)
        w[0] = mu
        M[:] = (V * w) @ V.T
    C = rng.normal(size=(dim, dim))
    C *= coupling * mu / np.linalg.norm(C, 2)
    stars = rng.uniform(-0.5 * box, 0.5 * box, (3, dim))
    bx = (-box * np.ones(dim), box * np.ones(dim))
    return QuadGame(P, R, C, Q, stars[0], stars[1], stars[2], 0.75 / mu, bx, bx, bx)


def example_quad_game(mu=1.0, dim=2, box=1.0) -> QuadGame:
    """F = mu/2|theta|^2 - mu/2|psi|^2 + theta.psi,  H = mu/2|theta+phi|^2 + mu/2|phi|^2."""
    I = np.eye(dim)
    Q = mu * np.block([[I, I], [I, 2 * I]])
    z = np.zeros(dim)
    bx = (-box * np.ones(dim), box * np.ones(dim))
    P, R = mu * I, mu * I
    game = QuadGame.__new__(QuadGame)
    game.__dict__.update(dict(P=P, R=R, C=I.copy(), Q=Q, theta_star=z, psi_star=z.copy(), phi_star=z.copy(),
                              eta=0.75 / mu, box_theta=bx, box_psi=bx, box_phi=bx))
    return game


def golden_modulus() -> float:
    """Smallest eigenvalue of [[1, 1], [1, 2]], i.e. (3 - sqrt 5) / 2."""
    return (3.0 - math.sqrt(5.0)) / 2.0


# --- check drivers (used by the CLI and the acceptance suite) -----------------

def random_bilinear(rng, r: int, smin=0.5, smax=2.0, alpha=1.0) -> BilinearSystem:
    """A = U diag(s) V^T with Haar-random U, V and singular values in [smin, smax]."""
    U, _ = np.linalg.qr(rng.normal(size=(r, r)))
    V, _ = np.linalg.qr(rng.normal(size=(r, r)))
    s = rng.uniform(smin, smax, r)
    return BilinearSystem((U * s) @ V.T, rng.normal(size=r), rng.normal(size=r), alpha)


def check_zoo(steps=10_000, eta=0.1, start=(1.0, 0.0)) -> dict:
    psi0, theta0 = start
    out = {}
    tr = run_1d(wgan_1d_step, Toy1DState(psi0, theta0, 0.0, eta), steps)
    d = np.sqrt(tr.diagnostics["dist2_psi_theta"])
    out["wgan"] = {"min_dist_fraction": float(d.min() / d[0]), "passed": bool(d.min() >= 0.5 * d[0]),
                   "label": "non-convergent"}
    res = {}
    for lam in (-0.5, 0.5):
        s = Toy1DState(psi0, theta0, 0.0, eta)
        norm_max, dist_end = 0.0, float("nan")
        for _ in range(steps):
            s = reg_1d_step(s, lam)
            norm_max = max(norm_max, math.hypot(s.psi, s.theta))
            if norm_max > 1e300:
                break
        dist_end = math.hypot(s.psi + lam, s.theta - 1.0)
        res[lam] = (norm_max, dist_end)
    out["reg_likelihood"] = {"lambda": -0.5, "dist_to_biased_optimum": res[-0.5][1],
                             "passed": bool(res[-0.5][1] < 1e-6)}
    out["reg_entropy"] = {"lambda": 0.5, "max_norm": res[0.5][0], "passed": bool(res[0.5][0] > 1e6)}
    va = va_anneal_1d(psi0, theta0, eta, -0.5, 500, steps)
    dist = va.diagnostics["dist"]
    out["va"] = {"tail_start_dist": float(dist[-1001]), "tail_end_dist": float(dist[-1]),
                 "passed": is_nonconvergent(dist), "label": "non-convergent"}
    return out


def check_thm4(n_instances=20, max_rank=5, steps=3000, compare_steps=1000, seed=0, eta_scale=0.5) -> dict:
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n_instances):
        r = int(rng.integers(1, max_rank + 1))
        sys = random_bilinear(rng, r)
        eta = eta_scale / sys.singular_values.max()
        rep = verify_thm4(sys, eta, steps, seed=seed * 1000 + i)
        opt = bilinear_optimum(sys)
        st = tuple(o + rng.uniform(-1, 1, r) for o in opt)
        gap = float(np.max(np.abs(run_bilinear(sys, st, eta, compare_steps) - svd_reduced_run(sys, st, eta, compare_steps))))
        rep.update(rank=r, reduction_gap=gap, converged=bool(rep["final_distance"] < 1e-6))
        rep["passed"] = bool(rep["passed"] and rep["converged"] and gap < 1e-10)
        rows.append(rep)
    return {"instances": rows, "passed": all(r["passed"] for r in rows)}


def check_thm3(n_instances=10, dim=3, iterations=50, seed=0) -> dict:
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_instances):
        game = random_quad_game(rng, dim, mu=float(rng.uniform(0.5, 2.0)))
        start = [rng.uniform(-2, 2, dim) for _ in range(3)]
        rows.append(verify_thm3(game, start, iterations))
    return {"instances": rows, "passed": all(r["passed"] for r in rows)}
