"""Joint training of generator, energy estimator, critic and Stein critic.

One outer iteration runs, in order: ``n_d`` critic updates, ``n_c`` Stein
critic updates (network variants only), one estimator update and one
generator update.  The estimator and generator steps share the same noise.

Every random draw comes from a named child stream so that switching a term
off (a zero coefficient) never shifts the draws seen by the other terms.
"""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import discrepancy as dis
from . import models as mdl
from .autodiff import engine as ad
from .autodiff.engine import Tensor
from .autodiff.nn import ParamStore
from .autodiff.optim import AdamState, adam_step
from .numkit import RngStream, median_heuristic

VARIANTS = ("W+SteinNet", "W+KSD", "JS+SteinNet", "JS+KSD")
STREAMS = ("critic", "stein", "est_data", "gen_noise")
LOG_COLUMNS = ("iteration", "L_dis", "L_critic", "L_est", "L_gen", "lambda2", "wall_clock")
STATE_FORMAT = "steinbridge-train-state"
STATE_VERSION = 1


class TrainingAborted(RuntimeError):
    """Non-finite loss or parameters; ``snapshot`` holds the last finite state."""

    def __init__(self, message, snapshot=None, stage=None):
        super().__init__(message)
        self.snapshot = snapshot
        self.stage = stage


@dataclass(frozen=True)
class Lambda2Schedule:
    start: float = 0.0
    end: float = 1.0
    ramp: int = 0
    warmup: int = 0

    def __post_init__(self):
        if self.start < 0 or self.end < 0:
            raise ValueError("lambda2 values must be non-negative")
        if self.ramp < 0 or self.warmup < 0:
            raise ValueError("ramp and warm-up lengths must be non-negative")

    @classmethod
    def constant(cls, value: float) -> "Lambda2Schedule":
        return cls(value, value, 0, 0)


def lambda2_at(schedule: Lambda2Schedule, iteration: int) -> float:
    """0 during warm-up, then linear from ``start`` to ``end`` over ``ramp`` steps."""
    if iteration < 0:
        raise ValueError("iteration must be non-negative")
    s = schedule
    if iteration < s.warmup:
        return 0.0
    if s.ramp == 0 or iteration - s.warmup >= s.ramp:
        return float(s.end)
    frac = (iteration - s.warmup) / s.ramp
    return float(s.start + (s.end - s.start) * frac)


@dataclass(frozen=True)
class AdamGroup:
    lr: float
    beta1: float
    beta2: float
    eps: float = 1e-8

    def init(self, n: int) -> AdamState:
        return AdamState.init(n, self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class TrainConfig:
    variant: str = "W+KSD"
    lam1: float = 1.0
    lam2_start: float = 0.0
    lam2_end: float = 1.0
    lam2_ramp: int | None = None  # None: 20% of iterations
    lam2_warmup: int | None = None  # None: 20% of iterations
    n_d: int = 5
    n_c: int = 5
    batch_size: int = 100
    explicit_lr: float = 2e-4
    explicit_beta1: float = 0.9
    explicit_beta2: float = 0.999
    implicit_lr: float = 2e-4
    implicit_beta1: float = 0.5
    implicit_beta2: float = 0.999
    iterations: int = 5000
    eval_every: int = 500
    checkpoint_every: int = 0
    seed: int = 0
    gp_weight: float = 10.0
    stein_l2: float = 1.0
    ksd_bandwidth: float | None = None  # None: median heuristic per batch
    noise_dim: int = 4
    hidden: int = 128
    n_features: int = 4
    n_experts: int = 4
    generator_activation: str = "leaky_relu"
    critic_activation: str = "leaky_relu"
    energy_activation: str = "tanh"
    stein_activation: str = "tanh"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.lam1 < 0 or self.lam2_start < 0 or self.lam2_end < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if self.n_d < 0 or self.n_c < 0 or self.iterations < 0:
            raise ValueError("step counts must be non-negative")
        if self.eval_every < 1:
            raise ValueError("eval_every must be >= 1")
        if self.ksd_bandwidth is not None and not self.ksd_bandwidth > 0:
            raise ValueError("ksd_bandwidth must be positive")
        if self.gp_weight < 0 or self.stein_l2 < 0:
            raise ValueError("penalty weights must be non-negative")

    @property
    def wasserstein(self) -> bool:
        return self.variant.startswith("W+")

    @property
    def uses_ksd(self) -> bool:
        return self.variant.endswith("KSD")

    @property
    def schedule(self) -> Lambda2Schedule:
        ramp = self.lam2_ramp if self.lam2_ramp is not None else int(0.2 * self.iterations)
        warm = self.lam2_warmup if self.lam2_warmup is not None else int(0.2 * self.iterations)
        return Lambda2Schedule(self.lam2_start, self.lam2_end, ramp, warm)

    @property
    def explicit(self) -> AdamGroup:
        return AdamGroup(self.explicit_lr, self.explicit_beta1, self.explicit_beta2)

    @property
    def implicit(self) -> AdamGroup:
        return AdamGroup(self.implicit_lr, self.implicit_beta1, self.implicit_beta2)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown TrainConfig keys: {unknown}")
        return cls(**d)


@dataclass
class Models:
    generator: mdl.Generator
    critic: mdl.WassersteinCritic
    estimator: mdl.EnergyModel
    stein_critic: mdl.SteinCriticNet | None = None

    def named(self):
        out = {"generator": self.generator, "critic": self.critic, "estimator": self.estimator}
        if self.stein_critic is not None:
            out["stein_critic"] = self.stein_critic
        return out


def build_models(cfg: TrainConfig, dim: int, rng: RngStream) -> Models:
    """Initialize each network from its own child of ``rng``."""
    G = mdl.default_generator(rng.child("generator"), dim, cfg.noise_dim, cfg.hidden, cfg.generator_activation)
    D = mdl.default_critic(rng.child("critic"), dim, cfg.hidden, "wasserstein" if cfg.wasserstein else "js",
                           cfg.critic_activation)
    E = mdl.default_energy(rng.child("estimator"), dim, cfg.hidden, cfg.n_features, cfg.n_experts,
                           cfg.energy_activation)
    F = None
    if not cfg.uses_ksd:
        F = mdl.default_stein_critic(rng.child("stein_critic"), dim, cfg.hidden, cfg.stein_activation)
    return Models(G, D, E, F)


@dataclass
class TrainSnapshot:
    iteration: int
    params: dict  # name -> ParamStore copy
    L_dis: float
    L_critic: float
    L_est: float
    L_gen: float
    lambda2: float

    def losses(self) -> tuple:
        return (self.L_dis, self.L_critic, self.L_est, self.L_gen)


@dataclass
class TrainState:
    config: TrainConfig
    models: Models
    adam: dict
    streams: dict
    iteration: int = 0
    last: dict = field(default_factory=lambda: {"L_dis": 0.0, "L_critic": 0.0, "L_est": 0.0, "L_gen": 0.0})

    def snapshot(self, lam2: float | None = None) -> TrainSnapshot:
        if lam2 is None:
            lam2 = lambda2_at(self.config.schedule, self.iteration)
        params = {k: m.params.copy() for k, m in self.models.named().items()}
        return TrainSnapshot(self.iteration, params, lambda2=lam2, **self.last)


def init_state(cfg: TrainConfig, dim: int = 2) -> TrainState:
    root = RngStream(cfg.seed)
    models = build_models(cfg, dim, root.child("init"))
    groups = {"generator": cfg.implicit, "critic": cfg.implicit, "estimator": cfg.explicit,
              "stein_critic": cfg.explicit}
    adam = {k: groups[k].init(m.params.size) for k, m in models.named().items()}
    streams = {name: root.child(name) for name in STREAMS}
    return TrainState(cfg, models, adam, streams)


# --- losses ----------------------------------------------------------------

def _batch(data: np.ndarray, B: int, rng: RngStream) -> np.ndarray:
    return data[rng.integers(0, data.shape[0], size=B)]


def _bandwidth(cfg: TrainConfig, X: np.ndarray) -> float:
    return cfg.ksd_bandwidth if cfg.ksd_bandwidth is not None else median_heuristic(X)


def _stein_values(E: mdl.EnergyModel, e_leaves, F: mdl.SteinCriticNet, f_leaves, X: Tensor):
    """Per-row Stein operator values and f(X); ``X`` must require grad."""
    S = E.score_t(e_leaves, X, create_graph=True)
    Fx = F.value_t(f_leaves, X)
    div = dis.divergence_t(Fx, X, create_graph=True)
    return dis.stein_operator_t(S, Fx, div), Fx


def _ksd_term(E, e_leaves, X: Tensor, h: float) -> Tensor:
    S = E.score_t(e_leaves, X, create_graph=True)
    return dis.ksd_t(S, X, h)


def _update(state: TrainState, name: str, grad: np.ndarray):
    m = state.models.named()[name]
    if not np.all(np.isfinite(grad)):
        raise ad.NonFiniteError(f"non-finite gradient for {name}")
    st, new = adam_step(state.adam[name], m.params.flat(), grad)
    m.params.set_flat(new)
    state.adam[name] = st


def _grad(loss_fn, params: ParamStore):
    leaves = params.tensors()
    loss = loss_fn(leaves)
    if not np.isfinite(loss.data):
        raise ad.NonFiniteError(f"non-finite loss {float(loss.data)}")
    gs = ad.grad(loss, leaves, allow_piecewise=True)
    return float(loss.data), np.concatenate([g.data.ravel() for g in gs])


def critic_step(state: TrainState, data: np.ndarray) -> float:
    """One ascent step on L_dis (Wasserstein + GP) or on the JS discriminator objective."""
    cfg, M = state.config, state.models
    rng = state.streams["critic"]
    Xr = _batch(data, cfg.batch_size, rng)
    Xf = M.generator(M.generator.sample_noise(cfg.batch_size, rng))
    if cfg.wasserstein:
        gp = dis.GpConfig(cfg.gp_weight)
        X_hat = dis.interpolates(Xr, Xf, rng) if gp.weight > 0 else None
        fn = lambda L: -dis.wasserstein_critic_loss_t(M.critic, L, Xr, Xf, gp, X_hat)
    else:
        fn = lambda L: -dis.js_disc_loss_t(M.critic, L, Xr, Xf)
    neg, g = _grad(fn, M.critic.params)
    _update(state, "critic", g)
    return -neg


def stein_critic_step(state: TrainState, data: np.ndarray, lam2: float) -> float:
    """One ascent step on lam1 E_real[A f] + lam2 E_gen[A f] minus an L2 penalty on f."""
    cfg, M = state.config, state.models
    rng = state.streams["stein"]
    Xr = _batch(data, cfg.batch_size, rng)
    Xf = M.generator(M.generator.sample_noise(cfg.batch_size, rng))
    e_leaves = [Tensor(a) for a in M.estimator.params.arrays]
    value = {}

    def fn(L):
        total = None
        for w, X in ((cfg.lam1, Xr), (lam2, Xf)):
            if w == 0:
                continue
            a, Fx = _stein_values(M.estimator, e_leaves, M.stein_critic, L, Tensor(X, requires_grad=True))
            term = a.mean() * w
            value["obj"] = value.get("obj", 0.0) + float(term.data)
            if cfg.stein_l2 > 0:
                term = term - (Fx * Fx).sum(axis=1).mean() * (w * cfg.stein_l2)
            total = term if total is None else total + term
        return -total

    _, g = _grad(fn, M.stein_critic.params)
    _update(state, "stein_critic", g)
    return value["obj"]


def estimator_loss_t(cfg: TrainConfig, M: Models, e_leaves, Xr, Xf, lam2: float) -> Tensor | None:
    """lam1 * D(real, p) + lam2 * D(gen, p), skipping zero-weight terms."""
    total = None
    for w, X in ((cfg.lam1, Xr), (lam2, Xf)):
        if w == 0:
            continue
        Xt = Tensor(X, requires_grad=True)
        if cfg.uses_ksd:
            term = _ksd_term(M.estimator, e_leaves, Xt, _bandwidth(cfg, X))
        else:
            f_leaves = [Tensor(a) for a in M.stein_critic.params.arrays]
            term = _stein_values(M.estimator, e_leaves, M.stein_critic, f_leaves, Xt)[0].mean()
        term = term * w
        total = term if total is None else total + term
    return total


def generator_loss_t(cfg: TrainConfig, M: Models, g_leaves, Z, lam2: float) -> Tensor:
    X = M.generator.forward_t(g_leaves, Z)
    d = M.critic.value_t(M.critic.params, X)
    loss = -d.mean() if cfg.wasserstein else dis.js_gen_loss_t(d)
    if lam2 != 0:
        e_leaves = [Tensor(a) for a in M.estimator.params.arrays]
        if cfg.uses_ksd:
            h = _bandwidth(cfg, X.data)
            bridge = _ksd_term(M.estimator, e_leaves, X, h)
        else:
            f_leaves = [Tensor(a) for a in M.stein_critic.params.arrays]
            bridge = _stein_values(M.estimator, e_leaves, M.stein_critic, f_leaves, X)[0].mean()
        loss = loss + bridge * lam2
    return loss


def train_step(state: TrainState, data: np.ndarray) -> TrainSnapshot:
    """One outer iteration. Mutates ``state`` and returns a snapshot after it."""
    cfg, M = state.config, state.models
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < cfg.batch_size:
        raise ValueError(f"need at least {cfg.batch_size} training rows, got {data.shape}")
    lam2 = lambda2_at(cfg.schedule, state.iteration)
    before = state.snapshot(lam2)
    stage = "critic"
    try:
        L_dis = state.last["L_dis"]
        for _ in range(cfg.n_d):
            L_dis = critic_step(state, data)
        stage = "stein_critic"
        L_critic = 0.0
        if not cfg.uses_ksd and (cfg.lam1 != 0 or lam2 != 0):
            for _ in range(cfg.n_c):
                L_critic = stein_critic_step(state, data, lam2)
        stage = "estimator"
        Z = M.generator.sample_noise(cfg.batch_size, state.streams["gen_noise"])
        L_est = 0.0
        if cfg.lam1 != 0 or lam2 != 0:
            Xr = _batch(data, cfg.batch_size, state.streams["est_data"]) if cfg.lam1 != 0 else None
            Xf = M.generator(Z) if lam2 != 0 else None
            L_est, g = _grad(lambda L: estimator_loss_t(cfg, M, L, Xr, Xf, lam2), M.estimator.params)
            _update(state, "estimator", g)
        stage = "generator"
        L_gen, g = _grad(lambda L: generator_loss_t(cfg, M, L, Z, lam2), M.generator.params)
        _update(state, "generator", g)
    except (ad.NonFiniteError, FloatingPointError) as exc:
        raise TrainingAborted(f"{stage} update at iteration {state.iteration}: {exc}", before, stage) from exc
    state.iteration += 1
    state.last = {"L_dis": L_dis, "L_critic": L_critic, "L_est": L_est, "L_gen": L_gen}
    return state.snapshot(lam2)


# --- standalone baselines ------------------------------------------------------

def wgan_gp_step(state: TrainState, data: np.ndarray) -> TrainSnapshot:
    """Plain WGAN-GP (or GAN) iteration: ``n_d`` critic steps then one generator step."""
    cfg, M = state.config, state.models
    L_dis = state.last["L_dis"]
    for _ in range(cfg.n_d):
        L_dis = critic_step(state, data)
    Z = M.generator.sample_noise(cfg.batch_size, state.streams["gen_noise"])
    L_gen, g = _grad(lambda L: generator_loss_t(cfg, M, L, Z, 0.0), M.generator.params)
    _update(state, "generator", g)
    state.iteration += 1
    state.last = {"L_dis": L_dis, "L_critic": 0.0, "L_est": 0.0, "L_gen": L_gen}
    return state.snapshot(0.0)


def ksd_dem_step(state: TrainState, data: np.ndarray) -> float:
    """Deep energy model fitted by descending KSD on a real batch."""
    cfg, M = state.config, state.models
    Xr = _batch(data, cfg.batch_size, state.streams["est_data"])

    def fn(L):
        X = Tensor(Xr, requires_grad=True)
        return _ksd_term(M.estimator, L, X, _bandwidth(cfg, Xr))

    loss, g = _grad(fn, M.estimator.params)
    _update(state, "estimator", g)
    state.iteration += 1
    return loss


# --- loop, logging and checkpoints ---------------------------------------------

def format_float(x: float) -> str:
    return f"{float(x):.17g}"


def log_row(snap: TrainSnapshot, wall: float) -> list:
    return [str(snap.iteration)] + [format_float(v) for v in snap.losses()] + [
        format_float(snap.lambda2), format_float(wall)]


def train_loop(cfg: TrainConfig, data: np.ndarray, state: TrainState | None = None, on_snapshot=None,
               on_log=None, on_checkpoint=None, stop_at: int | None = None):
    """Run until ``cfg.iterations`` (or ``stop_at``) outer iterations have completed.

    ``on_snapshot`` fires for the initial state and every ``eval_every``
    iterations (and at the end); ``on_log`` fires after every iteration;
    ``on_checkpoint`` fires every ``checkpoint_every`` iterations.  Returns
    (state, snapshots).
    """
    data = np.asarray(data, dtype=np.float64)
    if state is None:
        state = init_state(cfg, data.shape[1])
    end = cfg.iterations if stop_at is None else min(stop_at, cfg.iterations)
    snaps = []
    if state.iteration == 0:
        s0 = state.snapshot()
        snaps.append(s0)
        if on_snapshot:
            on_snapshot(s0, state)
    t0 = time.perf_counter()
    while state.iteration < end:
        snap = train_step(state, data)
        if on_log:
            on_log(snap, time.perf_counter() - t0)
        it = state.iteration
        if it % cfg.eval_every == 0 or it == cfg.iterations:
            snaps.append(snap)
            if on_snapshot:
                on_snapshot(snap, state)
        if on_checkpoint and cfg.checkpoint_every and it % cfg.checkpoint_every == 0:
            on_checkpoint(state)
    return state, snaps


def _jsonable_rng_state(st):
    return json.loads(json.dumps(st, default=int))


def state_to_dict(state: TrainState) -> dict:
    return {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "config": state.config.to_dict(),
        "iteration": state.iteration,
        "last": {k: float(v) for k, v in state.last.items()},
        "models": {k: mdl.model_to_dict(m) for k, m in state.models.named().items()},
        "adam": {k: a.to_dict() for k, a in state.adam.items()},
        "streams": {k: _jsonable_rng_state(s.get_state()) for k, s in state.streams.items()},
    }


def state_from_dict(d: dict) -> TrainState:
    if d.get("format") != STATE_FORMAT:
        raise ValueError("not a training-state checkpoint")
    cfg = TrainConfig.from_dict(d["config"])
    ms = {k: mdl.model_from_dict(v) for k, v in d["models"].items()}
    models = Models(ms["generator"], ms["critic"], ms["estimator"], ms.get("stein_critic"))
    adam = {k: AdamState.from_dict(v) for k, v in d["adam"].items()}
    root = RngStream(cfg.seed)
    streams = {}
    for name in STREAMS:
        s = root.child(name)
        s.set_state(d["streams"][name])
        streams[name] = s
    return TrainState(cfg, models, adam, streams, int(d["iteration"]), dict(d["last"]))


def save_state(path, state: TrainState) -> None:
    with open(path, "w") as fh:
        json.dump(state_to_dict(state), fh)


def load_state(path) -> TrainState:
    with open(path) as fh:
        return state_from_dict(json.load(fh))


def params_equal(a: TrainState, b: TrainState) -> bool:
    na, nb = a.models.named(), b.models.named()
    if set(na) != set(nb):
        return False
    return all(np.array_equal(na[k].params.flat(), nb[k].params.flat()) for k in na)


__all__ = [
    "AdamGroup", "Lambda2Schedule", "LOG_COLUMNS", "Models", "TrainConfig", "TrainSnapshot", "TrainState",
    "TrainingAborted", "VARIANTS", "build_models", "init_state", "ksd_dem_step", "lambda2_at", "load_state",
    "save_state", "state_from_dict", "state_to_dict", "train_loop", "train_step", "wgan_gp_step",
]
