"""Generator, energy estimator, Wasserstein/JS critic and Stein critic."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .autodiff import engine as ad
from .autodiff import checkpoint as ckpt
from .autodiff.engine import Tensor
from .autodiff.nn import MlpSpec, ParamStore, forward_t, glorot_init


def _as_batch(X, d):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"batch has shape {X.shape}, model expects {d} columns")
    return X


@dataclass
class Generator:
    spec: MlpSpec
    params: ParamStore
    noise_dim: int
    noise: str = "normal"

    def __post_init__(self):
        if self.noise_dim < 1 or self.spec.n_in != self.noise_dim:
            raise ValueError("noise dimension must be >= 1 and match the network input")
        if self.noise not in ("normal", "uniform"):
            raise ValueError(f"unknown noise distribution {self.noise!r}")

    @property
    def dim(self) -> int:
        return self.spec.n_out

    def sample_noise(self, n: int, rng) -> np.ndarray:
        if self.noise == "normal":
            return rng.normal((n, self.noise_dim))
        return rng.uniform(-1.0, 1.0, (n, self.noise_dim))

    def forward_t(self, leaves, Z) -> Tensor:
        return forward_t(self.spec, leaves, Z)

    def __call__(self, Z) -> np.ndarray:
        with ad.no_grad():
            return self.forward_t(self.params, np.asarray(Z, dtype=np.float64)).data

    def generate(self, n: int, rng) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self(self.sample_noise(n, rng))


@dataclass
class EnergyModel:
    """E(x) = sum_i softplus(-(W_i n(x) + b_i)); density proportional to exp(-E)."""

    feature_spec: MlpSpec
    params: ParamStore  # feature layers, then "We" (K x m) and "be" (K,)

    def __post_init__(self):
        if not self.feature_spec.smooth:
            raise ValueError("energy feature net needs twice-differentiable activations")
        K, m = self.params["We"].shape
        if m != self.feature_spec.n_out or self.params["be"].shape != (K,):
            raise ValueError("expert weights do not match the feature width")

    @property
    def dim(self) -> int:
        return self.feature_spec.n_in

    @property
    def n_experts(self) -> int:
        return self.params["We"].shape[0]

    @classmethod
    def create(cls, feature_spec: MlpSpec, n_experts: int, rng=None) -> "EnergyModel":
        feat = glorot_init(feature_spec, rng) if rng is not None else ParamStore.zeros(feature_spec.layout())
        m = feature_spec.n_out
        if rng is not None:
            lim = np.sqrt(6.0 / (m + n_experts))
            We = rng.uniform(-lim, lim, (n_experts, m))
        else:
            We = np.zeros((n_experts, m))
        ps = ParamStore(feat.names + ["We", "be"], feat.arrays + [We, np.zeros(n_experts)])
        return cls(feature_spec, ps)

    def energy_t(self, leaves, X) -> Tensor:
        if isinstance(leaves, ParamStore):
            leaves = [Tensor(a) for a in leaves.arrays]
        feats = forward_t(self.feature_spec, leaves[:-2], X)
        a = feats @ leaves[-2].T + leaves[-1]
        return ad.softplus(-a).sum(axis=1)

    def score_t(self, leaves, X: Tensor, create_graph=True) -> Tensor:
        """-grad_x E at each row of ``X`` (``X`` must require grad)."""
        e = self.energy_t(leaves, X)
        return -ad.grad(e.sum(), X, create_graph=create_graph)

    def energy(self, X) -> np.ndarray:
        X = _as_batch(X, self.dim)
        with ad.no_grad():
            out = self.energy_t(self.params, X).data
        if not np.all(np.isfinite(out)):
            raise ad.NonFiniteError("non-finite energy")
        return out

    def score(self, X) -> np.ndarray:
        X = Tensor(_as_batch(X, self.dim), requires_grad=True)
        out = self.score_t(self.params, X, create_graph=False).data
        if not np.all(np.isfinite(out)):
            raise ad.NonFiniteError("non-finite score")
        return out

    def log_density_unnormalized(self, X) -> np.ndarray:
        return -self.energy(X)


@dataclass
class WassersteinCritic:
    """Scalar critic; in ``js`` mode the output passes through a sigmoid."""

    spec: MlpSpec
    params: ParamStore
    mode: str = "wasserstein"

    def __post_init__(self):
        if self.mode not in ("wasserstein", "js"):
            raise ValueError(f"unknown critic mode {self.mode!r}")
        if self.spec.n_out != 1:
            raise ValueError("critic output must be scalar")
        want = "sigmoid" if self.mode == "js" else "identity"
        if self.spec.output_activation != want:
            raise ValueError(f"{self.mode} critic needs {want} output activation")

    def value_t(self, leaves, X) -> Tensor:
        return forward_t(self.spec, leaves, X).reshape(-1)

    def __call__(self, X) -> np.ndarray:
        X = _as_batch(X, self.spec.n_in)
        with ad.no_grad():
            return self.value_t(self.params, X).data


def critic_value(C: WassersteinCritic, X) -> np.ndarray:
    return C(X)


@dataclass
class SteinCriticNet:
    spec: MlpSpec
    params: ParamStore

    def __post_init__(self):
        if self.spec.n_out != self.spec.n_in:
            raise ValueError("Stein critic output width must equal the data dimension")

    @property
    def dim(self) -> int:
        return self.spec.n_in

    def value_t(self, leaves, X) -> Tensor:
        return forward_t(self.spec, leaves, X)

    def __call__(self, X) -> np.ndarray:
        X = _as_batch(X, self.dim)
        with ad.no_grad():
            return self.value_t(self.params, X).data


def stein_critic_value(f: SteinCriticNet, X) -> np.ndarray:
    return f(X)


def generate(G: Generator, n: int, rng) -> np.ndarray:
    return G.generate(n, rng)


def energy(E: EnergyModel, X) -> np.ndarray:
    return E.energy(X)


def score(E: EnergyModel, X) -> np.ndarray:
    return E.score(X)


# --- default architectures --------------------------------------------------

def default_generator(rng, dim=2, noise_dim=4, hidden=128, activation="leaky_relu") -> Generator:
    spec = MlpSpec.build([noise_dim, hidden, hidden, dim], activation)
    return Generator(spec, glorot_init(spec, rng), noise_dim)


def default_energy(rng, dim=2, hidden=128, n_features=4, n_experts=4, activation="tanh") -> EnergyModel:
    spec = MlpSpec.build([dim, hidden, hidden, n_features], activation)
    return EnergyModel.create(spec, n_experts, rng)


def default_critic(rng, dim=2, hidden=128, mode="wasserstein", activation="leaky_relu") -> WassersteinCritic:
    out = "sigmoid" if mode == "js" else "identity"
    spec = MlpSpec.build([dim, hidden, hidden, 1], activation, out)
    return WassersteinCritic(spec, glorot_init(spec, rng), mode)


def default_stein_critic(rng, dim=2, hidden=128, activation="tanh") -> SteinCriticNet:
    spec = MlpSpec.build([dim, hidden, hidden, dim], activation)
    return SteinCriticNet(spec, glorot_init(spec, rng))


# --- checkpoints ------------------------------------------------------------

def model_to_dict(model) -> dict:
    if isinstance(model, Generator):
        kind, extra = "generator", {"noise_dim": model.noise_dim, "noise": model.noise}
        spec = model.spec
    elif isinstance(model, EnergyModel):
        kind, extra, spec = "energy", {}, model.feature_spec
    elif isinstance(model, WassersteinCritic):
        kind, extra, spec = "critic", {"mode": model.mode}, model.spec
    elif isinstance(model, SteinCriticNet):
        kind, extra, spec = "stein_critic", {}, model.spec
    else:
        raise TypeError(type(model))
    body = ckpt.dump_params(None, model.params)
    return {"format": ckpt.FORMAT, "version": ckpt.VERSION, "kind": kind,
            "spec": spec.to_dict(), "model": extra, "layout": body["layout"], "values": body["values"]}


def model_from_dict(d: dict):
    if d.get("format") != ckpt.FORMAT:
        raise ValueError("not a model checkpoint")
    _, params = ckpt.load_params({"spec": None, "layout": d["layout"], "values": d["values"]})
    spec = MlpSpec.from_dict(d["spec"])
    kind, extra = d["kind"], d.get("model", {})
    if kind == "generator":
        return Generator(spec, params, extra["noise_dim"], extra["noise"])
    if kind == "energy":
        return EnergyModel(spec, params)
    if kind == "critic":
        return WassersteinCritic(spec, params, extra["mode"])
    if kind == "stein_critic":
        return SteinCriticNet(spec, params)
    raise ValueError(f"unknown model kind {kind!r}")


def save_model(path, model) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh)


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))
