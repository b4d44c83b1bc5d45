"""Small fully-connected networks on top of the autodiff engine."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import engine as ad
from .engine import Tensor

HIDDEN_ACTIVATIONS = ("leaky_relu", "tanh", "sigmoid", "softplus")
OUTPUT_ACTIVATIONS = ("identity", "sigmoid")
SMOOTH_ACTIVATIONS = ("tanh", "sigmoid", "softplus")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths ``[in, h1, ..., out]`` and activations.

    ``activations`` has one entry per hidden layer (``len(widths) - 2``).
    """

    widths: tuple
    activations: tuple = ()
    output_activation: str = "identity"
    slope: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least one layer")
        if any(w <= 0 for w in self.widths):
            raise ValueError(f"widths must be positive: {self.widths}")
        if len(self.activations) != len(self.widths) - 2:
            raise ValueError(
                f"{len(self.widths) - 2} hidden layers but {len(self.activations)} activations"
            )
        for a in self.activations:
            if a not in HIDDEN_ACTIVATIONS:
                raise ValueError(f"unsupported activation {a!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unsupported output activation {self.output_activation!r}")

    @classmethod
    def build(cls, widths, activation="tanh", output_activation="identity", slope=0.2):
        return cls(tuple(widths), (activation,) * (len(widths) - 2), output_activation, slope)

    @property
    def n_in(self) -> int:
        return self.widths[0]

    @property
    def n_out(self) -> int:
        return self.widths[-1]

    @property
    def smooth(self) -> bool:
        return all(a in SMOOTH_ACTIVATIONS for a in self.activations)

    def layout(self):
        """(name, shape) of every parameter array, in flat order."""
        out = []
        for i, (a, b) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            out.append((f"W{i}", (b, a)))
            out.append((f"b{i}", (b,)))
        return out

    def to_dict(self) -> dict:
        return {
            "widths": list(self.widths),
            "activations": list(self.activations),
            "output_activation": self.output_activation,
            "slope": self.slope,
        }

    @classmethod
    def from_dict(cls, d) -> "MlpSpec":
        return cls(tuple(d["widths"]), tuple(d["activations"]), d["output_activation"], d["slope"])


@dataclass
class ParamStore:
    """Named parameter arrays with a fixed flat ordering."""

    names: list
    arrays: list = field(default_factory=list)

    def __post_init__(self):
        self.arrays = [np.asarray(a, dtype=np.float64) for a in self.arrays]
        if len(self.names) != len(self.arrays):
            raise ValueError("names and arrays differ in length")

    @classmethod
    def zeros(cls, layout) -> "ParamStore":
        return cls([n for n, _ in layout], [np.zeros(s) for _, s in layout])

    @property
    def shapes(self):
        return [a.shape for a in self.arrays]

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self.arrays))

    def flat(self) -> np.ndarray:
        if not self.arrays:
            return np.zeros(0)
        return np.concatenate([a.ravel() for a in self.arrays])

    def set_flat(self, v) -> None:
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.size:
            raise ValueError(f"flat vector has {v.size} entries, store has {self.size}")
        if not np.all(np.isfinite(v)):
            raise ad.NonFiniteError("non-finite parameters")
        off = 0
        new = []
        for a in self.arrays:
            new.append(v[off:off + a.size].reshape(a.shape).copy())
            off += a.size
        self.arrays = new

    def copy(self) -> "ParamStore":
        return ParamStore(list(self.names), [a.copy() for a in self.arrays])

    def __getitem__(self, name):
        return self.arrays[self.names.index(name)]

    def tensors(self) -> list:
        """Fresh leaf tensors (requiring grad) for one graph construction."""
        return [Tensor(a, requires_grad=True) for a in self.arrays]


def glorot_init(spec: MlpSpec, rng) -> ParamStore:
    ps = ParamStore.zeros(spec.layout())
    for i, (a, b) in enumerate(zip(spec.widths[:-1], spec.widths[1:])):
        lim = np.sqrt(6.0 / (a + b))
        ps.arrays[2 * i] = rng.uniform(-lim, lim, (b, a))
    return ps


def activate(x: Tensor, name: str, slope: float = 0.2) -> Tensor:
    if name == "tanh":
        return ad.tanh(x)
    if name == "sigmoid":
        return ad.sigmoid(x)
    if name == "softplus":
        return ad.softplus(x)
    if name == "leaky_relu":
        return ad.leaky_relu(x, slope)
    if name == "identity":
        return x
    raise ValueError(name)


def forward_t(spec: MlpSpec, params, X) -> Tensor:
    """Graph-building forward pass. ``params`` is a list of tensors or a ParamStore."""
    if isinstance(params, ParamStore):
        params = [Tensor(a) for a in params.arrays]
    X = ad.tensor(X)
    if X.ndim != 2 or X.shape[1] != spec.n_in:
        raise ValueError(f"input has shape {X.shape}, network expects {spec.n_in} columns")
    h = X
    n_layers = len(spec.widths) - 1
    for i in range(n_layers):
        W, b = params[2 * i], params[2 * i + 1]
        h = h @ W.T + b
        if i < n_layers - 1:
            h = activate(h, spec.activations[i], spec.slope)
    return activate(h, spec.output_activation)


def forward(spec: MlpSpec, params: ParamStore, X) -> np.ndarray:
    """Batched outputs as a plain array."""
    with ad.no_grad():
        out = forward_t(spec, params, np.asarray(X, dtype=np.float64)).data
    if not np.all(np.isfinite(out)):
        raise ad.NonFiniteError("non-finite network output")
    return out


def grad_params(loss_fn, params: ParamStore) -> tuple:
    """Evaluate ``loss_fn(list_of_param_tensors) -> scalar Tensor``; return (loss, flat grad)."""
    leaves = params.tensors()
    loss = loss_fn(leaves)
    if not np.isfinite(loss.data):
        raise ad.NonFiniteError(f"non-finite loss {loss.data}")
    gs = ad.grad(loss, leaves)
    return float(loss.data), np.concatenate([g.data.ravel() for g in gs])


def grad_input(spec: MlpSpec, params: ParamStore, x) -> np.ndarray:
    """Gradient of a scalar-output network with respect to its input vector."""
    if spec.n_out != 1:
        raise ValueError("grad_input needs a scalar-output network")
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    X = Tensor(x[None, :], requires_grad=True)
    out = forward_t(spec, params, X)
    return ad.grad(out.sum(), X).data[0]


def input_grad_t(out: Tensor, X: Tensor, create_graph=True, allow_piecewise=False) -> Tensor:
    """Row-wise gradient of ``out.sum()`` w.r.t. the batch ``X`` (rows are independent)."""
    return ad.grad(out.sum(), X, create_graph=create_graph, allow_piecewise=allow_piecewise)
