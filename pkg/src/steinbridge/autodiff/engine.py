"""Reverse-mode autodiff over numpy arrays with differentiable backward passes.

Every backward rule is written with ``Tensor`` operations, so calling
``grad(..., create_graph=True)`` returns tensors that are themselves nodes
of a graph and can be differentiated again.  That is what lets a loss
contain input-gradients of a network (scores, divergences, gradient
penalties) and still be differentiated with respect to the parameters.
"""
from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import expit

_GRAD_ENABLED = True


class NonSmoothNestedGradError(RuntimeError):
    """A piecewise-linear activation sits on a path that is differentiated twice."""


class NonFiniteError(FloatingPointError):
    pass


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _arr(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def tensor(x, requires_grad: bool = False) -> "Tensor":
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64), requires_grad=requires_grad)


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "backward", "op")
    __array_priority__ = 100.0

    def __init__(self, data, requires_grad=False, parents=(), backward=None, op=""):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward = backward
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor({self.data!r}, op={self.op or 'leaf'})"

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return add(self, neg(tensor(o)))

    def __rsub__(self, o):
        return add(tensor(o), neg(self))

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(tensor(o), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, c):
        return power(self, c)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(tensor(o), self)

    def __getitem__(self, idx):
        return take(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def _make(data, parents, backward, op):
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward, op)
    return Tensor(data)


# --- elementary operations -------------------------------------------------

def sum_to(g: Tensor, shape) -> Tensor:
    """Reduce a broadcast gradient back to ``shape``."""
    shape = tuple(shape)
    if g.shape == shape:
        return g
    gd = g.data
    lead = gd.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and gd.shape[i + lead] != 1
    )
    out = np.sum(gd, axis=axes, keepdims=True)
    out = out.reshape(shape)

    def bw(go):
        return (broadcast_to(go, g.shape),)

    return _make(out, (g,), bw, "sum_to")


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if a.shape == shape:
        return a
    out = np.broadcast_to(a.data, shape).copy()
    src = a.shape

    def bw(g):
        return (sum_to(g, src),)

    return _make(out, (a,), bw, "broadcast_to")


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def bw(g):
        return (sum_to(g, a.shape), sum_to(g, b.shape))

    return _make(a.data + b.data, (a, b), bw, "add")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (neg(g),), "neg")


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)

    def bw(g):
        ga = sum_to(mul(g, b), a.shape) if a.requires_grad else None
        gb = sum_to(mul(g, a), b.shape) if b.requires_grad else None
        return (ga, gb)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    out = a.data / b.data

    def bw(g):
        ga = sum_to(div(g, b), a.shape) if a.requires_grad else None
        gb = sum_to(neg(mul(g, div(a, mul(b, b)))), b.shape) if b.requires_grad else None
        return (ga, gb)

    return _make(out, (a, b), bw, "div")


def power(a: Tensor, c: float) -> Tensor:
    c = float(c)

    def bw(g):
        return (mul(g, mul(c, power(a, c - 1.0))),)

    return _make(a.data**c, (a,), bw, "pow")


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul expects 2-D operands")

    def bw(g):
        ga = matmul(g, transpose(b)) if a.requires_grad else None
        gb = matmul(transpose(a), g) if b.requires_grad else None
        return (ga, gb)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def transpose(a: Tensor) -> Tensor:
    return _make(a.data.T.copy(), (a,), lambda g: (transpose(g),), "transpose")


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (reshape(g, src),), "reshape")


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    src = a.shape

    def bw(g):
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else axis
            kshape = list(src)
            for ax in axes:
                kshape[ax % len(src)] = 1
            g = reshape(g, tuple(kshape))
        elif axis is None and not keepdims:
            g = reshape(g, (1,) * len(src))
        return (broadcast_to(g, src),)

    return _make(out, (a,), bw, "sum")


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def take(a: Tensor, idx) -> Tensor:
    src = a.shape

    def bw(g):
        return (scatter(g, idx, src),)

    return _make(a.data[idx], (a,), bw, "take")


def scatter(g: Tensor, idx, shape) -> Tensor:
    """Zeros of ``shape`` with ``g`` added at ``idx`` (adjoint of ``take``)."""
    out = np.zeros(shape)
    np.add.at(out, idx, g.data)
    return _make(out, (g,), lambda go: (take(go, idx),), "scatter")


def concat(parts, axis=0) -> Tensor:
    parts = [tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        outs = []
        for lo, hi in zip(offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(lo), int(hi))
            outs.append(take(g, tuple(sl)))
        return tuple(outs)

    return _make(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), bw, "concat")


# --- elementwise nonlinearities ---------------------------------------------

def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    res = None

    def bw(g):
        return (mul(g, res),)

    res = _make(out, (a,), bw, "exp")
    return res


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (div(g, a),), "log")


def sqrt(a: Tensor) -> Tensor:
    res = None

    def bw(g):
        return (div(mul(g, 0.5), res),)

    res = _make(np.sqrt(a.data), (a,), bw, "sqrt")
    return res


def tanh(a: Tensor) -> Tensor:
    res = None

    def bw(g):
        return (mul(g, 1.0 - mul(res, res)),)

    res = _make(np.tanh(a.data), (a,), bw, "tanh")
    return res


def sigmoid(a: Tensor) -> Tensor:
    res = None

    def bw(g):
        return (mul(g, mul(res, 1.0 - res)),)

    res = _make(expit(a.data), (a,), bw, "sigmoid")
    return res


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^a), overflow-safe."""
    return _make(np.logaddexp(0.0, a.data), (a,), lambda g: (mul(g, sigmoid(a)),), "softplus")


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    mask = np.where(a.data > 0, 1.0, slope)

    def bw(g):
        # mask is locally constant; its second derivative is zero a.e.
        return (mul(g, mask),)

    return _make(a.data * mask, (a,), bw, "leaky_relu")


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    mask = ((a.data >= lo) & (a.data <= hi)).astype(np.float64)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (mul(g, mask),), "clip")


_PIECEWISE = {"leaky_relu", "clip"}


# --- backward driver --------------------------------------------------------

def _toposort(outputs, stop_ids):
    order, seen = [], set()
    for out in outputs:
        stack = [(out, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            if id(node) in stop_ids:
                continue
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
    return order  # parents before children


def grad(outputs, inputs, grad_outputs=None, create_graph=False, allow_piecewise=False):
    """Gradients of ``sum(outputs)`` with respect to each of ``inputs``.

    With ``create_graph`` the returned tensors carry their own graph.  In that
    mode a leaky-relu or clip node on a differentiated path raises
    :class:`NonSmoothNestedGradError` unless ``allow_piecewise`` is set.
    Inputs that do not influence the outputs get a zero gradient.
    """
    single_out = isinstance(outputs, Tensor)
    outputs = [outputs] if single_out else list(outputs)
    single_in = isinstance(inputs, Tensor)
    inputs = [inputs] if single_in else list(inputs)
    if grad_outputs is None:
        grad_outputs = [Tensor(np.ones_like(o.data)) for o in outputs]
    else:
        grad_outputs = [grad_outputs] if isinstance(grad_outputs, Tensor) else list(grad_outputs)
        grad_outputs = [tensor(g) for g in grad_outputs]

    stop_ids = {id(x) for x in inputs}
    order = _toposort([o for o in outputs if o.requires_grad], stop_ids)

    # keep only nodes from which some input is reachable
    reaches = {}
    for node in order:
        r = id(node) in stop_ids
        if not r and id(node) not in stop_ids:
            r = any(reaches.get(id(p), False) for p in node.parents)
        reaches[id(node)] = r

    grads: dict[int, Tensor] = {}
    for o, go in zip(outputs, grad_outputs):
        if o.requires_grad and reaches.get(id(o), False):
            grads[id(o)] = add(grads[id(o)], go) if id(o) in grads else go

    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        for node in reversed(order):
            nid = id(node)
            if nid in stop_ids or nid not in grads or node.backward is None:
                continue
            if create_graph and not allow_piecewise and node.op in _PIECEWISE:
                raise NonSmoothNestedGradError(
                    f"{node.op} lies on a path differentiated with create_graph=True"
                )
            g = grads.pop(nid)
            pgrads = node.backward(g)
            for p, pg in zip(node.parents, pgrads):
                if pg is None or not p.requires_grad or not reaches.get(id(p), False):
                    continue
                pid = id(p)
                grads[pid] = add(grads[pid], pg) if pid in grads else pg

    result = []
    for x in inputs:
        g = grads.get(id(x))
        if g is None:
            g = Tensor(np.zeros_like(x.data))
        elif not create_graph:
            g = Tensor(g.data)
        result.append(g)
    for g in result:
        if not np.all(np.isfinite(g.data)):
            raise NonFiniteError("non-finite gradient")
    return result[0] if single_in else result
