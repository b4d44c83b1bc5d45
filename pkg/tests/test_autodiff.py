import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from steinbridge import autodiff as ad
from steinbridge.autodiff import engine
from steinbridge.autodiff import (
    AdamState, MlpSpec, NonSmoothNestedGradError, ParamStore, Tensor, adam_step, forward, forward_t, glorot_init,
    grad_input, grad_params,
)
from steinbridge.autodiff import checkpoint as ckpt
from steinbridge.numkit import RngStream

import gradcases
from oracles import central_diff, mlp_forward_loops, rel_err


def test_zero_network_outputs_zero():
    spec = MlpSpec.build([3, 4, 2], "tanh")
    ps = ParamStore.zeros(spec.layout())
    assert np.all(forward(spec, ps, np.ones((5, 3))) == 0)


def test_single_affine_layer():
    spec = MlpSpec.build([3, 2])
    rng = np.random.default_rng(0)
    W, b = rng.normal(size=(2, 3)), rng.normal(size=2)
    X = rng.normal(size=(4, 3))
    out = forward(spec, ParamStore(["W0", "b0"], [W, b]), X)
    assert np.allclose(out, X @ W.T + b, atol=1e-14)


@pytest.mark.parametrize("act", ["tanh", "sigmoid", "softplus", "leaky_relu"])
@pytest.mark.parametrize("out", ["identity", "sigmoid"])
def test_forward_matches_scalar_loops(act, out):
    spec = MlpSpec.build([3, 5, 4, 2], act, out)
    ps = glorot_init(spec, RngStream(1).child(act))
    X = np.random.default_rng(2).normal(size=(4, 3))
    got = forward(spec, ps, X)
    for i in range(4):
        ref = mlp_forward_loops(spec.widths, spec.activations, out, [a.tolist() for a in ps.arrays], X[i])
        assert np.allclose(got[i], ref, atol=1e-12, rtol=0)


def test_forward_rejects_width_mismatch():
    spec = MlpSpec.build([3, 2])
    with pytest.raises(ValueError):
        forward(spec, ParamStore.zeros(spec.layout()), np.ones((2, 4)))


def test_spec_validation():
    with pytest.raises(ValueError):
        MlpSpec((3,))
    with pytest.raises(ValueError):
        MlpSpec((3, 0, 1), ("tanh",))
    with pytest.raises(ValueError):
        MlpSpec((3, 4, 1), ("relu6",))
    assert MlpSpec.from_dict(MlpSpec.build([2, 3, 1]).to_dict()) == MlpSpec.build([2, 3, 1])


def test_param_norm_gradient_is_params():
    spec = MlpSpec.build([2, 3, 1])
    ps = glorot_init(spec, RngStream(3))
    ps.arrays[1][:] = 0.5
    _, g = grad_params(lambda L: sum((t * t).sum() for t in L) * 0.5, ps)
    assert np.allclose(g, ps.flat())


def test_constant_loss_zero_gradient():
    spec = MlpSpec.build([2, 3, 1])
    ps = glorot_init(spec, RngStream(3))
    _, g = grad_params(lambda L: Tensor(np.array(4.0)) + (L[0] * 0.0).sum(), ps)
    assert np.all(g == 0)


def test_mean_output_gradient_matches_fd():
    spec = MlpSpec.build([3, 6, 6, 1], "tanh")
    ps = glorot_init(spec, RngStream(4))
    X = np.random.default_rng(4).normal(size=(7, 3))
    _, g = grad_params(lambda L: forward_t(spec, L, X).mean(), ps)

    def f(v):
        q = ps.copy()
        q.set_flat(v)
        return float(forward(spec, q, X).mean())

    assert rel_err(g, central_diff(f, ps.flat())) < 1e-4


def test_input_gradient_linear_and_softplus():
    w, b = np.array([[1.5, -2.0, 0.5]]), np.array([0.3])
    lin = MlpSpec.build([3, 1])
    x = np.array([0.2, -0.1, 0.7])
    assert np.allclose(grad_input(lin, ParamStore(["W0", "b0"], [w, b]), x), w[0])
    # softplus(w.x) as a one-hidden-unit net with identity readout
    spec = MlpSpec.build([3, 1, 1], "softplus")
    ps = ParamStore(["W0", "b0", "W1", "b1"], [w, np.zeros(1), np.ones((1, 1)), np.zeros(1)])
    sig = 1.0 / (1.0 + np.exp(-w[0] @ x))
    assert np.allclose(grad_input(spec, ps, x), sig * w[0], atol=1e-14)


def test_nested_bilinear_case():
    # f(x) = phi x^2 / 2, loss = f'(x0) = phi x0, so d loss / d phi = x0
    x0 = 1.7
    phi = Tensor(np.array(0.4), requires_grad=True)
    X = Tensor(np.array([[x0]]), requires_grad=True)
    f = (X * X * phi * 0.5).sum()
    fx = ad.grad(f, X, create_graph=True)
    g = ad.grad(fx.sum(), phi)
    assert float(g.data) == pytest.approx(x0, abs=1e-14)


def test_nested_without_input_grad_reduces_to_plain():
    spec = MlpSpec.build([2, 4, 1], "tanh")
    ps = glorot_init(spec, RngStream(8))
    X = np.random.default_rng(8).normal(size=(3, 2))
    leaves = ps.tensors()
    plain = ad.grad(forward_t(spec, leaves, X).sum(), leaves)
    leaves2 = ps.tensors()
    nested = ad.grad(forward_t(spec, leaves2, X).sum(), leaves2, create_graph=True)
    for a, b in zip(plain, nested):
        assert np.array_equal(a.data, b.data)


def test_leaky_relu_rejected_on_nested_path():
    spec = MlpSpec.build([2, 4, 1], "leaky_relu")
    ps = glorot_init(spec, RngStream(9))
    X = Tensor(np.ones((2, 2)), requires_grad=True)
    out = forward_t(spec, ps, X)
    with pytest.raises(NonSmoothNestedGradError):
        ad.grad(out.sum(), X, create_graph=True)
    # first-order use is fine
    ad.grad(forward_t(spec, ps, X).sum(), X)


def test_non_finite_gradient_raises():
    x = Tensor(np.array([0.0]), requires_grad=True)
    with np.errstate(divide="ignore"), pytest.raises(ad.NonFiniteError):
        ad.grad(engine.log(x).sum(), x)


def test_unused_input_gets_zero_gradient():
    a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    b = Tensor(np.array([3.0]), requires_grad=True)
    ga, gb = ad.grad((a * a).sum(), [a, b])
    assert np.array_equal(ga.data, [2.0, 4.0]) and np.array_equal(gb.data, [0.0])


@pytest.mark.parametrize("name,arrays,fn", list(gradcases.cases(seed=11)),
                         ids=lambda v: v if isinstance(v, str) else "")
def test_gradient_paths_match_fd(name, arrays, fn):
    assert gradcases.check(arrays, fn) < 1e-4


@given(st.integers(0, 10_000), st.sampled_from(["tanh", "sigmoid", "softplus"]))
def test_random_mlp_gradient_property(seed, act):
    r = RngStream(seed)
    spec = MlpSpec.build([2, 4, 1], act)
    ps = glorot_init(spec, r)
    X = r.normal((3, 2))
    assert gradcases.check(ps.arrays, lambda L: (forward_t(spec, L, X) ** 2).sum()) < 1e-4


# --- Adam ---------------------------------------------------------------------

def test_adam_zero_gradient_first_step():
    s = AdamState.init(3, lr=0.1)
    p = np.array([1.0, -2.0, 3.0])
    s2, p2 = adam_step(s, p, np.zeros(3))
    assert np.array_equal(p2, p)
    assert np.all(s2.m == 0) and np.all(s2.v == 0) and s2.t == 1


def test_adam_first_step_hand_value():
    s = AdamState.init(1, lr=0.1, beta1=0.9, beta2=0.999)
    _, p = adam_step(s, np.array([0.0]), np.array([1.0]))
    # mhat = 1, vhat = 1, so the step is lr / (1 + eps)
    assert p[0] == pytest.approx(-0.1 / (1 + 1e-8), abs=1e-15)


@given(st.floats(-100, 100).filter(lambda g: abs(g) > 1e-3))
def test_adam_constant_gradient_step_size(g):
    s = AdamState.init(1, lr=0.01)
    p = np.array([0.0])
    for _ in range(200):
        prev = p.copy()
        s, p = adam_step(s, p, np.array([g]))
    assert abs(p[0] - prev[0]) == pytest.approx(0.01, rel=1e-3)
    assert np.sign(prev[0] - p[0]) == np.sign(g)


def test_adam_does_not_mutate_and_checks_shapes():
    s = AdamState.init(2)
    p = np.array([1.0, 2.0])
    adam_step(s, p, np.ones(2))
    assert np.array_equal(p, [1.0, 2.0]) and s.t == 0
    with pytest.raises(ValueError):
        adam_step(s, p, np.ones(3))


def test_adam_state_roundtrip():
    s = AdamState.init(3, lr=1e-3, beta1=0.5)
    s, _ = adam_step(s, np.zeros(3), np.array([1.0, -1.0, 2.0]))
    s2 = AdamState.from_dict(json.loads(json.dumps(s.to_dict())))
    assert np.array_equal(s.m, s2.m) and np.array_equal(s.v, s2.v) and s.t == s2.t and s2.beta1 == 0.5


def test_param_store_flat_roundtrip_and_checkpoint(tmp_path):
    spec = MlpSpec.build([2, 3, 1], "tanh")
    ps = glorot_init(spec, RngStream(5))
    q = ps.copy()
    q.set_flat(ps.flat() * 2)
    assert np.allclose(q.flat(), 2 * ps.flat())
    assert not np.array_equal(ps.flat(), q.flat())
    path = tmp_path / "m.json"
    ckpt.save(path, spec, ps)
    kind, spec2, ps2 = ckpt.load(path)
    assert kind == "mlp"
    assert spec2 == spec and np.array_equal(ps2.flat(), ps.flat())
