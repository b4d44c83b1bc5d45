"""Random gradient-check instances over every differentiation path the trainer uses."""
import numpy as np

from steinbridge import autodiff as ad
from steinbridge import discrepancy as dis
from steinbridge import models as mdl
from steinbridge.autodiff import MlpSpec, Tensor, glorot_init
from steinbridge.numkit import RngStream

from oracles import central_diff, rel_err


def _flat(arrays):
    return np.concatenate([a.ravel() for a in arrays])


def _unflat(v, like):
    out, i = [], 0
    for a in like:
        out.append(v[i:i + a.size].reshape(a.shape))
        i += a.size
    return out


def check(arrays, loss_fn, eps=1e-6):
    """Relative error between reverse-mode and central-difference gradients.

    ``loss_fn`` maps a list of parameter tensors to a scalar tensor.
    """
    leaves = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    gs = ad.grad(loss_fn(leaves), leaves, allow_piecewise=True)
    analytic = _flat([g.data for g in gs])

    def f(v):
        ls = [Tensor(a, requires_grad=True) for a in _unflat(v, arrays)]
        return float(loss_fn(ls).data)

    numeric = central_diff(f, _flat(arrays), eps)
    return rel_err(analytic, numeric)


def _mlp(rng, widths, act, out="identity"):
    spec = MlpSpec.build(widths, act, out)
    return spec, glorot_init(spec, rng)


def _small_energy(rng, d=2, act="tanh"):
    return mdl.EnergyModel.create(MlpSpec.build([d, 6, 6, 3], act), 3, rng)


def cases(seed=0):
    """Yield (path name, parameter arrays, loss_fn)."""
    rng = RngStream(seed)
    acts = ("tanh", "sigmoid", "softplus", "leaky_relu")

    # plain parameter gradients
    for i in range(10):
        r = rng.child(f"mlp{i}")
        spec, ps = _mlp(r, [3, 7, 5, 2], acts[i % 4], "sigmoid" if i % 3 == 0 else "identity")
        X = r.normal((6, 3))
        yield "mlp/params", ps.arrays, lambda L, spec=spec, X=X: (ad.forward_t(spec, L, X) ** 2).mean()

    # input gradients: X is the differentiated "parameter"
    for i in range(8):
        r = rng.child(f"inp{i}")
        spec, ps = _mlp(r, [2, 6, 6, 1], acts[i % 3])
        X = r.normal((5, 2))
        yield "mlp/input", [X], lambda L, spec=spec, ps=ps: ad.forward_t(spec, ps, L[0]).sum()

    # parameter gradient of a squared score (nested)
    for i in range(8):
        r = rng.child(f"score{i}")
        E = _small_energy(r, act=("tanh", "softplus", "sigmoid")[i % 3])
        X = r.normal((4, 2))

        def fn(L, E=E, X=X):
            S = E.score_t(L, Tensor(X, requires_grad=True), create_graph=True)
            return (S * S).sum(axis=1).mean()

        yield "energy/score_sq", E.params.arrays, fn

    # parameter gradient of the KSD U-statistic (nested)
    for i in range(8):
        r = rng.child(f"ksd{i}")
        E = _small_energy(r)
        X = r.normal((6, 2)) * 1.5
        h = float(r.uniform(0.5, 2.0))

        def fn(L, E=E, X=X, h=h):
            Xt = Tensor(X, requires_grad=True)
            return dis.ksd_t(E.score_t(L, Xt, create_graph=True), Xt, h)

        yield "ksd/energy_params", E.params.arrays, fn

    # gradient penalty (nested through the critic)
    for i in range(6):
        r = rng.child(f"gp{i}")
        spec, ps = _mlp(r, [2, 6, 6, 1], "tanh" if i % 2 == 0 else "leaky_relu")
        C = mdl.WassersteinCritic(spec, ps, "wasserstein")
        Xr, Xf = r.normal((5, 2)), r.normal((5, 2)) + 1.0
        Xh = dis.interpolates(Xr, Xf, r)
        yield "wgan/critic_gp", ps.arrays, (
            lambda L, C=C, Xr=Xr, Xf=Xf, Xh=Xh: dis.wasserstein_critic_loss_t(C, L, Xr, Xf, dis.GpConfig(10.0), Xh))

    # neural Stein objective: critic params and energy params (divergence path)
    for i in range(6):
        r = rng.child(f"stein{i}")
        E = _small_energy(r)
        fspec, fps = _mlp(r, [2, 6, 2], "tanh")
        F = mdl.SteinCriticNet(fspec, fps)
        X = r.normal((5, 2))

        def obj(eL, fL, E=E, F=F, X=X):
            Xt = Tensor(X, requires_grad=True)
            S = E.score_t(eL, Xt, create_graph=True)
            Fx = F.value_t(fL, Xt)
            return dis.stein_operator_t(S, Fx, dis.divergence_t(Fx, Xt, create_graph=True)).mean()

        if i % 2 == 0:
            yield "stein/critic_params", fps.arrays, (lambda L, obj=obj, E=E: obj([Tensor(a) for a in E.params.arrays], L))
        else:
            yield "stein/energy_params", E.params.arrays, (lambda L, obj=obj, fps=fps: obj(L, [Tensor(a) for a in fps.arrays]))

    # generator parameters through the KSD bridge (score at generated points)
    for i in range(6):
        r = rng.child(f"gen{i}")
        gspec, gps = _mlp(r, [2, 6, 2], "tanh")
        E = _small_energy(r)
        Z = r.normal((6, 2))

        def fn(L, gspec=gspec, E=E, Z=Z):
            X = ad.forward_t(gspec, L, Z)
            e_leaves = [Tensor(a) for a in E.params.arrays]
            return dis.ksd_t(E.score_t(e_leaves, X, create_graph=True), X, 1.3)

        yield "generator/ksd_bridge", gps.arrays, fn

    # JS losses with clamping
    for i in range(4):
        r = rng.child(f"js{i}")
        spec, ps = _mlp(r, [2, 5, 1], "tanh", "sigmoid")
        D = mdl.WassersteinCritic(spec, ps, "js")
        Xr, Xf = r.normal((5, 2)), r.normal((5, 2))
        if i % 2 == 0:
            yield "js/disc", ps.arrays, lambda L, D=D, Xr=Xr, Xf=Xf: dis.js_disc_loss_t(D, L, Xr, Xf)
        else:
            yield "js/gen", ps.arrays, lambda L, D=D, Xf=Xf: dis.js_gen_loss_t(D.value_t(L, Xf))


def run_all(seed=0):
    return [(name, check(arrays, fn)) for name, arrays, fn in cases(seed)]
