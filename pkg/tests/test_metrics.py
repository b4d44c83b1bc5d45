import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from steinbridge import metrics as mt
from steinbridge import models as mdl
from steinbridge import synthdata as sd
from steinbridge.numkit import RbfKernel, RngStream

from oracles import grid_kl_js_quadrature, mmd_double_loop


class ShiftedEnergy:
    """Wrap an energy with a constant offset."""

    def __init__(self, E, c):
        self.E, self.c = E, c

    def energy(self, X):
        return self.E.energy(X) + self.c


def test_mmd_identical_samples_zero():
    X = np.random.default_rng(0).normal(size=(50, 2))
    assert mt.mmd(X, X) == 0.0


@given(st.floats(-6, 6))
def test_mmd_two_point_closed_form(t):
    v = mt.mmd([[0.0]], [[t]], RbfKernel(1.0))
    assert v == pytest.approx(math.sqrt(max(0.0, 2 - 2 * math.exp(-t * t / 2))), abs=1e-7)


def test_mmd_matches_double_loop():
    rng = np.random.default_rng(1)
    X, Y = rng.normal(size=(30, 2)), rng.normal(size=(25, 2)) + 0.5
    h = 1.3
    assert mt.mmd(X, Y, RbfKernel(h)) == pytest.approx(mmd_double_loop(X.tolist(), Y.tolist(), h), abs=1e-12)


@given(st.integers(0, 1000))
def test_mmd_symmetric_nonnegative(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.normal(size=(10, 2)), rng.normal(size=(12, 2))
    k = RbfKernel(1.0)
    assert mt.mmd(X, Y, k) >= 0
    assert mt.mmd(X, Y, k) == pytest.approx(mt.mmd(Y, X, k), abs=1e-12)


def test_default_kernel_thins_large_pools():
    X = np.random.default_rng(2).normal(size=(1500, 2))
    k = mt.default_kernel(X, X)
    assert k.bandwidth > 0
    with pytest.raises(ValueError):
        mt.mmd(np.zeros((0, 2)), X)


def test_hsr_examples():
    m = sd.two_circle_mixture()
    assert mt.hsr(m.means, m, 0.2) == 1.0
    far = np.array([[100.0, 100.0], [-100.0, 50.0]])
    assert mt.hsr(far, m, 1.0) == 0.0
    with pytest.raises(ValueError):
        mt.hsr(far, m, 0.0)


def test_hsr_default_thresholds():
    assert mt.default_hsr_threshold("two-circle") == 0.2
    assert mt.default_hsr_threshold("two-spiral") == 2.5
    assert mt.default_hsr_threshold("two-circle", "std") == pytest.approx(math.sqrt(0.2))
    with pytest.raises(ValueError):
        mt.default_hsr_threshold("two-circle", "other")


@given(st.floats(0.01, 5.0), st.floats(0.01, 5.0))
def test_hsr_monotone_in_threshold(a, b):
    m = sd.two_circle_mixture()
    X = m.sample(300, RngStream(3))
    lo, hi = min(a, b), max(a, b)
    assert mt.hsr(X, m, lo) <= mt.hsr(X, m, hi)


def test_modes_covered():
    m = sd.two_circle_mixture()
    cov = mt.modes_covered(m.means[:5], m, 3 * m.std)
    assert cov[:5].all() and not cov[5:].any()


def test_default_grids_cover_six_std():
    for name, g in mt.DEFAULT_GRIDS.items():
        assert g.resolution == 300
        assert mt.grid_covers(g, sd.get_mixture(name))
    assert not mt.grid_covers(mt.GridSpec.square(8.0), sd.two_spiral_mixture())


def test_grid_divergences_true_density_zero():
    m = sd.two_circle_mixture()
    g = mt.GridSpec.square(11.0, 120)
    kld, jsd = mt.grid_divergences(m, m, g)
    assert kld == pytest.approx(0.0, abs=1e-12) and jsd == pytest.approx(0.0, abs=1e-12)
    kld2, _ = mt.grid_divergences(m, lambda X: m.log_density(X) + 3.0, g)
    assert kld2 == pytest.approx(0.0, abs=1e-12)


def test_grid_divergences_uniform_matches_quadrature():
    m = sd.two_circle_mixture()
    g = mt.GridSpec.square(11.0, 60)
    kld, jsd = mt.grid_divergences(m, lambda X: np.zeros(len(X)), g)
    pts = g.points()
    p_vals = [math.exp(v) for v in m.log_density(pts)]
    ref_kl, ref_js = grid_kl_js_quadrature(p_vals, [1.0] * len(p_vals))
    assert kld == pytest.approx(ref_kl, abs=1e-9)
    assert jsd == pytest.approx(ref_js, abs=1e-9)


@given(st.integers(0, 500), st.floats(-50, 50))
def test_grid_divergences_invariant_to_energy_shift(seed, c):
    m = sd.two_circle_mixture()
    E = mdl.default_energy(RngStream(seed), hidden=16)
    g = mt.GridSpec.square(11.0, 40)
    a = mt.grid_divergences(m, E, g)
    b = mt.grid_divergences(m, ShiftedEnergy(E, c), g)
    assert a[0] == pytest.approx(b[0], abs=1e-10) and a[1] == pytest.approx(b[1], abs=1e-10)
    assert 0 <= a[1] <= math.log(2) + 1e-12
    assert a[0] >= -1e-12


def test_grid_divergences_rejects_empty_mass():
    m = sd.two_circle_mixture()
    with pytest.raises(ValueError):
        mt.grid_divergences(m, lambda X: np.full(len(X), -np.inf), mt.GridSpec.square(11.0, 10))


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        mt.GridSpec((1.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        mt.GridSpec.square(1.0, 1)


def test_auc_ranking_identities():
    assert mt.auc_from_scores([3.0, 4.0], [1.0, 2.0]) == 1.0
    assert mt.auc_from_scores([1.0], [2.0]) == 0.0
    assert mt.auc_from_scores([1.0, 1.0], [1.0]) == 0.5


def test_density_auc_oracle_and_constant_and_inverted():
    m = sd.two_circle_mixture()
    spec = mt.AucSpec()
    oracle = mt.density_auc(m, m, spec, RngStream(0))
    assert oracle >= 0.95
    const = mt.density_auc(lambda X: np.zeros(len(X)), m, spec, RngStream(0))
    assert const == 0.5
    inv = mt.density_auc(lambda X: -m.log_density(X), m, spec, RngStream(0))
    assert inv == pytest.approx(1 - oracle, abs=1e-12)


def test_auc_negatives_within_radius():
    m = sd.two_circle_mixture()
    spec = mt.AucSpec(negatives_per_center=7, radius=1.5)
    neg = mt.auc_negatives(m, spec, RngStream(1))
    assert neg.shape == (24 * 7, 2)
    centers = np.repeat(m.means, 7, axis=0)
    assert np.all(np.linalg.norm(neg - centers, axis=1) <= 1.5)
    with pytest.raises(ValueError):
        mt.AucSpec(negatives_per_center=0)
