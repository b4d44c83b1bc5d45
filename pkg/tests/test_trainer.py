import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from steinbridge import synthdata as sd
from steinbridge import trainer as tr
from steinbridge.autodiff import Tensor
from steinbridge.numkit import RngStream

import gradcases

DATA = sd.two_circle_mixture().sample(400, RngStream(0).child("data"))


def small(**kw):
    base = dict(hidden=8, batch_size=16, n_d=2, n_c=2, iterations=6, eval_every=3)
    base.update(kw)
    return tr.TrainConfig(**base)


# --- schedule -----------------------------------------------------------------

def test_lambda2_schedule_examples():
    s = tr.Lambda2Schedule(start=0.0, end=1.0, ramp=1000, warmup=1000)
    assert tr.lambda2_at(s, 0) == 0.0
    assert tr.lambda2_at(s, 1500) == 0.5
    assert tr.lambda2_at(s, 10**6) == 1.0


@given(st.integers(0, 5000), st.integers(0, 5000))
def test_lambda2_schedule_monotone_and_bounded(a, b):
    s = tr.Lambda2Schedule(0.2, 1.5, 700, 300)
    lo, hi = sorted((a, b))
    assert tr.lambda2_at(s, lo) <= tr.lambda2_at(s, hi)
    assert 0.0 <= tr.lambda2_at(s, hi) <= 1.5


def test_lambda2_default_schedule_and_constant():
    cfg = tr.TrainConfig(iterations=5000)
    assert cfg.schedule == tr.Lambda2Schedule(0.0, 1.0, 1000, 1000)
    assert tr.lambda2_at(tr.Lambda2Schedule.constant(0.3), 0) == 0.3
    with pytest.raises(ValueError):
        tr.lambda2_at(cfg.schedule, -1)
    with pytest.raises(ValueError):
        tr.Lambda2Schedule(end=-1.0)


# --- config -------------------------------------------------------------------

def test_config_defaults_and_groups():
    cfg = tr.TrainConfig()
    assert (cfg.n_d, cfg.n_c, cfg.batch_size, cfg.lam1) == (5, 5, 100, 1.0)
    assert cfg.explicit == tr.AdamGroup(2e-4, 0.9, 0.999)
    assert cfg.implicit == tr.AdamGroup(2e-4, 0.5, 0.999)


def test_config_validation_and_roundtrip():
    with pytest.raises(ValueError):
        tr.TrainConfig(variant="W+MMD")
    with pytest.raises(ValueError):
        tr.TrainConfig(lam1=-1)
    with pytest.raises(ValueError):
        tr.TrainConfig.from_dict({"variant": "W+KSD", "momentum": 0.9})
    cfg = small(variant="JS+SteinNet")
    assert tr.TrainConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("variant", tr.VARIANTS)
def test_variant_flags(variant):
    cfg = tr.TrainConfig(variant=variant)
    assert cfg.wasserstein == variant.startswith("W")
    assert cfg.uses_ksd == variant.endswith("KSD")
    st_ = tr.init_state(small(variant=variant))
    assert (st_.models.stein_critic is None) == cfg.uses_ksd
    assert st_.models.critic.mode == ("wasserstein" if cfg.wasserstein else "js")


# --- steps --------------------------------------------------------------------

def _params(state):
    return {k: m.params.flat().copy() for k, m in state.models.named().items()}


@pytest.mark.parametrize("variant", tr.VARIANTS)
def test_train_step_bit_reproducible(variant):
    cfg = small(variant=variant, lam2_warmup=0, lam2_ramp=0)
    a, b = tr.init_state(cfg), tr.init_state(cfg)
    for _ in range(2):
        sa, sb = tr.train_step(a, DATA), tr.train_step(b, DATA)
        assert sa.losses() == sb.losses()
    pa, pb = _params(a), _params(b)
    assert all(np.array_equal(pa[k], pb[k]) for k in pa)
    assert all(np.isfinite(v) for v in sa.losses())


def test_train_step_updates_every_block_once_bridge_is_on():
    cfg = small(variant="W+SteinNet", lam2_warmup=0, lam2_ramp=0)
    st_ = tr.init_state(cfg)
    before = _params(st_)
    tr.train_step(st_, DATA)
    after = _params(st_)
    assert all(not np.array_equal(before[k], after[k]) for k in before)
    assert st_.adam["generator"].t == 1 and st_.adam["critic"].t == cfg.n_d
    assert st_.adam["stein_critic"].t == cfg.n_c and st_.adam["estimator"].t == 1
    assert st_.adam["generator"].beta1 == 0.5 and st_.adam["estimator"].beta1 == 0.9


@pytest.mark.parametrize("variant", ["W+SteinNet", "W+KSD", "JS+KSD"])
def test_zero_weights_reduce_to_gan_baseline(variant):
    cfg = small(variant=variant, lam1=0.0, lam2_start=0.0, lam2_end=0.0)
    full, base = tr.init_state(cfg), tr.init_state(cfg)
    est0 = full.models.estimator.params.flat().copy()
    for _ in range(4):
        s1, s2 = tr.train_step(full, DATA), tr.wgan_gp_step(base, DATA)
        assert s1.L_dis == s2.L_dis and s1.L_gen == s2.L_gen
    for k in ("generator", "critic"):
        assert np.array_equal(_params(full)[k], _params(base)[k])
    assert np.array_equal(full.models.estimator.params.flat(), est0)


def test_zero_bridge_estimator_is_ksd_dem():
    cfg = small(variant="W+KSD", lam1=1.0, lam2_start=0.0, lam2_end=0.0)
    full, dem = tr.init_state(cfg), tr.init_state(cfg)
    for _ in range(4):
        s = tr.train_step(full, DATA)
        loss = tr.ksd_dem_step(dem, DATA)
        assert s.L_est == loss
    assert np.array_equal(full.models.estimator.params.flat(), dem.models.estimator.params.flat())


def test_seed_changes_trajectory():
    a, b = tr.init_state(small(seed=1)), tr.init_state(small(seed=2))
    tr.train_step(a, DATA)
    tr.train_step(b, DATA)
    assert not np.array_equal(a.models.generator.params.flat(), b.models.generator.params.flat())


def test_train_step_rejects_small_data_and_aborts_on_nan():
    cfg = small()
    with pytest.raises(ValueError):
        tr.train_step(tr.init_state(cfg), DATA[:5])
    bad = DATA.copy()
    bad[:] = np.nan
    st_ = tr.init_state(cfg)
    with pytest.raises(tr.TrainingAborted) as exc:
        tr.train_step(st_, bad)
    assert exc.value.snapshot.iteration == 0 and exc.value.stage == "critic"


# --- gradient probes on frozen steps --------------------------------------------

@pytest.mark.parametrize("variant", ["W+KSD", "W+SteinNet"])
def test_estimator_loss_gradient_matches_fd(variant):
    cfg = small(variant=variant, hidden=5)
    st_ = tr.init_state(cfg)
    M = st_.models
    r = RngStream(9)
    Xr, Xf = DATA[:8], M.generator(r.normal((8, cfg.noise_dim)))
    err = gradcases.check(M.estimator.params.arrays, lambda L: tr.estimator_loss_t(cfg, M, L, Xr, Xf, 0.7))
    assert err < 1e-4


@pytest.mark.parametrize("variant", ["W+KSD", "W+SteinNet", "JS+KSD"])
def test_generator_loss_gradient_matches_fd(variant):
    # the per-batch median bandwidth is a stop-gradient, so pin it for the probe
    cfg = small(variant=variant, hidden=5, generator_activation="tanh", critic_activation="tanh",
                ksd_bandwidth=1.3)
    st_ = tr.init_state(cfg)
    M = st_.models
    Z = RngStream(10).normal((8, cfg.noise_dim))
    err = gradcases.check(M.generator.params.arrays, lambda L: tr.generator_loss_t(cfg, M, L, Z, 0.6))
    assert err < 1e-4


def test_generator_loss_without_bridge_is_adversarial_only():
    cfg = small()
    M = tr.init_state(cfg).models
    Z = RngStream(11).normal((8, cfg.noise_dim))
    loss = float(tr.generator_loss_t(cfg, M, [Tensor(a) for a in M.generator.params.arrays], Z, 0.0).data)
    assert loss == pytest.approx(-float(np.mean(M.critic(M.generator(Z)))), abs=1e-14)


# --- loop and checkpoints -----------------------------------------------------

def test_loop_zero_iterations_initial_snapshot_only():
    _, snaps = tr.train_loop(small(iterations=0), DATA)
    assert [s.iteration for s in snaps] == [0]


def test_loop_snapshot_cadence_and_callbacks():
    seen, logs, cks = [], [], []
    state, snaps = tr.train_loop(small(iterations=7, eval_every=3, checkpoint_every=2), DATA,
                                 on_snapshot=lambda s, _: seen.append(s.iteration),
                                 on_log=lambda s, w: logs.append(tr.log_row(s, w)),
                                 on_checkpoint=lambda st_: cks.append(st_.iteration))
    assert [s.iteration for s in snaps] == [0, 3, 6, 7] == seen
    assert len(logs) == 7 and len(logs[0]) == len(tr.LOG_COLUMNS)
    assert cks == [2, 4, 6]
    assert state.iteration == 7


def test_resume_reproduces_uninterrupted_run(tmp_path):
    cfg = small(iterations=6, variant="W+SteinNet", lam2_warmup=1, lam2_ramp=2)
    straight, _ = tr.train_loop(cfg, DATA)
    half, _ = tr.train_loop(cfg, DATA, stop_at=3)
    path = tmp_path / "state.json"
    tr.save_state(path, half)
    resumed, _ = tr.train_loop(cfg, DATA, state=tr.load_state(path))
    assert tr.params_equal(straight, resumed)
    for k in straight.adam:
        assert np.array_equal(straight.adam[k].m, resumed.adam[k].m)
        assert straight.adam[k].t == resumed.adam[k].t
    assert straight.last == resumed.last


def test_state_roundtrip_preserves_streams():
    st_ = tr.init_state(small())
    tr.train_step(st_, DATA)
    back = tr.state_from_dict(tr.state_to_dict(st_))
    for name in tr.STREAMS:
        assert np.array_equal(st_.streams[name].normal(3), back.streams[name].normal(3))
    with pytest.raises(ValueError):
        tr.state_from_dict({"format": "other"})


def test_format_float_roundtrips():
    x = 0.1 + 0.2
    assert float(tr.format_float(x)) == x
