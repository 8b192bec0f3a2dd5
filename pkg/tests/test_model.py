import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from prvr.autograd import Tensor, backward
from prvr.config import Config
from prvr.errors import ConfigError, DimensionError, NumericalError
from prvr.gradcheck import numeric_grad
from prvr.metrics import rank_candidates
from prvr.model import (
    StudentModel,
    batch_losses,
    branch_similarity,
    distill_weight,
    fuse_similarity,
    fused_scores,
    info_nce_loss,
    total_loss,
    train,
    triplet_loss,
)
from prvr.synth import SyntheticSpec, generate

SMALL = Config(scales=(2,), heads=2, rmax=3, radii=(2,), batch_size=4, epochs=1, lr=0.1)


@pytest.fixture(scope="module")
def tiny():
    return generate(SyntheticSpec(videos=8, frames=6, dim=8, teacher_dim=6, query_len=4, moment_min=1, moment_max=3, holdout=0.25))


# -- losses --------------------------------------------------------------------------
def test_info_nce_identity_matrix():
    sim = np.eye(3)
    expected = -math.log(math.exp(1 / 0.07) / (math.exp(1 / 0.07) + 2))
    assert info_nce_loss(sim).item() == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("b", [1, 2, 5])
def test_info_nce_constant_matrix_is_log_b(b):
    assert info_nce_loss(np.full((b, b), 0.3)).item() == pytest.approx(math.log(b), abs=1e-12)


def test_info_nce_matches_oracle():
    sim = np.random.default_rng(0).uniform(-1, 1, (5, 5))
    assert info_nce_loss(sim, 0.07).item() == pytest.approx(oracles.info_nce(sim.tolist(), 0.07), abs=1e-10)


def test_info_nce_rejects_bad_temperature():
    with pytest.raises(ConfigError):
        info_nce_loss(np.eye(2), 0.0)


def test_triplet_separated_matrix_is_zero():
    sim = np.array([[0.9, 0.1, 0.2], [0.0, 0.8, 0.3], [0.1, 0.2, 0.95]])
    assert triplet_loss(sim).item() == 0.0


@pytest.mark.parametrize("b", [2, 4])
def test_triplet_constant_matrix_is_margin(b):
    assert triplet_loss(np.full((b, b), 0.5), 0.2).item() == pytest.approx(0.2, abs=1e-15)


def test_triplet_single_pair_is_zero():
    assert triplet_loss(np.array([[0.4]])).item() == 0.0


def test_triplet_matches_oracle():
    sim = np.random.default_rng(1).uniform(-1, 1, (6, 6))
    assert triplet_loss(sim, 0.2).item() == pytest.approx(oracles.triplet(sim.tolist(), 0.2), abs=1e-12)


def test_triplet_duplicate_columns():
    sim = np.array([[0.7, 0.7], [0.7, 0.7]])
    assert triplet_loss(sim, 0.2).item() == pytest.approx(0.2, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_losses_non_negative(b, seed):
    sim = np.random.default_rng(seed).uniform(-1, 1, (b, b))
    assert info_nce_loss(sim).item() >= 0.0
    assert triplet_loss(sim).item() >= 0.0


def test_loss_gradients():
    rng = np.random.default_rng(2)
    sim = Tensor(rng.uniform(-1, 1, (4, 4)), requires_grad=True)
    for fn in (lambda: info_nce_loss(sim), lambda: triplet_loss(sim)):
        sim.grad = None
        backward(fn())
        num = numeric_grad(fn, sim, 1e-5)
        assert np.max(np.abs(sim.grad - num)) / np.max(np.abs(num)) < 1e-4


# -- weighting and fusion -----------------------------------------------------------
def test_distill_weight_schedule():
    cfg = Config()
    assert distill_weight(0, cfg) == 1.0
    assert distill_weight(1, cfg) == pytest.approx(0.95, abs=1e-15)
    assert distill_weight(10, cfg) == pytest.approx(0.95**10, abs=1e-15)
    assert distill_weight(3, cfg.replace(gamma=1.0)) == 1.0


def test_total_loss_combination():
    cfg = Config()
    assert total_loss(1.0, 2.0, 4.0, 0, cfg) == 7.0
    assert total_loss(1.0, 2.0, 4.0, 2, cfg) == pytest.approx(3.0 + 4.0 * 0.9025, abs=1e-15)
    assert total_loss(1.0, 2.0, 0.0, 5, cfg) == 3.0
    with pytest.raises(ConfigError):
        total_loss(1.0, 1.0, 1.0, -1, cfg)


def test_fuse_endpoints_and_midpoint():
    a, b = np.array([[0.2, 0.8]]), np.array([[0.6, 0.4]])
    assert np.array_equal(fuse_similarity(a, b, 1.0), a)
    assert np.array_equal(fuse_similarity(a, b, 0.0), b)
    np.testing.assert_allclose(fuse_similarity(a, b, 0.5), [[0.4, 0.6]], atol=1e-15)
    for bad in (-0.1, 1.5):
        with pytest.raises(ConfigError):
            fuse_similarity(a, b, bad)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 1.0), st.floats(-2.0, 2.0))
def test_fused_ranking_ignores_common_shift(seed, delta, shift):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(-1, 1, 7), rng.uniform(-1, 1, 7)
    base = fuse_similarity(a, b, delta)
    moved = fuse_similarity(a + shift, b + shift, delta)
    if np.min(np.abs(base[:, None] - base[None, :]) + np.eye(7)) > 1e-9:
        assert rank_candidates(base) == rank_candidates(moved)


# -- model ----------------------------------------------------------------------------
def test_branches_share_no_storage():
    m = StudentModel.init(8, SMALL, seed=3)
    e = m.exploration.parameters()
    i = m.inheritance.parameters()
    assert set(e) == set(i)
    for name in e:
        assert not np.shares_memory(e[name].data, i[name].data)
    assert not np.array_equal(e["video.dta.query"].data, i["video.dta.query"].data)


def test_similarity_shape_and_range(tiny):
    m = StudentModel.init(8, SMALL, seed=0)
    d = tiny["train"]
    sim = branch_similarity(d.queries[:3], d.frames[:3], m.exploration).data
    assert sim.shape == (3, 3)
    assert np.all(np.abs(sim) <= 1.0 + 1e-12)


def test_similarity_rejects_mismatched_batches(tiny):
    m = StudentModel.init(8, SMALL, seed=0)
    d = tiny["train"]
    with pytest.raises(ConfigError):
        branch_similarity(d.queries[:2], d.frames[:3], m.exploration)


def test_krd_gradient_reaches_only_inheritance(tiny):
    m = StudentModel.init(8, SMALL, seed=4)
    d = tiny["train"]
    targets = np.random.default_rng(5).normal(size=(4, 6))
    _, _, loss_krd = batch_losses(m, d.queries[:4], d.frames[:4], targets, SMALL)
    backward(loss_krd)
    assert all(p.grad is None for p in m.exploration.parameters().values())
    assert any(p.grad is not None and np.any(p.grad != 0) for p in m.inheritance.parameters().values())


def test_zero_learning_rate_keeps_parameters(tiny):
    cfg = SMALL.replace(lr=0.0, epochs=2)
    m = StudentModel.init(8, cfg, seed=0)
    before = {k: v.data.copy() for k, v in m.parameters().items()}
    train(tiny["train"], cfg, model=m)
    for k, v in m.parameters().items():
        assert np.array_equal(v.data, before[k])


def test_zero_epochs_returns_initial_model(tiny):
    cfg = SMALL.replace(epochs=0)
    model, history = train(tiny["train"], cfg)
    fresh = StudentModel.init(8, cfg)
    assert history.records == []
    for k, v in model.parameters().items():
        assert np.array_equal(v.data, fresh.parameters()[k].data)


def test_training_is_deterministic(tiny):
    cfg = SMALL.replace(epochs=2)
    a, ha = train(tiny["train"], cfg)
    b, hb = train(tiny["train"], cfg)
    assert ha.records == hb.records
    for k, v in a.parameters().items():
        assert v.data.tobytes() == b.parameters()[k].data.tobytes()


def test_history_records_weights(tiny):
    _, h = train(tiny["train"], SMALL.replace(epochs=3))
    assert h.column("weight") == [1.0, 0.95, 0.95**2]
    assert all(math.isfinite(v) for v in h.column("loss_e") + h.column("loss_i") + h.column("loss_krd"))


def test_training_rejects_dim_mismatch(tiny):
    with pytest.raises(DimensionError):
        train(tiny["train"], SMALL, model=StudentModel.init(16, SMALL))


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_raises_numerical_error(tiny):
    with pytest.raises(NumericalError):
        train(tiny["train"], SMALL.replace(lr=1e200, epochs=3))


def test_fused_scores_shape(tiny):
    m = StudentModel.init(8, SMALL, seed=0)
    d = tiny["test"]
    s = fused_scores(m, d.queries, d.frames, 0.1)
    assert s.shape == (len(d), len(d))
