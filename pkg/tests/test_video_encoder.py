import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from prvr.autograd import Tensor, backward
from prvr.functional import layer_norm
from prvr.video_encoder import (
    MASK_VALUE,
    DtaParams,
    PnParams,
    VideoParams,
    attention_weights,
    bias_matrix,
    dta_attention,
    effective_radii,
    encode_video,
    purification_norm,
    relative_bias,
    window_mask,
)


def table_params(rmax=3):
    p = DtaParams.init(4, rmax=rmax, radii=(1,), heads=1, rng=0)
    p.bias_table.data = np.arange(-rmax, rmax + 1, dtype=np.float64) * 10.0
    return p


def oracle_block(p: VideoParams):
    d = p.dta
    return {
        "wq": d.query.data, "wk": d.key.data, "wv": d.value.data, "wo": d.out.data,
        "table": d.bias_table.data, "radii": d.radii, "heads": d.heads, "lam": p.pn_attn.lam,
        "g1": p.pn_attn.gain.data, "b1": p.pn_attn.bias.data,
        "w1": p.ff_in.data, "c1": p.ff_in_bias.data, "w2": p.ff_out.data, "c2": p.ff_out_bias.data,
        "g2": p.pn_ff.gain.data, "b2": p.pn_ff.bias.data,
    }


# -- relative bias -------------------------------------------------------------------
def test_bias_within_range_uses_offset():
    p = table_params(3)
    assert relative_bias(4, 6, p) == 20.0
    assert relative_bias(6, 4, p) == -20.0
    assert relative_bias(5, 5, p) == 0.0


def test_bias_clips_far_offsets():
    p = table_params(3)
    assert relative_bias(0, 50, p) == 30.0
    assert relative_bias(50, 0, p) == -30.0


def test_bias_matrix_matches_pairwise_lookup():
    p = table_params(2)
    m = bias_matrix(p.bias_table, 7).data
    for i in range(7):
        for j in range(7):
            assert m[i, j] == oracles.relative_bias(p.bias_table.data, i, j)


# -- window mask ------------------------------------------------------------------------
def test_mask_radius_zero_is_diagonal():
    m = window_mask(4, 0)
    assert np.array_equal(m == 0.0, np.eye(4, dtype=bool))
    assert np.all(m[~np.eye(4, dtype=bool)] == MASK_VALUE)


def test_mask_band():
    m = window_mask(5, 1)
    for i in range(5):
        for j in range(5):
            assert m[i, j] == (0.0 if abs(i - j) <= 1 else MASK_VALUE)


def test_mask_saturated_radius_is_open():
    assert np.array_equal(window_mask(6, 5), np.zeros((6, 6)))
    assert np.array_equal(window_mask(6, 40), np.zeros((6, 6)))


def test_radii_are_clamped_and_deduplicated():
    p = DtaParams.init(8, rmax=30, radii=(10, 20), heads=2, rng=0)
    assert effective_radii(p, 32) == (10, 20)
    assert effective_radii(p, 12) == (10, 11)
    assert effective_radii(p, 5) == (4,)


# -- attention -----------------------------------------------------------------------------
def test_single_frame_attends_to_itself():
    p = DtaParams.init(8, rmax=4, radii=(2,), heads=2, rng=1)
    x = np.random.default_rng(1).normal(size=(1, 8))
    w = attention_weights(x, p)[0].data
    assert np.array_equal(w, np.ones((1, 2, 1, 1)))
    np.testing.assert_allclose(dta_attention(x, p).data, x @ p.value.data @ p.out.data, atol=1e-14)


@pytest.mark.parametrize("radius", [0, 1, 3])
def test_weights_vanish_outside_radius(radius):
    p = DtaParams.init(8, rmax=5, radii=(radius,), heads=4, rng=2)
    p.bias_table.data = np.random.default_rng(3).normal(size=11)
    x = np.random.default_rng(4).normal(size=(2, 9, 8))
    w = attention_weights(x, p)[0].data
    far = np.abs(np.arange(9)[:, None] - np.arange(9)[None, :]) > radius
    assert np.all(w[..., far] == 0.0)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)


def test_zero_bias_saturated_window_is_standard_attention():
    rng = np.random.default_rng(5)
    p = DtaParams.init(8, rmax=6, radii=(7,), heads=2, rng=6)
    x = rng.normal(size=(6, 8))
    out = dta_attention(x, p).data
    dh = 4
    q, k, v = x @ p.query.data, x @ p.key.data, x @ p.value.data
    merged = np.zeros((6, 8))
    for h in range(2):
        sl = slice(h * dh, (h + 1) * dh)
        logits = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        merged[:, sl] = (e / e.sum(axis=1, keepdims=True)) @ v[:, sl]
    np.testing.assert_allclose(out, merged @ p.out.data, atol=1e-10)


def test_dta_matches_loop_oracle():
    p = DtaParams.init(8, rmax=2, radii=(1, 2), heads=2, rng=7)
    p.bias_table.data = np.array([0.3, -0.2, 0.5, 0.1, -0.4])
    x = np.random.default_rng(8).normal(size=(4, 8))
    expected = oracles.dta(x, p.query.data, p.key.data, p.value.data, p.out.data, p.bias_table.data, p.radii, 2)
    np.testing.assert_allclose(dta_attention(x, p).data, expected, atol=1e-10)


def test_dta_batch_equals_individual():
    p = DtaParams.init(8, rmax=3, radii=(1, 3), heads=4, rng=9)
    p.bias_table.data = np.linspace(-1, 1, 7)
    x = np.random.default_rng(10).normal(size=(3, 7, 8))
    batch = dta_attention(x, p).data
    for i in range(3):
        np.testing.assert_allclose(batch[i], dta_attention(x[i], p).data, atol=1e-13)


def test_strong_bias_breaks_permutation_equivariance():
    p = DtaParams.init(8, rmax=3, radii=(3,), heads=1, rng=11)
    p.bias_table.data = np.array([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 8.0])
    x = np.random.default_rng(12).normal(size=(5, 8))
    perm = np.array([4, 2, 0, 3, 1])
    assert not np.allclose(dta_attention(x[perm], p).data, dta_attention(x, p).data[perm], atol=1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 12), st.integers(0, 14), st.integers(0, 2**31 - 1))
def test_attention_rows_are_distributions(length, radius, seed):
    p = DtaParams.init(8, rmax=4, radii=(radius,), heads=2, rng=seed)
    p.bias_table.data = np.random.default_rng(seed).normal(size=9) * 3
    x = np.random.default_rng(seed + 1).normal(size=(length, 8))
    w = attention_weights(x, p)[0].data
    assert np.all(w >= 0)
    np.testing.assert_allclose(w.sum(axis=-1), 1.0, atol=1e-9)


# -- purification norm ------------------------------------------------------------------
@pytest.mark.parametrize("shape", [(1, 8), (5, 8), (2, 7, 16)])
def test_pn_zero_lambda_is_layer_norm(shape):
    x = np.random.default_rng(13).normal(size=shape)
    p = PnParams.init(shape[-1], lam=0.0)
    p.gain.data = np.linspace(0.2, 2.0, shape[-1])
    np.testing.assert_allclose(purification_norm(x, p).data, layer_norm(x, p.gain, p.bias).data, atol=1e-12)


def test_pn_single_frame_subtracts_scaled_self():
    x = np.random.default_rng(14).normal(size=(1, 6))
    p = PnParams.init(6, lam=0.3)
    expected = layer_norm(0.7 * x, np.ones(6), np.zeros(6)).data
    np.testing.assert_allclose(purification_norm(x, p).data, expected, atol=1e-12)


def test_pn_matches_loop_oracle():
    x = np.random.default_rng(15).normal(size=(3, 4))
    p = PnParams.init(4, lam=0.1)
    expected = oracles.purification(x, 0.1, np.ones(4), np.zeros(4))
    np.testing.assert_allclose(purification_norm(x, p).data, expected, atol=1e-12)


# -- full block ----------------------------------------------------------------------------
def test_encode_video_matches_loop_oracle():
    p = VideoParams.init(8, rmax=3, radii=(1, 4), heads=2, lam=0.1, rng=16)
    p.dta.bias_table.data = np.random.default_rng(17).normal(size=7) * 0.5
    x = np.random.default_rng(18).normal(size=(6, 8))
    frames, video = encode_video(x, p)
    want_frames, want_video = oracles.video_block(x, oracle_block(p))
    np.testing.assert_allclose(frames.data, want_frames, atol=1e-9)
    np.testing.assert_allclose(video.data, want_video, atol=1e-9)


def test_encode_video_shapes():
    p = VideoParams.init(8, rmax=3, radii=(2,), heads=2, rng=19)
    frames, video = encode_video(np.random.default_rng(20).normal(size=(2, 5, 8)), p)
    assert frames.shape == (2, 5, 8) and video.shape == (2, 8)
    np.testing.assert_allclose(video.data, frames.data.mean(axis=1), atol=1e-15)


def test_bias_table_gradient_flows():
    p = DtaParams.init(8, rmax=2, radii=(2,), heads=2, rng=21)
    x = Tensor(np.random.default_rng(22).normal(size=(5, 8)))
    backward((dta_attention(x, p) * Tensor(np.random.default_rng(23).normal(size=(5, 8)))).sum())
    assert p.bias_table.grad is not None and np.any(p.bias_table.grad != 0)


def test_zero_value_projection_leaves_feed_forward_path():
    p = VideoParams.init(8, rmax=3, radii=(2,), heads=2, rng=24)
    p.dta.value.data = np.zeros((8, 8))
    x = np.random.default_rng(25).normal(size=(5, 8))
    h = purification_norm(x, p.pn_attn).data
    ff = oracles.gelu(h @ p.ff_in.data + p.ff_in_bias.data) @ p.ff_out.data + p.ff_out_bias.data
    expected = purification_norm(h + ff, p.pn_ff).data
    np.testing.assert_allclose(encode_video(x, p)[0].data, expected, atol=1e-12)
