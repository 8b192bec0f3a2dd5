"""Windowed temporal attention with relative position bias, and purification norm.

Attention logits are ``q_i . k_j / sqrt(d_head) + b(j - i) + m_U(i, j)`` where
``b`` is a learnable scalar per clipped offset, shared by all heads, and
``m_U`` blocks pairs further apart than the radius ``U``. One attention pass
runs per radius and the passes are averaged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .autograd import DimensionError, Tensor, as_tensor, make
from .functional import gelu, l2_normalize, layer_norm, linear, matmul, softmax, transpose_last

MASK_VALUE = -1e9


@dataclass
class DtaParams:
    query: Tensor
    key: Tensor
    value: Tensor
    out: Tensor
    bias_table: Tensor
    radii: tuple[int, ...] = (10, 20)
    heads: int = 4

    @property
    def rmax(self) -> int:
        return (self.bias_table.shape[0] - 1) // 2

    @property
    def dim(self) -> int:
        return self.query.shape[0]

    @classmethod
    def init(cls, dim: int, rmax: int = 30, radii: Sequence[int] = (10, 20), heads: int = 4, rng=None) -> "DtaParams":
        if rmax < 1:
            raise ValueError(f"rmax must be >= 1, got {rmax}")
        if not radii or min(radii) < 0:
            raise ValueError(f"window radii must be non-negative, got {radii}")
        if dim % heads:
            raise ValueError(f"heads={heads} must divide dim={dim}")
        rng = np.random.default_rng(rng)
        std = 1.0 / math.sqrt(dim)

        def proj():
            return Tensor(rng.normal(0.0, std, (dim, dim)), requires_grad=True)

        return cls(
            query=proj(),
            key=proj(),
            value=proj(),
            out=proj(),
            bias_table=Tensor(np.zeros(2 * rmax + 1), requires_grad=True),
            radii=tuple(int(r) for r in radii),
            heads=heads,
        )

    def parameters(self) -> dict[str, Tensor]:
        return {
            "query": self.query,
            "key": self.key,
            "value": self.value,
            "out": self.out,
            "bias_table": self.bias_table,
        }


@dataclass
class PnParams:
    gain: Tensor
    bias: Tensor
    lam: float = 0.1

    @classmethod
    def init(cls, dim: int, lam: float = 0.1) -> "PnParams":
        if lam < 0:
            raise ValueError(f"lambda must be non-negative, got {lam}")
        return cls(Tensor(np.ones(dim), requires_grad=True), Tensor(np.zeros(dim), requires_grad=True), float(lam))

    def parameters(self) -> dict[str, Tensor]:
        return {"gain": self.gain, "bias": self.bias}


@dataclass
class VideoParams:
    """One attention block: DTA, residual, PN, feed-forward, residual, PN."""

    dta: DtaParams
    pn_attn: PnParams
    pn_ff: PnParams
    ff_in: Tensor
    ff_in_bias: Tensor
    ff_out: Tensor
    ff_out_bias: Tensor

    @classmethod
    def init(
        cls,
        dim: int,
        rmax: int = 30,
        radii: Sequence[int] = (10, 20),
        heads: int = 4,
        lam: float = 0.1,
        rng=None,
    ) -> "VideoParams":
        rng = np.random.default_rng(rng)
        dta = DtaParams.init(dim, rmax=rmax, radii=radii, heads=heads, rng=rng)
        hidden = 2 * dim
        return cls(
            dta=dta,
            pn_attn=PnParams.init(dim, lam),
            pn_ff=PnParams.init(dim, lam),
            ff_in=Tensor(rng.normal(0.0, 1.0 / math.sqrt(dim), (dim, hidden)), requires_grad=True),
            ff_in_bias=Tensor(np.zeros(hidden), requires_grad=True),
            ff_out=Tensor(rng.normal(0.0, 1.0 / math.sqrt(hidden), (hidden, dim)), requires_grad=True),
            ff_out_bias=Tensor(np.zeros(dim), requires_grad=True),
        )

    def parameters(self) -> dict[str, Tensor]:
        out = {f"dta.{k}": v for k, v in self.dta.parameters().items()}
        out.update({f"pn_attn.{k}": v for k, v in self.pn_attn.parameters().items()})
        out.update({f"pn_ff.{k}": v for k, v in self.pn_ff.parameters().items()})
        out["ff.in"] = self.ff_in
        out["ff.in_bias"] = self.ff_in_bias
        out["ff.out"] = self.ff_out
        out["ff.out_bias"] = self.ff_out_bias
        return out


def relative_bias(i: int, j: int, params: DtaParams) -> float:
    r = params.rmax
    return float(params.bias_table.data[min(max(j - i, -r), r) + r])


def bias_matrix(table: Tensor, length: int) -> Tensor:
    """``(K, K)`` matrix of ``table[clip(j - i) + R]``, differentiable in ``table``."""
    rmax = (table.shape[0] - 1) // 2
    data = kernels.offset_bias_matrix(np.ascontiguousarray(table.data), length, rmax)

    def bw(g):
        g2 = g.reshape(-1, length, length).sum(axis=0) if g.ndim > 2 else g
        return (kernels.offset_bias_grad(np.ascontiguousarray(g2), rmax),)

    return make(data, (table,), bw, "bias_matrix")


def window_mask(length: int, radius: int) -> np.ndarray:
    """``0`` where ``|j - i| <= radius``, ``-1e9`` elsewhere."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    idx = np.arange(length)
    return np.where(np.abs(idx[None, :] - idx[:, None]) <= radius, 0.0, MASK_VALUE)


def _batched(x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise DimensionError(f"expected (K, D) or (B, K, D) frames, got {x.shape}")
    return x, False


def effective_radii(params: DtaParams, length: int, radius: int | None = None) -> tuple[int, ...]:
    radii = params.radii if radius is None else (radius,)
    return tuple(sorted({min(int(r), length - 1) for r in radii}))


def attention_weights(frames, params: DtaParams, radius: int | None = None) -> list[Tensor]:
    """Per-radius attention weights, each ``(B, H, K, K)``."""
    x, _ = _batched(frames)
    return _weights(x, params, effective_radii(params, x.shape[1], radius))[0]


def _weights(x: Tensor, params: DtaParams, radii):
    b, length, dim = x.shape
    h = params.heads
    dh = dim // h

    def heads(t):
        return t.reshape(b, length, h, dh).transpose(0, 2, 1, 3)

    q = heads(matmul(x, params.query))
    k = heads(matmul(x, params.key))
    v = heads(matmul(x, params.value))
    logits = matmul(q, transpose_last(k)) * (1.0 / math.sqrt(dh)) + bias_matrix(params.bias_table, length)
    return [softmax(logits + Tensor(window_mask(length, r)), axis=-1) for r in radii], v


def dta_attention(frames, params: DtaParams, radius: int | None = None) -> Tensor:
    """Attention output, ``(K, D)`` or ``(B, K, D)``.

    ``radius`` overrides the configured radii with a single one. Radii are
    clamped to ``K - 1``.
    """
    x, single = _batched(frames)
    b, length, dim = x.shape
    radii = effective_radii(params, length, radius)
    weights, v = _weights(x, params, radii)
    ctx = matmul(weights[0], v)
    for w in weights[1:]:
        ctx = ctx + matmul(w, v)
    if len(weights) > 1:
        ctx = ctx * (1.0 / len(weights))
    merged = ctx.transpose(0, 2, 1, 3).reshape(b, length, dim)
    out = matmul(merged, params.out)
    return out.reshape(length, dim) if single else out


def purification_norm(x, params: PnParams) -> Tensor:
    """``LayerNorm(x - lam * softmax(xn xn^T) x)`` with ``xn`` the L2-normalized rows."""
    x = as_tensor(x)
    xn = l2_normalize(x)
    sim = softmax(matmul(xn, transpose_last(xn)), axis=-1)
    return layer_norm(x - matmul(sim, x) * params.lam, params.gain, params.bias)


def self_similarity(x) -> Tensor:
    xn = l2_normalize(as_tensor(x))
    return softmax(matmul(xn, transpose_last(xn)), axis=-1)


def encode_video(frames, params: VideoParams) -> tuple[Tensor, Tensor]:
    """Frame-level ``(.., K, D)`` features and their mean-pooled video vector."""
    x, single = _batched(frames)
    h = purification_norm(x + dta_attention(x, params.dta), params.pn_attn)
    ff = linear(gelu(linear(h, params.ff_in, params.ff_in_bias)), params.ff_out, params.ff_out_bias)
    frame_level = purification_norm(h + ff, params.pn_ff)
    video_level = frame_level.mean(axis=1)
    if single:
        return frame_level.reshape(frame_level.shape[1:]), video_level.reshape(video_level.shape[1])
    return frame_level, video_level
