"""Hierarchical phrase aggregation for query token sequences.

Tokens are grouped into stride-1 sliding windows at several scales. Each
window runs multi-head self-attention restricted to its own tokens and is
average-pooled into one phrase vector. Every token then attends over the
phrases of each scale, the per-scale contexts are mixed with learnable
weights, added back residually and layer-normalized. The query vector is the
mean of the enhanced tokens.

Inputs may be a single ``(L, D)`` sequence or an equal-length batch
``(B, L, D)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .autograd import ContractError, DimensionError, Tensor, as_tensor
from .functional import layer_norm, matmul, softmax, transpose_last

MASK_VALUE = -1e9


@dataclass
class HsaParams:
    scales: tuple[int, ...]
    heads: int
    query: dict[int, Tensor]
    key: dict[int, Tensor]
    value: dict[int, Tensor]
    beta: Tensor
    gain: Tensor
    bias: Tensor

    @property
    def dim(self) -> int:
        return self.gain.shape[0]

    @classmethod
    def init(cls, dim: int, scales: Sequence[int] = (2, 3), heads: int = 4, rng=None) -> "HsaParams":
        scales = tuple(int(s) for s in scales)
        if not scales or min(scales) < 1:
            raise ValueError(f"scales must be positive, got {scales}")
        if dim % heads:
            raise ValueError(f"heads={heads} must divide dim={dim}")
        rng = np.random.default_rng(rng)
        std = 1.0 / math.sqrt(dim)

        def proj():
            return Tensor(rng.normal(0.0, std, (dim, dim)), requires_grad=True)

        query, key, value = {}, {}, {}
        for s in scales:
            query[s], key[s], value[s] = proj(), proj(), proj()
        return cls(
            scales=scales,
            heads=heads,
            query=query,
            key=key,
            value=value,
            beta=Tensor(np.full(len(scales), 1.0 / len(scales)), requires_grad=True),
            gain=Tensor(np.ones(dim), requires_grad=True),
            bias=Tensor(np.zeros(dim), requires_grad=True),
        )

    def parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for s in self.scales:
            out[f"scale{s}.query"] = self.query[s]
            out[f"scale{s}.key"] = self.key[s]
            out[f"scale{s}.value"] = self.value[s]
        out["beta"] = self.beta
        out["ln.gain"] = self.gain
        out["ln.bias"] = self.bias
        return out


def phrase_windows(length: int, scale: int) -> list[tuple[int, int]]:
    """Half-open ``[start, stop)`` token windows at ``scale`` with stride 1."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    if scale >= length:
        return [(0, length)]
    return [(s, s + scale) for s in range(length - scale + 1)]


def _batched(x) -> tuple[Tensor, bool]:
    x = as_tensor(x)
    if x.ndim == 2:
        return x.reshape(1, *x.shape), True
    if x.ndim != 3:
        raise DimensionError(f"expected (L, D) or (B, L, D) tokens, got {x.shape}")
    return x, False


def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, n, d = x.shape
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x: Tensor) -> Tensor:
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def extract_phrases(words, scale: int, params: HsaParams) -> Tensor:
    """Phrase features at one scale: ``(N_m, D)`` or ``(B, N_m, D)``."""
    x, single = _batched(words)
    _, length, dim = x.shape
    windows = phrase_windows(length, scale)
    n_win = len(windows)
    mask = np.full((n_win, length, length), MASK_VALUE)
    pool = np.zeros((n_win, length, 1))
    for w, (lo, hi) in enumerate(windows):
        mask[w, lo:hi, lo:hi] = 0.0
        pool[w, lo:hi, 0] = 1.0 / (hi - lo)

    h = params.heads
    q = _split_heads(matmul(x, params.query[scale]), h)
    k = _split_heads(matmul(x, params.key[scale]), h)
    v = _split_heads(matmul(x, params.value[scale]), h)
    scores = matmul(q, transpose_last(k)) * (1.0 / math.sqrt(dim // h))
    b = x.shape[0]
    # (B, H, 1, L, L) + (W, L, L) -> per-window restricted attention
    attn = softmax(scores.reshape(b, h, 1, length, length) + Tensor(mask), axis=-1)
    ctx = matmul(attn, v.reshape(b, h, 1, length, dim // h))
    phrases = (ctx * Tensor(pool)).sum(axis=3)  # (B, H, W, dh)
    out = _merge_heads(phrases)
    return out.reshape(n_win, dim) if single else out


def scale_context(words, phrases) -> Tensor:
    """Each token's softmax(q . p / sqrt(D))-weighted mix of the phrases."""
    x, single = _batched(words)
    p, _ = _batched(phrases)
    dim = x.shape[-1]
    weights = softmax(matmul(x, transpose_last(p)) * (1.0 / math.sqrt(dim)), axis=-1)
    out = matmul(weights, p)
    return out.reshape(out.shape[1:]) if single else out


def fuse_scales(words, contexts: Mapping[int, Tensor], params: HsaParams) -> Tensor:
    """``LayerNorm(q + sum_m beta_m a_m)`` over the configured scales."""
    x = as_tensor(words)
    missing = [s for s in params.scales if s not in contexts]
    if missing:
        raise ContractError(f"fuse_scales: no context for scale(s) {missing}")
    total = x
    for idx, s in enumerate(params.scales):
        total = total + params.beta[idx] * as_tensor(contexts[s])
    return layer_norm(total, params.gain, params.bias)


def enhance_tokens(words, params: HsaParams) -> Tensor:
    x, single = _batched(words)
    contexts = {s: scale_context(x, extract_phrases(x, s, params)) for s in params.scales}
    out = fuse_scales(x, contexts, params)
    return out.reshape(out.shape[1:]) if single else out


def encode_query(words, params: HsaParams) -> Tensor:
    """Query vector ``(D,)``, or ``(B, D)`` for a batch."""
    x, single = _batched(words)
    if x.shape[1] < 1:
        raise DimensionError("encode_query needs at least one token")
    pooled = enhance_tokens(x, params).mean(axis=1)
    return pooled.reshape(pooled.shape[1]) if single else pooled
