"""Differentiable building blocks on top of :mod:`prvr.autograd`."""
from __future__ import annotations

import math
import statistics
from typing import Sequence

import numpy as np

from .autograd import DimensionError, Tensor, as_tensor, make, unbroadcast

LN_EPS = 1e-5
NORM_EPS = 1e-12


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")

    if b.ndim == 2 and a.ndim > 2:
        # activations times a weight matrix: one flat GEMM each way
        a2 = a.data.reshape(-1, a.shape[-1])

        def bw_flat(g):
            g2 = g.reshape(-1, g.shape[-1])
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ga, gb

        out = (a2 @ b.data).reshape(*a.shape[:-1], b.shape[1])
        return make(out, (a, b), bw_flat, "matmul")

    def bw(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make(out, (x,), bw, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bw(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return make(out, (x,), bw, "log_softmax")


def layer_norm(x, gain, bias, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then ``gain * . + bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} do not match width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    out = xhat * gain.data + bias.data

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        ggain = (g * xhat).sum(axis=lead) if gain.requires_grad else None
        gbias = g.sum(axis=lead) if bias.requires_grad else None
        gx = None
        if x.requires_grad:
            dxhat = g * gain.data
            gx = inv * (
                dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, ggain, gbias

    return make(out, (x, gain, bias), bw, "layer_norm")


def l2_normalize(x, axis: int = -1) -> Tensor:
    """Scale slices to unit L2 norm; slices with norm below 1e-12 map to zero."""
    x = as_tensor(x)
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    live = ~(norm < NORM_EPS)  # NaN norms stay live so non-finite values propagate
    safe = np.where(live, norm, 1.0)
    out = np.where(live, x.data / safe, 0.0)

    def bw(g):
        proj = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(live, (g - out * proj) / safe, 0.0),)

    return make(out, (x,), bw, "l2_normalize")


def cosine_matrix(a, b) -> Tensor:
    """Pairwise cosine similarities between rows of ``a`` and rows of ``b``."""
    a, b = as_tensor(a), as_tensor(b)
    return matmul(l2_normalize(a), transpose_last(l2_normalize(b)))


def rowwise_cosine(a, b) -> Tensor:
    """Cosine between matching rows; ``b`` may broadcast against ``a``."""
    return (l2_normalize(a) * l2_normalize(b)).sum(axis=-1)


def transpose_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return x.transpose(tuple(axes))


def gelu(x) -> Tensor:
    """Tanh approximation of GELU."""
    x = as_tensor(x)
    c = math.sqrt(2.0 / math.pi)
    sq = x.data * x.data
    u = c * x.data * (1.0 + 0.044715 * sq)
    t = np.tanh(u)
    out = 0.5 * x.data * (1.0 + t)

    def bw(g):
        du = c * (1.0 + 3 * 0.044715 * sq)
        return (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du),)

    return make(out, (x,), bw, "gelu")


def kl_divergence(log_p, q) -> Tensor:
    """``sum q * (ln q - log_p)`` over the last axis, with ``0 ln 0 = 0``.

    ``q`` is a constant target; only ``log_p`` receives a gradient.
    """
    log_p = as_tensor(log_p)
    q = q.data if isinstance(q, Tensor) else np.asarray(q, dtype=np.float64)
    if log_p.shape != q.shape:
        raise DimensionError(f"kl_divergence: length mismatch {log_p.shape} vs {q.shape}")
    pos = q > 0
    q_log_q = np.where(pos, q * np.log(np.where(pos, q, 1.0)), 0.0)
    out = (q_log_q - q * log_p.data).sum(axis=-1)

    def bw(g):
        return (-q * np.expand_dims(g, -1),)

    return make(np.asarray(out, dtype=np.float64), (log_p,), bw, "kl_divergence")


# -- plain-float helpers -----------------------------------------------------
def cosine_similarity(u, v) -> float:
    u = np.asarray(u.data if isinstance(u, Tensor) else u, dtype=np.float64).ravel()
    v = np.asarray(v.data if isinstance(v, Tensor) else v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise DimensionError(f"cosine_similarity: length mismatch {u.shape} vs {v.shape}")
    nu = math.sqrt(float(np.dot(u, u)))
    nv = math.sqrt(float(np.dot(v, v)))
    if nu < NORM_EPS or nv < NORM_EPS:
        return 0.0
    return max(-1.0, min(1.0, float(np.dot(u, v)) / (nu * nv)))


def mean_std(x: Sequence[float]) -> tuple[float, float]:
    """Mean and population standard deviation from exact rational sums.

    The mean is the correctly rounded exact mean, so a constant sequence has
    exactly its own value as mean and exactly zero spread.
    """
    vals = [float(v) for v in np.asarray(x, dtype=np.float64).ravel()]
    if not vals:
        raise ValueError("mean_std of an empty sequence")
    return statistics.mean(vals), statistics.pstdev(vals)
