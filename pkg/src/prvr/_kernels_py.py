"""Pure-Python/numpy versions of the compiled kernels."""
from __future__ import annotations

import numpy as np


def window_indicator(scores: np.ndarray, tau_high: float, tau_low: float, k: int) -> np.ndarray:
    n = scores.shape[0]
    out = np.zeros(n, dtype=np.int8)
    high = scores >= tau_high
    low = scores <= tau_low
    # run length of consecutive True values starting at each index
    run_high = np.zeros(n + 1, dtype=np.int64)
    run_low = np.zeros(n + 1, dtype=np.int64)
    for i in range(n - 1, -1, -1):
        run_high[i] = run_high[i + 1] + 1 if high[i] else 0
        run_low[i] = run_low[i + 1] + 1 if low[i] else 0
    need = np.minimum(k, n - np.arange(n))
    out[run_low[:n] >= need] = -1
    out[run_high[:n] >= need] = 1
    return out


def apply_indicator(scores: np.ndarray, ind: np.ndarray, alpha: float) -> np.ndarray:
    shift = np.where(ind > 0, alpha, np.where(ind < 0, -alpha, 0.0))
    return scores + shift


def offset_bias_matrix(table: np.ndarray, n: int, rmax: int) -> np.ndarray:
    idx = np.arange(n)
    off = np.clip(idx[None, :] - idx[:, None], -rmax, rmax) + rmax
    return table[off]


def offset_bias_grad(grad: np.ndarray, rmax: int) -> np.ndarray:
    n = grad.shape[0]
    idx = np.arange(n)
    off = np.clip(idx[None, :] - idx[:, None], -rmax, rmax) + rmax
    return np.bincount(off.ravel(), weights=grad.ravel(), minlength=2 * rmax + 1)


def ground_truth_ranks(sim: np.ndarray, truth: np.ndarray) -> np.ndarray:
    rows = np.arange(sim.shape[0])
    target = sim[rows, truth][:, None]
    cols = np.arange(sim.shape[1])[None, :]
    ahead = (sim > target) | ((sim == target) & (cols < truth[:, None]))
    return 1 + ahead.sum(axis=1).astype(np.int64)
