"""Teacher similarity refinement and the distillation loss built on it.

Teacher frame scores are cosine similarities to the teacher query. Adaptive
thresholds ``mu +/- sigma`` are derived per sequence; a score is pushed up by
``alpha = mu * sigma / (mu + sigma)`` when every score in the ``k``-element
window starting at it clears the high threshold, and pushed down by ``alpha``
when every one is at or below the low threshold. Windows near the end of the
sequence are truncated to the remaining suffix.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autograd import DimensionError, Tensor, as_tensor
from .errors import ConfigError
from .functional import cosine_similarity, kl_divergence, log_softmax, mean_std


@dataclass(frozen=True)
class RefinementStats:
    mean: float
    std: float
    tau_high: float
    tau_low: float
    alpha: float


@dataclass(frozen=True)
class RefinedScores:
    scores: np.ndarray
    indicator: np.ndarray
    stats: RefinementStats


def teacher_scores(frames, query) -> np.ndarray:
    """Cosine similarity of each teacher frame feature with the teacher query."""
    frames = np.asarray(frames.data if isinstance(frames, Tensor) else frames, dtype=np.float64)
    query = np.asarray(query.data if isinstance(query, Tensor) else query, dtype=np.float64).ravel()
    if frames.ndim != 2 or frames.shape[1] != query.shape[0]:
        raise DimensionError(f"teacher_scores: frames {frames.shape} vs query {query.shape}")
    return np.array([cosine_similarity(f, query) for f in frames])


def adaptive_thresholds(scores) -> RefinementStats:
    mu, sigma = mean_std(scores)
    denom = mu + sigma
    alpha = mu * sigma / denom if denom != 0.0 else 0.0
    return RefinementStats(mu, sigma, mu + sigma, mu - sigma, alpha)


def refine_scores(scores, k: int = 3) -> RefinedScores:
    if k < 1:
        raise ConfigError(f"refinement window must be >= 1, got {k}")
    s = np.ascontiguousarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("refine_scores of an empty sequence")
    stats = adaptive_thresholds(s)
    ind = kernels.window_indicator(s, stats.tau_high, stats.tau_low, int(k))
    return RefinedScores(kernels.apply_indicator(s, ind, stats.alpha), ind, stats)


def refine_batch(scores: np.ndarray, k: int = 3) -> np.ndarray:
    """Refine each row of a ``(N, K)`` score matrix."""
    scores = np.asarray(scores, dtype=np.float64)
    return np.stack([refine_scores(row, k).scores for row in scores]) if len(scores) else scores.copy()


def krd_loss(student_scores, refined) -> Tensor:
    """KL(softmax(refined) || softmax(student)) over the frame axis.

    ``student_scores`` is ``(K,)`` or ``(B, K)``; for a batch the per-pair
    divergences are averaged. ``refined`` is a constant target.
    """
    student = as_tensor(student_scores)
    target = refined.scores if isinstance(refined, RefinedScores) else np.asarray(refined, dtype=np.float64)
    if student.shape != target.shape:
        raise DimensionError(f"krd_loss: length mismatch {student.shape} vs {target.shape}")
    z = target - target.max(axis=-1, keepdims=True)
    q = np.exp(z)
    q = q / q.sum(axis=-1, keepdims=True)
    kl = kl_divergence(log_softmax(student, axis=-1), q)
    return kl if kl.ndim == 0 else kl.mean()
