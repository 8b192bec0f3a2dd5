"""Two-branch student, its losses, training loop and fused scoring.

The exploration and inheritance branches have identical architecture and no
shared storage. Both are trained with symmetric InfoNCE plus hardest-negative
triplet loss; the inheritance branch additionally distils the refined teacher
frame-score distribution, weighted by ``w0 * gamma ** epoch``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import Tensor, as_tensor, backward, concat, getitem, no_grad, relu, tmax
from .config import Config
from .errors import ConfigError, DimensionError, NumericalError
from .functional import cosine_matrix, log_softmax, rowwise_cosine
from .refinement import krd_loss, refine_batch, teacher_scores
from .text_encoder import HsaParams, encode_query
from .video_encoder import VideoParams, encode_video

log = logging.getLogger(__name__)

NEG_FILL = -1e9


@dataclass
class Branch:
    text: HsaParams
    video: VideoParams

    @classmethod
    def init(cls, dim: int, cfg: Config, rng) -> "Branch":
        return cls(
            text=HsaParams.init(dim, scales=cfg.scales, heads=cfg.heads, rng=rng),
            video=VideoParams.init(dim, rmax=cfg.rmax, radii=cfg.radii, heads=cfg.heads, lam=cfg.lam, rng=rng),
        )

    def parameters(self) -> dict[str, Tensor]:
        out = {f"text.{k}": v for k, v in self.text.parameters().items()}
        out.update({f"video.{k}": v for k, v in self.video.parameters().items()})
        return out


@dataclass
class StudentModel:
    exploration: Branch
    inheritance: Branch
    dim: int

    @classmethod
    def init(cls, dim: int, cfg: Config, seed: int | None = None) -> "StudentModel":
        seed = cfg.seed if seed is None else seed
        explore_rng, inherit_rng = np.random.default_rng(seed).spawn(2)
        return cls(Branch.init(dim, cfg, explore_rng), Branch.init(dim, cfg, inherit_rng), dim)

    def parameters(self) -> dict[str, Tensor]:
        out = {f"exploration.{k}": v for k, v in self.exploration.parameters().items()}
        out.update({f"inheritance.{k}": v for k, v in self.inheritance.parameters().items()})
        return out

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        if missing:
            raise DimensionError(f"checkpoint lacks parameters: {missing[:5]}")
        for name, tensor in params.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.shape:
                raise DimensionError(f"parameter {name}: expected shape {tensor.shape}, found {arr.shape}")
            tensor.data = arr.copy()


# -- encoding ----------------------------------------------------------------
def _grouped(items, encode):
    """Run ``encode`` on equal-shape groups of ``items`` and restore order."""
    if isinstance(items, np.ndarray) and items.ndim == 3:
        return encode(items)
    items = [np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64) for x in items]
    if not items:
        raise ConfigError("empty batch")
    groups: dict[tuple[int, ...], list[int]] = {}
    for i, x in enumerate(items):
        groups.setdefault(x.shape, []).append(i)
    if len(groups) == 1:
        return encode(np.stack(items))
    order, parts = [], []
    for idx in groups.values():
        order.extend(idx)
        parts.append(encode(np.stack([items[i] for i in idx])))
    inverse = np.argsort(order)
    return getitem(concat(parts, axis=0), inverse)


def encode_queries(queries, params: HsaParams) -> Tensor:
    """``(B, D)`` query vectors from a ``(B, L, D)`` array or a list of ``(L_i, D)``."""
    return _grouped(queries, lambda x: encode_query(x, params))


def encode_videos(videos, params: VideoParams) -> Tensor:
    """``(B, D)`` video vectors from a ``(B, K, D)`` array or a list of ``(K_i, D)``."""
    return _grouped(videos, lambda x: encode_video(x, params)[1])


def branch_similarity(queries, videos, branch: Branch) -> Tensor:
    """Cosine similarity of every query (rows) with every video (columns)."""
    if len(queries) == 0 or len(videos) == 0:
        raise ConfigError("branch_similarity needs a non-empty batch")
    if len(queries) != len(videos):
        raise ConfigError(f"batch size mismatch: {len(queries)} queries vs {len(videos)} videos")
    return cosine_matrix(encode_queries(queries, branch.text), encode_videos(videos, branch.video))


# -- losses --------------------------------------------------------------------
def _diag(x: Tensor) -> Tensor:
    idx = np.arange(x.shape[0])
    return getitem(x, (idx, idx))


def info_nce_loss(sim, temperature: float = 0.07) -> Tensor:
    """Symmetric InfoNCE with the diagonal as positives."""
    if temperature <= 0:
        raise ConfigError(f"temperature must be > 0, got {temperature}")
    logits = as_tensor(sim) * (1.0 / temperature)
    rows = -_diag(log_softmax(logits, axis=1)).mean()
    cols = -_diag(log_softmax(logits, axis=0)).mean()
    return (rows + cols) * 0.5


def triplet_loss(sim, margin: float = 0.2) -> Tensor:
    """Hardest-negative hinge, averaged over every row and every column."""
    sim = as_tensor(sim)
    n = sim.shape[0]
    if n < 2:
        return sim.sum() * 0.0
    pos = _diag(sim)
    masked = sim + Tensor(np.eye(n) * NEG_FILL)
    row_neg = tmax(masked, axis=1)
    col_neg = tmax(masked, axis=0)
    hinge = relu(row_neg - pos + margin).sum() + relu(col_neg - pos + margin).sum()
    return hinge * (1.0 / (2 * n))


def distill_weight(epoch: int, cfg: Config) -> float:
    return cfg.w0 * cfg.gamma**epoch


def total_loss(loss_e, loss_i, loss_krd, epoch: int, cfg: Config):
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return loss_e + loss_i + loss_krd * distill_weight(epoch, cfg)


def fuse_similarity(sim_e, sim_i, delta: float):
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"delta must lie in [0, 1], got {delta}")
    return delta * sim_e + (1.0 - delta) * sim_i


# -- training ------------------------------------------------------------------
@dataclass
class EpochRecord:
    epoch: int
    loss_e: float
    loss_i: float
    loss_krd: float
    weight: float


@dataclass
class History:
    records: list[EpochRecord] = field(default_factory=list)

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]


def refined_teacher_targets(teacher_frames: np.ndarray, teacher_queries: np.ndarray, k: int) -> np.ndarray:
    """Refined teacher score rows ``(N, K)`` for every query-video pair."""
    raw = np.stack([teacher_scores(f, q) for f, q in zip(teacher_frames, teacher_queries)])
    return refine_batch(raw, k)


def batch_losses(model: StudentModel, queries, frames, targets, cfg: Config):
    """``(L_E, L_I, L_KRD)`` for one aligned batch."""
    e, i = model.exploration, model.inheritance
    sim_e = cosine_matrix(encode_query(queries, e.text), encode_video(frames, e.video)[1])
    loss_e = info_nce_loss(sim_e, cfg.temperature) + triplet_loss(sim_e, cfg.margin)

    q_i = encode_query(queries, i.text)
    frames_i, video_i = encode_video(frames, i.video)
    sim_i = cosine_matrix(q_i, video_i)
    loss_i = info_nce_loss(sim_i, cfg.temperature) + triplet_loss(sim_i, cfg.margin)
    b, d = q_i.shape
    student = rowwise_cosine(frames_i, q_i.reshape(b, 1, d))
    loss_krd = krd_loss(student, targets)
    return loss_e, loss_i, loss_krd


def sgd_step(params: Sequence[Tensor], lr: float) -> None:
    for p in params:
        if p.grad is not None:
            p.data = p.data - lr * p.grad
        p.grad = None


def train(
    dataset,
    cfg: Config,
    model: StudentModel | None = None,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[StudentModel, History]:
    """Fit both branches with plain SGD.

    ``dataset`` needs ``queries (N, L, D)``, ``frames (N, K, D)``,
    ``teacher_frames (N, K, d)`` and ``teacher_queries (N, d)`` arrays.
    """
    cfg.validate()
    queries = np.asarray(dataset.queries, dtype=np.float64)
    frames = np.asarray(dataset.frames, dtype=np.float64)
    n, _, dim = frames.shape
    if queries.shape[0] != n or queries.shape[2] != dim:
        raise DimensionError(f"queries {queries.shape} do not match frames {frames.shape}")
    if model is None:
        model = StudentModel.init(dim, cfg)
    elif model.dim != dim:
        raise DimensionError(f"model dim {model.dim} does not match data dim {dim}")
    targets = refined_teacher_targets(dataset.teacher_frames, dataset.teacher_queries, cfg.krd_window)
    params = list(model.parameters().values())
    rng = np.random.default_rng(cfg.seed)
    history = History()

    for epoch in range(cfg.epochs):
        weight = distill_weight(epoch, cfg)
        order = rng.permutation(n)
        sums = np.zeros(3)
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = np.sort(order[start : start + cfg.batch_size])
            loss_e, loss_i, loss_krd = batch_losses(model, queries[idx], frames[idx], targets[idx], cfg)
            loss = total_loss(loss_e, loss_i, loss_krd, epoch, cfg)
            if not math.isfinite(loss.item()):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}: "
                    f"L_E={loss_e.item()} L_I={loss_i.item()} L_KRD={loss_krd.item()}"
                )
            backward(loss)
            sgd_step(params, cfg.lr)
            sums += (loss_e.item(), loss_i.item(), loss_krd.item())
            batches += 1
        means = [float(v) for v in sums / batches]
        record = EpochRecord(epoch, means[0], means[1], means[2], float(weight))
        history.records.append(record)
        log.info("epoch %d L_E=%.6f L_I=%.6f L_KRD=%.6f w=%.4f", epoch, *means, weight)
        if on_epoch is not None:
            on_epoch(record)
    return model, history


# -- inference -----------------------------------------------------------------
def branch_scores(model: StudentModel, queries, videos) -> tuple[np.ndarray, np.ndarray]:
    """Full query x video similarity matrices ``(S_E, S_I)``, no graph built."""
    with no_grad():
        out = []
        for branch in (model.exploration, model.inheritance):
            q = encode_queries(queries, branch.text)
            v = encode_videos(videos, branch.video)
            out.append(cosine_matrix(q, v).data)
    return out[0], out[1]


def fused_scores(model: StudentModel, queries, videos, delta: float) -> np.ndarray:
    sim_e, sim_i = branch_scores(model, queries, videos)
    return fuse_similarity(sim_e, sim_i, delta)
