"""Synthetic partially-relevant retrieval corpora.

Each video hides one latent event in a contiguous span of frames; the rest
are unrelated distractors. The paired query is a handful of noisy copies of
the event. Teacher features live in a separate space: a fixed random linear
map of the clean latents plus independent noise.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import format_csv_row, parse_csv_rows, read_features, write_features

SPLITS = ("train", "test")


@dataclass
class SyntheticSpec:
    videos: int = 200
    frames: int = 32
    dim: int = 384
    teacher_dim: int = 512
    query_len: int = 8
    moment_min: int = 2
    moment_max: int = 16
    noise: float = 0.5
    teacher_noise: float | None = None
    holdout: float = 0.25
    seed: int = 0

    def validate(self) -> "SyntheticSpec":
        if self.videos < 2:
            raise DataError("need at least 2 videos")
        if not 1 <= self.moment_min <= self.moment_max <= self.frames:
            raise DataError(
                f"moment lengths must satisfy 1 <= min ({self.moment_min}) <= max ({self.moment_max}) <= frames ({self.frames})"
            )
        if self.noise < 0 or (self.teacher_noise is not None and self.teacher_noise < 0):
            raise DataError("noise levels must be >= 0")
        if not 0.0 < self.holdout < 1.0:
            raise DataError("holdout fraction must lie in (0, 1)")
        if self.query_len < 1 or self.dim < 1 or self.teacher_dim < 1:
            raise DataError("dimensions must be positive")
        return self


@dataclass
class Dataset:
    queries: np.ndarray  # (N, L, D)
    frames: np.ndarray  # (N, K, D)
    teacher_queries: np.ndarray  # (N, d)
    teacher_frames: np.ndarray  # (N, K, d)
    moment_start: np.ndarray  # (N,) int
    moment_len: np.ndarray  # (N,) int
    mv_ratio: np.ndarray  # (N,)

    def __len__(self) -> int:
        return self.frames.shape[0]

    def relevance_mask(self) -> np.ndarray:
        k = self.frames.shape[1]
        idx = np.arange(k)[None, :]
        start = self.moment_start[:, None]
        return ((idx >= start) & (idx < start + self.moment_len[:, None])).astype(np.float64)

    def subset(self, idx) -> "Dataset":
        return Dataset(**{name: getattr(self, name)[idx] for name in self.__dataclass_fields__})


def generate(spec: SyntheticSpec) -> dict[str, Dataset]:
    """Build the train / test splits in memory."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, k, dim, tdim = spec.videos, spec.frames, spec.dim, spec.teacher_dim
    t_noise = spec.noise if spec.teacher_noise is None else spec.teacher_noise
    scale = 1.0 / np.sqrt(dim)
    t_scale = 1.0 / np.sqrt(tdim)
    mapping = rng.normal(0.0, scale, (dim, tdim))

    events = rng.normal(0.0, scale, (n, dim))
    lengths = rng.integers(spec.moment_min, spec.moment_max + 1, size=n)
    starts = np.array([rng.integers(0, k - length + 1) for length in lengths])
    latents = rng.normal(0.0, scale, (n, k, dim))
    for v in range(n):
        latents[v, starts[v] : starts[v] + lengths[v]] = events[v]

    frames = latents + spec.noise * rng.normal(0.0, scale, (n, k, dim))
    queries = events[:, None, :] + spec.noise * rng.normal(0.0, scale, (n, spec.query_len, dim))
    teacher_frames = latents @ mapping + t_noise * rng.normal(0.0, t_scale, (n, k, tdim))
    teacher_queries = events @ mapping + t_noise * rng.normal(0.0, t_scale, (n, tdim))
    corpus = Dataset(
        queries=queries,
        frames=frames,
        teacher_queries=teacher_queries,
        teacher_frames=teacher_frames,
        moment_start=starts.astype(np.int64),
        moment_len=lengths.astype(np.int64),
        mv_ratio=lengths / k,
    )
    n_test = max(1, int(round(n * spec.holdout)))
    n_test = min(n_test, n - 1)
    return {"train": corpus.subset(slice(0, n - n_test)), "test": corpus.subset(slice(n - n_test, n))}


def write_dataset(splits: dict[str, Dataset], out_dir, spec: SyntheticSpec | None = None) -> None:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataError(f"cannot create {out}: {exc}") from None
    for split, ds in splits.items():
        write_features(out / f"{split}_queries.kdcf", ds.queries)
        write_features(out / f"{split}_frames.kdcf", ds.frames)
        write_features(out / f"{split}_teacher_queries.kdcf", ds.teacher_queries)
        write_features(out / f"{split}_teacher_frames.kdcf", ds.teacher_frames)
        rows = [
            format_csv_row((s, m, r)) for s, m, r in zip(ds.moment_start, ds.moment_len, ds.mv_ratio)
        ]
        (out / f"{split}_moments.csv").write_text("".join(row + "\n" for row in rows))
    if spec is not None:
        meta = "".join(f"{key} = {value}\n" for key, value in asdict(spec).items())
        (out / "synth.txt").write_text(meta)


def load_split(data_dir, split: str) -> Dataset:
    base = Path(data_dir)
    moments_path = base / f"{split}_moments.csv"
    try:
        text = moments_path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {moments_path}: {exc}") from None
    moments = parse_csv_rows(text, str(moments_path))
    ds = Dataset(
        queries=read_features(base / f"{split}_queries.kdcf"),
        frames=read_features(base / f"{split}_frames.kdcf"),
        teacher_queries=read_features(base / f"{split}_teacher_queries.kdcf"),
        teacher_frames=read_features(base / f"{split}_teacher_frames.kdcf"),
        moment_start=np.array([int(r[0]) for r in moments], dtype=np.int64),
        moment_len=np.array([int(r[1]) for r in moments], dtype=np.int64),
        mv_ratio=np.array([r[2] for r in moments], dtype=np.float64),
    )
    n = len(ds)
    sizes = {
        "queries": ds.queries.shape[0],
        "teacher_queries": ds.teacher_queries.shape[0],
        "teacher_frames": ds.teacher_frames.shape[0],
        "moments": len(moments),
    }
    bad = {k: v for k, v in sizes.items() if v != n}
    if bad:
        raise DataError(f"{base}: split {split!r} has {n} videos but {bad}")
    return ds
