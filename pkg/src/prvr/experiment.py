"""Checkpoints, metrics logs and train-then-evaluate runs."""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .config import Config, format_config, load_config
from .errors import DataError, DimensionError
from .features import read_features, write_features
from .metrics import RetrievalReport, results_from_scores
from .model import EpochRecord, History, StudentModel, fused_scores, train
from .synth import Dataset, load_split

METRICS_HEADER = "epoch\tL_E\tL_I\tL_KRD\tw"


def format_epoch(r: EpochRecord) -> str:
    return f"{r.epoch}\t{r.loss_e!r}\t{r.loss_i!r}\t{r.loss_krd!r}\t{r.weight!r}"


def format_metrics(history: History) -> str:
    return "".join(line + "\n" for line in [METRICS_HEADER] + [format_epoch(r) for r in history.records])


def save_checkpoint(model: StudentModel, cfg: Config, out_dir) -> Path:
    """Write every parameter as a feature file plus ``manifest.txt`` and ``config.txt``."""
    out = Path(out_dir)
    params_dir = out / "params"
    params_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"dim = {model.dim}"]
    for name, tensor in model.parameters().items():
        fname = f"{name}.kdcf"
        write_features(params_dir / fname, tensor.data)
        lines.append(f"param\t{name}\tparams/{fname}\t{'x'.join(str(n) for n in tensor.shape)}")
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    (out / "config.txt").write_text(format_config(cfg))
    return out


def load_checkpoint(ckpt_dir) -> tuple[StudentModel, Config]:
    base = Path(ckpt_dir)
    manifest = base / "manifest.txt"
    try:
        lines = manifest.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint manifest {manifest}: {exc}") from None
    cfg = load_config(base / "config.txt")
    dim = None
    arrays = {}
    for line in lines:
        if line.startswith("dim = "):
            dim = int(line.split("=", 1)[1])
        elif line.startswith("param\t"):
            _, name, rel, _dims = line.split("\t")
            arrays[name] = read_features(base / rel)
    if dim is None:
        raise DataError(f"{manifest}: missing 'dim' line")
    model = StudentModel.init(dim, cfg)
    model.load_parameters(arrays)
    return model, cfg


def evaluate(model: StudentModel, dataset: Dataset, delta: float) -> RetrievalReport:
    """Rank every held-out video for every query by fused similarity."""
    dim = dataset.frames.shape[-1]
    if dim != model.dim or dataset.queries.shape[-1] != model.dim:
        raise DimensionError(
            f"data feature dim {dim} (queries {dataset.queries.shape[-1]}) does not match checkpoint dim {model.dim}"
        )
    sim = fused_scores(model, dataset.queries, dataset.frames, delta)
    return RetrievalReport.from_results(results_from_scores(sim, np.arange(len(dataset)), dataset.mv_ratio))


def train_run(cfg: Config, data_dir, out_dir=None, on_epoch=None) -> tuple[StudentModel, History]:
    """Train on the ``train`` split; optionally persist checkpoint and metrics log."""
    data = load_split(data_dir, "train")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "metrics.tsv"
        log_path.write_text(METRICS_HEADER + "\n")

        def record(r: EpochRecord) -> None:
            with log_path.open("a") as fh:
                fh.write(format_epoch(r) + "\n")
            if on_epoch is not None:
                on_epoch(r)

        model, history = train(data, cfg, on_epoch=record)
        save_checkpoint(model, cfg, out)
        return model, history
    return train(data, cfg, on_epoch=on_epoch)


def loss_trend_ok(values, window: int = 10, tolerance: float = 0.0) -> bool:
    """True if a least-squares line through the first ``window`` values slopes down."""
    vals = np.asarray(values[:window], dtype=np.float64)
    if vals.size < 2 or not np.all(np.isfinite(vals)):
        return False
    slope = np.polyfit(np.arange(vals.size), vals, 1)[0]
    return bool(slope < -tolerance) and math.isfinite(slope)
