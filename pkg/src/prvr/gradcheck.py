"""Central finite-difference checks for every differentiable operation.

Each case builds a scalar function of a few small random tensors. The
analytic gradient from :func:`prvr.autograd.backward` is compared with
``(f(x + h) - f(x - h)) / 2h`` element by element. The reported error is
``max |analytic - numeric| / max(max |numeric|, 1e-8)`` over all inputs of
the case, i.e. the worst element error relative to the gradient's scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autograd import Tensor, backward
from .functional import (
    cosine_matrix,
    gelu,
    kl_divergence,
    layer_norm,
    log_softmax,
    matmul,
    softmax,
)
from .model import info_nce_loss, triplet_loss
from .refinement import krd_loss, refine_scores
from .text_encoder import HsaParams, encode_query, extract_phrases, fuse_scales, scale_context
from .video_encoder import DtaParams, PnParams, VideoParams, dta_attention, encode_video, purification_norm

STEP = 1e-5
TOLERANCE = 1e-4

Builder = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]


@dataclass
class CheckResult:
    name: str
    seed: int
    max_rel_error: float
    elements: int
    passed: bool


def _leaf(rng, *shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, shape), requires_grad=True)


def _project(out: Tensor, rng) -> Callable[[Tensor], Tensor]:
    """Contract a non-scalar output with fixed random weights."""
    weights = Tensor(rng.uniform(-1.0, 1.0, out.shape))
    return lambda t: (t * weights).sum()


def _scalarize(fn: Callable[[], Tensor], rng) -> Callable[[], Tensor]:
    probe = fn()
    if probe.size == 1:
        return lambda: fn().reshape(())
    contract = _project(probe, rng)
    return lambda: contract(fn())


# -- cases ---------------------------------------------------------------------
def case_matmul(rng):
    a, b = _leaf(rng, 3, 4), _leaf(rng, 4, 2)
    return (lambda: matmul(a, b)), [a, b]


def case_batched_matmul(rng):
    a, b = _leaf(rng, 2, 3, 4), _leaf(rng, 4, 5)
    c = _leaf(rng, 2, 5, 3)
    return (lambda: matmul(matmul(a, b), c)), [a, b, c]


def case_softmax(rng):
    x = _leaf(rng, 3, 5)
    return (lambda: softmax(x, axis=-1) * softmax(x, axis=0)), [x]


def case_log_softmax(rng):
    x = _leaf(rng, 2, 6)
    return (lambda: log_softmax(x, axis=-1)), [x]


def case_layer_norm(rng):
    x, g, b = _leaf(rng, 4, 6), _leaf(rng, 6), _leaf(rng, 6)
    return (lambda: layer_norm(x, g, b)), [x, g, b]


def case_cosine(rng):
    a, b = _leaf(rng, 3, 5), _leaf(rng, 4, 5)
    return (lambda: cosine_matrix(a, b)), [a, b]


def case_gelu(rng):
    x = _leaf(rng, 4, 4, low=-3.0, high=3.0)
    return (lambda: gelu(x)), [x]


def case_kl_divergence(rng):
    x = _leaf(rng, 6)
    q = rng.dirichlet(np.ones(6))
    return (lambda: kl_divergence(log_softmax(x), q)), [x]


def case_attention(rng):
    p = DtaParams.init(8, rmax=3, radii=(1, 2), heads=2, rng=rng)
    p.bias_table.data = rng.uniform(-0.5, 0.5, p.bias_table.shape)
    x = _leaf(rng, 6, 8)
    return (lambda: dta_attention(x, p)), [x, p.query, p.key, p.value, p.out, p.bias_table]


def case_purification_norm(rng):
    p = PnParams.init(5, lam=0.3)
    p.gain.data = rng.uniform(0.5, 1.5, 5)
    p.bias.data = rng.uniform(-0.5, 0.5, 5)
    x = _leaf(rng, 4, 5)
    return (lambda: purification_norm(x, p)), [x, p.gain, p.bias]


def case_hsa_fusion(rng):
    p = HsaParams.init(6, scales=(1, 2), heads=2, rng=rng)
    p.beta.data = rng.uniform(-1.0, 1.0, 2)
    q = _leaf(rng, 4, 6)
    a1, a2 = _leaf(rng, 4, 6), _leaf(rng, 4, 6)
    return (lambda: fuse_scales(q, {1: a1, 2: a2}, p)), [q, a1, a2, p.beta, p.gain, p.bias]


def case_hsa_phrases(rng):
    p = HsaParams.init(8, scales=(2,), heads=2, rng=rng)
    x = _leaf(rng, 5, 8)
    return (lambda: scale_context(x, extract_phrases(x, 2, p))), [x, p.query[2], p.key[2], p.value[2]]


def case_text_encoder(rng):
    p = HsaParams.init(8, scales=(2, 3), heads=2, rng=rng)
    x = _leaf(rng, 5, 8)
    return (lambda: encode_query(x, p)), [x, p.beta, p.gain, p.query[3], p.value[2]]


def case_video_encoder(rng):
    p = VideoParams.init(8, rmax=3, radii=(1, 3), heads=2, lam=0.1, rng=rng)
    p.dta.bias_table.data = rng.uniform(-0.5, 0.5, p.dta.bias_table.shape)
    x = _leaf(rng, 5, 8)
    inputs = [x, p.dta.query, p.dta.bias_table, p.ff_in, p.ff_out_bias, p.pn_attn.gain, p.pn_ff.bias]
    return (lambda: encode_video(x, p)[0]), inputs


def case_info_nce(rng):
    s = _leaf(rng, 4, 4)
    return (lambda: info_nce_loss(s, temperature=0.5)), [s]


def case_triplet(rng):
    s = _leaf(rng, 4, 4)
    return (lambda: triplet_loss(s, margin=0.5)), [s]


def case_krd_loss(rng):
    student = _leaf(rng, 8)
    refined = refine_scores(rng.uniform(-1.0, 1.0, 8), k=2)
    return (lambda: krd_loss(student, refined)), [student]


CASES: dict[str, Builder] = {
    "matmul": case_matmul,
    "batched_matmul": case_batched_matmul,
    "softmax": case_softmax,
    "log_softmax": case_log_softmax,
    "layer_norm": case_layer_norm,
    "cosine": case_cosine,
    "gelu": case_gelu,
    "kl_divergence": case_kl_divergence,
    "attention_bias_mask": case_attention,
    "purification_norm": case_purification_norm,
    "hsa_fusion": case_hsa_fusion,
    "hsa_phrases": case_hsa_phrases,
    "text_encoder": case_text_encoder,
    "video_encoder": case_video_encoder,
    "info_nce": case_info_nce,
    "triplet": case_triplet,
    "krd_loss": case_krd_loss,
}


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, step: float = STEP) -> np.ndarray:
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = fn().item()
        flat[i] = orig - step
        down = fn().item()
        flat[i] = orig
        out[i] = (up - down) / (2 * step)
    return grad


def check(name: str, builder: Builder, seed: int, step: float = STEP, tol: float = TOLERANCE) -> CheckResult:
    rng = np.random.default_rng(seed)
    fn, inputs = builder(rng)
    fn = _scalarize(fn, rng)
    for t in inputs:
        t.grad = None
    backward(fn())
    worst = 0.0
    count = 0
    for t in inputs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numeric_grad(fn, t, step)
        scale = max(float(np.abs(numeric).max()), 1e-8)
        worst = max(worst, float(np.abs(analytic - numeric).max()) / scale)
        count += t.size
    return CheckResult(name, seed, worst, count, bool(worst < tol and math.isfinite(worst)))


def run(seeds=(0, 1, 2, 3, 4), cases: dict[str, Builder] | None = None, tol: float = TOLERANCE) -> list[CheckResult]:
    cases = CASES if cases is None else cases
    return [check(name, builder, seed, tol=tol) for name, builder in cases.items() for seed in seeds]


def summarize(results: list[CheckResult]) -> list[tuple[str, float, bool]]:
    """Worst error per operation across seeds."""
    table: dict[str, tuple[float, bool]] = {}
    for r in results:
        err, ok = table.get(r.name, (0.0, True))
        table[r.name] = (max(err, r.max_rel_error), ok and r.passed)
    return [(name, err, ok) for name, (err, ok) in table.items()]


def format_table(rows: list[tuple[str, float, bool]]) -> str:
    width = max(len(name) for name, _, _ in rows)
    lines = [f"{'operation':<{width}}  max_rel_error  status"]
    for name, err, ok in rows:
        lines.append(f"{name:<{width}}  {err:13.3e}  {'PASS' if ok else 'FAIL'}")
    return "\n".join(lines)
