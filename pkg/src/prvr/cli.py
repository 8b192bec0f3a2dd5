"""Command-line entry point: ``prvr {synth,train,eval,refine,gradcheck,sweep}``.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure (non-finite loss or failed gradient check).
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import gradcheck as gc
from .config import FIELDS, coerce, load_config
from .errors import ConfigError, DataError, DimensionError, NumericalError
from .experiment import evaluate, load_checkpoint, train_run
from .features import format_csv_row, parse_csv_rows
from .refinement import refine_scores
from .synth import SyntheticSpec, generate, load_split, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("prvr")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config(args):
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        videos=args.videos,
        frames=args.frames,
        dim=args.dim,
        teacher_dim=args.teacher_dim,
        query_len=args.query_len,
        moment_min=args.moment_min,
        moment_max=args.moment_max,
        noise=args.noise,
        teacher_noise=args.teacher_noise,
        holdout=args.holdout,
        seed=args.seed if args.seed is not None else 0,
    )
    splits = generate(spec)
    write_dataset(splits, args.out, spec)
    print(f"wrote {len(splits['train'])} train / {len(splits['test'])} test videos to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    _, history = train_run(cfg, args.data, args.out, on_epoch=lambda r: log.info("epoch %d done", r.epoch))
    print(f"trained {len(history.records)} epochs; checkpoint in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, cfg = load_checkpoint(args.checkpoint)
    delta = cfg.delta if args.delta is None else args.delta
    if not 0.0 <= delta <= 1.0:
        raise ConfigError(f"--delta must lie in [0, 1], got {delta}")
    report = evaluate(model, load_split(args.data, args.split), delta)
    text = report.to_text()
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
        (out / "report.tsv").write_text(report.header() + "\n" + report.row() + "\n")
    return EXIT_OK


STATS_HEADER = "mean,std,tau_high,tau_low,alpha"


def refine_text(text: str, k: int, source: str = "<csv>") -> tuple[str, str]:
    """Refined rows and ``mean,std,tau_high,tau_low,alpha`` sidecar rows."""
    rows = parse_csv_rows(text, source)
    out, stats = [], []
    for row in rows:
        refined = refine_scores(row, k)
        s = refined.stats
        out.append(format_csv_row(refined.scores) + "\n")
        stats.append(format_csv_row((s.mean, s.std, s.tau_high, s.tau_low, s.alpha)) + "\n")
    return "".join(out), "".join(stats)


def cmd_refine(args) -> int:
    if args.window < 1:
        raise ConfigError(f"--window must be >= 1, got {args.window}")
    src = Path(args.input)
    try:
        text = src.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {src}: {exc}") from None
    refined, stats = refine_text(text, args.window, str(src))
    out = Path(args.out)
    out.write_text(refined)
    Path(str(out) + ".stats.csv").write_text(stats)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    base = args.seed if args.seed is not None else 0
    results = gc.run(seeds=tuple(range(base, base + args.seeds)))
    rows = gc.summarize(results)
    print(gc.format_table(rows))
    if not all(ok for _, _, ok in rows):
        raise NumericalError("gradient check failed")
    return EXIT_OK


def sweep(cfg, data_dir, param: str, values: list[str], split: str = "test") -> list[tuple[str, float, float]]:
    """``(value, R@1, SumR)`` per value; ``delta`` reuses one trained model."""
    if param not in FIELDS:
        raise ConfigError(f"unknown sweep parameter {param!r}")
    parsed = [(v, coerce(param, v)) for v in values]
    data = load_split(data_dir, split)
    rows = []
    shared = None
    for text, value in parsed:
        run_cfg = cfg.replace(**{param: value})
        if param == "delta":
            if shared is None:
                shared, _ = train_run(cfg, data_dir)
            model = shared
        else:
            model, _ = train_run(run_cfg, data_dir)
        report = evaluate(model, data, run_cfg.delta)
        rows.append((text, report.recall[1], report.sumr))
    return rows


def cmd_sweep(args) -> int:
    cfg = _config(args)
    rows = sweep(cfg, args.data, args.param, args.values)
    lines = [f"{args.param}\tR@1\tSumR"] + [f"{v}\t{r1:.4f}\t{s:.4f}" for v, r1, s in rows]
    table = "\n".join(lines) + "\n"
    sys.stdout.write(table)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"sweep_{args.param}.tsv").write_text(table)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="prvr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--videos", type=int, default=200)
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--dim", type=int, default=384)
    p.add_argument("--teacher-dim", type=int, default=512)
    p.add_argument("--query-len", type=int, default=8)
    p.add_argument("--moment-min", type=int, default=2)
    p.add_argument("--moment-max", type=int, default=16)
    p.add_argument("--noise", type=float, default=1.0)
    p.add_argument("--teacher-noise", type=float)
    p.add_argument("--holdout", type=float, default=0.25)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train both branches")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--delta", type=float)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("refine", help="refine teacher score rows from a CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", type=int, default=3)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", type=int, default=5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="train/evaluate over values of one config key")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, nargs="+")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
