"""Experiment configuration as a flat ``key = value`` text file.

Blank lines and ``#`` comments are ignored. Unknown keys, duplicate keys and
unparsable values are rejected with the offending line number. Missing keys
take the defaults below.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError


@dataclass
class Config:
    # optimisation
    lr: float = 0.0002
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    # branch losses
    margin: float = 0.2
    temperature: float = 0.07
    # distillation weight w = w0 * gamma ** epoch
    w0: float = 1.0
    gamma: float = 0.95
    # inference fusion
    delta: float = 0.1
    # text encoder
    scales: tuple[int, ...] = (2, 3)
    heads: int = 4
    # video encoder
    rmax: int = 30
    radii: tuple[int, ...] = (10, 20)
    lam: float = 0.1
    # refinement window
    krd_window: int = 3

    def validate(self) -> "Config":
        checks = [
            (self.lr >= 0, "lr must be >= 0"),
            (self.epochs >= 0, "epochs must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.margin >= 0, "margin must be >= 0"),
            (self.temperature > 0, "temperature must be > 0"),
            (0.0 <= self.delta <= 1.0, "delta must lie in [0, 1]"),
            (self.gamma >= 0, "gamma must be >= 0"),
            (len(self.scales) > 0 and min(self.scales) >= 1, "scales must be positive integers"),
            (self.heads >= 1, "heads must be >= 1"),
            (self.rmax >= 1, "rmax must be >= 1"),
            (len(self.radii) > 0 and min(self.radii) >= 0, "radii must be non-negative integers"),
            (self.lam >= 0, "lam must be >= 0"),
            (self.krd_window >= 1, "krd_window must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)
        return self

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes).validate()


FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _int_tuple(text: str) -> tuple[int, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("empty list")
    return tuple(int(p) for p in parts)


def coerce(key: str, text: str):
    """Parse ``text`` as the type of config field ``key``."""
    if key not in FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    kind = FIELDS[key].type
    if kind == "float":
        return float(text)
    if kind == "int":
        return int(text)
    return _int_tuple(text)


def parse_config(text: str, source: str = "<config>") -> Config:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = coerce(key, value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {value!r} ({exc})") from None
    try:
        return Config(**values).validate()
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


def format_config(cfg: Config) -> str:
    lines = []
    for name in FIELDS:
        value = getattr(cfg, name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        else:
            value = repr(value)
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"
