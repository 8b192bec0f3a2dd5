"""Binary feature files and CSV score rows.

Feature file layout (all little-endian)::

    b"KDCF"  magic
    u8       format version (1)
    u8       rank
    u32      dims[rank]
    f32      payload, row-major, prod(dims) values

Arrays are stored as float32 and read back as float64.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"KDCF"
VERSION = 1


def encode_features(array) -> bytes:
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim > 255:
        raise DataError(f"rank {arr.ndim} too large for a feature file")
    header = MAGIC + struct.pack("<BB", VERSION, arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    return header + np.ascontiguousarray(arr).tobytes()


def decode_features(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    if len(blob) < 6 or blob[:4] != MAGIC:
        raise DataError(f"{source}: not a feature file (bad magic)")
    version, rank = struct.unpack_from("<BB", blob, 4)
    if version != VERSION:
        raise DataError(f"{source}: unsupported format version {version}")
    offset = 6 + 4 * rank
    if len(blob) < offset:
        raise DataError(f"{source}: truncated header")
    dims = struct.unpack_from(f"<{rank}I", blob, 6)
    count = int(np.prod(dims, dtype=np.int64)) if rank else 1
    if len(blob) - offset != 4 * count:
        raise DataError(f"{source}: payload has {len(blob) - offset} bytes, expected {4 * count} for dims {dims}")
    return np.frombuffer(blob, dtype="<f4", count=count, offset=offset).astype(np.float64).reshape(dims)


def write_features(path, array) -> None:
    path = Path(path)
    try:
        path.write_bytes(encode_features(array))
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc}") from None


def read_features(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    return decode_features(blob, str(path))


def parse_csv_rows(text: str, source: str = "<csv>") -> list[np.ndarray]:
    """Comma-separated float rows, no header. Blank lines are skipped."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        values = []
        for col, cell in enumerate(line.split(","), start=1):
            try:
                values.append(float(cell))
            except ValueError:
                raise DataError(f"{source}: row {lineno}, column {col}: cannot parse {cell.strip()!r} as a number") from None
        rows.append(np.array(values, dtype=np.float64))
    return rows


def format_csv_row(values) -> str:
    return ",".join(repr(float(v)) for v in values)


def read_csv_matrix(path) -> np.ndarray:
    """Equal-length CSV rows as a 2-D array, e.g. to import external features."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    rows = parse_csv_rows(text, str(path))
    if rows and len({len(r) for r in rows}) != 1:
        raise DataError(f"{path}: rows have differing lengths")
    return np.stack(rows) if rows else np.zeros((0, 0))
