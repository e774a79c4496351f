"""Binary codec for the block-embedding file.

Layout (little-endian):
  magic ``NAEM``, u32 version (=1), u32 dim D, u32 group count G,
  G x (u32 length + UTF-8 group label); then per report:
  u32 length + UTF-8 report_id, G x (f64 weight, D x f32 block vector).

The report-level vector is derived downstream and never stored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NAEM"
VERSION = 1


class FormatError(ValueError):
    """Malformed or inconsistent input file."""


def write_embeddings(
    path,
    labels: list[str],
    report_ids: list[str],
    weights: np.ndarray,
    blocks: np.ndarray,
) -> None:
    """Write an embedding file; ``weights`` is (n, G), ``blocks`` is (n, G, D)."""
    weights = np.asarray(weights, dtype=np.float64)
    blocks = np.asarray(blocks, dtype=np.float32)
    n, g = weights.shape
    if blocks.shape[:2] != (n, g):
        raise ValueError("weights and blocks disagree on shape")
    d = blocks.shape[2]
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<III", VERSION, d, g))
        for lab in labels:
            raw = lab.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
        for i, rid in enumerate(report_ids):
            raw = str(rid).encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            for p in range(g):
                f.write(struct.pack("<d", weights[i, p]))
                f.write(blocks[i, p].tobytes())


def read_embeddings(path) -> tuple[list[str], list[str], np.ndarray, np.ndarray]:
    """Read an embedding file; returns (labels, report_ids, weights, blocks)."""
    path = Path(path)
    data = path.read_bytes()
    if data[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {data[:4]!r}")
    off = 4
    version, dim, g = struct.unpack_from("<III", data, off)
    off += 12
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    labels = []
    for _ in range(g):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        labels.append(data[off : off + ln].decode("utf-8"))
        off += ln
    rec_size = g * (8 + 4 * dim)
    report_ids: list[str] = []
    weights_rows = []
    blocks_rows = []
    while off < len(data):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        rid = data[off : off + ln].decode("utf-8")
        off += ln
        if off + rec_size > len(data):
            raise FormatError(f"{path}: truncated record for report {rid!r}")
        w = np.empty(g, dtype=np.float64)
        b = np.empty((g, dim), dtype=np.float32)
        for p in range(g):
            (w[p],) = struct.unpack_from("<d", data, off)
            off += 8
            b[p] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
        report_ids.append(rid)
        weights_rows.append(w)
        blocks_rows.append(b)
    if weights_rows:
        weights = np.stack(weights_rows)
        blocks = np.stack(blocks_rows)
    else:
        weights = np.empty((0, g), dtype=np.float64)
        blocks = np.empty((0, g, dim), dtype=np.float32)
    return labels, report_ids, weights, blocks
