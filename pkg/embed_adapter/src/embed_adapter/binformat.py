"""Writer (and verification reader) for the block-embedding input format.

Layout (little-endian): magic ``NAEM``, u32 version=1, u32 dim D, u32 group
count G, G x (u32 length + UTF-8 group label); then per report: u32 length +
UTF-8 report_id, G x (f64 weight, D x f32 block vector). This mirrors the
consumer's documented schema bit for bit; the report-level vector is derived
downstream and never stored.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"NAEM"
VERSION = 1


def write_embeddings(path, labels, report_ids, weights: np.ndarray, blocks: np.ndarray) -> None:
    weights = np.asarray(weights, dtype=np.float64)
    blocks = np.asarray(blocks, dtype=np.float32)
    n, g = weights.shape
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


def read_embeddings(path):
    """Parse a file back for self-verification of the writer."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError("bad magic")
    off = 4
    version, dim, g = struct.unpack_from("<III", data, off)
    off += 12
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    labels = []
    for _ in range(g):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        labels.append(data[off : off + ln].decode("utf-8"))
        off += ln
    report_ids, weights, blocks = [], [], []
    while off < len(data):
        (ln,) = struct.unpack_from("<I", data, off)
        off += 4
        report_ids.append(data[off : off + ln].decode("utf-8"))
        off += ln
        w = np.empty(g)
        b = np.empty((g, dim), dtype=np.float32)
        for p in range(g):
            (w[p],) = struct.unpack_from("<d", data, off)
            off += 8
            b[p] = np.frombuffer(data, dtype="<f4", count=dim, offset=off)
            off += 4 * dim
        weights.append(w)
        blocks.append(b)
    return labels, report_ids, np.array(weights), np.array(blocks, dtype=np.float32)
