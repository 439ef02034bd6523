"""Synthetic data generation and embedding/label file formats.

Binary embeddings: 8-byte magic "DSPNEMB1", then unsigned 32-bit
little-endian n and d, then n*d IEEE-754 float32 little-endian values
row-major.  Labels: one decimal integer per line, n lines.  Text
alternative: TSV whose header row is "n<TAB>d".  Values are float32 on
disk and float64 in memory.

Randomness comes from numpy's PCG64 generator seeded through
SeedSequence, with one spawned child stream per cluster, so generation is
reproducible across platforms and parallelizable per cluster.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .groundset import GroundSet

EMBEDDINGS_MAGIC = b"DSPNEMB1"


class FormatError(ValueError):
    """A persisted artifact does not parse (bad magic, truncation, ...)."""


@dataclass
class SyntheticSpec:
    clusters: int = 5
    points_per_cluster: int = 100
    dim: int = 2
    cluster_spread: float = 1.0
    center_spread: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.clusters < 1 or self.points_per_cluster < 1 or self.dim < 1:
            raise ValueError("counts must be >= 1")
        if self.cluster_spread <= 0 or self.center_spread <= 0:
            raise ValueError("spreads must be > 0")


def gen_synthetic(spec: SyntheticSpec) -> GroundSet:
    """Gaussian blobs: centers ~ N(0, center_spread^2 I), points ~
    N(center, cluster_spread^2 I), labels = cluster id."""
    ss = np.random.SeedSequence(spec.seed)
    children = ss.spawn(spec.clusters + 1)
    center_rng = np.random.default_rng(children[0])
    centers = center_rng.normal(0.0, spec.center_spread, size=(spec.clusters, spec.dim))
    blocks = []
    labels = []
    for c in range(spec.clusters):
        rng = np.random.default_rng(children[c + 1])
        pts = centers[c] + rng.normal(
            0.0, spec.cluster_spread, size=(spec.points_per_cluster, spec.dim)
        )
        blocks.append(pts)
        labels.extend([c] * spec.points_per_cluster)
    return GroundSet(np.vstack(blocks), np.asarray(labels, dtype=np.int64))


def save_embeddings(path, groundset: GroundSet) -> None:
    emb32 = np.ascontiguousarray(groundset.embeddings, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(EMBEDDINGS_MAGIC)
        fh.write(np.array([groundset.n, groundset.dim], dtype="<u4").tobytes())
        fh.write(emb32.tobytes())


def load_embeddings(path) -> GroundSet:
    with open(path, "rb") as fh:
        magic = fh.read(len(EMBEDDINGS_MAGIC))
        if magic != EMBEDDINGS_MAGIC:
            raise FormatError(f"bad embeddings magic {magic!r}")
        head = fh.read(8)
        if len(head) != 8:
            raise FormatError("embeddings header truncated")
        n, d = (int(x) for x in np.frombuffer(head, dtype="<u4"))
        if n < 1 or d < 1:
            raise FormatError(f"invalid dimensions n={n}, d={d}")
        if n * d * 4 > 2**40:
            raise FormatError(f"payload size n*d overflows sanity bound: {n}x{d}")
        payload = fh.read()
    expected = n * d * 4
    if len(payload) != expected:
        raise FormatError(
            f"embeddings payload has {len(payload)} bytes, expected {expected}"
        )
    emb = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(n, d)
    return GroundSet(emb)


def save_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(str(int(v)) for v in labels) + "\n")


def load_labels(path, n: int | None = None) -> np.ndarray:
    with open(path, "r", encoding="utf-8") as fh:
        values = [int(line) for line in fh.read().split()]
    labels = np.asarray(values, dtype=np.int64)
    if n is not None and labels.shape[0] != n:
        raise FormatError(f"label file has {labels.shape[0]} entries, expected {n}")
    return labels


def save_embeddings_text(path, groundset: GroundSet) -> None:
    """TSV alternative: header "n<TAB>d", then one row of d values per item."""
    emb32 = groundset.embeddings.astype(np.float32)
    lines = [f"{groundset.n}\t{groundset.dim}"]
    for row in emb32:
        lines.append("\t".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_embeddings_text(path) -> GroundSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise FormatError("empty embeddings file")
    n, d = (int(x) for x in lines[0].split("\t"))
    if n < 1 or d < 1:
        raise FormatError(f"invalid dimensions n={n}, d={d}")
    if len(lines) - 1 != n:
        raise FormatError(f"embeddings file has {len(lines) - 1} rows, expected {n}")
    emb = np.empty((n, d), dtype=np.float64)
    for i, line in enumerate(lines[1:]):
        row = np.asarray([float(x) for x in line.split("\t")], dtype=np.float32)
        if row.shape[0] != d:
            raise FormatError(f"row {i} has {row.shape[0]} values, expected {d}")
        emb[i] = row.astype(np.float64)
    return GroundSet(emb)
