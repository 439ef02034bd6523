"""Matroid structures and the weighted matroid rank function.

Three variants are supported: the free matroid (every set independent),
the uniform matroid of rank k, and partition matroids with per-block
caps.  The weighted rank is computed greedily, which is exact for
matroids; ties are always broken toward the lower item index and
accumulation runs left-to-right in that order so results are
reproducible bit-for-bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groundset import IndexSet, as_items

VARIANTS = ("free", "uniform", "partition")


@dataclass(frozen=True)
class Matroid:
    variant: str
    k: int = 0
    blocks: tuple[tuple[int, ...], ...] = ()
    limits: tuple[int, ...] = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown matroid variant {self.variant!r}")
        if self.variant == "uniform" and self.k < 0:
            raise ValueError("uniform matroid rank limit must be >= 0")
        if self.variant == "partition":
            if len(self.blocks) != len(self.limits):
                raise ValueError("blocks and limits must have equal length")
            if any(l < 0 for l in self.limits):
                raise ValueError("partition limits must be non-negative")
            seen: set[int] = set()
            for block in self.blocks:
                for v in block:
                    if v in seen:
                        raise ValueError(f"partition blocks overlap at item {v}")
                    seen.add(v)

    @staticmethod
    def free() -> "Matroid":
        return Matroid("free")

    @staticmethod
    def uniform(k: int) -> "Matroid":
        return Matroid("uniform", k=int(k))

    @staticmethod
    def partition(blocks, limits) -> "Matroid":
        blocks = tuple(tuple(int(v) for v in b) for b in blocks)
        limits = tuple(int(l) for l in limits)
        return Matroid("partition", blocks=blocks, limits=limits)

    @staticmethod
    def partition_from_labels(labels, limit: int) -> "Matroid":
        """One block per class label, all with the same cap."""
        labels = np.asarray(labels)
        blocks = tuple(
            tuple(int(v) for v in np.flatnonzero(labels == c))
            for c in np.unique(labels)
        )
        return Matroid.partition(blocks, (int(limit),) * len(blocks))

    def validate_universe(self, n: int) -> None:
        """Partition blocks must be disjoint (checked at build) and cover [0, n)."""
        if self.variant != "partition":
            return
        covered = sorted(v for block in self.blocks for v in block)
        if covered != list(range(n)):
            raise ValueError("partition blocks must exactly cover the universe")

    def block_index(self, n: int) -> np.ndarray:
        """Map item id -> block id (partition matroids only)."""
        if self.variant != "partition":
            raise ValueError("block_index is only defined for partition matroids")
        self.validate_universe(n)
        out = np.empty(n, dtype=np.int64)
        for b, block in enumerate(self.blocks):
            for v in block:
                out[v] = b
        return out

    def descriptor(self) -> dict:
        """JSON-serializable description (used by checkpoint files)."""
        d = {"variant": self.variant}
        if self.variant == "uniform":
            d["k"] = self.k
        if self.variant == "partition":
            d["blocks"] = [list(b) for b in self.blocks]
            d["limits"] = list(self.limits)
        return d

    @staticmethod
    def from_descriptor(d: dict) -> "Matroid":
        variant = d["variant"]
        if variant == "free":
            return Matroid.free()
        if variant == "uniform":
            return Matroid.uniform(d["k"])
        if variant == "partition":
            return Matroid.partition(d["blocks"], d["limits"])
        raise ValueError(f"unknown matroid variant {variant!r}")


def _top_sum(values_by_item: list[tuple[float, int]], cap: int) -> float:
    """Sum of the `cap` largest weights, ties to the lower item index."""
    ordered = sorted(values_by_item, key=lambda t: (-t[0], t[1]))
    total = 0.0
    for w, _ in ordered[:cap]:
        total += w
    return total


def weighted_matroid_rank(matroid: Matroid, m, A: IndexSet) -> float:
    """rank(A) = max over independent I of m(A intersect I).

    m is a non-negative weight vector indexed by item id.  The greedy
    computation (largest weights first, subject to independence) is exact
    for matroids: the free matroid gives the plain modular sum, uniform(k)
    the sum of the k largest weights in A, and a partition matroid the
    per-block top-limit sums.
    """
    w = np.asarray(m, dtype=np.float64)
    if w.ndim != 1:
        raise ValueError("weight vector must be 1-D")
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    items = as_items(A)
    for v in items:
        if not 0 <= v < w.shape[0]:
            raise IndexError(f"item index {v} out of range")
    if not items:
        return 0.0

    if matroid.variant == "free":
        total = 0.0
        for v in items:
            total += float(w[v])
        return total

    if matroid.variant == "uniform":
        return _top_sum([(float(w[v]), v) for v in items], matroid.k)

    # partition: greedy within each block, blocks accumulated in order
    member = set(items)
    total = 0.0
    for block, cap in zip(matroid.blocks, matroid.limits):
        inside = [(float(w[v]), v) for v in block if v in member]
        if inside and cap > 0:
            total += _top_sum(inside, cap)
    return total
