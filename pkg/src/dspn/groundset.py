"""Ground sets, similarity kernels, and set-function handles.

All set functions here operate on *index sets* over a universe
V = {0, ..., n-1}; the objects behind the indices live in a GroundSet's
embedding matrix.  Every exposed function is normalized (f(empty) = 0)
and all arithmetic is 64-bit.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

IndexSet = Iterable[int]


def as_items(A: IndexSet) -> tuple[int, ...]:
    """Canonicalize an index collection: deduplicated, ascending, plain ints."""
    return tuple(sorted({int(v) for v in A}))


@dataclass
class GroundSet:
    """Universe of items: an (n, d_in) embedding matrix plus optional class labels."""

    embeddings: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        emb = np.ascontiguousarray(np.asarray(self.embeddings, dtype=np.float64))
        if emb.ndim != 2 or emb.shape[0] < 1 or emb.shape[1] < 1:
            raise ValueError("embeddings must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(emb)):
            raise ValueError("embeddings contain non-finite entries")
        self.embeddings = emb
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if lab.shape != (emb.shape[0],):
                raise ValueError(
                    f"labels have shape {lab.shape}, expected ({emb.shape[0]},)"
                )
            self.labels = lab

    @property
    def n(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def classes(self) -> np.ndarray:
        if self.labels is None:
            raise ValueError("ground set has no labels")
        return np.unique(self.labels)

    def class_members(self, c: int) -> np.ndarray:
        if self.labels is None:
            raise ValueError("ground set has no labels")
        return np.flatnonzero(self.labels == c)

    def subset(self, indices: IndexSet) -> "GroundSet":
        """New GroundSet holding the given rows (labels carried along if present)."""
        idx = np.asarray(list(indices), dtype=np.int64)
        self.check_indices(idx)
        labels = self.labels[idx] if self.labels is not None else None
        return GroundSet(self.embeddings[idx].copy(), labels)

    def unlabeled(self) -> "GroundSet":
        """View of the same items with labels stripped (for label-free selection)."""
        return GroundSet(self.embeddings, None)

    def check_indices(self, A: IndexSet) -> None:
        for v in A:
            if not 0 <= int(v) < self.n:
                raise IndexError(f"item index {v} out of range [0, {self.n})")


@dataclass
class SimilarityKernel:
    """Dense pairwise similarity matrix with unit diagonal, entries in [0, 1]."""

    gamma: float
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("similarity matrix must be square")
        if not np.allclose(mat, mat.T, atol=1e-12):
            raise ValueError("similarity matrix must be symmetric")
        if not np.allclose(np.diag(mat), 1.0, atol=1e-12):
            raise ValueError("similarity matrix must have unit diagonal")
        if mat.min() < 0.0 or mat.max() > 1.0:
            raise ValueError("similarity entries must lie in [0, 1]")
        self.matrix = mat

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _squared_distances(emb: np.ndarray) -> np.ndarray:
    sq = np.sum(emb * emb, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (emb @ emb.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def rbf_similarity(embeddings: np.ndarray, gamma: float) -> SimilarityKernel:
    """Gaussian similarity s[a, i] = exp(-gamma * ||x_a - x_i||^2).

    The result is exactly symmetric with unit diagonal; gamma must be a
    positive finite real.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError("embeddings must be 2-D")
    if not np.all(np.isfinite(emb)):
        raise ValueError("embeddings contain non-finite entries")
    if not (np.isfinite(gamma) and gamma > 0.0):
        raise ValueError(f"gamma must be a positive real, got {gamma}")
    s = np.exp(-gamma * _squared_distances(emb))
    s = 0.5 * (s + s.T)
    np.fill_diagonal(s, 1.0)
    np.clip(s, 0.0, 1.0, out=s)
    return SimilarityKernel(float(gamma), s)


def median_heuristic_gamma(embeddings: np.ndarray) -> float:
    """Kernel width 1 / median(squared pairwise distance) over distinct pairs."""
    emb = np.asarray(embeddings, dtype=np.float64)
    d2 = _squared_distances(emb)
    off = d2[np.triu_indices(d2.shape[0], k=1)]
    med = float(np.median(off)) if off.size else 0.0
    if med <= 0.0:
        return 1.0
    return 1.0 / med


class IncrementalEvaluator:
    """Stateful gain-query interface used by the selection routines.

    Tracks a growing partial solution S; `gains(cands)` returns the marginal
    value f(v | S) for each candidate without mutating state, `add(v)` commits
    an item.
    """

    def __init__(self):
        self.items: list[int] = []

    def value(self) -> float:
        raise NotImplementedError

    def gains(self, cands: Sequence[int]) -> np.ndarray:
        raise NotImplementedError

    def gain(self, v: int) -> float:
        return float(self.gains(np.asarray([v], dtype=np.int64))[0])

    def add(self, v: int) -> None:
        raise NotImplementedError


class SetFunction:
    """Evaluator handle: f(A) for an index set A, plus marginal-gain queries."""

    def __call__(self, A: IndexSet) -> float:
        raise NotImplementedError

    def gain(self, v: int, A: IndexSet) -> float:
        items = as_items(A)
        if int(v) in items:
            return 0.0
        return self(items + (int(v),)) - self(items)

    def evaluator(self) -> IncrementalEvaluator:
        return _RecomputeEvaluator(self)


class _RecomputeEvaluator(IncrementalEvaluator):
    """Fallback evaluator: recomputes f from scratch for every query."""

    def __init__(self, fn: SetFunction):
        super().__init__()
        self._fn = fn
        self._value = 0.0

    def value(self) -> float:
        return self._value

    def gains(self, cands):
        base = tuple(self.items)
        out = np.empty(len(cands), dtype=np.float64)
        for i, v in enumerate(cands):
            if int(v) in self.items:
                out[i] = 0.0
            else:
                out[i] = self._fn(base + (int(v),)) - self._value
        return out

    def add(self, v):
        g = self.gain(int(v))
        self.items.append(int(v))
        self._value += g


class _CallableFunction(SetFunction):
    def __init__(self, fn: Callable[[tuple[int, ...]], float]):
        self._fn = fn

    def __call__(self, A):
        return float(self._fn(as_items(A)))


def ensure_setfn(f) -> SetFunction:
    """Wrap a plain callable as a SetFunction; pass SetFunction through."""
    if isinstance(f, SetFunction):
        return f
    if callable(f):
        return _CallableFunction(f)
    raise TypeError(f"not a set function: {f!r}")


class ModularFunction(SetFunction):
    """f(A) = sum of per-item weights; the simplest normalized set function."""

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be 1-D")

    def __call__(self, A):
        items = as_items(A)
        total = 0.0
        for v in items:
            if not 0 <= v < self.weights.shape[0]:
                raise IndexError(f"item index {v} out of range")
            total += float(self.weights[v])
        return total

    def evaluator(self):
        return _ModularEvaluator(self)


class _ModularEvaluator(IncrementalEvaluator):
    def __init__(self, fn: ModularFunction):
        super().__init__()
        self._w = fn.weights
        self._value = 0.0
        self._members: set[int] = set()

    def value(self):
        return self._value

    def gains(self, cands):
        cands = np.asarray(cands, dtype=np.int64)
        out = self._w[cands].astype(np.float64, copy=True)
        for i, v in enumerate(cands):
            if int(v) in self._members:
                out[i] = 0.0
        return out

    def add(self, v):
        v = int(v)
        if v not in self._members:
            self._value += float(self._w[v])
            self._members.add(v)
            self.items.append(v)


class FacilityLocation(SetFunction):
    """f(A) = sum_i max_{a in A} s[a, i] over a dense similarity kernel.

    The deliberately expensive O(n^2) coverage objective used as the target
    oracle; f(empty) = 0 because all similarities are non-negative.
    """

    def __init__(self, kernel: SimilarityKernel):
        self.kernel = kernel

    @property
    def n(self) -> int:
        return self.kernel.n

    def __call__(self, A):
        items = as_items(A)
        if not items:
            return 0.0
        for v in items:
            if not 0 <= v < self.n:
                raise IndexError(f"item index {v} out of range [0, {self.n})")
        rows = self.kernel.matrix[list(items)]
        return float(rows.max(axis=0).sum())

    def evaluator(self):
        return _FacilityLocationEvaluator(self)


class _FacilityLocationEvaluator(IncrementalEvaluator):
    def __init__(self, fn: FacilityLocation):
        super().__init__()
        self._s = fn.kernel.matrix
        self._cover = np.zeros(fn.n, dtype=np.float64)
        self._value = 0.0

    def value(self):
        return self._value

    def gains(self, cands):
        cands = np.asarray(cands, dtype=np.int64)
        return np.maximum(self._s[cands] - self._cover[None, :], 0.0).sum(axis=1)

    def add(self, v):
        v = int(v)
        np.maximum(self._cover, self._s[v], out=self._cover)
        self._value = float(self._cover.sum())
        self.items.append(v)


def facility_location_eval(kernel: SimilarityKernel, A: IndexSet) -> float:
    """Evaluate the facility-location objective for one index set."""
    return FacilityLocation(kernel)(A)


def oracle_score(target, E: IndexSet, M: IndexSet) -> float:
    """Graded pairwise comparison: target(E) - target(M).

    Positive when E is valued above M; exactly antisymmetric under swapping
    the two arguments.
    """
    f = ensure_setfn(target)
    return f(E) - f(M)


def conditional_gain(f, v: int, A: IndexSet) -> float:
    """f(v | A) = f(A + {v}) - f(A); zero when v is already in A."""
    fn = ensure_setfn(f)
    items = as_items(A)
    v = int(v)
    if v in items:
        return 0.0
    return fn(items + (v,)) - fn(items)
