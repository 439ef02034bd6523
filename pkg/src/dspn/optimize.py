"""Selection routines: greedy and lazy-greedy maximization, single-pass
threshold (sieve) streaming maximization, a size-constrained minimization
heuristic, reservoir sampling, and farthest-point (k-centers) traversal.

Tie-breaking is always toward the lowest item index so runs are
reproducible; all routines work through the incremental gain-query
interface of `SetFunction.evaluator()`.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .groundset import IncrementalEvaluator, ensure_setfn


@dataclass
class GreedyTrace:
    """Greedy run record: selection order, objective after each pick, gains."""

    chain: list[int] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    gains: list[float] = field(default_factory=list)

    @property
    def selected(self) -> tuple[int, ...]:
        return tuple(self.chain)

    @property
    def value(self) -> float:
        return self.values[-1] if self.values else 0.0


def _pool_array(pool) -> np.ndarray:
    arr = np.asarray(sorted({int(v) for v in pool}), dtype=np.int64)
    if arr.size == 0:
        raise ValueError("candidate pool is empty")
    return arr


def greedy_max(f, pool, budget: int, lazy: bool = False) -> GreedyTrace:
    """Cardinality-constrained greedy maximization.

    Repeatedly adds argmax_v f(v | S) with ties to the lowest index.  The
    lazy variant keeps a max-heap of stale gains and re-evaluates only the
    top entry (valid because gains never grow under submodularity); it
    returns the identical chain.
    """
    fn = ensure_setfn(f)
    cands = _pool_array(pool)
    budget = int(budget)
    if budget > cands.size:
        raise ValueError(f"budget {budget} exceeds pool size {cands.size}")
    ev = fn.evaluator()
    trace = GreedyTrace()
    if budget <= 0:
        return trace
    if lazy:
        _greedy_lazy(ev, cands, budget, trace)
    else:
        _greedy_naive(ev, cands, budget, trace)
    return trace


def _greedy_naive(ev: IncrementalEvaluator, cands: np.ndarray, budget: int, trace: GreedyTrace):
    remaining = cands.copy()
    for _ in range(budget):
        gains = ev.gains(remaining)
        pick = int(np.argmax(gains))  # first max = lowest index (remaining sorted)
        v = int(remaining[pick])
        ev.add(v)
        trace.chain.append(v)
        trace.gains.append(float(gains[pick]))
        trace.values.append(ev.value())
        remaining = np.delete(remaining, pick)


def _greedy_lazy(ev: IncrementalEvaluator, cands: np.ndarray, budget: int, trace: GreedyTrace):
    gains = ev.gains(cands)
    heap = [(-float(g), int(v)) for g, v in zip(gains, cands)]
    heapq.heapify(heap)
    while heap and len(trace.chain) < budget:
        negg, v = heapq.heappop(heap)
        g = ev.gain(v)
        # tuple order resolves gain ties toward the lower index
        if not heap or (-g, v) <= heap[0]:
            ev.add(v)
            trace.chain.append(v)
            trace.gains.append(g)
            trace.values.append(ev.value())
        else:
            heapq.heappush(heap, (-g, v))


@dataclass
class StreamState:
    """Sieve state: live threshold levels with their partial solutions."""

    budget: int
    eps: float
    thresholds: list[float] = field(default_factory=list)
    buffers: dict[int, tuple[IncrementalEvaluator, list[int]]] = field(default_factory=dict)
    items_seen: int = 0
    max_singleton: float = 0.0


def streaming_max(f, stream, budget: int, eps: float = 0.05, return_state: bool = False):
    """Single-pass thresholded maximization of a normalized monotone
    submodular function.

    Threshold levels (1+eps)^i are instantiated lazily up to 2 * budget *
    (running max singleton value); an item joins a level's buffer when its
    marginal gain clears (tau/2 - f(S)) / (budget - |S|).  The best buffer is
    returned.  Each stream element is inspected exactly once and each
    (item, threshold) pair costs one gain query.  Levels are kept once
    instantiated, trading a small amount of memory for robustness to late
    high-value items.
    """
    fn = ensure_setfn(f)
    budget = int(budget)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    state = StreamState(budget=budget, eps=float(eps))
    known_exponents: set[int] = set()
    base = 1.0 + state.eps

    item_count = 0
    for item in stream:
        v = int(item)
        item_count += 1
        state.items_seen += 1
        singleton = float(fn.evaluator().gains(np.asarray([v]))[0])
        state.max_singleton = max(state.max_singleton, singleton)
        m = state.max_singleton
        if m > 0.0:
            lo = math.ceil(math.log(m, base) - 1e-12)
            hi = math.floor(math.log(2.0 * budget * m, base) + 1e-12)
            for i in range(lo, hi + 1):
                if i not in known_exponents:
                    known_exponents.add(i)
                    state.thresholds.append(base**i)
                    state.buffers[i] = (fn.evaluator(), [])
        for i, (ev, members) in state.buffers.items():
            if len(members) >= budget:
                continue
            tau = base**i
            need = (tau / 2.0 - ev.value()) / (budget - len(members))
            if ev.gain(v) >= need:
                ev.add(v)
                members.append(v)
    if item_count == 0:
        raise ValueError("stream is empty")

    best: list[int] = []
    best_value = -math.inf
    for i in sorted(state.buffers):
        ev, members = state.buffers[i]
        if ev.value() > best_value:
            best_value = ev.value()
            best = list(members)
    result = sorted(best)
    if return_state:
        return result, state
    return result


def submod_min_heuristic(f, pool, size: int, rng: np.random.Generator | None = None) -> list[int]:
    """Size-constrained low-value set: grow from the cheapest singleton by
    repeated min-gain additions, then run one exchange-improvement pass.

    For very large pools the candidate scans can be subsampled through rng;
    with the default None the scan is exhaustive and fully deterministic.
    """
    fn = ensure_setfn(f)
    cands = _pool_array(pool)
    size = int(size)
    if size > cands.size:
        raise ValueError(f"size {size} exceeds pool size {cands.size}")
    if size <= 0:
        return []
    cap = 4096
    if rng is not None and cands.size > cap:
        cands = np.sort(rng.choice(cands, size=cap, replace=False))

    ev = fn.evaluator()
    remaining = cands.copy()
    chain: list[int] = []
    for _ in range(size):
        gains = ev.gains(remaining)
        pick = int(np.argmin(gains))
        v = int(remaining[pick])
        ev.add(v)
        chain.append(v)
        remaining = np.delete(remaining, pick)

    # one exchange pass: best single swap per position
    cur_value = ev.value()
    for pos in range(len(chain)):
        held_out = chain[pos]
        others = [v for i, v in enumerate(chain) if i != pos]
        base_ev = fn.evaluator()
        for v in sorted(others):
            base_ev.add(v)
        outside = np.asarray(
            sorted(set(int(v) for v in cands) - set(others)), dtype=np.int64
        )
        totals = base_ev.value() + base_ev.gains(outside)
        pick = int(np.argmin(totals))
        if int(outside[pick]) != held_out and totals[pick] < cur_value:
            chain[pos] = int(outside[pick])
            cur_value = float(totals[pick])
    return sorted(chain)


def reservoir_sample(stream, k: int, rng: np.random.Generator) -> list[int]:
    """Classic single-pass reservoir: each stream element ends up in the
    sample with probability k/n.  Streams shorter than k are returned whole."""
    if k < 1:
        raise ValueError("k must be >= 1")
    reservoir: list[int] = []
    for i, item in enumerate(stream):
        v = int(item)
        if i < k:
            reservoir.append(v)
        else:
            j = int(rng.integers(0, i + 1))
            if j < k:
                reservoir[j] = v
    return reservoir


def k_centers(embeddings: np.ndarray, k: int, rng: np.random.Generator) -> list[int]:
    """Greedy farthest-point traversal from a random seeded start."""
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    k = int(k)
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}]")
    start = int(rng.integers(0, n))
    chosen = [start]
    dist = np.sqrt(np.sum((emb - emb[start]) ** 2, axis=1))
    for _ in range(k - 1):
        nxt = int(np.argmax(dist))
        chosen.append(nxt)
        np.minimum(dist, np.sqrt(np.sum((emb - emb[nxt]) ** 2, axis=1)), out=dist)
    return chosen
