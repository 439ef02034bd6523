"""Evaluation harness: transfer quality against the target oracle,
offline/online experimental design with a linear probe, Zipf-imbalanced
ground-set construction, and per-feature ranking reports.

Selection is always label-free; labels enter only when the probe is
trained on an already-chosen subset.  Reports carry the seed and config
hash that produced every row and serialize to a wide per-budget CSV plus a
plot-ready long-format CSV.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .groundset import (
    FacilityLocation,
    GroundSet,
    SetFunction,
    ensure_setfn,
    median_heuristic_gamma,
    rbf_similarity,
)
from .model import DspnFunction, DspnModel, _pillar_fwd
from .optimize import greedy_max, k_centers, reservoir_sample, streaming_max


@dataclass
class ImbalancedGroundSet(GroundSet):
    """Ground set with duplicated rows; origin[i] maps row i back to the
    index it copies (originals map to themselves)."""

    origin: np.ndarray | None = None


def zipf_duplicate(
    groundset: GroundSet,
    s_exponent: float,
    base_count: int,
    rng: np.random.Generator,
) -> ImbalancedGroundSet:
    """Append exact duplicate rows with long-tailed per-class counts.

    Classes are ranked by a random permutation; the class at popularity rank
    r receives round(base_count * r^-s) duplicates, each an exact copy of a
    uniformly drawn member.
    """
    if groundset.labels is None:
        raise ValueError("zipf duplication needs class labels")
    if s_exponent <= 0:
        raise ValueError("s_exponent must be > 0")
    classes = groundset.classes()
    ranked = rng.permutation(classes)
    dup_rows = []
    dup_labels = []
    dup_origin = []
    for rank, c in enumerate(ranked, start=1):
        count = int(round(base_count * rank ** (-s_exponent)))
        members = groundset.class_members(int(c))
        if count <= 0:
            continue
        sources = rng.choice(members, size=count, replace=True)
        for src in sources:
            dup_rows.append(groundset.embeddings[int(src)])
            dup_labels.append(int(c))
            dup_origin.append(int(src))
    n = groundset.n
    if dup_rows:
        emb = np.vstack([groundset.embeddings, np.asarray(dup_rows)])
        labels = np.concatenate([groundset.labels, np.asarray(dup_labels, dtype=np.int64)])
        origin = np.concatenate([np.arange(n), np.asarray(dup_origin, dtype=np.int64)])
    else:
        emb = groundset.embeddings.copy()
        labels = groundset.labels.copy()
        origin = np.arange(n)
    return ImbalancedGroundSet(emb, labels, origin=origin)


def dedup_indices(groundset: GroundSet) -> np.ndarray:
    """Indices of one representative per distinct embedding row (exact-copy
    duplicates collapse onto the first occurrence)."""
    emb = np.ascontiguousarray(groundset.embeddings)
    view = emb.view([("", emb.dtype)] * emb.shape[1]).ravel()
    _, first = np.unique(view, return_index=True)
    return np.sort(first)


def assert_disjoint(a: GroundSet, b: GroundSet) -> None:
    """Held-out discipline: no bitwise-equal rows shared between two ground sets."""
    va = a.embeddings.view([("", a.embeddings.dtype)] * a.dim).ravel()
    vb = b.embeddings.view([("", b.embeddings.dtype)] * b.dim).ravel()
    if np.intersect1d(va, vb).size:
        raise ValueError("evaluation ground set overlaps the training ground set")


# ---------------------------------------------------------------------------
# transfer


def normalized_fl_eval(
    target,
    S,
    budget: int,
    pool=None,
    reference_value: float | None = None,
) -> float:
    """Value of S under the target, normalized by the target's own greedy
    set of the same budget: f_t(S) / f_t(S_greedy)."""
    fn = ensure_setfn(target)
    S = tuple(int(v) for v in S)
    if len(S) != int(budget):
        raise ValueError(f"summary has {len(S)} items, expected budget {budget}")
    if reference_value is None:
        if pool is None:
            raise ValueError("need either a candidate pool or a reference value")
        reference_value = greedy_max(fn, pool, int(budget), lazy=True).value
    if reference_value <= 0.0:
        raise ValueError("degenerate target: greedy reference value is zero")
    return fn(S) / reference_value


@dataclass
class TransferReport:
    budgets: list[int]
    methods: list[str]
    values: dict[tuple[int, str], float]
    seed: int | None = None
    config_hash: str | None = None

    def row(self, budget: int) -> dict[str, float]:
        return {m: self.values[(budget, m)] for m in self.methods}

    def mean(self, method: str) -> float:
        return float(np.mean([self.values[(b, method)] for b in self.budgets]))

    def to_wide_csv(self) -> str:
        lines = [f"# config={self.config_hash} seed={self.seed}"]
        lines.append("budget," + ",".join(self.methods) + ",seed,config_hash")
        for b in self.budgets:
            vals = ",".join(repr(self.values[(b, m)]) for m in self.methods)
            lines.append(f"{b},{vals},{self.seed},{self.config_hash}")
        return "\n".join(lines) + "\n"

    def to_long_csv(self) -> str:
        lines = [f"# config={self.config_hash} seed={self.seed}"]
        lines.append("kind,budget,method,value,seed,config_hash")
        for b in self.budgets:
            for m in self.methods:
                lines.append(
                    f"transfer,{b},{m},{self.values[(b, m)]!r},{self.seed},{self.config_hash}"
                )
        return "\n".join(lines) + "\n"


def transfer_report(
    models: dict[str, SetFunction],
    target,
    pool,
    budgets,
    rng: np.random.Generator,
    random_repeats: int = 10,
    seed: int | None = None,
    config_hash: str | None = None,
) -> TransferReport:
    """Normalized target value of each method's greedy summary per budget,
    plus a mean-of-random baseline and the (identically 1) target-greedy row."""
    fn = ensure_setfn(target)
    pool = sorted(int(v) for v in pool)
    budgets = [int(b) for b in budgets]
    methods = list(models) + ["random", "target-greedy"]
    values: dict[tuple[int, str], float] = {}
    for budget in budgets:
        reference = greedy_max(fn, pool, budget, lazy=True).value
        for name, model_fn in models.items():
            summary = greedy_max(model_fn, pool, budget, lazy=True).selected
            values[(budget, name)] = normalized_fl_eval(
                fn, summary, budget, reference_value=reference
            )
        rand_vals = []
        for _ in range(int(random_repeats)):
            pick = rng.choice(pool, size=budget, replace=False)
            rand_vals.append(
                normalized_fl_eval(fn, tuple(pick), budget, reference_value=reference)
            )
        values[(budget, "random")] = float(np.mean(rand_vals))
        values[(budget, "target-greedy")] = 1.0
    return TransferReport(budgets, methods, values, seed=seed, config_hash=config_hash)


# ---------------------------------------------------------------------------
# linear probe


def linear_probe(
    train: GroundSet,
    test: GroundSet,
    l2: float = 1e-4,
    max_iters: int = 5000,
    tol: float = 1e-6,
) -> float:
    """Test accuracy of a multinomial logistic probe fit on the train subset.

    Full-batch gradient descent from zero weights with a Lipschitz step
    size, stopping at max_iters or gradient norm < tol; deterministic.  A
    single-class training set yields the constant predictor.
    """
    if train.labels is None or test.labels is None:
        raise ValueError("probe needs labels on both sides")
    classes = np.unique(train.labels)
    Xb = np.hstack([train.embeddings, np.ones((train.n, 1))])
    Xt = np.hstack([test.embeddings, np.ones((test.n, 1))])
    C = classes.size
    y = np.searchsorted(classes, train.labels)
    Y = np.zeros((train.n, C))
    Y[np.arange(train.n), y] = 1.0

    W = np.zeros((C, Xb.shape[1]))
    # softmax cross-entropy Hessian is bounded by 0.5 * X^T X / n (+ ridge)
    lipschitz = 0.5 * float(np.linalg.norm(Xb, 2)) ** 2 / train.n + l2
    lr = 1.0 / lipschitz
    mask = np.ones_like(W)
    mask[:, -1] = 0.0  # bias column unpenalized
    for _ in range(int(max_iters)):
        logits = Xb @ W.T
        logits -= logits.max(axis=1, keepdims=True)
        P = np.exp(logits)
        P /= P.sum(axis=1, keepdims=True)
        G = (P - Y).T @ Xb / train.n + l2 * W * mask
        if float(np.sqrt(np.sum(G * G))) < tol:
            break
        W -= lr * G
    pred = classes[np.argmax(Xt @ W.T, axis=1)]
    return float(np.mean(pred == test.labels))


# ---------------------------------------------------------------------------
# experimental design


@dataclass
class ProbeReport:
    kind: str  # "offline" | "online"
    budgets: list[int]
    methods: list[str]
    accuracy: dict[tuple[int, str], float]
    selections: dict[tuple[int, str], tuple[int, ...]] = field(default_factory=dict)
    seed: int | None = None
    config_hash: str | None = None

    def to_wide_csv(self) -> str:
        lines = [f"# config={self.config_hash} seed={self.seed}"]
        lines.append("budget," + ",".join(self.methods) + ",seed,config_hash")
        for b in self.budgets:
            vals = ",".join(repr(self.accuracy[(b, m)]) for m in self.methods)
            lines.append(f"{b},{vals},{self.seed},{self.config_hash}")
        return "\n".join(lines) + "\n"

    def to_long_csv(self) -> str:
        lines = [f"# config={self.config_hash} seed={self.seed}"]
        lines.append("kind,budget,method,value,seed,config_hash")
        for b in self.budgets:
            for m in self.methods:
                lines.append(
                    f"{self.kind},{b},{m},{self.accuracy[(b, m)]!r},{self.seed},{self.config_hash}"
                )
        return "\n".join(lines) + "\n"


def _probe_on(pool: GroundSet, selected, test: GroundSet, probe_kw) -> float:
    return linear_probe(pool.subset(selected), test, **probe_kw)


def offline_design_eval(
    model: DspnModel,
    pool: GroundSet,
    test: GroundSet,
    budgets,
    rng: np.random.Generator,
    gamma: float = 0.0,
    probe_kw: dict | None = None,
    train_groundset: GroundSet | None = None,
    seed: int | None = None,
    config_hash: str | None = None,
) -> ProbeReport:
    """Full-pool selection then probe, per budget and method.

    Methods: greedy on the learned model, greedy on the target built over the
    deduplicated pool (the cheating baseline that gets to remove duplicates),
    farthest-point traversal, and uniform random.  Selection never sees
    labels.
    """
    probe_kw = probe_kw or {}
    if train_groundset is not None:
        assert_disjoint(test, train_groundset)
    unlabeled = pool.unlabeled()
    budgets = [int(b) for b in budgets]
    methods = ["dspn", "target-fl-dedup", "k-centers", "random"]
    model_fn = DspnFunction(model, unlabeled)

    keep = dedup_indices(unlabeled)
    sub = unlabeled.subset(keep)
    g = gamma if gamma > 0 else median_heuristic_gamma(sub.embeddings)
    target_dedup = FacilityLocation(rbf_similarity(sub.embeddings, g))

    accuracy: dict[tuple[int, str], float] = {}
    selections: dict[tuple[int, str], tuple[int, ...]] = {}
    for budget in budgets:
        picks: dict[str, tuple[int, ...]] = {}
        picks["dspn"] = greedy_max(model_fn, range(pool.n), budget, lazy=True).selected
        local = greedy_max(target_dedup, range(sub.n), budget, lazy=True).selected
        picks["target-fl-dedup"] = tuple(int(keep[i]) for i in local)
        picks["k-centers"] = tuple(k_centers(unlabeled.embeddings, budget, rng))
        picks["random"] = tuple(int(v) for v in rng.choice(pool.n, size=budget, replace=False))
        for name, sel in picks.items():
            accuracy[(budget, name)] = _probe_on(pool, sel, test, probe_kw)
            selections[(budget, name)] = sel
    return ProbeReport(
        "offline", budgets, methods, accuracy, selections, seed=seed, config_hash=config_hash
    )


def class_incremental_stream(pool: GroundSet, rng: np.random.Generator) -> np.ndarray:
    """Stream order that presents classes contiguously (non-iid); class order
    and within-class order are randomized by rng."""
    if pool.labels is None:
        raise ValueError("class-incremental ordering needs labels")
    order = []
    for c in rng.permutation(pool.classes()):
        members = pool.class_members(int(c))
        order.extend(int(v) for v in rng.permutation(members))
    return np.asarray(order, dtype=np.int64)


def online_design_eval(
    model: DspnModel,
    pool: GroundSet,
    test: GroundSet,
    budgets,
    rng: np.random.Generator,
    gamma: float = 0.0,
    stream_eps: float = 0.05,
    probe_kw: dict | None = None,
    train_groundset: GroundSet | None = None,
    seed: int | None = None,
    config_hash: str | None = None,
) -> ProbeReport:
    """Single-pass selection over a class-incremental stream, then probe.

    Methods: streaming maximization of the learned model, reservoir sampling,
    and two offline upper bounds (greedy on the model, greedy on the
    deduplicated target).
    """
    probe_kw = probe_kw or {}
    if train_groundset is not None:
        assert_disjoint(test, train_groundset)
    unlabeled = pool.unlabeled()
    stream = class_incremental_stream(pool, rng)
    budgets = [int(b) for b in budgets]
    methods = ["dspn-online", "reservoir", "dspn-offline", "target-fl-offline"]
    model_fn = DspnFunction(model, unlabeled)

    keep = dedup_indices(unlabeled)
    sub = unlabeled.subset(keep)
    g = gamma if gamma > 0 else median_heuristic_gamma(sub.embeddings)
    target_dedup = FacilityLocation(rbf_similarity(sub.embeddings, g))

    accuracy: dict[tuple[int, str], float] = {}
    selections: dict[tuple[int, str], tuple[int, ...]] = {}
    for budget in budgets:
        picks: dict[str, tuple[int, ...]] = {}
        picks["dspn-online"] = tuple(streaming_max(model_fn, stream, budget, eps=stream_eps))
        picks["reservoir"] = tuple(sorted(reservoir_sample(stream, budget, rng)))
        picks["dspn-offline"] = greedy_max(model_fn, range(pool.n), budget, lazy=True).selected
        local = greedy_max(target_dedup, range(sub.n), budget, lazy=True).selected
        picks["target-fl-offline"] = tuple(int(keep[i]) for i in local)
        for name, sel in picks.items():
            accuracy[(budget, name)] = _probe_on(pool, sel, test, probe_kw)
            selections[(budget, name)] = sel
    return ProbeReport(
        "online", budgets, methods, accuracy, selections, seed=seed, config_hash=config_hash
    )


# ---------------------------------------------------------------------------
# feature rankings


@dataclass
class FeatureRankingReport:
    features: list[int]
    rankings: dict[int, np.ndarray]  # feature -> items ordered by value, descending
    values: dict[int, np.ndarray]
    top_k: int

    def top(self, j: int) -> np.ndarray:
        return self.rankings[j][: self.top_k]

    def bottom(self, j: int) -> np.ndarray:
        return self.rankings[j][-self.top_k :]

    def to_text(self, labels: np.ndarray | None = None) -> str:
        lines = []
        for j in self.features:
            lines.append(f"feature {j}:")
            for tag, idx in (("top", self.top(j)), ("bottom", self.bottom(j))):
                shown = []
                for v in idx:
                    lab = "" if labels is None else f"/c{int(labels[int(v)])}"
                    shown.append(f"{int(v)}{lab}")
                lines.append(f"  {tag}: " + " ".join(shown))
        return "\n".join(lines) + "\n"


def feature_ranking_report(
    model: DspnModel,
    groundset: GroundSet,
    feature_indices,
    top_k: int = 10,
) -> FeatureRankingReport:
    """Rank all items by each chosen pillar output dimension, descending,
    ties broken by item index (stable order)."""
    P, _ = _pillar_fwd(model.pillar, groundset.embeddings)
    features = [int(j) for j in feature_indices]
    for j in features:
        if not 0 <= j < model.d:
            raise ValueError(f"feature index {j} out of range [0, {model.d})")
    rankings = {}
    values = {}
    for j in features:
        col = P[:, j]
        order = np.argsort(-col, kind="stable")
        rankings[j] = order
        values[j] = col
    return FeatureRankingReport(features, rankings, values, top_k=int(top_k))
