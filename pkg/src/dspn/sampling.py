"""Construction of the training set of contrasted (E, M) pairs.

Two passive styles draw heterogeneous-vs-homogeneous pairs from the raw
data (random-vs-single-class, and cluster-representatives-vs-clumps inside
a random class subset); two active sources optimize the model being
learned (max and min sets) or the target itself.  Pairs are assembled
along a configurable pairing graph, each with element-paired augmented
copies and a cached oracle score.

Everything is driven by an explicit numpy Generator: dataset construction
is a pure function of (ground set, config, seed).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .groundset import GroundSet, as_items, ensure_setfn, oracle_score
from .model import DspnFunction, DspnModel
from .optimize import greedy_max, submod_min_heuristic

PROVENANCES = (
    "style1-hom",
    "style1-het",
    "style2-hom",
    "style2-het",
    "dspn-max",
    "dspn-min",
    "target-max",
)

# categories contrasted against each other; the het-vs-hom style edges are
# realized by the matched-at-birth passive pairs and are not re-drawn here.
# Pairing the learner's own argmax sets against target-greedy and random
# heterogeneous sets is what deflates overvalued argmaxes: a hinge on the
# preference ratio can be satisfied by inflating f on the favored side, but
# not when the partner is a set the target scores higher.
DEFAULT_EDGES = (
    ("dspn-max", "style1-hom"),
    ("dspn-max", "style2-hom"),
    ("dspn-max", "dspn-min"),
    ("dspn-max", "style1-het"),
    ("target-max", "dspn-max"),
    ("target-max", "style1-hom"),
    ("target-max", "dspn-min"),
)


@dataclass(frozen=True)
class SampledSet:
    items: tuple[int, ...]
    provenance: str
    class_scope: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")
        object.__setattr__(self, "items", as_items(self.items))

    def __len__(self):
        return len(self.items)


@dataclass
class Pair:
    E: SampledSet
    M: SampledSet
    E_aug: tuple[int, ...]
    M_aug: tuple[int, ...]
    delta: float


@dataclass
class PairDataset:
    """Pairs plus the working ground set they index into.

    The working ground set extends the base one with the augmented
    (jittered) rows; indices below n_base refer to original items.
    """

    pairs: list[Pair]
    groundset: GroundSet
    n_base: int
    seed: int | None = None
    config_hash: str | None = None

    def __len__(self):
        return len(self.pairs)


@dataclass
class SamplerConfig:
    k_max: int = 20
    k_min: int = 2
    n_style1: int = 40
    n_style2: int = 40
    n_active_budgets: int = 2
    n_class_sets: int = 4
    n_min_sets: int = 4
    n_target_sets: int = 2
    active_fanout: int = 3
    pairs_per_edge: int = 40
    refresh_period: int = 15
    aug_sigma: float = 0.01
    use_target_feedback: bool = True
    kmeans_iters: int = 50
    chain_stride: int = 0  # 0 disables nested prefix pairs
    chain_alternatives: int = 0
    accumulate_active: bool = True
    active_pool_cap: int = 360
    edges: tuple[tuple[str, str], ...] = DEFAULT_EDGES

    def __post_init__(self):
        if self.k_max < 2:
            raise ValueError("k_max must be >= 2")
        if not 1 <= self.k_min <= self.k_max:
            raise ValueError("need 1 <= k_min <= k_max")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")
        if self.aug_sigma < 0:
            raise ValueError("aug_sigma must be >= 0")


# ---------------------------------------------------------------------------
# clustering


def kmeans(points: np.ndarray, k: int, max_iters: int = 100, rng: np.random.Generator | None = None):
    """Lloyd's iterations from k distinct random seed points.

    Runs until the assignment stops changing or max_iters; empty clusters are
    reseeded to the point farthest from its currently assigned center, which
    keeps the quantization objective non-increasing across assignment steps.
    Returns (centers (k, d), assignment (m,)).
    """
    pts = np.asarray(points, dtype=np.float64)
    m = pts.shape[0]
    k = int(k)
    if k > m:
        raise ValueError(f"k={k} exceeds number of points {m}")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    centers = pts[np.sort(rng.choice(m, size=k, replace=False))].copy()
    assignment = np.full(m, -1, dtype=np.int64)
    for _ in range(int(max_iters)):
        d2 = (
            np.sum(pts * pts, axis=1)[:, None]
            - 2.0 * pts @ centers.T
            + np.sum(centers * centers, axis=1)[None, :]
        )
        new_assignment = np.argmin(d2, axis=1)
        if np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            members = assignment == j
            if members.any():
                centers[j] = pts[members].mean(axis=0)
            else:
                dist_own = d2[np.arange(m), assignment]
                centers[j] = pts[int(np.argmax(dist_own))]
    return centers, assignment


# ---------------------------------------------------------------------------
# passive sampling


def sample_style1(groundset: GroundSet, K: int, rng: np.random.Generator):
    """Heterogeneous-vs-homogeneous draw: E uniform over the universe, M
    uniform inside one uniformly chosen class; both of size K (shrunk only
    when the chosen class is smaller)."""
    if groundset.labels is None:
        raise ValueError("style-1 sampling needs class labels")
    classes = groundset.classes()
    c = int(rng.choice(classes))
    members = groundset.class_members(c)
    K_eff = min(int(K), members.size, groundset.n)
    M_items = rng.choice(members, size=K_eff, replace=False)
    E_items = rng.choice(groundset.n, size=K_eff, replace=False)
    E = SampledSet(tuple(E_items), "style1-het")
    M = SampledSet(tuple(M_items), "style1-hom", class_scope=(c,))
    return E, M


def sample_style2(groundset: GroundSet, K: int, rng: np.random.Generator, kmeans_iters: int = 50):
    """Interclass draw inside a random class subset.

    A class count C' is drawn uniformly from [1, C] and the universe is
    restricted to C' random classes.  E holds the nearest-to-mean point of
    each k-means cluster of the restriction (k = min(K, |restriction|)); M
    clumps one random seed per class with its floor(K/C') - 1 nearest
    same-class neighbors.
    """
    if groundset.labels is None:
        raise ValueError("style-2 sampling needs class labels")
    classes = groundset.classes()
    C = classes.size
    C_prime = int(rng.integers(1, C + 1))
    chosen = np.sort(rng.choice(classes, size=C_prime, replace=False))
    pool = np.flatnonzero(np.isin(groundset.labels, chosen))
    emb = groundset.embeddings

    k = min(int(K), pool.size)
    centers, assignment = kmeans(emb[pool], k, max_iters=kmeans_iters, rng=rng)
    e_items = []
    for j in range(k):
        members = pool[assignment == j]
        if members.size == 0:
            continue
        d2 = np.sum((emb[members] - centers[j]) ** 2, axis=1)
        e_items.append(int(members[np.argmin(d2)]))
    E = SampledSet(tuple(e_items), "style2-het", class_scope=tuple(int(c) for c in chosen))

    clump = max(1, int(K) // C_prime)
    use_classes = chosen[: min(C_prime, int(K))]
    m_items: list[int] = []
    for c in use_classes:
        members = groundset.class_members(int(c))
        seed = int(rng.choice(members))
        want = clump - 1
        others = members[members != seed]
        if want > others.size:
            warnings.warn(
                f"class {int(c)} has only {members.size} members for a clump of {clump}",
                stacklevel=2,
            )
            want = others.size
        if want > 0:
            d2 = np.sum((emb[others] - emb[seed]) ** 2, axis=1)
            order = np.argsort(d2, kind="stable")
            m_items.extend(int(v) for v in others[order[:want]])
        m_items.append(seed)
    M = SampledSet(tuple(m_items), "style2-hom", class_scope=tuple(int(c) for c in chosen))
    return E, M


# ---------------------------------------------------------------------------
# active sampling


def dspn_feedback_chains(
    model: DspnModel,
    groundset: GroundSet,
    budget: int,
    rng: np.random.Generator,
    n_class_sets: int = 4,
) -> list[list[int]]:
    """Greedy chains (selection order) of the current model: one over the
    full universe, plus chains restricted to randomly chosen classes."""
    fn = DspnFunction(model, groundset)
    budget = int(budget)
    if budget > groundset.n:
        raise ValueError("budget exceeds ground set size")
    chains = [list(greedy_max(fn, range(groundset.n), budget, lazy=True).chain)]
    if groundset.labels is not None and n_class_sets > 0:
        classes = groundset.classes()
        picks = rng.choice(classes, size=min(n_class_sets, classes.size), replace=False)
        for c in np.sort(picks):
            members = groundset.class_members(int(c))
            class_budget = min(budget, members.size)
            if class_budget < 1:
                continue
            chains.append(list(greedy_max(fn, members, class_budget, lazy=True).chain))
    return chains


def dspn_feedback_sets(
    model: DspnModel,
    groundset: GroundSet,
    budget: int,
    rng: np.random.Generator,
    n_class_sets: int = 4,
    n_min_sets: int = 2,
) -> list[SampledSet]:
    """Sets the current model itself values extremely.

    Max sets come from greedy maximization over the full universe and over
    randomly chosen class restrictions; min-style homogeneous sets from the
    size-constrained minimization heuristic.  Every returned set has exactly
    `budget` items.
    """
    fn = DspnFunction(model, groundset)
    out: list[SampledSet] = []
    for chain in dspn_feedback_chains(model, groundset, budget, rng, n_class_sets):
        scope = None
        if groundset.labels is not None:
            labs = {int(groundset.labels[v]) for v in chain}
            scope = tuple(sorted(labs)) if len(labs) == 1 else None
        out.append(SampledSet(tuple(chain), "dspn-max", class_scope=scope))
    for _ in range(int(n_min_sets)):
        items = submod_min_heuristic(fn, range(groundset.n), budget, rng)
        out.append(SampledSet(tuple(items), "dspn-min"))
    return out


def chain_contrast_pairs(
    chain: list[int],
    groundset: GroundSet,
    rng: np.random.Generator,
    stride: int = 1,
    n_alternatives: int = 6,
) -> list[tuple[SampledSet, SampledSet]]:
    """Supervision along one greedy chain of the learner.

    Emits nested pairs (prefix of length k vs length k-stride), which align
    the learner's marginal gains along its own trajectory with the target's,
    plus same-size contrasts (prefix + greedy pick vs prefix + random
    alternative), which grade the individual greedy decisions.
    """
    pairs: list[tuple[SampledSet, SampledSet]] = []
    L = len(chain)
    if stride > 0:
        for k in range(stride, L + 1, stride):
            if k - stride < 1:
                continue
            big = SampledSet(tuple(chain[:k]), "dspn-max")
            small = SampledSet(tuple(chain[: k - stride]), "dspn-max")
            pairs.append((big, small))
    if L >= 2 and n_alternatives > 0:
        outside = np.asarray(sorted(set(range(groundset.n)) - set(chain)), dtype=np.int64)
        if outside.size:
            for _ in range(int(n_alternatives)):
                k = int(rng.integers(1, L))
                prefix = chain[:k]
                alt = int(rng.choice(outside))
                picked = SampledSet(tuple(prefix) + (chain[k],), "dspn-max")
                swapped = SampledSet(tuple(prefix) + (alt,), "dspn-max")
                pairs.append((picked, swapped))
    return pairs


def target_feedback_sets(target, groundset: GroundSet, budget: int) -> list[SampledSet]:
    """Greedy chain on the target oracle itself (usable only when the target
    is optimizable); the chain prefix of length `budget` is returned."""
    fn = ensure_setfn(target)
    trace = greedy_max(fn, range(groundset.n), int(budget), lazy=True)
    return [SampledSet(trace.selected, "target-max")]


# ---------------------------------------------------------------------------
# augmentation and pairing


def augment(groundset: GroundSet, items, noise_sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Element-paired jittered copies of the given items' embeddings:
    row i is items[i]'s embedding plus isotropic Gaussian noise."""
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    idx = [int(v) for v in items]
    groundset.check_indices(idx)
    rows = groundset.embeddings[idx].copy()
    if noise_sigma > 0:
        rows += rng.normal(0.0, noise_sigma, size=rows.shape)
    return rows


class _AugmentBuffer:
    """Collects augmented rows and assigns them indices past the base items.

    With sigma = 0 the "augmented" copy of an item is the item itself (exact
    copies carry no new information), which makes the identity cases of the
    regularizers hold exactly.
    """

    def __init__(self, groundset: GroundSet, sigma: float, rng: np.random.Generator):
        self.base = groundset
        self.sigma = float(sigma)
        self.rng = rng
        self.rows: list[np.ndarray] = []

    def take(self, items: tuple[int, ...]) -> tuple[int, ...]:
        if self.sigma == 0.0:
            return tuple(items)
        rows = augment(self.base, items, self.sigma, self.rng)
        start = self.base.n + len(self.rows)
        self.rows.extend(rows)
        return tuple(range(start, start + len(items)))

    def extended_groundset(self) -> GroundSet:
        if not self.rows:
            return self.base
        emb = np.vstack([self.base.embeddings, np.asarray(self.rows)])
        labels = None
        if self.base.labels is not None:
            labels = np.concatenate(
                [self.base.labels, np.full(len(self.rows), -1, dtype=np.int64)]
            )
        return GroundSet(emb, labels)


def _draw_pairs_for_edge(e_sets, m_sets, count, rng):
    total = len(e_sets) * len(m_sets)
    if total == 0:
        return []
    count = min(int(count), total)
    flat = rng.choice(total, size=count, replace=False)
    return [(e_sets[int(i) // len(m_sets)], m_sets[int(i) % len(m_sets)]) for i in np.sort(flat)]


class PairBuilder:
    """Incremental pair construction over one growing augmentation buffer.

    The trainer keeps a single builder alive across active refreshes so that
    pairs accumulated from earlier refreshes stay valid (their augmented
    indices all live in the same extended ground set).
    """

    def __init__(
        self,
        groundset: GroundSet,
        target,
        config: SamplerConfig,
        rng: np.random.Generator,
        seed: int | None = None,
        config_hash: str | None = None,
    ):
        self.base = groundset
        self.fn = ensure_setfn(target)
        self.config = config
        self.rng = rng
        self.seed = seed
        self.config_hash = config_hash
        sigma = config.aug_sigma * float(groundset.embeddings.std())
        self.buffer = _AugmentBuffer(groundset, sigma, rng)
        self.pairs: list[Pair] = []

    def add_contrast(self, e_set: SampledSet, m_set: SampledSet) -> Pair:
        e_aug = self.buffer.take(e_set.items)
        m_aug = self.buffer.take(m_set.items)
        delta = oracle_score(self.fn, e_set.items, m_set.items)
        pair = Pair(e_set, m_set, e_aug, m_aug, delta)
        self.pairs.append(pair)
        return pair

    def add_matched(self, matched) -> None:
        for e_set, m_set in matched:
            self.add_contrast(e_set, m_set)

    def add_edges(self, by_category: dict[str, list[SampledSet]]) -> None:
        """Contrast categories along the configured pairing-graph edges."""
        for e_cat, m_cat in self.config.edges:
            e_sets = by_category.get(e_cat, [])
            m_sets = by_category.get(m_cat, [])
            count = self.config.active_fanout * max(len(e_sets), 1)
            self.add_matched(_draw_pairs_for_edge(e_sets, m_sets, count, self.rng))

    def evict_oldest(self, keep: int) -> None:
        if keep >= 0 and len(self.pairs) > keep:
            self.pairs = self.pairs[len(self.pairs) - keep :]

    def dataset(self) -> PairDataset:
        if not self.pairs:
            raise ValueError("no set sources available to build pairs")
        return PairDataset(
            pairs=list(self.pairs),
            groundset=self.buffer.extended_groundset(),
            n_base=self.base.n,
            seed=self.seed,
            config_hash=self.config_hash,
        )


def build_pairs(
    passive: dict[str, list[tuple[SampledSet, SampledSet]]],
    active: dict[str, list[SampledSet]],
    target,
    groundset: GroundSet,
    config: SamplerConfig,
    rng: np.random.Generator,
    matched_active: list[tuple[SampledSet, SampledSet]] = (),
    seed: int | None = None,
    config_hash: str | None = None,
) -> PairDataset:
    """Assemble the training pairs along the pairing graph, in one shot.

    Passive style pairs and pre-matched active contrasts keep their partners;
    remaining active sets are contrasted against partners drawn from the
    eligible categories.  The oracle score of every pair is computed once and
    cached; negative scores (the nominally homogeneous side turned out more
    valuable) are retained unchanged, the sign of the score carries that
    information.
    """
    builder = PairBuilder(groundset, target, config, rng, seed=seed, config_hash=config_hash)
    by_category = _collect_categories(builder, passive, active, matched_active)
    builder.add_edges(by_category)
    return builder.dataset()


def _collect_categories(builder: PairBuilder, passive, active, matched_active=()):
    """Feed matched pairs into the builder, return sets grouped by provenance."""
    by_category: dict[str, list[SampledSet]] = {p: [] for p in PROVENANCES}
    matched: list[tuple[SampledSet, SampledSet]] = []
    for style_pairs in passive.values():
        for e_set, m_set in style_pairs:
            matched.append((e_set, m_set))
            by_category[e_set.provenance].append(e_set)
            by_category[m_set.provenance].append(m_set)
    matched.extend(matched_active)
    for prov, sets in active.items():
        for s in sets:
            if s.provenance != prov:
                raise ValueError(f"set tagged {s.provenance!r} listed under {prov!r}")
            by_category[prov].append(s)
    builder.add_matched(matched)
    return by_category


def sample_passive(groundset: GroundSet, config: SamplerConfig, rng: np.random.Generator):
    """All passive style pairs for one dataset build; set sizes are drawn
    uniformly from [k_min, k_max] so the model sees varied cardinalities."""
    style1 = []
    for _ in range(config.n_style1):
        K = int(rng.integers(config.k_min, config.k_max + 1))
        style1.append(sample_style1(groundset, K, rng))
    style2 = []
    for _ in range(config.n_style2):
        K = int(rng.integers(config.k_min, config.k_max + 1))
        style2.append(sample_style2(groundset, K, rng, kmeans_iters=config.kmeans_iters))
    return {"style1": style1, "style2": style2}


def sample_active(
    model: DspnModel,
    groundset: GroundSet,
    target,
    config: SamplerConfig,
    rng: np.random.Generator,
):
    """Active sets for one refresh, against the current model snapshot.

    Returns (sets by provenance, pre-matched chain-contrast pairs).  The
    chain pairs supervise the learner's own greedy trajectory: nested
    prefixes plus graded single-swap contrasts.
    """
    active: dict[str, list[SampledSet]] = {"dspn-max": [], "dspn-min": [], "target-max": []}
    matched: list[tuple[SampledSet, SampledSet]] = []
    fn = DspnFunction(model, groundset)
    for _ in range(config.n_active_budgets):
        budget = int(rng.integers(config.k_min, config.k_max + 1))
        budget = min(budget, groundset.n)
        chains = dspn_feedback_chains(
            model, groundset, budget, rng, n_class_sets=config.n_class_sets
        )
        for chain in chains:
            active["dspn-max"].append(SampledSet(tuple(chain), "dspn-max"))
            matched.extend(
                chain_contrast_pairs(
                    chain,
                    groundset,
                    rng,
                    stride=config.chain_stride,
                    n_alternatives=config.chain_alternatives,
                )
            )
        n_min = max(1, config.n_min_sets // max(1, config.n_active_budgets))
        for _ in range(n_min):
            items = submod_min_heuristic(fn, range(groundset.n), budget, rng)
            active["dspn-min"].append(SampledSet(tuple(items), "dspn-min"))
        if config.use_target_feedback and target is not None:
            for _ in range(max(1, config.n_target_sets // max(1, config.n_active_budgets))):
                active["target-max"].extend(target_feedback_sets(target, groundset, budget))
    return active, matched


# ---------------------------------------------------------------------------
# serialization: one pair per line, E|M|E'|M' as comma-separated indices, then
# the cached oracle score


def save_pairs(dataset: PairDataset, path) -> None:
    lines = [
        "# dspn-pairs v1",
        f"# seed={dataset.seed} config={dataset.config_hash} "
        f"n_base={dataset.n_base} n_total={dataset.groundset.n}",
    ]
    for p in dataset.pairs:
        fields = [
            ",".join(str(v) for v in p.E.items),
            ",".join(str(v) for v in p.M.items),
            ",".join(str(v) for v in p.E_aug),
            ",".join(str(v) for v in p.M_aug),
            repr(p.delta),
        ]
        lines.append("|".join(fields))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pairs(path, groundset: GroundSet) -> PairDataset:
    """Re-attach a saved pair list to its (extended) ground set.  Provenance
    tags are not persisted; loaded sets are tagged by position."""
    pairs: list[Pair] = []
    n_base = groundset.n
    seed = None
    config_hash = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("seed=") and tok[5:] != "None":
                        seed = int(tok[5:])
                    if tok.startswith("config=") and tok[7:] != "None":
                        config_hash = tok[7:]
                    if tok.startswith("n_base="):
                        n_base = int(tok[7:])
                continue
            parts = line.split("|")
            if len(parts) != 5:
                raise ValueError(f"malformed pair line: {line!r}")
            e, m, ea, ma = (tuple(int(v) for v in part.split(",")) for part in parts[:4])
            delta = float(parts[4])
            groundset.check_indices(e + m + ea + ma)
            pairs.append(
                Pair(
                    SampledSet(e, "style1-het"),
                    SampledSet(m, "style1-hom"),
                    ea,
                    ma,
                    delta,
                )
            )
    return PairDataset(pairs, groundset, n_base, seed=seed, config_hash=config_hash)
