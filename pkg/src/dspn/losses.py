"""Graded pairwise-comparison losses with closed-form gradients.

The core family scores a learner preference delta = f(E) - f(M) against an
oracle preference Delta.  It is ratio-based: the penalty depends on
delta / Delta, so strong oracle preferences demand proportionally strong
learner preferences.  A tanh gate hands near-indifferent oracle scores
(Delta ~ 0) over to an |delta| penalty.  Squared-error and hinge baselines,
the augmentation/redundancy regularizers, the per-pair total loss, and the
empirical risk live here as well.

All scalar losses return both the value and the derivative with respect to
delta; sgn(0) is taken as 0 throughout, and the |delta| branch uses the 0
subgradient at the kink.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .groundset import GroundSet, as_items, ensure_setfn
from .model import (
    DspnGradients,
    DspnModel,
    _agg_fwd,
    _pillar_bwd,
    _pillar_fwd,
    _roof_bwd,
    _roof_fwd,
)


@dataclass
class PeripteralHyper:
    """Loss hyperparameters: gate rate, anti-smoothness, margin, unit scale,
    denominator guard, and regularizer coefficients."""

    alpha: float = 1e-5
    beta: float = 0.5
    kappa: float = 1.0
    tau: float = 10.0
    epsilon: float = 1e-15
    lam1: float = 0.25
    lam2: float = 0.01
    lam3: float = 0.0
    lam4: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.kappa <= 0:
            raise ValueError("kappa must be > 0")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        for name in ("lam1", "lam2", "lam3", "lam4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class LossValue:
    value: float
    d_delta: float


def _softplus(x: float) -> float:
    # ln(1 + e^x) without overflow at large |x|
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def _sigmoid(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _sgn(x: float) -> float:
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


def mother_loss(Delta: float, delta: float) -> LossValue:
    """|Delta| * ln(1 + exp(1 - delta/Delta)): a hinge-like penalty on the
    preference ratio, with unit margin and slope saturating at -sgn(Delta)."""
    Delta = float(Delta)
    delta = float(delta)
    if Delta == 0.0:
        raise ValueError("Delta must be nonzero (use gated_loss for Delta = 0)")
    arg = 1.0 - delta / Delta
    value = abs(Delta) * _softplus(arg)
    d_delta = -_sgn(Delta) * _sigmoid(arg)
    return LossValue(value, d_delta)


def param_loss(Delta: float, delta: float, h: PeripteralHyper) -> LossValue:
    """Margin/scale/smoothness-parameterized form of the ratio penalty.

    Reduces to mother_loss at beta = tau = kappa = 1, epsilon = 0.  The
    derivative magnitude stays below 1 regardless of the margin and beta.
    """
    Delta = float(Delta)
    delta = float(delta)
    denom = h.kappa * Delta + h.epsilon * _sgn(Delta)
    if denom == 0.0:
        raise ValueError("degenerate denominator: Delta = 0 with epsilon = 0")
    arg = h.beta * (h.tau - delta / denom)
    value = (abs(denom) / h.beta) * _softplus(arg)
    d_delta = -_sgn(Delta) * _sigmoid(arg)
    return LossValue(value, d_delta)


def _gated_parts(Delta: float, delta: float, h: PeripteralHyper):
    """(value, d_delta, gate); the gate saturates to 1 as Delta -> 0."""
    Delta = float(Delta)
    delta = float(delta)
    if Delta == 0.0:
        gate = 1.0
    else:
        gate = math.tanh(h.alpha / abs(h.kappa * Delta))
    value = gate * abs(delta)
    d_delta = gate * _sgn(delta)
    if gate < 1.0:
        base = param_loss(Delta, delta, h)
        value += (1.0 - gate) * base.value
        d_delta += (1.0 - gate) * base.d_delta
    return value, d_delta, gate


def gated_loss(Delta: float, delta: float, h: PeripteralHyper) -> LossValue:
    """Full comparison loss: tanh(alpha/|kappa*Delta|) gates between an
    |delta| indifference penalty and the parameterized ratio penalty.
    Handles Delta = 0 (pure indifference)."""
    value, d_delta, _ = _gated_parts(Delta, delta, h)
    return LossValue(value, d_delta)


def regression_loss(Delta: float, delta: float) -> LossValue:
    """(delta - Delta)^2 baseline."""
    diff = float(delta) - float(Delta)
    return LossValue(diff * diff, 2.0 * diff)


def margin_loss(Delta: float, delta: float) -> LossValue:
    """max(Delta - delta, 0) baseline; subgradient 0 at the kink."""
    gap = float(Delta) - float(delta)
    if gap > 0.0:
        return LossValue(gap, -1.0)
    return LossValue(0.0, 0.0)


# ---------------------------------------------------------------------------
# regularizers (evaluator form; the fused engine below recomputes these
# against a model when gradients are needed)


def _paired_lists(E, Eprime):
    E = [int(v) for v in E]
    Ep = [int(v) for v in Eprime]
    if len(E) != len(Ep):
        raise ValueError(f"paired sets must have equal size, got {len(E)} vs {len(Ep)}")
    if not E:
        raise ValueError("paired sets must be non-empty")
    return E, Ep


def aug_regularizer(f, E, Eprime, lam1: float, lam2: float) -> float:
    """lam1 (f(E) - f(E'))^2 + (lam2/|E|) sum_e (f(e) - f(e'))^2.

    E and E' are element-paired, same-size sequences (E' holds the augmented
    counterpart of each position in E).  Zero when E' = E.
    """
    E, Ep = _paired_lists(E, Eprime)
    fn = ensure_setfn(f)
    total = 0.0
    if lam1 != 0.0:
        diff = fn(E) - fn(Ep)
        total += lam1 * diff * diff
    if lam2 != 0.0:
        acc = 0.0
        for e, ep in zip(E, Ep):
            d = fn((e,)) - fn((ep,))
            acc += d * d
        total += lam2 / len(E) * acc
    return total


def redn_regularizer(f, E, Eprime, lam3: float, lam4: float) -> float:
    """lam3 (f(E|E')^2 + f(E'|E)^2) + (lam4/|E|) sum_e (f(e|e')^2 + f(e'|e)^2)
    with f(X|Y) = f(X u Y) - f(Y).  Zero when E' = E."""
    E, Ep = _paired_lists(E, Eprime)
    fn = ensure_setfn(f)
    total = 0.0
    if lam3 != 0.0:
        union = fn(E + Ep)
        g1 = union - fn(Ep)
        g2 = union - fn(E)
        total += lam3 * (g1 * g1 + g2 * g2)
    if lam4 != 0.0:
        acc = 0.0
        for e, ep in zip(E, Ep):
            if e == ep:
                continue
            both = fn((e, ep))
            g1 = both - fn((ep,))
            g2 = both - fn((e,))
            acc += g1 * g1 + g2 * g2
        total += lam4 / len(E) * acc
    return total


# ---------------------------------------------------------------------------
# fused per-pair loss + gradient engine


def _items_of(s) -> list[int]:
    items = getattr(s, "items", s)
    return [int(v) for v in items]


@dataclass
class PairLossResult:
    value: float
    grads: DspnGradients | None
    delta: float
    gate: float


def _singleton_capacity(model: DspnModel, groundset: GroundSet, ids: list[int]) -> np.ndarray:
    """Indicator per item: does the matroid admit the singleton {v}?"""
    matroid = model.matroid
    if matroid.variant == "free":
        return np.ones(len(ids))
    if matroid.variant == "uniform":
        return np.full(len(ids), 1.0 if matroid.k >= 1 else 0.0)
    block_of = matroid.block_index(groundset.n)
    limits = np.asarray(matroid.limits)
    return (limits[block_of[np.asarray(ids, dtype=np.int64)]] >= 1).astype(np.float64)


def pair_loss(
    model: DspnModel,
    groundset: GroundSet,
    pair,
    h: PeripteralHyper,
    kind: str = "peripteral",
    want_grads: bool = True,
) -> PairLossResult:
    """Loss (and gradients) for one (E, M, E', M') pair with a cached oracle
    score pair.delta.

    One pillar pass over the pair's items and one batched roof pass over all
    needed subsets keep the cost per pair at a handful of matrix products.
    """
    E = _items_of(pair.E)
    M = _items_of(pair.M)
    Ep = _items_of(pair.E_aug)
    Mp = _items_of(pair.M_aug)
    if len(E) != len(Ep) or len(M) != len(Mp):
        raise ValueError("augmented copies must match their source cardinality")
    Delta = float(pair.delta)
    if not math.isfinite(Delta):
        raise ValueError("cached oracle score must be finite")

    ids = sorted(set(E) | set(M) | set(Ep) | set(Mp))
    groundset.check_indices(ids)
    row = {v: i for i, v in enumerate(ids)}
    X = groundset.embeddings[ids]
    P, pcache = _pillar_fwd(model.pillar, X)

    # named sets evaluated through the aggregation stage
    set_specs: dict[str, tuple[int, ...]] = {
        "E": as_items(E),
        "M": as_items(M),
        "U": as_items(E + M),
        "Up": as_items(Ep + Mp),
    }
    if h.lam3 != 0.0:
        set_specs["EEp"] = as_items(E + Ep)
        set_specs["Ep"] = as_items(Ep)
        set_specs["MMp"] = as_items(M + Mp)
        set_specs["Mp"] = as_items(Mp)
    pair_specs: list[tuple[int, int]] = []
    if h.lam4 != 0.0:
        for e, ep in list(zip(E, Ep)) + list(zip(M, Mp)):
            if e != ep:
                pair_specs.append((e, ep))

    names = list(set_specs)
    set_rows = []
    set_masks = []
    z_rows = []
    for name in names:
        items = set_specs[name]
        rows = [row[v] for v in items]
        z, mask = _agg_fwd(model.matroid, P[rows], items)
        set_rows.append(rows)
        set_masks.append(mask)
        z_rows.append(z)

    cap = _singleton_capacity(model, groundset, ids)
    Zsingle = P * cap[:, None]

    pair_masks = []
    for e, ep in pair_specs:
        items = as_items((e, ep))
        rows = [row[v] for v in items]
        z, mask = _agg_fwd(model.matroid, P[rows], items)
        z_rows.append(z)
        pair_masks.append((rows, mask))

    n_sets = len(names)
    n_single = len(ids)
    Zall = np.concatenate(
        [np.stack(z_rows[:n_sets]) if n_sets else np.zeros((0, model.d)), Zsingle]
        + ([np.stack(z_rows[n_sets:])] if pair_specs else []),
        axis=0,
    )
    y, rcache = _roof_fwd(model.roof, Zall)
    setval = {name: float(y[i]) for i, name in enumerate(names)}
    single = y[n_sets : n_sets + n_single]
    pairval = y[n_sets + n_single :]

    f1 = {v: float(single[row[v]]) for v in ids}

    delta = setval["E"] - setval["M"]
    if kind == "peripteral":
        base_value, base_d, gate = _gated_parts(Delta, delta, h)
    elif kind == "regression":
        lv = regression_loss(Delta, delta)
        base_value, base_d, gate = lv.value, lv.d_delta, 0.0
    elif kind == "margin":
        lv = margin_loss(Delta, delta)
        base_value, base_d, gate = lv.value, lv.d_delta, 0.0
    else:
        raise ValueError(f"unknown loss kind {kind!r}")

    coeff = dict.fromkeys(names, 0.0)
    s_coeff = np.zeros(n_single)
    p_coeff = np.zeros(len(pair_specs))

    coeff["E"] += base_d
    coeff["M"] -= base_d
    value = base_value

    u_list = E + M
    up_list = Ep + Mp
    if h.lam1 != 0.0:
        diff = setval["U"] - setval["Up"]
        value += h.lam1 * diff * diff
        coeff["U"] += 2.0 * h.lam1 * diff
        coeff["Up"] -= 2.0 * h.lam1 * diff
    if h.lam2 != 0.0:
        scale = h.lam2 / len(u_list)
        acc = 0.0
        for e, ep in zip(u_list, up_list):
            d = f1[e] - f1[ep]
            acc += d * d
            s_coeff[row[e]] += 2.0 * scale * d
            s_coeff[row[ep]] -= 2.0 * scale * d
        value += scale * acc

    if h.lam3 != 0.0:
        for side, joined, augname in (("E", "EEp", "Ep"), ("M", "MMp", "Mp")):
            union = setval[joined]
            g1 = union - setval[augname]
            g2 = union - setval[side]
            value += h.lam3 * (g1 * g1 + g2 * g2)
            coeff[joined] += 2.0 * h.lam3 * (g1 + g2)
            coeff[augname] -= 2.0 * h.lam3 * g1
            coeff[side] -= 2.0 * h.lam3 * g2
    if h.lam4 != 0.0:
        k = 0
        for src, aug in ((E, Ep), (M, Mp)):
            scale = h.lam4 / len(src)
            for e, ep in zip(src, aug):
                if e == ep:
                    continue
                both = float(pairval[k])
                g1 = both - f1[ep]
                g2 = both - f1[e]
                value += scale * (g1 * g1 + g2 * g2)
                p_coeff[k] += 2.0 * scale * (g1 + g2)
                s_coeff[row[ep]] -= 2.0 * scale * g1
                s_coeff[row[e]] -= 2.0 * scale * g2
                k += 1

    if not want_grads:
        return PairLossResult(value, None, delta, gate)

    dy = np.zeros(Zall.shape[0])
    for i, name in enumerate(names):
        dy[i] = coeff[name]
    dy[n_sets : n_sets + n_single] = s_coeff
    if pair_specs:
        dy[n_sets + n_single :] = p_coeff

    droof, dZ = _roof_bwd(model.roof, rcache, dy)
    dP = dZ[n_sets : n_sets + n_single] * cap[:, None]
    for rows, mask, i in zip(set_rows, set_masks, range(n_sets)):
        dP[rows] += mask * dZ[i][None, :]
    for (rows, mask), i in zip(pair_masks, range(len(pair_specs))):
        dP[rows] += mask * dZ[n_sets + n_single + i][None, :]
    dWs, dbs = _pillar_bwd(model.pillar, pcache, dP)
    grads = DspnGradients(dWs, dbs, droof)
    return PairLossResult(value, grads, delta, gate)


def total_loss(
    model: DspnModel,
    pair,
    groundset: GroundSet,
    h: PeripteralHyper,
    kind: str = "peripteral",
):
    """Per-pair training objective: comparison loss on (Delta, delta) plus the
    augmentation regularizer on E u M vs E' u M' and redundancy regularizers
    on (E, E') and (M, M').  Returns (value, gradients)."""
    res = pair_loss(model, groundset, pair, h, kind=kind, want_grads=True)
    return res.value, res.grads


def empirical_risk(model: DspnModel, dataset, h: PeripteralHyper, kind: str = "peripteral") -> float:
    """Mean per-pair total loss over a pair dataset."""
    pairs = dataset.pairs
    if not pairs:
        raise ValueError("dataset is empty")
    gs = dataset.groundset
    total = 0.0
    for pair in pairs:
        total += pair_loss(model, gs, pair, h, kind=kind, want_grads=False).value
    return total / len(pairs)
