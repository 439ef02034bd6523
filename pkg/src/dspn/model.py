"""The set-function model: per-item pillar network, matroid-rank aggregation,
and a non-negative concave roof.

Architecture, evaluated on an index set A over a ground set:

  1. pillar: a small feed-forward net maps each item's embedding to a
     non-negative d-vector (parameters shared across items);
  2. aggregation: coordinate j of the set representation is the weighted
     matroid rank of A under weights given by pillar output j — the free
     matroid yields a columnwise sum, rank-limited matroids a top-k /
     per-block selection;
  3. roof: alternating non-negative linear maps and monotone concave
     normalized activations collapse the d-vector to a scalar.

With non-negative roof weights the composite is normalized, monotone
non-decreasing, and submodular for every parameter setting; this module
also provides the analytic backward pass and checkpoint serialization.

Determinism: sets are canonicalized to ascending item order before any
arithmetic, so evaluation is bitwise permutation invariant.
"""
from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .groundset import (
    GroundSet,
    IncrementalEvaluator,
    IndexSet,
    SetFunction,
    as_items,
)
from .data import FormatError
from .matroids import Matroid

ROOF_ACTIVATIONS = ("identity", "sqrt", "log1p", "tanh", "expsat")
PILLAR_FINAL_ACTS = ("smoothabs", "clamp")
PILLAR_HIDDEN_ACTS = ("tanh", "relu")

CHECKPOINT_MAGIC = b"DSPNCKP1"


# ---------------------------------------------------------------------------
# activations


def _roof_act(name: str, x: np.ndarray) -> np.ndarray:
    # sqrt/log1p clamp their argument at 0: a no-op for valid models (inputs
    # are always >= 0) that keeps invalid-parameter models evaluable for
    # diagnostics instead of producing NaNs.
    if name == "identity":
        return x.copy()
    if name == "sqrt":
        return np.sqrt(np.maximum(x, 0.0))
    if name == "log1p":
        return np.log1p(np.maximum(x, 0.0))
    if name == "tanh":
        return np.tanh(x)
    if name == "expsat":
        return -np.expm1(-x)
    raise ValueError(f"unknown roof activation {name!r}")


def _roof_act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "identity":
        return np.ones_like(x)
    if name == "sqrt":
        # derivative blows up at 0; use the 0 subgradient there and below
        out = np.zeros_like(x)
        pos = x > 0.0
        out[pos] = 0.5 / np.sqrt(x[pos])
        return out
    if name == "log1p":
        out = np.zeros_like(x)
        pos = x >= 0.0
        out[pos] = 1.0 / (1.0 + x[pos])
        return out
    if name == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if name == "expsat":
        return np.exp(-x)
    raise ValueError(f"unknown roof activation {name!r}")


def _bank_runs(names: tuple[str, ...]):
    start = 0
    for name, group in itertools.groupby(names):
        width = len(list(group))
        yield name, start, start + width
        start += width


def _apply_bank(names: tuple[str, ...], x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for name, a, b in _bank_runs(names):
        out[:, a:b] = _roof_act(name, x[:, a:b])
    return out


def _apply_bank_grad(names: tuple[str, ...], x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    for name, a, b in _bank_runs(names):
        out[:, a:b] = _roof_act_grad(name, x[:, a:b])
    return out


def default_activation_bank(width: int) -> tuple[str, ...]:
    """Split `width` channels evenly over the activation bank, remainder to identity."""
    per = width // len(ROOF_ACTIVATIONS)
    names: list[str] = []
    for act in ROOF_ACTIVATIONS:
        names.extend([act] * per)
    names.extend(["identity"] * (width - per * len(ROOF_ACTIVATIONS)))
    return tuple(names)


def _pillar_act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    if name == "relu":
        return np.maximum(x, 0.0)
    if name == "smoothabs":
        # smooth non-negative clamp with value 0 at 0: sqrt(x^2 + 1) - 1
        return np.sqrt(x * x + 1.0) - 1.0
    if name == "clamp":
        return np.maximum(x, 0.0)
    raise ValueError(f"unknown pillar activation {name!r}")


def _pillar_act_grad(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(x)
        return 1.0 - t * t
    if name == "relu":
        return (x > 0.0).astype(np.float64)
    if name == "smoothabs":
        return x / np.sqrt(x * x + 1.0)
    if name == "clamp":
        return (x > 0.0).astype(np.float64)
    raise ValueError(f"unknown pillar activation {name!r}")


# ---------------------------------------------------------------------------
# parameter containers


@dataclass
class PillarParams:
    """Feed-forward per-item network; the final activation forces outputs >= 0."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_act: str = "tanh"
    final_act: str = "smoothabs"

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need matching, non-empty weight/bias lists")
        if self.hidden_act not in PILLAR_HIDDEN_ACTS:
            raise ValueError(f"unknown hidden activation {self.hidden_act!r}")
        if self.final_act not in PILLAR_FINAL_ACTS:
            raise ValueError(f"unknown final activation {self.final_act!r}")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        prev = self.weights[0].shape[1]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError("pillar layer shapes are inconsistent")
            if w.shape[1] != prev:
                raise ValueError("pillar layer widths do not chain")
            prev = w.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def widths(self) -> list[int]:
        return [self.in_dim] + [w.shape[0] for w in self.weights]


@dataclass
class RoofParams:
    """Stack of non-negative linear maps; a concave activation bank is applied
    to the input of every layer.  weights[-1] must have a single output row."""

    weights: list[np.ndarray]
    activations: list[tuple[str, ...]]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.activations):
            raise ValueError("need one activation bank per roof layer")
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.activations = [tuple(b) for b in self.activations]
        prev = self.weights[0].shape[1]
        for w, bank in zip(self.weights, self.activations):
            if w.ndim != 2:
                raise ValueError("roof weights must be matrices")
            if w.shape[1] != prev:
                raise ValueError("roof layer widths do not chain")
            if len(bank) != w.shape[1]:
                raise ValueError("activation bank width must match layer input")
            for name in bank:
                if name not in ROOF_ACTIVATIONS:
                    raise ValueError(f"unknown roof activation {name!r}")
            prev = w.shape[0]
        if self.weights[-1].shape[0] != 1:
            raise ValueError("final roof layer must produce a scalar")

    @property
    def in_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def widths(self) -> list[int]:
        return [self.in_dim] + [w.shape[0] for w in self.weights]

    def min_weight(self) -> float:
        return float(min(w.min() for w in self.weights))


@dataclass
class DspnModel:
    pillar: PillarParams
    matroid: Matroid
    roof: RoofParams

    def __post_init__(self):
        if self.pillar.out_dim != self.roof.in_dim:
            raise ValueError(
                f"pillar output width {self.pillar.out_dim} does not match "
                f"roof input width {self.roof.in_dim}"
            )

    @property
    def d(self) -> int:
        return self.pillar.out_dim

    @property
    def d_in(self) -> int:
        return self.pillar.in_dim

    def param_arrays(self) -> list[np.ndarray]:
        """All learnable arrays in declaration order (pillar W/b per layer, roof W)."""
        out: list[np.ndarray] = []
        for w, b in zip(self.pillar.weights, self.pillar.biases):
            out.append(w)
            out.append(b)
        out.extend(self.roof.weights)
        return out

    def roof_arrays(self) -> list[np.ndarray]:
        return self.roof.weights

    def copy(self) -> "DspnModel":
        pillar = PillarParams(
            [w.copy() for w in self.pillar.weights],
            [b.copy() for b in self.pillar.biases],
            self.pillar.hidden_act,
            self.pillar.final_act,
        )
        roof = RoofParams([w.copy() for w in self.roof.weights], list(self.roof.activations))
        return DspnModel(pillar, self.matroid, roof)


@dataclass
class DspnGradients:
    """Per-parameter gradients, shaped exactly like the model's arrays."""

    pillar_w: list[np.ndarray]
    pillar_b: list[np.ndarray]
    roof_w: list[np.ndarray]

    @staticmethod
    def zeros_like(model: DspnModel) -> "DspnGradients":
        return DspnGradients(
            [np.zeros_like(w) for w in model.pillar.weights],
            [np.zeros_like(b) for b in model.pillar.biases],
            [np.zeros_like(w) for w in model.roof.weights],
        )

    def arrays(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for w, b in zip(self.pillar_w, self.pillar_b):
            out.append(w)
            out.append(b)
        out.extend(self.roof_w)
        return out

    def iadd(self, other: "DspnGradients", scale: float = 1.0) -> "DspnGradients":
        for a, b in zip(self.arrays(), other.arrays()):
            a += scale * b
        return self

    def scale(self, s: float) -> "DspnGradients":
        for a in self.arrays():
            a *= s
        return self

    def global_norm(self) -> float:
        total = 0.0
        for a in self.arrays():
            total += float(np.sum(a * a))
        return float(np.sqrt(total))

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays())


# ---------------------------------------------------------------------------
# batched cores


def _pillar_fwd(pillar: PillarParams, X: np.ndarray):
    """Forward over a batch of item embeddings; returns (outputs, cache)."""
    acts = [pillar.hidden_act] * (len(pillar.weights) - 1) + [pillar.final_act]
    H = X
    inputs = []
    pre = []
    for (w, b), act in zip(zip(pillar.weights, pillar.biases), acts):
        inputs.append(H)
        Z = H @ w.T + b
        pre.append(Z)
        H = _pillar_act(act, Z)
    return H, (inputs, pre, acts)


def _pillar_bwd(pillar: PillarParams, cache, dP: np.ndarray):
    inputs, pre, acts = cache
    dWs = [None] * len(pillar.weights)
    dbs = [None] * len(pillar.weights)
    G = dP
    for i in reversed(range(len(pillar.weights))):
        G = G * _pillar_act_grad(acts[i], pre[i])
        dWs[i] = G.T @ inputs[i]
        dbs[i] = G.sum(axis=0)
        if i > 0:
            G = G @ pillar.weights[i]
    return dWs, dbs


def _roof_fwd(roof: RoofParams, Z: np.ndarray, check: bool = True):
    """Forward over a batch of aggregated vectors; returns (values, cache)."""
    if check and roof.min_weight() < 0.0:
        raise ValueError("negative roof weight encountered (model invariant broken)")
    if np.any(Z < 0.0):
        raise ValueError("roof inputs must be non-negative")
    Y = Z
    inputs = []
    acted = []
    for w, bank in zip(roof.weights, roof.activations):
        inputs.append(Y)
        A = _apply_bank(bank, Y)
        acted.append(A)
        Y = A @ w.T
    return Y[:, 0], (inputs, acted)


def _roof_bwd(roof: RoofParams, cache, dy: np.ndarray):
    inputs, acted = cache
    dWs = [None] * len(roof.weights)
    G = dy[:, None]
    for i in reversed(range(len(roof.weights))):
        dWs[i] = G.T @ acted[i]
        G = (G @ roof.weights[i]) * _apply_bank_grad(roof.activations[i], inputs[i])
    return dWs, G


def _partition_block_map(matroid: Matroid) -> dict[int, int]:
    return {v: b for b, block in enumerate(matroid.blocks) for v in block}


def _agg_fwd(matroid: Matroid, P_A: np.ndarray, items: tuple[int, ...]):
    """Aggregate pillar outputs for one set; returns (z, selection mask).

    The mask marks, per coordinate, which rows the rank computation selects;
    it doubles as the aggregator Jacobian for the backward pass.  Rows must
    already be in ascending item order so ties resolve to the lowest index.
    """
    m, d = P_A.shape
    if m == 0:
        return np.zeros(d), np.zeros((0, d))
    if matroid.variant == "free" or (matroid.variant == "uniform" and matroid.k >= m):
        mask = np.ones((m, d))
    elif matroid.variant == "uniform":
        mask = np.zeros((m, d))
        if matroid.k > 0:
            order = np.argsort(-P_A, axis=0, kind="stable")
            mask[order[: matroid.k], np.arange(d)[None, :]] = 1.0
    else:
        block_map = _partition_block_map(matroid)
        mask = np.zeros((m, d))
        rows_by_block: dict[int, list[int]] = {}
        for r, v in enumerate(items):
            try:
                rows_by_block.setdefault(block_map[v], []).append(r)
            except KeyError:
                raise ValueError(f"item {v} is not covered by the partition blocks")
        for b, rows in rows_by_block.items():
            cap = matroid.limits[b]
            if cap <= 0:
                continue
            rows_arr = np.asarray(rows)
            if cap >= len(rows):
                mask[rows_arr] = 1.0
            else:
                sub = P_A[rows_arr]
                order = np.argsort(-sub, axis=0, kind="stable")
                mask[rows_arr[order[:cap]], np.arange(d)[None, :]] = 1.0
    z = (P_A * mask).sum(axis=0)
    return z, mask


# ---------------------------------------------------------------------------
# public operations


def pillar_forward(pillar: PillarParams, x: np.ndarray) -> np.ndarray:
    """Map one item embedding to its non-negative d-vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (pillar.in_dim,):
        raise ValueError(f"expected input of shape ({pillar.in_dim},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("pillar input must be finite")
    out, _ = _pillar_fwd(pillar, x[None, :])
    return out[0]


def aggregate(matroid: Matroid, pillar_outputs: np.ndarray, items=None) -> np.ndarray:
    """Columnwise weighted matroid rank of a |A| x d block of pillar outputs.

    `items` gives the ground-set ids for the rows (ascending); it defaults to
    the row positions, which suffices for free/uniform matroids but partition
    matroids need real ids to resolve block membership.
    """
    P = np.asarray(pillar_outputs, dtype=np.float64)
    if P.ndim != 2:
        raise ValueError("pillar outputs must be a 2-D block")
    if P.size and P.min() < 0.0:
        raise ValueError("pillar outputs must be non-negative")
    if items is None:
        items = tuple(range(P.shape[0]))
    else:
        items = tuple(int(v) for v in items)
        if len(items) != P.shape[0]:
            raise ValueError("items must match the number of rows")
    z, _ = _agg_fwd(matroid, P, items)
    return z


def dsf_eval(roof: RoofParams, z: np.ndarray, check: bool = True) -> float:
    """Evaluate the concave roof on one non-negative d-vector."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (roof.in_dim,):
        raise ValueError(f"expected input of shape ({roof.in_dim},), got {z.shape}")
    y, _ = _roof_fwd(roof, z[None, :], check=check)
    return float(y[0])


def dspn_eval(model: DspnModel, A: IndexSet, groundset: GroundSet, check: bool = True) -> float:
    """Full model value of an index set; 0 on the empty set."""
    items = as_items(A)
    groundset.check_indices(items)
    if not items:
        return 0.0
    X = groundset.embeddings[list(items)]
    P, _ = _pillar_fwd(model.pillar, X)
    z, _ = _agg_fwd(model.matroid, P, items)
    y, _ = _roof_fwd(model.roof, z[None, :], check=check)
    return float(y[0])


def dspn_backward(
    model: DspnModel,
    A: IndexSet,
    groundset: GroundSet,
    upstream: float = 1.0,
    check: bool = True,
) -> DspnGradients:
    """Gradient of upstream * f(A) with respect to every model parameter.

    For rank-limited aggregators the gradient flows only through the selected
    (arg-max) entries, ties resolved to the lowest item index.
    """
    items = as_items(A)
    groundset.check_indices(items)
    grads = DspnGradients.zeros_like(model)
    if not items or upstream == 0.0:
        return grads
    X = groundset.embeddings[list(items)]
    P, pcache = _pillar_fwd(model.pillar, X)
    z, mask = _agg_fwd(model.matroid, P, items)
    _, rcache = _roof_fwd(model.roof, z[None, :], check=check)
    droof, dZ = _roof_bwd(model.roof, rcache, np.asarray([float(upstream)]))
    dP = mask * dZ[0][None, :]
    dWs, dbs = _pillar_bwd(model.pillar, pcache, dP)
    grads = DspnGradients(dWs, dbs, droof)
    if not grads.all_finite():
        raise FloatingPointError("non-finite gradient encountered")
    return grads


def project_nonneg(roof: RoofParams) -> RoofParams:
    """Clamp every roof weight at zero (idempotent)."""
    return RoofParams([np.maximum(w, 0.0) for w in roof.weights], list(roof.activations))


# ---------------------------------------------------------------------------
# set-function handle with incremental gain queries


class DspnFunction(SetFunction):
    """Set-function view of a model over a fixed ground set.

    Pillar outputs for the whole universe are computed lazily once and
    cached, so gain queries during greedy/streaming selection cost one small
    roof evaluation instead of a full forward pass.
    """

    def __init__(self, model: DspnModel, groundset: GroundSet, check: bool = True):
        self.model = model
        self.groundset = groundset
        self.check = check
        self._P: np.ndarray | None = None

    def pillar_matrix(self) -> np.ndarray:
        if self._P is None:
            self._P, _ = _pillar_fwd(self.model.pillar, self.groundset.embeddings)
        return self._P

    def __call__(self, A):
        items = as_items(A)
        self.groundset.check_indices(items)
        if not items:
            return 0.0
        P = self.pillar_matrix()[list(items)]
        z, _ = _agg_fwd(self.model.matroid, P, items)
        y, _ = _roof_fwd(self.model.roof, z[None, :], check=self.check)
        return float(y[0])

    def evaluator(self):
        return _DspnEvaluator(self)


class _DspnEvaluator(IncrementalEvaluator):
    """Incremental aggregation state: value and gain queries in O(d + roof)."""

    def __init__(self, fn: DspnFunction):
        super().__init__()
        self._fn = fn
        model = fn.model
        d = model.d
        self._d = d
        self._z = np.zeros(d)
        self._value = 0.0
        matroid = model.matroid
        self._variant = matroid.variant
        if self._variant == "uniform":
            self._top = np.zeros((matroid.k, d)) if matroid.k > 0 else None
        elif self._variant == "partition":
            matroid.validate_universe(fn.groundset.n)
            self._block_of = matroid.block_index(fn.groundset.n)
            self._tops = [
                np.zeros((cap, d)) if cap > 0 else None for cap in matroid.limits
            ]

    def _thresholds(self, cands: np.ndarray) -> np.ndarray:
        """Per-candidate, per-coordinate weight level to beat for inclusion."""
        if self._variant == "free":
            return np.zeros((len(cands), self._d))
        if self._variant == "uniform":
            if self._top is None:
                return np.full((len(cands), self._d), np.inf)
            return np.broadcast_to(self._top.min(axis=0), (len(cands), self._d))
        rows = np.empty((len(cands), self._d))
        for i, v in enumerate(cands):
            top = self._tops[self._block_of[int(v)]]
            rows[i] = np.inf if top is None else top.min(axis=0)
        return rows

    def value(self) -> float:
        return self._value

    def gains(self, cands) -> np.ndarray:
        cands = np.asarray(cands, dtype=np.int64)
        W = self._fn.pillar_matrix()[cands]
        Znew = self._z[None, :] + np.maximum(W - self._thresholds(cands), 0.0)
        y, _ = _roof_fwd(self._fn.model.roof, Znew, check=self._fn.check)
        return y - self._value

    def add(self, v: int) -> None:
        v = int(v)
        w = self._fn.pillar_matrix()[v]
        thr = self._thresholds(np.asarray([v]))[0]
        self._z = self._z + np.maximum(w - thr, 0.0)
        if self._variant == "uniform" and self._top is not None:
            self._replace_min(self._top, w)
        elif self._variant == "partition":
            top = self._tops[self._block_of[v]]
            if top is not None:
                self._replace_min(top, w)
        y, _ = _roof_fwd(
            self._fn.model.roof, self._z[None, :], check=self._fn.check
        )
        self._value = float(y[0])
        self.items.append(v)

    @staticmethod
    def _replace_min(top: np.ndarray, w: np.ndarray) -> None:
        am = top.argmin(axis=0)
        cols = np.arange(top.shape[1])
        cur = top[am, cols]
        better = w > cur
        top[am[better], cols[better]] = w[better]


# ---------------------------------------------------------------------------
# initialization


def init_model(
    d_in: int,
    agg_width: int = 8,
    pillar_hidden=(16, 16),
    roof_hidden=(16,),
    matroid: Matroid | None = None,
    rng: np.random.Generator | None = None,
    pillar_final: str = "smoothabs",
) -> DspnModel:
    """Fresh model: pillar weights ~ N(0, 1/fan_in), roof weights uniform-positive
    (then projected, a no-op at init)."""
    rng = rng if rng is not None else np.random.default_rng(0)
    widths = [int(d_in)] + [int(h) for h in pillar_hidden] + [int(agg_width)]
    pw, pb = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        pw.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_out, fan_in)))
        pb.append(np.zeros(fan_out))
    roof_widths = [int(agg_width)] + [int(h) for h in roof_hidden] + [1]
    rw = []
    banks = []
    for fan_in, fan_out in zip(roof_widths[:-1], roof_widths[1:]):
        rw.append(rng.uniform(0.0, 2.0 / fan_in, size=(fan_out, fan_in)))
        banks.append(default_activation_bank(fan_in))
    roof = project_nonneg(RoofParams(rw, banks))
    pillar = PillarParams(pw, pb, final_act=pillar_final)
    return DspnModel(pillar, matroid if matroid is not None else Matroid.free(), roof)


# ---------------------------------------------------------------------------
# finite differences (verification oracle)


def finite_difference_gradients(fn, model: DspnModel, h: float = 1e-5) -> DspnGradients:
    """Central-difference gradient of a scalar function of the model parameters.

    Perturbs every parameter entry in place; intended for verification on
    small models only.
    """
    grads = DspnGradients.zeros_like(model)
    for arr, out in zip(model.param_arrays(), grads.arrays()):
        flat = arr.reshape(-1)
        gflat = out.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + h
            hi = fn(model)
            flat[i] = orig - h
            lo = fn(model)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * h)
    return grads


def relative_gradient_error(analytic: DspnGradients, reference: DspnGradients) -> float:
    """max over parameter arrays of ||a - r||_inf / max(||r||_inf, 1)."""
    worst = 0.0
    for a, r in zip(analytic.arrays(), reference.arrays()):
        denom = max(float(np.abs(r).max(initial=0.0)), 1.0)
        err = float(np.abs(a - r).max(initial=0.0)) / denom
        worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# checkpoint serialization


def save_checkpoint(path, model: DspnModel, seed=None, config_hash=None) -> None:
    """Binary checkpoint: magic, JSON header, then raw float64 little-endian
    parameter arrays in declaration order (pillar W/b per layer, roof W)."""
    header = {
        "version": 1,
        "pillar": {
            "widths": model.pillar.widths,
            "hidden_act": model.pillar.hidden_act,
            "final_act": model.pillar.final_act,
        },
        "agg_width": model.d,
        "roof": {
            "widths": model.roof.widths,
            "activations": [list(b) for b in model.roof.activations],
        },
        "matroid": model.matroid.descriptor(),
        "seed": seed,
        "config_hash": config_hash,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(np.array(len(blob), dtype="<u4").tobytes())
        fh.write(blob)
        for arr in model.param_arrays():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path, allow_invalid: bool = False):
    """Read a checkpoint; returns (model, header).  Negative roof weights are
    rejected unless allow_invalid is set (verification tooling loads broken
    models on purpose to locate witnesses)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        (hlen,) = np.frombuffer(fh.read(4), dtype="<u4")
        header = json.loads(fh.read(int(hlen)).decode("utf-8"))
        if header.get("version") != 1:
            raise FormatError(f"unsupported checkpoint version {header.get('version')}")
        payload = fh.read()

    pw = header["pillar"]["widths"]
    rw = header["roof"]["widths"]
    shapes: list[tuple[int, ...]] = []
    for fan_in, fan_out in zip(pw[:-1], pw[1:]):
        shapes.append((fan_out, fan_in))
        shapes.append((fan_out,))
    for fan_in, fan_out in zip(rw[:-1], rw[1:]):
        shapes.append((fan_out, fan_in))
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(payload) != expected:
        raise FormatError(
            f"checkpoint payload truncated or padded: expected {expected} bytes, "
            f"got {len(payload)}"
        )
    arrays = []
    offset = 0
    for shape in shapes:
        count = int(np.prod(shape))
        arrays.append(
            np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
            .astype(np.float64)
            .reshape(shape)
        )
        offset += count * 8
    n_pillar = len(pw) - 1
    weights = [arrays[2 * i] for i in range(n_pillar)]
    biases = [arrays[2 * i + 1] for i in range(n_pillar)]
    roof_weights = arrays[2 * n_pillar :]
    pillar = PillarParams(
        weights,
        biases,
        header["pillar"]["hidden_act"],
        header["pillar"]["final_act"],
    )
    roof = RoofParams(roof_weights, [tuple(b) for b in header["roof"]["activations"]])
    if not allow_invalid and roof.min_weight() < 0.0:
        raise ValueError("checkpoint contains negative roof weights")
    matroid = Matroid.from_descriptor(header["matroid"])
    return DspnModel(pillar, matroid, roof), header
