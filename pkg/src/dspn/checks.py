"""Exhaustive property checkers for small ground sets.

These enumerate the full subset lattice, so they are only usable for
|V| up to ~16; they exist to verify normalization, monotonicity, and
diminishing returns empirically rather than by proof.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groundset import as_items, ensure_setfn

MAX_CHECK_ITEMS = 16


@dataclass(frozen=True)
class Violation:
    kind: str  # "normalization" | "monotonicity" | "submodularity"
    X: tuple[int, ...]
    Y: tuple[int, ...]
    v: int | None
    amount: float

    def describe(self) -> str:
        if self.kind == "normalization":
            return f"|f(empty)| = {self.amount:.3g} exceeds tolerance"
        if self.kind == "monotonicity":
            return f"f({set(self.X)}) > f({set(self.Y)}) by {self.amount:.3g}"
        return (
            f"gain of {self.v} at {set(self.X)} is below its gain at "
            f"{set(self.Y)} by {self.amount:.3g}"
        )


@dataclass
class PolymatroidReport:
    items: tuple[int, ...]
    tol: float
    normalization: list[Violation] = field(default_factory=list)
    monotonicity: list[Violation] = field(default_factory=list)
    submodularity: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.normalization or self.monotonicity or self.submodularity)

    @property
    def violations(self) -> list[Violation]:
        return self.normalization + self.monotonicity + self.submodularity

    def summary(self) -> str:
        if self.ok:
            return f"polymatroid check passed on {len(self.items)} items (tol={self.tol:g})"
        return (
            f"polymatroid check FAILED: {len(self.normalization)} normalization, "
            f"{len(self.monotonicity)} monotonicity, "
            f"{len(self.submodularity)} submodularity violations"
        )


def eval_all_subsets(f, items: tuple[int, ...]) -> np.ndarray:
    """Value table indexed by bitmask over `items` (bit i = items[i])."""
    fn = ensure_setfn(f)
    n = len(items)
    vals = np.empty(1 << n, dtype=np.float64)
    for mask in range(1 << n):
        subset = tuple(items[i] for i in range(n) if mask >> i & 1)
        vals[mask] = fn(subset)
    return vals


def _mask_items(mask: int, items: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(items[i] for i in range(len(items)) if mask >> i & 1)


def check_polymatroid_bruteforce(f, V, tol: float = 1e-9) -> PolymatroidReport:
    """Exhaustively verify that f is normalized, monotone, and submodular on V.

    V is either an item count or an explicit item tuple.  Every violating
    instance is recorded: (a) a triple X subset-of Y, v outside Y with
    f(v|X) < f(v|Y) - tol; (b) a nested pair with f(X) > f(Y) + tol;
    (c) |f(empty)| > tol.  An empty report certifies the polymatroid
    properties up to tol on this universe.
    """
    if tol < 0:
        raise ValueError("tolerance must be non-negative")
    items = as_items(range(V)) if isinstance(V, (int, np.integer)) else as_items(V)
    n = len(items)
    if n > MAX_CHECK_ITEMS:
        raise ValueError(
            f"ground set of {n} items is too large for 2^n enumeration "
            f"(limit {MAX_CHECK_ITEMS})"
        )
    vals = eval_all_subsets(f, items)
    report = PolymatroidReport(items=items, tol=float(tol))

    if abs(vals[0]) > tol:
        report.normalization.append(
            Violation("normalization", (), (), None, float(abs(vals[0])))
        )

    full = (1 << n) - 1
    for y in range(1 << n):
        # nested-pair monotonicity and, per outside element, gain dominance
        gains_y = {}
        for i in range(n):
            if not y >> i & 1:
                gains_y[i] = vals[y | (1 << i)] - vals[y]
        x = y
        while True:
            if x != y:
                diff = vals[x] - vals[y]
                if diff > tol:
                    report.monotonicity.append(
                        Violation(
                            "monotonicity",
                            _mask_items(x, items),
                            _mask_items(y, items),
                            None,
                            float(diff),
                        )
                    )
            for i, gy in gains_y.items():
                gx = vals[x | (1 << i)] - vals[x]
                if gx < gy - tol:
                    report.submodularity.append(
                        Violation(
                            "submodularity",
                            _mask_items(x, items),
                            _mask_items(y, items),
                            items[i],
                            float(gy - gx),
                        )
                    )
            if x == 0:
                break
            x = (x - 1) & y
    return report
