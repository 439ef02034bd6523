"""Flat key-value run configuration with schema validation.

Precedence: explicit overrides (CLI flags) > config file > defaults.
Unknown keys are rejected; every resolved config carries a short content
hash that output artifacts embed for provenance.

Config files are plain text, one `key = value` per line, `#` comments.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any, Callable


class ConfigError(ValueError):
    pass


def _positive(x) -> bool:
    return x > 0


def _non_negative(x) -> bool:
    return x >= 0


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class _Field:
    name: str
    kind: type
    default: Any
    check: Callable[[Any], bool] | None = None
    doc: str = ""


_FIELDS: dict[str, _Field] = {}


def _field(name, kind, default, check=None, doc=""):
    _FIELDS[name] = _Field(name, kind, default, check, doc)


# synthetic data
_field("clusters", int, 5, _positive, "cluster count for synthetic data")
_field("per_cluster", int, 100, _positive, "points per cluster")
_field("dim", int, 2, _positive, "embedding dimension")
_field("cluster_spread", float, 1.0, _positive, "within-cluster stddev")
_field("center_spread", float, 10.0, _positive, "cluster-center stddev")
# target kernel
_field("gamma", float, 0.0, _non_negative, "RBF width; 0 = median heuristic")
# comparison loss
_field("loss", str, "peripteral", lambda s: s in ("peripteral", "regression", "margin"))
_field("alpha", float, 1e-5, _non_negative, "indifference gate rate")
_field("beta", float, 0.5, _positive, "anti-smoothness")
_field("kappa", float, 1.0, _positive, "oracle unit scale")
_field("tau", float, 10.0, None, "margin")
_field("epsilon", float, 1e-15, _non_negative, "denominator guard")
_field("lambda1", float, 0.25, _non_negative)
_field("lambda2", float, 0.01, _non_negative)
_field("lambda3", float, 0.0, _non_negative)
_field("lambda4", float, 0.0, _non_negative)
# model
_field("agg_width", int, 8, _positive, "aggregation width d")
_field("pillar_hidden", str, "16,16", None, "comma-separated pillar hidden widths")
_field("roof_hidden", str, "16", None, "comma-separated roof hidden widths")
_field("matroid", str, "free", None, "free | uniform:<k> | partition-label:<limit>")
_field("pillar_final", str, "smoothabs", lambda s: s in ("smoothabs", "clamp"))
# sampling
_field("k_max", int, 20, lambda x: x >= 2, "largest sampled set size")
_field("k_min", int, 2, _positive)
_field("n_style1", int, 40, _non_negative)
_field("n_style2", int, 40, _non_negative)
_field("n_active_budgets", int, 2, _non_negative)
_field("n_class_sets", int, 4, _non_negative)
_field("n_min_sets", int, 4, _non_negative)
_field("n_target_sets", int, 2, _non_negative)
_field("active_fanout", int, 3, _non_negative)
_field("pairs_per_edge", int, 40, _non_negative)
_field("refresh_period", int, 15, _positive, "epochs between active refreshes")
_field("aug_sigma", float, 0.01, _non_negative, "jitter scale (relative to feature std)")
_field("target_feedback", bool, True)
# training
_field("epochs", int, 40, _non_negative)
_field("batch_size", int, 16, _positive)
_field("base_lr", float, 2e-3, _positive)
_field("max_lr", float, 2e-2, _positive)
_field("cycle_length", int, 100, lambda x: x >= 2)
_field("clip_norm", float, 10.0, _non_negative, "0 disables clipping")
_field("checkpoint_every", int, 10, _non_negative)
_field("project_roof", bool, True, None, "disable only to demonstrate broken models")
# evaluation
_field("budgets", str, "5,10,25,50", None, "comma-separated selection budgets")
_field("zipf_s", float, 1.0, _positive, "imbalance exponent")
_field("zipf_base", int, 100, _non_negative, "duplicates for the top-ranked class")
_field("random_repeats", int, 10, _positive)
_field("probe_l2", float, 1e-4, _non_negative)
_field("probe_iters", int, 5000, _positive)
_field("probe_tol", float, 1e-6, _positive)
_field("stream_eps", float, 0.05, _positive)
# shared
_field("seed", int, 0, None)


def _coerce(field: _Field, raw) -> Any:
    if isinstance(raw, str):
        try:
            if field.kind is bool:
                value = _parse_bool(raw)
            elif field.kind is int:
                value = int(raw)
            elif field.kind is float:
                value = float(raw)
            else:
                value = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"{field.name}: {exc}") from exc
    else:
        if field.kind is float and isinstance(raw, int):
            raw = float(raw)
        if not isinstance(raw, field.kind):
            raise ConfigError(
                f"{field.name}: expected {field.kind.__name__}, got {type(raw).__name__}"
            )
        value = raw
    if field.check is not None and not field.check(value):
        raise ConfigError(f"{field.name}: value {value!r} violates its constraint")
    return value


class RunConfig:
    """Resolved, validated configuration; attribute access per key."""

    def __init__(self, values: dict[str, Any]):
        self._values = dict(values)

    def __getattr__(self, name):
        try:
            return self._values[name]
        except KeyError:
            raise AttributeError(name) from None

    def __getitem__(self, name):
        return self._values[name]

    def asdict(self) -> dict[str, Any]:
        return dict(self._values)

    def hash(self) -> str:
        text = "\n".join(f"{k}={self._values[k]!r}" for k in sorted(self._values))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]

    def budget_list(self) -> list[int]:
        out = [int(x) for x in str(self.budgets).split(",") if x.strip()]
        if not out or any(b < 1 for b in out):
            raise ConfigError(f"budgets: bad list {self.budgets!r}")
        return out

    def hidden_list(self, key: str) -> tuple[int, ...]:
        raw = str(self._values[key]).strip()
        if not raw:
            return ()
        try:
            widths = tuple(int(x) for x in raw.split(","))
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from exc
        if any(w < 1 for w in widths):
            raise ConfigError(f"{key}: widths must be positive")
        return widths


def read_config_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = text.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def parse_config(path=None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """Merge defaults, an optional config file, and explicit overrides (in
    increasing precedence) into a validated RunConfig."""
    values = {name: f.default for name, f in _FIELDS.items()}
    for source in (read_config_file(path) if path else {}, overrides or {}):
        for key, raw in source.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r}")
            if raw is None:
                continue
            values[key] = _coerce(_FIELDS[key], raw)
    cfg = RunConfig(values)
    if not cfg.k_min <= cfg.k_max:
        raise ConfigError("k_min must not exceed k_max")
    if not cfg.base_lr <= cfg.max_lr:
        raise ConfigError("base_lr must not exceed max_lr")
    cfg.budget_list()
    cfg.hidden_list("pillar_hidden")
    cfg.hidden_list("roof_hidden")
    return cfg


def config_schema() -> dict[str, _Field]:
    """Name -> field description (used to mirror keys as CLI flags)."""
    return dict(_FIELDS)
