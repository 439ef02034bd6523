"""Projected-Adam training loop with a triangular cyclic learning rate.

Pillar parameters are unconstrained; roof weights are clamped to the
non-negative orthant after every optimizer step, which is what keeps the
model submodular throughout training.  Active pairs are refreshed every
`refresh_period` epochs against the current model snapshot.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groundset import GroundSet
from .losses import PeripteralHyper, pair_loss
from .model import DspnGradients, DspnModel, save_checkpoint
from .sampling import (
    PairBuilder,
    PairDataset,
    SamplerConfig,
    _collect_categories,
    sample_active,
    sample_passive,
)

LOSS_KINDS = ("peripteral", "regression", "margin")


@dataclass
class OptimState:
    """Adam moment accumulators, one pair per parameter array."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_model(model: DspnModel) -> "OptimState":
        arrays = model.param_arrays()
        return OptimState(
            m=[np.zeros_like(a) for a in arrays],
            v=[np.zeros_like(a) for a in arrays],
        )


@dataclass
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    base_lr: float = 2e-3
    max_lr: float = 2e-2
    cycle_length: int = 100
    clip_norm: float = 10.0
    refresh_period: int = 15
    loss: str = "peripteral"
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str | None = None
    project: bool = True
    hyper: PeripteralHyper = field(default_factory=PeripteralHyper)

    def __post_init__(self):
        if not 0 < self.base_lr <= self.max_lr:
            raise ValueError("need 0 < base_lr <= max_lr")
        if self.cycle_length < 2:
            raise ValueError("cycle_length must be >= 2")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("bad epoch/batch settings")
        if self.refresh_period < 1:
            raise ValueError("refresh_period must be >= 1")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class MetricsRow:
    epoch: int
    step: int
    lr: float
    risk: float
    mean_abs_delta_err: float
    gate_mean: float


def cyclic_lr(step: int, config: TrainConfig) -> float:
    """Triangular wave between base_lr and max_lr with period cycle_length."""
    if step < 0:
        raise ValueError("step must be >= 0")
    pos = step % config.cycle_length
    half = config.cycle_length / 2.0
    frac = pos / half if pos <= half else 2.0 - pos / half
    return config.base_lr + (config.max_lr - config.base_lr) * frac


def adam_step(
    model: DspnModel,
    grads: DspnGradients,
    state: OptimState,
    lr: float,
    project: bool = True,
) -> tuple[DspnModel, OptimState]:
    """Standard bias-corrected Adam update, in place, followed by clamping the
    roof weights at zero."""
    if not grads.all_finite():
        raise TrainingDiverged("non-finite gradient")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(model.param_arrays(), grads.arrays(), state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    if project:
        for w in model.roof_arrays():
            np.maximum(w, 0.0, out=w)
    return model, state


def clip_gradients(grads: DspnGradients, max_norm: float) -> float:
    """Scale gradients to a global norm cap; returns the pre-clip norm."""
    norm = grads.global_norm()
    if max_norm > 0 and norm > max_norm:
        grads.scale(max_norm / norm)
    return norm


def train(
    model: DspnModel,
    groundset: GroundSet,
    target,
    sampler_config: SamplerConfig,
    train_config: TrainConfig,
) -> tuple[DspnModel, list[MetricsRow]]:
    """Minibatch risk minimization over sampled (E, M) pairs.

    Passive pairs are drawn once; active sets are regenerated with the
    current model snapshot every refresh_period epochs.  Deterministic given
    the config seed.  Raises TrainingDiverged if the risk goes non-finite.
    """
    ss = np.random.SeedSequence(train_config.seed)
    sampler_seed, shuffle_seed = ss.spawn(2)
    sampler_rng = np.random.default_rng(sampler_seed)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    hyper = train_config.hyper
    kind = train_config.loss
    state = OptimState.for_model(model)
    metrics: list[MetricsRow] = []

    builder: PairBuilder | None = None
    n_passive = 0
    dataset: PairDataset | None = None
    for epoch in range(train_config.epochs):
        if epoch % sampler_config.refresh_period == 0 or dataset is None:
            if builder is None:
                builder = PairBuilder(
                    groundset, target, sampler_config, sampler_rng,
                    seed=train_config.seed,
                )
                passive = sample_passive(groundset, sampler_config, sampler_rng)
                base_categories = _collect_categories(builder, passive, {})
                n_passive = len(builder.pairs)
            if not sampler_config.accumulate_active:
                del builder.pairs[n_passive:]
            active, matched = sample_active(
                model, groundset, target, sampler_config, sampler_rng
            )
            by_category = {k: list(v) for k, v in base_categories.items()}
            for prov, sets in active.items():
                by_category[prov] = by_category.get(prov, []) + list(sets)
            builder.add_matched(matched)
            builder.add_edges(by_category)
            # cap the accumulated active pool, dropping the oldest corrections
            excess = len(builder.pairs) - n_passive - sampler_config.active_pool_cap
            if sampler_config.active_pool_cap > 0 and excess > 0:
                del builder.pairs[n_passive : n_passive + excess]
            dataset = builder.dataset()
        order = shuffle_rng.permutation(len(dataset.pairs))
        loss_sum = 0.0
        abs_err_sum = 0.0
        gate_sum = 0.0
        for start in range(0, len(order), train_config.batch_size):
            batch = order[start : start + train_config.batch_size]
            grads = DspnGradients.zeros_like(model)
            batch_loss = 0.0
            for idx in batch:
                pair = dataset.pairs[int(idx)]
                res = pair_loss(model, dataset.groundset, pair, hyper, kind=kind)
                grads.iadd(res.grads)
                batch_loss += res.value
                abs_err_sum += abs(res.delta - hyper.kappa * pair.delta)
                gate_sum += res.gate
            grads.scale(1.0 / len(batch))
            loss_sum += batch_loss
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(
                    f"risk became non-finite at epoch {epoch}, step {state.step}"
                )
            clip_gradients(grads, train_config.clip_norm)
            lr = cyclic_lr(state.step, train_config)
            adam_step(model, grads, state, lr, project=train_config.project)
        n_pairs = len(order)
        metrics.append(
            MetricsRow(
                epoch=epoch,
                step=state.step,
                lr=cyclic_lr(state.step, train_config),
                risk=loss_sum / n_pairs,
                mean_abs_delta_err=abs_err_sum / n_pairs,
                gate_mean=gate_sum / n_pairs,
            )
        )
        if (
            train_config.checkpoint_path
            and train_config.checkpoint_every > 0
            and (epoch + 1) % train_config.checkpoint_every == 0
        ):
            save_checkpoint(train_config.checkpoint_path, model, seed=train_config.seed)
    return model, metrics


def metrics_to_csv(rows: list[MetricsRow], seed=None, config_hash=None) -> str:
    """CSV text for a metrics log, full float precision, header comment with
    provenance."""
    lines = [f"# config={config_hash} seed={seed}"]
    lines.append("epoch,step,lr,risk,mean_abs_delta_err,gate_mean")
    for r in rows:
        lines.append(
            f"{r.epoch},{r.step},{r.lr!r},{r.risk!r},{r.mean_abs_delta_err!r},{r.gate_mean!r}"
        )
    return "\n".join(lines) + "\n"
