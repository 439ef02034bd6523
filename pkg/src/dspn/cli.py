"""Command-line entry point.

Subcommands: gen-data, train, eval-transfer, eval-design, summarize,
verify, report.  Every config key is mirrored one-to-one as a flag
(--beta, --epochs, ...); precedence is flag > --config file > default.
Exit codes: 0 success, 1 validation error, 2 verification failure,
3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .checks import check_polymatroid_bruteforce
from .config import ConfigError, RunConfig, config_schema, parse_config
from .data import (
    FormatError,
    SyntheticSpec,
    gen_synthetic,
    load_embeddings,
    load_labels,
    save_embeddings,
    save_labels,
)
from .evaluation import (
    feature_ranking_report,
    offline_design_eval,
    online_design_eval,
    transfer_report,
    zipf_duplicate,
)
from .groundset import FacilityLocation, GroundSet, median_heuristic_gamma, rbf_similarity
from .losses import PeripteralHyper
from .matroids import Matroid
from .model import (
    DspnFunction,
    dspn_backward,
    dspn_eval,
    finite_difference_gradients,
    init_model,
    load_checkpoint,
    relative_gradient_error,
    save_checkpoint,
)
from .optimize import greedy_max, streaming_max
from .sampling import SamplerConfig
from .training import TrainConfig, metrics_to_csv, train

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_VERIFY = 2
EXIT_IO = 3


class VerificationFailure(RuntimeError):
    pass


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    for name, field in config_schema().items():
        parser.add_argument(
            f"--{name.replace('_', '-')}",
            dest=f"cfg_{name}",
            default=None,
            metavar=field.kind.__name__.upper(),
            help=field.doc or f"config key {name}",
        )
    parser.add_argument("--config", default=None, help="key = value config file")


def _resolve_config(args) -> RunConfig:
    overrides = {
        name: getattr(args, f"cfg_{name}")
        for name in config_schema()
        if getattr(args, f"cfg_{name}", None) is not None
    }
    return parse_config(args.config, overrides)


def _load_groundset(data_path, labels_path=None) -> GroundSet:
    gs = load_embeddings(data_path)
    if labels_path:
        gs = GroundSet(gs.embeddings, load_labels(labels_path, gs.n))
    return gs


def _build_target(gs: GroundSet, cfg: RunConfig) -> FacilityLocation:
    gamma = cfg.gamma if cfg.gamma > 0 else median_heuristic_gamma(gs.embeddings)
    return FacilityLocation(rbf_similarity(gs.embeddings, gamma))


def _matroid_from_config(cfg: RunConfig, gs: GroundSet) -> Matroid:
    spec = str(cfg.matroid).strip()
    if spec == "free":
        return Matroid.free()
    if spec.startswith("uniform:"):
        return Matroid.uniform(int(spec.split(":", 1)[1]))
    if spec.startswith("partition-label:"):
        if gs.labels is None:
            raise ConfigError("partition-label matroid needs a labels file")
        return Matroid.partition_from_labels(gs.labels, int(spec.split(":", 1)[1]))
    raise ConfigError(f"bad matroid spec {spec!r}")


def _hyper_from_config(cfg: RunConfig) -> PeripteralHyper:
    return PeripteralHyper(
        alpha=cfg.alpha,
        beta=cfg.beta,
        kappa=cfg.kappa,
        tau=cfg.tau,
        epsilon=cfg.epsilon,
        lam1=cfg.lambda1,
        lam2=cfg.lambda2,
        lam3=cfg.lambda3,
        lam4=cfg.lambda4,
    )


def _sampler_from_config(cfg: RunConfig) -> SamplerConfig:
    return SamplerConfig(
        k_max=cfg.k_max,
        k_min=cfg.k_min,
        n_style1=cfg.n_style1,
        n_style2=cfg.n_style2,
        n_active_budgets=cfg.n_active_budgets,
        n_class_sets=cfg.n_class_sets,
        n_min_sets=cfg.n_min_sets,
        n_target_sets=cfg.n_target_sets,
        active_fanout=cfg.active_fanout,
        pairs_per_edge=cfg.pairs_per_edge,
        refresh_period=cfg.refresh_period,
        aug_sigma=cfg.aug_sigma,
        use_target_feedback=cfg.target_feedback,
    )


def _write(path, text) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args) -> int:
    cfg = _resolve_config(args)
    spec = SyntheticSpec(
        clusters=cfg.clusters,
        points_per_cluster=cfg.per_cluster,
        dim=cfg.dim,
        cluster_spread=cfg.cluster_spread,
        center_spread=cfg.center_spread,
        seed=cfg.seed,
    )
    gs = gen_synthetic(spec)
    n_base = gs.n
    imbalanced = args.cfg_zipf_s is not None or args.cfg_zipf_base is not None or args.imbalance
    if imbalanced:
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD15C]))
        gs = zipf_duplicate(gs, cfg.zipf_s, cfg.zipf_base, rng)
    os.makedirs(args.out, exist_ok=True)
    emb_path = os.path.join(args.out, "embeddings.emb")
    lab_path = os.path.join(args.out, "labels.txt")
    save_embeddings(emb_path, gs)
    save_labels(lab_path, gs.labels)
    manifest = {
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "n_base": n_base,
        "n_total": gs.n,
        "dim": gs.dim,
        "clusters": cfg.clusters,
        "imbalanced": bool(imbalanced),
        "files": {"embeddings": "embeddings.emb", "labels": "labels.txt"},
    }
    _write(os.path.join(args.out, "manifest.json"), json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {gs.n} items ({n_base} base) to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    gs = _load_groundset(args.data, args.labels)
    if gs.labels is None:
        raise ConfigError("training requires a labels file (passive sampling uses classes)")
    target = _build_target(gs, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x11217]))
    model = init_model(
        d_in=gs.dim,
        agg_width=cfg.agg_width,
        pillar_hidden=cfg.hidden_list("pillar_hidden"),
        roof_hidden=cfg.hidden_list("roof_hidden"),
        matroid=_matroid_from_config(cfg, gs),
        rng=rng,
        pillar_final=cfg.pillar_final,
    )
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "checkpoint.dspn")
    tc = TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        base_lr=cfg.base_lr,
        max_lr=cfg.max_lr,
        cycle_length=cfg.cycle_length,
        clip_norm=cfg.clip_norm,
        refresh_period=cfg.refresh_period,
        loss=cfg.loss,
        seed=cfg.seed,
        checkpoint_every=cfg.checkpoint_every,
        checkpoint_path=ckpt_path,
        project=cfg.project_roof,
        hyper=_hyper_from_config(cfg),
    )
    model, metrics = train(model, gs, target, _sampler_from_config(cfg), tc)
    save_checkpoint(ckpt_path, model, seed=cfg.seed, config_hash=cfg.hash())
    _write(os.path.join(args.out, "metrics.csv"), metrics_to_csv(metrics, cfg.seed, cfg.hash()))
    final = metrics[-1].risk if metrics else float("nan")
    print(f"trained {cfg.epochs} epochs ({cfg.loss} loss), final risk {final:.6g}")
    print(f"checkpoint: {ckpt_path}")
    return EXIT_OK


def cmd_summarize(args) -> int:
    cfg = _resolve_config(args)
    model, _ = load_checkpoint(args.checkpoint)
    gs = _load_groundset(args.data, args.labels)
    fn = DspnFunction(model, gs.unlabeled())
    budget = int(args.budget)
    if args.mode == "offline":
        selected = list(greedy_max(fn, range(gs.n), budget, lazy=True).selected)
    else:
        selected = streaming_max(fn, range(gs.n), budget, eps=cfg.stream_eps)
    text = "\n".join(str(v) for v in selected) + "\n"
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_eval_transfer(args) -> int:
    cfg = _resolve_config(args)
    gs = _load_groundset(args.eval_data, args.eval_labels)
    target = _build_target(gs, cfg)
    models = {}
    for spec in args.model:
        if "=" not in spec:
            raise ConfigError(f"--model expects name=path, got {spec!r}")
        name, path = spec.split("=", 1)
        model, _ = load_checkpoint(path)
        models[name] = DspnFunction(model, gs.unlabeled())
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7EA1]))
    report = transfer_report(
        models,
        target,
        range(gs.n),
        cfg.budget_list(),
        rng,
        random_repeats=cfg.random_repeats,
        seed=cfg.seed,
        config_hash=cfg.hash(),
    )
    _write(args.out + "_wide.csv", report.to_wide_csv())
    _write(args.out + "_long.csv", report.to_long_csv())
    print(f"wrote {args.out}_wide.csv and {args.out}_long.csv")
    return EXIT_OK


def cmd_eval_design(args) -> int:
    cfg = _resolve_config(args)
    pool = _load_groundset(args.pool_data, args.pool_labels)
    test = _load_groundset(args.test_data, args.test_labels)
    model, _ = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xDE51]))
    if args.imbalance:
        pool = zipf_duplicate(pool, cfg.zipf_s, cfg.zipf_base, rng)
    probe_kw = {"l2": cfg.probe_l2, "max_iters": cfg.probe_iters, "tol": cfg.probe_tol}
    common = dict(
        budgets=cfg.budget_list(),
        rng=rng,
        gamma=cfg.gamma,
        probe_kw=probe_kw,
        seed=cfg.seed,
        config_hash=cfg.hash(),
    )
    if args.mode == "offline":
        report = offline_design_eval(model, pool, test, **common)
    else:
        report = online_design_eval(model, pool, test, stream_eps=cfg.stream_eps, **common)
    _write(args.out + "_wide.csv", report.to_wide_csv())
    _write(args.out + "_long.csv", report.to_long_csv())
    print(f"wrote {args.out}_wide.csv and {args.out}_long.csv")
    return EXIT_OK


def _verify_one(model, tag: str, items: int, tol: float, perm_trials: int,
                grad_checks: int, rng: np.random.Generator) -> list[str]:
    failures: list[str] = []
    gs = GroundSet(rng.normal(0.0, 1.0, size=(items, model.d_in)))

    if model.roof.min_weight() < 0.0:
        failures.append(f"{tag}: negative roof weight present (min {model.roof.min_weight():.4g})")

    fn = DspnFunction(model, gs, check=False)
    report = check_polymatroid_bruteforce(fn, items, tol=tol)
    if not report.ok:
        failures.append(f"{tag}: {report.summary()}")
        for viol in report.violations[:3]:
            failures.append(f"{tag}:   witness: {viol.describe()}")

    for _ in range(perm_trials):
        size = int(rng.integers(1, items + 1))
        subset = rng.choice(items, size=size, replace=False)
        shuffled = rng.permutation(subset)
        a = dspn_eval(model, [int(v) for v in subset], gs, check=False)
        b = dspn_eval(model, [int(v) for v in shuffled], gs, check=False)
        if a != b:
            failures.append(
                f"{tag}: permutation variance on {sorted(int(v) for v in subset)}: {a!r} != {b!r}"
            )
            break

    for _ in range(grad_checks):
        size = int(rng.integers(1, items + 1))
        subset = tuple(int(v) for v in rng.choice(items, size=size, replace=False))
        analytic = dspn_backward(model, subset, gs, upstream=1.0, check=False)
        fd = finite_difference_gradients(
            lambda mdl: dspn_eval(mdl, subset, gs, check=False), model
        )
        err = relative_gradient_error(analytic, fd)
        if err > 1e-4:
            failures.append(f"{tag}: gradient check failed (rel err {err:.3g}) on {subset}")
            break
    return failures


def cmd_verify(args) -> int:
    cfg = _resolve_config(args)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7E57]))
    models = []
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint, allow_invalid=True)
        models.append((model, f"checkpoint:{os.path.basename(args.checkpoint)}"))
    else:
        matroids = [
            Matroid.free(),
            Matroid.uniform(3),
            Matroid.partition(
                [list(range(0, args.items // 2)), list(range(args.items // 2, args.items))],
                [2, 1],
            ),
        ]
        for i in range(args.random):
            model = init_model(
                d_in=3,
                agg_width=6,
                pillar_hidden=(8,) * (1 + i % 2),
                roof_hidden=(6,) if i % 3 else (6, 4),
                matroid=matroids[i % len(matroids)],
                rng=rng,
            )
            models.append((model, f"random:{i}"))

    all_failures: list[str] = []
    for model, tag in models:
        failures = _verify_one(
            model, tag, args.items, args.tol, args.perm_trials, args.grad_checks, rng
        )
        status = "FAIL" if failures else "PASS"
        print(f"[{status}] {tag}")
        for line in failures:
            print(f"    {line}")
        all_failures.extend(failures)
    if all_failures:
        print(f"verification failed: {len(all_failures)} finding(s)")
        return EXIT_VERIFY
    print("verification passed")
    return EXIT_OK


def cmd_report(args) -> int:
    if args.merge:
        rows: list[str] = []
        header = None
        provenance: list[str] = []
        for path in args.merge:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    if line.startswith("#"):
                        provenance.append(f"# from {os.path.basename(path)}: {line[1:].strip()}")
                        continue
                    if line.startswith("kind,"):
                        header = line
                        continue
                    rows.append(line)
        if header is None:
            raise FormatError("no long-format header found in the inputs (merge expects *_long.csv files)")
        text = "\n".join(provenance + [header] + rows) + "\n"
        if args.out:
            _write(args.out, text)
        else:
            sys.stdout.write(text)
        return EXIT_OK

    if args.features is None:
        raise ConfigError("report needs either --merge or --features")
    model, _ = load_checkpoint(args.checkpoint)
    gs = _load_groundset(args.data, args.labels)
    features = [int(x) for x in args.features.split(",") if x.strip()]
    rep = feature_ranking_report(model, gs, features, top_k=args.top)
    text = rep.to_text(gs.labels)
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dspn",
        description="Learn and use monotone submodular set functions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate synthetic clustered data files")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--imbalance", action="store_true", help="apply long-tailed duplication")
    _add_config_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model against the target oracle")
    p.add_argument("--data", required=True, help="embeddings file")
    p.add_argument("--labels", required=True, help="labels file")
    p.add_argument("--out", required=True, help="output directory")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("summarize", help="select a subset with a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--labels", default=None)
    p.add_argument("--budget", required=True, type=int)
    p.add_argument("--mode", choices=("offline", "stream"), default="offline")
    p.add_argument("--out", default=None, help="write indices here instead of stdout")
    _add_config_flags(p)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval-transfer", help="normalized target value of model summaries")
    p.add_argument("--eval-data", required=True)
    p.add_argument("--eval-labels", default=None)
    p.add_argument("--model", action="append", required=True, help="name=checkpoint, repeatable")
    p.add_argument("--out", required=True, help="output CSV prefix")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval_transfer)

    p = sub.add_parser("eval-design", help="selection quality via a linear probe")
    p.add_argument("--mode", choices=("offline", "online"), required=True)
    p.add_argument("--pool-data", required=True)
    p.add_argument("--pool-labels", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--test-labels", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--imbalance", action="store_true", help="duplicate the pool long-tailed first")
    p.add_argument("--out", required=True, help="output CSV prefix")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval_design)

    p = sub.add_parser("verify", help="check submodularity, invariance, gradients")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--random", type=int, default=5, help="number of random models when no checkpoint")
    p.add_argument("--items", type=int, default=8, help="brute-force universe size")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--perm-trials", type=int, default=100)
    p.add_argument("--grad-checks", type=int, default=3)
    _add_config_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("report", help="merge eval CSVs or rank items by feature")
    p.add_argument("--merge", nargs="+", default=None, help="long-format CSVs to merge")
    p.add_argument("--features", default=None, help="comma-separated pillar feature indices")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--labels", default=None)
    p.add_argument("--top", type=int, default=10)
    p.add_argument("--out", default=None)
    _add_config_flags(p)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FormatError as exc:
        print(f"file format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
