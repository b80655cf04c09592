"""``dysign`` command-line tool: train, eval, diagnose and sweep.

Exit codes: 0 success, 1 diagnostic failure, 2 configuration or checkpoint
error, 3 data error, 4 numeric divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .checkpoint import load_checkpoint
from .config import RunConfig
from .errors import CheckpointError, ConfigError, DataError, DivergenceError, ValidationError
from .graph import IngestConfig, load_dynamic_graph, load_manifest
from .metrics import evaluate, lambda_sweep, make_splits, write_table
from .training import train

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3, 4

log = logging.getLogger("dysign")


def _floats(text):
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common(p):
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("-v", "--verbose", action="store_true")


def _data(p):
    g = p.add_argument_group("data")
    g.add_argument("--edges")
    g.add_argument("--labels")
    g.add_argument("--features")
    g.add_argument("--manifest")
    g.add_argument("--mode", choices=["cumulative", "windowed"])
    g.add_argument("--num-nodes", dest="num_nodes", type=int)
    g.add_argument("--num-steps", dest="num_steps", type=int)
    g.add_argument("--num-classes", dest="num_classes", type=int)
    g.add_argument("--feature-dim", dest="feature_dim", type=int)
    g.add_argument("--ratio", type=float, help="training ratio (default 0.4)")
    g.add_argument("--val-ratio", dest="val_ratio", type=float)


def _model(p):
    g = p.add_argument_group("model and optimization")
    g.add_argument("--lr", type=float)
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--hidden", type=int)
    g.add_argument("--num-layers", dest="num_layers", type=int)
    g.add_argument("--optimizer", choices=["adam", "sgd"])
    g.add_argument("--encoding", choices=["bernoulli", "direct"])
    g.add_argument("--patience", type=int)
    g.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    g.add_argument("--no-wall-time", dest="log_wall_time", action="store_const", const=False)
    g.add_argument("--K", type=int, help="latency steps per time step")
    g.add_argument("--lam", type=float, help="leak factor")
    g.add_argument("--v-th", dest="v_th", type=float)
    g.add_argument("--reset-mode", dest="reset_mode", choices=["soft", "hard"])
    g.add_argument("--gamma", type=float, help="surrogate half-width")


def build_parser():
    parser = argparse.ArgumentParser(prog="dysign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics log")
    _common(p)
    _data(p)
    _model(p)

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    _common(p)
    _data(p)
    p.add_argument("--checkpoint")
    p.add_argument("--mask", choices=["train", "val", "test"])

    p = sub.add_parser("diagnose", help="run the seeded property suites")
    _common(p)
    p.add_argument("--suite", action="append", choices=["trace", "concentration", "residual", "gradient", "equivariance", "all"])
    p.add_argument("--K", dest="diag_K", type=int, help="latency window of the concentration suite")

    p = sub.add_parser("sweep", help="train once per leak factor and tabulate test scores")
    _common(p)
    _data(p)
    _model(p)
    p.add_argument("--lambda-values", dest="lambda_values", type=_floats)
    return parser


NON_CONFIG = {"command", "config", "verbose", "suite", "diag_K"}


def resolve_config(args):
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {k: v for k, v in vars(args).items() if k not in NON_CONFIG and v is not None}
    return cfg.merged(overrides, source="command line").validate()


def load_graph(cfg):
    if not cfg.edges or not cfg.labels:
        raise ConfigError("both --edges and --labels are required")
    ingest = cfg.ingest()
    if cfg.manifest:
        # explicit sizes win over the manifest; the manifest's feature_dim wins over the default
        sizes = {k: getattr(ingest, k) for k in ("num_nodes", "num_steps", "num_classes")}
        ingest = IngestConfig.from_manifest(cfg.manifest, mode=ingest.mode, **sizes)
        if "feature_dim" not in load_manifest(cfg.manifest):
            ingest = replace(ingest, feature_dim=cfg.feature_dim)
    return load_dynamic_graph(cfg.edges, cfg.labels, cfg.features, ingest)


def cmd_train(cfg):
    graph = load_graph(cfg)
    try:
        graph = graph.with_splits(make_splits(graph, cfg.split()))
    except ValidationError as exc:
        raise DataError(str(exc)) from None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    tcfg = cfg.train()
    run = train(graph, tcfg, out_dir=out)
    print(f"trained {run.epoch} epochs on {graph.num_nodes} nodes x {graph.num_steps} steps")
    if run.metrics:
        last = run.metrics[-1]
        print(f"final loss {last['loss']:.6f}  val macro-F1 {last['val_macro_f1']}  val micro-F1 {last['val_micro_f1']}")
    if graph.mask("test").any():
        macro, micro = evaluate(graph, run.params, tcfg.seed, "test", tcfg.direct)
        print(f"test macro-F1 {macro:.4f}  micro-F1 {micro:.4f}")
    print(f"checkpoint: {out / 'checkpoint.ckpt'}")
    print(f"metrics log: {out / 'metrics.jsonl'}")
    return EXIT_OK


def cmd_eval(cfg):
    ckpt = Path(cfg.checkpoint) if cfg.checkpoint else Path(cfg.out_dir) / "checkpoint.ckpt"
    run = load_checkpoint(ckpt)
    graph = load_graph(cfg)
    shape = {"num_nodes": graph.num_nodes, "num_steps": graph.num_steps, "feature_dim": graph.feature_dim, "num_classes": graph.num_classes}
    if shape != run.graph_shape:
        raise ConfigError(f"checkpoint was trained on {run.graph_shape}, dataset has {shape}")
    graph = graph.with_splits(run.masks)
    if not graph.mask(cfg.mask).any():
        raise ConfigError(f"mask {cfg.mask!r} is empty in this checkpoint")
    macro, micro = evaluate(graph, run.params, run.config.seed, cfg.mask, run.config.direct)
    report = {"checkpoint": str(ckpt), "mask": cfg.mask, "epoch": run.epoch, "macro_f1": macro, "micro_f1": micro}
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval_{cfg.mask}.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"{cfg.mask} macro-F1 {macro:.4f}  micro-F1 {micro:.4f}")
    return EXIT_OK


def cmd_diagnose(cfg, suites, diag_K):
    from .diagnostics import SUITES, run_suites

    names = list(SUITES) if not suites or "all" in suites else list(dict.fromkeys(suites))
    kwargs = {"K": diag_K} if diag_K else {}
    results = run_suites(names, seed=cfg.seed, **kwargs)
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.summary}  [{r.seconds:.2f}s]")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = [
        {"suite": r.name, "passed": r.passed, "summary": r.summary, "seconds": r.seconds, "details": r.details}
        for r in results
    ]
    (out / "diagnose.json").write_text(json.dumps(report, indent=2, default=float) + "\n", encoding="utf-8")
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def cmd_sweep(cfg):
    graph = load_graph(cfg)
    try:
        graph = graph.with_splits(make_splits(graph, cfg.split()))
    except ValidationError as exc:
        raise DataError(str(exc)) from None
    rows = lambda_sweep(graph, cfg.train())
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table(rows, out / "sweep.tsv", out / "sweep.json")
    print("lambda\tmacro_f1\tmicro_f1")
    for r in rows:
        print(f"{r['lambda']:g}\t{r['macro_f1']:.4f}\t{r['micro_f1']:.4f}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "diagnose":
            return cmd_diagnose(cfg, args.suite, args.diag_K)
        return cmd_sweep(cfg)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
