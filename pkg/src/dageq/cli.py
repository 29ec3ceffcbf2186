"""Command-line entry point: dataset generation, training, evaluation, and
structure discovery on real CSV data.

    dageq gen      --config exp.cfg [--out DIR] [--seed N] [--threads N]
    dageq train    --config exp.cfg [--out DIR] [--seed N] [--resume]
    dageq eval     --checkpoint ckpt (--data file.bin | --config exp.cfg) [--out DIR]
    dageq discover --checkpoint ckpt --data samples.csv [--truth edges.csv] [--out DIR]

Dataset files live in the --out directory as dataset_<type>_d<d>.bin; train
reads them from there and writes checkpoint.bin plus history.csv next to
them. --seed overrides the config seed for the command's own randomness
(generation or training); the dataset fingerprint check always compares
against the seed written in the config file. Exit codes: 0 success, 2 usage
or configuration error (including missing files), 3 runtime error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import eqnet, io
from .discover import evaluate, greedy_dag, score_graph
from .featurize import DegenerateDataError, Dataset, build_dataset, correlation
from .io import ConfigError, FileFormatError
from .train import fit

CHECKPOINT_NAME = "checkpoint.bin"
HISTORY_NAME = "history.csv"
REPORT_NAME = "report.csv"
EDGES_NAME = "edges.csv"


def dataset_filename(graph_type: str, d: int) -> str:
    return f"dataset_{graph_type}_d{d}.bin"


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("DAGEQ_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"DAGEQ_THREADS must be an integer, got {env!r}") from None
    return 1


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config(args) -> io.ExperimentConfig:
    if not Path(args.config).exists():
        raise FileNotFoundError(f"config file not found: {args.config}")
    return io.parse_config(args.config)


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    seed = cfg.seed if args.seed is None else args.seed
    threads = _threads(args)
    for d in cfg.d:
        ds = build_dataset(cfg.dataset_config(d), seed, threads=threads)
        path = out / dataset_filename(cfg.graph_type, d)
        io.save_dataset(ds, path)
        edges = [ex.label.num_edges for ex in ds.train + ds.test]
        print(
            f"wrote {path}: {len(ds.train)} train / {len(ds.test)} test examples, "
            f"d={d}, mean edges {np.mean(edges):.2f}"
        )
    return 0


def _fingerprint_mismatches(ds: Dataset, cfg: io.ExperimentConfig, d: int) -> list[str]:
    want = cfg.dataset_config(d)
    problems = []
    if ds.config != want:
        for name in ("graph_type", "d", "k", "noise", "num_graphs", "samples", "split", "num_edges"):
            have, need = getattr(ds.config, name), getattr(want, name)
            if have != need:
                problems.append(f"{name}: dataset has {have}, config wants {need}")
    if ds.base_seed != cfg.seed:
        problems.append(f"seed: dataset has {ds.base_seed}, config wants {cfg.seed}")
    return problems


def _load_shards(cfg: io.ExperimentConfig, out: Path) -> list[Dataset]:
    shards = []
    for d in cfg.d:
        path = out / dataset_filename(cfg.graph_type, d)
        if not path.exists():
            raise FileNotFoundError(f"dataset file not found: {path} (run 'dageq gen' first)")
        ds = io.load_dataset(path)
        problems = _fingerprint_mismatches(ds, cfg, d)
        if problems:
            detail = "; ".join(problems)
            raise ConfigError(f"{path} does not match the config fingerprint: {detail}")
        shards.append(ds)
    return shards


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    shards = _load_shards(cfg, out)
    train_cfg = cfg.train_config()
    if args.seed is not None:
        train_cfg = replace(train_cfg, seed=args.seed)

    model = adam = None
    ckpt_path = out / CHECKPOINT_NAME
    if args.resume:
        if not ckpt_path.exists():
            raise FileNotFoundError(f"cannot resume: {ckpt_path} does not exist")
        model, adam, _ = io.load_checkpoint(ckpt_path)
        kind = "eq" if isinstance(model, eqnet.EqModel) else "fc"
        if kind != cfg.model:
            raise ConfigError(f"checkpoint holds a {kind!r} model but config says model={cfg.model}")
        print(f"resuming from {ckpt_path} (adam step {adam.step if adam else 0})")

    model, history, adam = fit(shards, train_cfg, model, adam)
    meta = {
        "graph_type": cfg.graph_type,
        "d": ",".join(str(d) for d in cfg.d),
        "k": format(cfg.k, "g"),
        "noise": str(cfg.noise),
        "model": cfg.model,
        "seed": str(train_cfg.seed),
    }
    io.save_checkpoint(model, ckpt_path, adam=adam, meta=meta)
    io.write_history(out / HISTORY_NAME, history)
    if history:
        last = history[-1]
        best = min((h.val_loss for h in history), default=float("nan"))
        print(
            f"trained {len(history)} epochs; final train loss {last.train_loss:.4f}, "
            f"best val loss {best:.4f}, val precision {last.val_prec:.3f}, "
            f"recall {last.val_recall:.3f}, shd {last.val_shd:.2f}"
        )
    print(f"wrote {ckpt_path} and {out / HISTORY_NAME}")
    return 0


def cmd_eval(args) -> int:
    if not Path(args.checkpoint).exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    model, _, _ = io.load_checkpoint(args.checkpoint)
    out = _out_dir(args)
    threads = _threads(args)

    threshold = 0.5
    if args.data:
        examples = []
        for path in args.data:
            if not Path(path).exists():
                raise FileNotFoundError(f"dataset file not found: {path}")
            examples.extend(io.load_dataset(path).test)
        source = ", ".join(args.data)
    elif args.config:
        cfg = _load_config(args)
        threshold = cfg.threshold
        seed = cfg.seed if args.seed is None else args.seed
        examples = []
        for d in cfg.d:
            ds = build_dataset(cfg.dataset_config(d), seed, threads=threads, test_only=True)
            examples.extend(ds.test)
        source = f"fresh test split from {args.config}"
    else:
        raise ConfigError("eval needs --data dataset file(s) or --config to generate a test set")

    report = evaluate(model, examples, threshold=threshold, threads=threads)
    io.write_report(out / REPORT_NAME, report)
    print(f"evaluated {len(examples)} graphs ({source})")
    print(io.format_report(report))
    print(f"wrote {out / REPORT_NAME}")
    return 0


def cmd_discover(args) -> int:
    if not Path(args.checkpoint).exists():
        raise FileNotFoundError(f"checkpoint not found: {args.checkpoint}")
    if not Path(args.data).exists():
        raise FileNotFoundError(f"data file not found: {args.data}")
    model, _, _ = io.load_checkpoint(args.checkpoint)
    names, data = io.read_csv_data(args.data)
    try:
        feature = correlation(data)
    except DegenerateDataError as exc:
        raise FileFormatError(
            f"{args.data}: column {names[exc.column]!r} has zero variance"
        ) from exc
    if isinstance(model, eqnet.FcModel):
        prob = eqnet.fc_forward(feature, model)
    else:
        prob = eqnet.model_forward(feature, model)
    dag = greedy_dag(prob, args.threshold)

    out = _out_dir(args)
    edges_path = out / EDGES_NAME
    with open(edges_path, "w", newline="") as f:
        f.write("source,target,probability\n")
        for src, dst in dag.edges():
            f.write(f"{names[src]},{names[dst]},{prob[src, dst]:.6f}\n")
    print(f"{len(names)} variables, {data.n} rows -> {dag.num_edges} edges")
    for src, dst in dag.edges():
        print(f"  {names[src]} -> {names[dst]}  ({prob[src, dst]:.3f})")
    print(f"wrote {edges_path}")

    if args.truth:
        if not Path(args.truth).exists():
            raise FileNotFoundError(f"truth file not found: {args.truth}")
        truth = io.read_edge_list(args.truth, names)
        g = score_graph(dag, truth)
        print(
            f"against truth: precision {g.precision:.3f}, recall {g.recall:.3f}, "
            f"shd {g.shd} (true edges {g.true_edges})"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dageq",
        description="Supervised whole-DAG structure discovery from correlation matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required: bool):
        p.add_argument("--config", required=config_required, help="experiment config file")
        p.add_argument("--seed", type=int, help="override the config seed for this run")
        p.add_argument("--threads", type=int, help="worker threads (env DAGEQ_THREADS as fallback)")
        p.add_argument("--out", default=".", help="output directory (default: current)")

    p = sub.add_parser("gen", help="generate dataset files from a config")
    common(p, config_required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a model on generated dataset files")
    common(p, config_required=True)
    p.add_argument("--resume", action="store_true", help="continue from an existing checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test set")
    common(p, config_required=False)
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--data", nargs="*", help="dataset file(s); their test splits are used")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("discover", help="decode a DAG from a CSV of samples")
    common(p, config_required=False)
    p.add_argument("--checkpoint", required=True, help="model checkpoint file")
    p.add_argument("--data", required=True, help="CSV with a header row of variable names")
    p.add_argument("--truth", help="ground-truth edge list CSV for scoring")
    p.add_argument("--threshold", type=float, default=0.5, help="edge probability cutoff")
    p.set_defaults(func=cmd_discover)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in 64 bits", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileFormatError, ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
