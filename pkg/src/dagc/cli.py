"""Command-line entry point: ``dagc <subcommand> ...``.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import harness
from .data import Dataset, SynthConfig, load_features, load_labels, make_synthetic, read_dataset, standardize, write_dataset
from .errors import DagcError, DivergenceError
from .graph import DEFAULT_KNN, build_knn_graph, save_edge_list
from .losses import Hyperparams
from .metrics import METRIC_NAMES, evaluate
from .model import DEFAULT_DIMS
from .trainer import ALTERNATE_LR, TrainConfig

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3

log = logging.getLogger("dagc")


class UsageError(Exception):
    pass


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(t) for t in text.replace(",", "-").split("-") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad layer dims {text!r}") from None
    if not dims or min(dims) < 1:
        raise argparse.ArgumentTypeError(f"bad layer dims {text!r}")
    return dims


def _add_data_args(p: argparse.ArgumentParser):
    p.add_argument("--features", required=True, help="CSV or DMAT feature matrix")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--graph", help="edge-list file (0-indexed 'u v' pairs)")
    g.add_argument("--knn", type=int, help="build a KNN graph with this many neighbours")
    p.add_argument("--labels", help="ground-truth labels, one integer per line")
    p.add_argument("--row-cosine", action="store_true", help="per-row cosine similarity for --knn")
    p.add_argument("--standardize", action="store_true", help="zero-mean unit-variance feature columns")


def _add_train_args(p: argparse.ArgumentParser):
    p.add_argument("--clusters", "-k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds to run")
    p.add_argument("--lambda1", type=float, default=Hyperparams.lambda1)
    p.add_argument("--lambda2", type=float, default=Hyperparams.lambda2)
    p.add_argument("--lambda3", type=float, default=Hyperparams.lambda3)
    p.add_argument("--threshold", type=float, default=Hyperparams.r)
    p.add_argument("--alpha", type=float, default=Hyperparams.alpha)
    p.add_argument("--lr", type=float, default=1e-3, help=f"joint-phase learning rate ({ALTERNATE_LR:g} suits some larger datasets)")
    p.add_argument("--pretrain-lr", type=float, default=1e-3)
    p.add_argument("--pretrain-epochs", type=int, default=30)
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--dims", type=_dims, default=DEFAULT_DIMS, help="layer widths, e.g. 500-500-2000-10")
    p.add_argument("--detach-q", action="store_true", help="stop gradients flowing through Q")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dagc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="write a KNN graph for a feature matrix")
    p.add_argument("--features", required=True)
    p.add_argument("--knn", type=int, default=DEFAULT_KNN)
    p.add_argument("--out", required=True)
    p.add_argument("--row-cosine", action="store_true")
    p.add_argument("--standardize", action="store_true")

    p = sub.add_parser("train", help="pretrain and train, one run per seed")
    _add_data_args(p)
    _add_train_args(p)

    p = sub.add_parser("evaluate", help="score predicted labels against ground truth")
    p.add_argument("--labels", required=True)
    p.add_argument("--pred", required=True)

    p = sub.add_parser("ablate", help="run the five ablation configurations")
    _add_data_args(p)
    _add_train_args(p)

    p = sub.add_parser("sweep", help="one run per parameter value")
    _add_data_args(p)
    _add_train_args(p)
    p.add_argument("--param", choices=harness.SWEEP_PARAMS, required=True)
    p.add_argument("--values", required=True, help="comma-separated; lambdas take l1:l2:l3 tuples")

    p = sub.add_parser("synth", help="generate the stochastic-block-model benchmark")
    d = SynthConfig()
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--k", type=int, default=d.k)
    p.add_argument("--p-in", type=float, default=d.p_in)
    p.add_argument("--p-out", type=float, default=d.p_out)
    p.add_argument("--sep", type=float, default=d.sep)
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", required=True)
    return parser


def _train_config(args) -> TrainConfig:
    if args.clusters < 2:
        raise UsageError("--clusters must be at least 2")
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    hyper = Hyperparams(args.lambda1, args.lambda2, args.lambda3, args.threshold, args.alpha)
    return TrainConfig(
        n_clusters=args.clusters,
        dims=args.dims,
        pretrain_epochs=args.pretrain_epochs,
        pretrain_lr=args.pretrain_lr,
        joint_iterations=args.iterations,
        joint_lr=args.lr,
        batch_size=args.batch_size,
        seed=args.seed,
        hyper=hyper,
        detach_q=args.detach_q,
    )


def _load(args, require_graph=True) -> tuple[Dataset, str]:
    ds = read_dataset(args.features, args.graph, args.labels, name=Path(args.features).name)
    if args.standardize:
        ds = dataclasses.replace(ds, features=standardize(ds.features))
    if ds.graph is None and args.knn is None:
        if require_graph:
            raise UsageError("either --graph or --knn is required")
        return ds, ""
    return harness.resolve_graph(ds, args.knn, args.row_cosine)


def _seeds(args) -> list[int]:
    return list(range(args.seed, args.seed + args.seeds))


def cmd_build_graph(args) -> int:
    x = load_features(args.features)
    if args.standardize:
        x = standardize(x)
    graph = build_knn_graph(x, args.knn, row_cosine=args.row_cosine)
    save_edge_list(graph, args.out)
    print(f"wrote {len(graph.edges())} edges for {graph.n} nodes to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _train_config(args)
    ds, source = _load(args)
    report = harness.run_seeds(cfg, ds, _seeds(args), source)
    path = harness.write_run(report, args.out)
    for name, (mean, std) in report.summary().items():
        print(f"{name}\t{harness.pct_summary(mean, std)}")
    print(f"report: {path}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    truth = load_labels(args.labels)
    pred = load_labels(args.pred)
    if len(truth) != len(pred):
        raise UsageError(f"{len(truth)} true labels but {len(pred)} predictions")
    scores = evaluate(truth, pred)
    for name in METRIC_NAMES:
        print(f"{name}\t{harness.pct(scores[name])}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _train_config(args)
    ds, source = _load(args)
    out = Path(args.out)
    results = harness.run_ablation(
        cfg,
        ds,
        _seeds(args),
        source,
        on_row=lambda row, rep: harness.write_run(rep, out / row.name.strip("+").replace("+", "_"), "ablate"),
    )
    table = harness.ablation_table(results)
    (out / "ablation.tsv").write_text(table)
    print(table, end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _train_config(args)
    try:
        values = harness.parse_sweep_values(args.param, args.values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.param == "knn" and args.graph:
        raise UsageError("a knn sweep needs non-graph data (omit --graph)")
    ds, source = _load(args, require_graph=args.param != "knn")
    base_ds = dataclasses.replace(ds, graph=None) if args.param == "knn" else ds
    out = Path(args.out)
    results = []
    for value in values:
        run_cfg = harness.sweep_config(cfg, args.param, value)
        run_ds, run_source = base_ds, source
        if args.param == "knn":
            run_ds, run_source = harness.resolve_graph(base_ds, value, args.row_cosine)
        rep = harness.run_seeds(run_cfg, run_ds, _seeds(args), run_source)
        tag = "_".join(str(v) for v in value) if isinstance(value, tuple) else str(value)
        harness.write_run(rep, out / f"{args.param}_{tag}", "sweep")
        results.append((value, rep))
    table = harness.sweep_table(args.param, results)
    (out / "sweep.tsv").write_text(table)
    if args.param == "lambdas":
        for metric, text in harness.lambda_grid_tables(results).items():
            (out / f"lambda_grid_{metric}.tsv").write_text(text)
    print(table, end="")
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = SynthConfig(args.n, args.k, args.p_in, args.p_out, args.sep, args.dim, args.seed)
    paths = write_dataset(make_synthetic(cfg), args.out)
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return EXIT_OK


COMMANDS = {
    "build-graph": cmd_build_graph,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DivergenceError as exc:
        print(f"dagc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DagcError, OSError, ValueError) as exc:
        print(f"dagc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
