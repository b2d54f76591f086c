"""Multi-seed runs, the ablation table and parameter sweeps."""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import Dataset, save_labels
from .graph import build_knn_graph, save_edge_list
from .metrics import METRIC_NAMES
from .model import ModelParams, save_checkpoint
from .trainer import ClusteringReport, TrainConfig, run_pipeline


@dataclass
class SeedResult:
    seed: int
    report: ClusteringReport
    params: ModelParams
    seconds: float


@dataclass
class RunReport:
    config: TrainConfig
    dataset: Dataset
    graph_source: str
    results: list[SeedResult] = field(default_factory=list)

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.results]

    def metric_values(self, name: str) -> np.ndarray:
        return np.array([r.report.metrics[name] for r in self.results if r.report.metrics])

    def summary(self) -> dict[str, tuple[float, float | None]]:
        """Mean and (for several seeds) population std of each metric."""
        if self.dataset.labels is None:
            return {}
        out = {}
        for name in METRIC_NAMES:
            vals = self.metric_values(name)
            out[name] = (float(vals.mean()), float(vals.std()) if len(vals) > 1 else None)
        return out

    def median(self, name: str) -> float:
        return float(np.median(self.metric_values(name)))


def pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def pct_summary(mean: float, std: float | None) -> str:
    return pct(mean) if std is None else f"{pct(mean)}±{pct(std)}"


def resolve_graph(ds: Dataset, knn: int | None, row_cosine: bool = False) -> tuple[Dataset, str]:
    if ds.graph is not None:
        return ds, "file"
    if knn is None:
        raise ValueError("either a graph file or a KNN size is required")
    graph = build_knn_graph(ds.features, knn, row_cosine=row_cosine)
    kind = "row-cosine" if row_cosine else "frobenius"
    return dataclasses.replace(ds, graph=graph), f"knn(k_hat={knn}, similarity={kind})"


def run_seeds(config: TrainConfig, ds: Dataset, seeds: list[int], graph_source: str = "file") -> RunReport:
    report = RunReport(config, ds, graph_source)
    for seed in seeds:
        cfg = dataclasses.replace(config, seed=seed)
        start = time.perf_counter()
        params, rep = run_pipeline(cfg, ds.features, ds.graph, ds.labels)
        report.results.append(SeedResult(seed, rep, params, time.perf_counter() - start))
    return report


# ---------------------------------------------------------------------------
# report files

_CONFIG_KEYS = (
    "n_clusters",
    "dims",
    "pretrain_epochs",
    "pretrain_lr",
    "joint_iterations",
    "joint_lr",
    "batch_size",
    "hwf_attention",
    "swf_attention",
    "dwf",
    "detach_q",
)


def config_lines(cfg: TrainConfig) -> list[str]:
    lines = []
    for key in _CONFIG_KEYS:
        val = getattr(cfg, key)
        if key == "dims":
            val = "-".join(str(d) for d in val)
        lines.append(f"{key}: {val}")
    for key, val in dataclasses.asdict(cfg.hyper).items():
        lines.append(f"{key}: {val!r}")
    return lines


LOG_HEADER = ("iteration", "recon", "soft", "hard", "total", "selected") + METRIC_NAMES


def log_lines(rep: ClusteringReport) -> list[str]:
    lines = ["\t".join(LOG_HEADER)]
    for rec in rep.log:
        ls = rec.losses
        row = [str(rec.iteration), repr(ls.recon), repr(ls.soft), repr(ls.hard), repr(ls.total), str(ls.selected_count)]
        row += [repr(rec.metrics[m]) for m in METRIC_NAMES] if rec.metrics else ["" for _ in METRIC_NAMES]
        lines.append("\t".join(row))
    return lines


def report_text(report: RunReport, command: str = "train") -> str:
    ds = report.dataset
    lines = [
        "# DAGC run report",
        f"command: {command}",
        f"dataset: {ds.name}",
        f"samples: {ds.n}",
        f"dimension: {ds.features.shape[1]}",
        f"graph: {report.graph_source}",
        f"edges: {len(ds.graph.edges()) if ds.graph is not None else 0}",
        f"seeds: {','.join(str(s) for s in report.seeds)}",
    ]
    lines += config_lines(report.config)
    lines.append("")
    lines.append("[runs]")
    header = ["seed", "final_total_loss", "selected"]
    if ds.labels is not None:
        header += list(METRIC_NAMES)
    lines.append("\t".join(header))
    for r in report.results:
        last = r.report.log[-1].losses
        row = [str(r.seed), repr(last.total), str(last.selected_count)]
        if r.report.metrics:
            row += [pct(r.report.metrics[m]) for m in METRIC_NAMES]
        lines.append("\t".join(row))
    summary = report.summary()
    if summary:
        lines.append("")
        lines.append("[summary]")
        for name, (mean, std) in summary.items():
            lines.append(f"{name}: {pct_summary(mean, std)}")
    return "\n".join(lines) + "\n"


def write_run(report: RunReport, out_dir, command: str = "train") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for r in report.results:
        seed_dir = out / f"seed_{r.seed}"
        seed_dir.mkdir(exist_ok=True)
        save_labels(r.report.labels, seed_dir / "labels.txt")
        save_checkpoint(r.params, seed_dir / "checkpoint.dagc")
        (seed_dir / "train_log.tsv").write_text("\n".join(log_lines(r.report)) + "\n")
    if report.graph_source != "file" and report.dataset.graph is not None:
        save_edge_list(report.dataset.graph, out / "graph.txt")
    (out / "report.txt").write_text(report_text(report, command))
    # wall-clock lives apart from the report so reports stay byte-reproducible
    timing = "\n".join(f"seed_{r.seed}\t{r.seconds:.3f}" for r in report.results)
    (out / "timing.txt").write_text("seed\tseconds\n" + timing + "\n")
    return out / "report.txt"


# ---------------------------------------------------------------------------
# ablation


@dataclass(frozen=True)
class AblationRow:
    name: str
    hss: bool
    dwf: bool
    sss: bool
    hswf: bool


ABLATION_ROWS = (
    AblationRow("baseline", False, False, False, False),
    AblationRow("+H+SWF", False, False, False, True),
    AblationRow("+SSS", False, False, True, True),
    AblationRow("+DWF", False, True, True, True),
    AblationRow("+HSS", True, True, True, True),
)


def ablation_config(base: TrainConfig, row: AblationRow) -> TrainConfig:
    """Switch components off: attention -> fixed equal weights, SSS -> no KL(Z||Q)
    term, DWF -> final distribution is Z, HSS -> no pseudo-label loss."""
    hyper = dataclasses.replace(
        base.hyper,
        lambda2=base.hyper.lambda2 if row.sss else 0.0,
        lambda3=base.hyper.lambda3 if row.hss else 0.0,
    )
    return dataclasses.replace(
        base, hyper=hyper, hwf_attention=row.hswf, swf_attention=row.hswf, dwf=row.dwf
    )


def run_ablation(base: TrainConfig, ds: Dataset, seeds: list[int], graph_source="file", on_row=None):
    results = []
    for row in ABLATION_ROWS:
        rep = run_seeds(ablation_config(base, row), ds, seeds, graph_source)
        results.append((row, rep))
        if on_row is not None:
            on_row(row, rep)
    return results


def ablation_table(results) -> str:
    mark = {True: "✓", False: ""}
    lines = ["\t".join(("row", "HSS", "DWF", "SSS", "H+SWF") + METRIC_NAMES)]
    for row, rep in results:
        summary = rep.summary()
        cells = [row.name, mark[row.hss], mark[row.dwf], mark[row.sss], mark[row.hswf]]
        cells += [pct_summary(*summary[m]) if summary else "" for m in METRIC_NAMES]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = ("lambda1", "lambda2", "lambda3", "threshold", "knn", "lambdas")


def parse_sweep_values(param: str, text: str):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if not items:
        raise ValueError("no sweep values given")
    if param == "knn":
        return [int(t) for t in items]
    if param == "lambdas":
        out = []
        for t in items:
            parts = t.split(":")
            if len(parts) != 3:
                raise ValueError(f"lambda tuple {t!r} must look like l1:l2:l3")
            out.append(tuple(float(p) for p in parts))
        return out
    return [float(t) for t in items]


def sweep_config(base: TrainConfig, param: str, value) -> TrainConfig:
    h = base.hyper
    if param in ("lambda1", "lambda2", "lambda3"):
        h = dataclasses.replace(h, **{param: value})
    elif param == "threshold":
        h = dataclasses.replace(h, r=value)
    elif param == "lambdas":
        h = dataclasses.replace(h, lambda1=value[0], lambda2=value[1], lambda3=value[2])
    return dataclasses.replace(base, hyper=h)


def sweep_table(param: str, results) -> str:
    if param == "lambdas":
        head = ["lambda1", "lambda2", "lambda3"]
    else:
        head = [param]
    lines = ["\t".join(head + list(METRIC_NAMES))]
    for value, rep in results:
        cells = [repr(v) for v in value] if param == "lambdas" else [repr(value)]
        summary = rep.summary()
        cells += [pct_summary(*summary[m]) if summary else "" for m in METRIC_NAMES]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def lambda_grid_tables(results) -> dict[str, str]:
    """One 4-column (lambda1, lambda2, lambda3, metric mean) table per metric."""
    tables = {}
    for m in METRIC_NAMES:
        lines = ["\t".join(("lambda1", "lambda2", "lambda3", m))]
        for value, rep in results:
            summary = rep.summary()
            mean = pct(summary[m][0]) if summary else ""
            lines.append("\t".join([repr(v) for v in value] + [mean]))
        tables[m] = "\n".join(lines) + "\n"
    return tables
