"""Dataset files and the synthetic stochastic-block-model benchmark."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError, ParseError
from .graph import SparseAdjacency, load_edge_list, save_edge_list

DMAT_MAGIC = b"DMAT"


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    graph: SparseAdjacency | None = None
    name: str = "dataset"

    def __post_init__(self):
        n = self.features.shape[0]
        if self.labels is not None and len(self.labels) != n:
            raise ParameterError(f"{len(self.labels)} labels for {n} samples")
        if self.graph is not None and self.graph.n != n:
            raise ParameterError(f"graph has {self.graph.n} nodes for {n} samples")

    @property
    def n(self) -> int:
        return self.features.shape[0]


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def load_features(path) -> np.ndarray:
    """Read a CSV (optional header row) or a ``DMAT`` binary matrix."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == DMAT_MAGIC:
        raw = path.read_bytes()
        if len(raw) < 20:
            raise ParseError("truncated DMAT header")
        rows, cols = struct.unpack_from("<QQ", raw, 4)
        if len(raw) != 20 + rows * cols * 8:
            raise ParseError(f"DMAT payload size does not match {rows}x{cols}")
        return np.frombuffer(raw, dtype="<f8", offset=20).reshape(rows, cols).astype(np.float64)
    rows = []
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if not rows and lineno == 1 and not all(_is_number(c) for c in rec):
                continue  # header
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise ParseError(f"non-numeric feature value in {rec!r}", lineno) from None
            if len(rows[-1]) != len(rows[0]):
                raise ParseError(f"expected {len(rows[0])} columns, got {len(rows[-1])}", lineno)
    if not rows:
        raise ParseError("feature file contains no rows")
    return np.array(rows, dtype=np.float64)


def save_features_csv(x, path) -> None:
    x = np.asarray(x, dtype=np.float64)
    with open(path, "w") as fh:
        for row in x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def save_features_binary(x, path) -> None:
    x = np.ascontiguousarray(x, dtype="<f8")
    Path(path).write_bytes(DMAT_MAGIC + struct.pack("<QQ", *x.shape) + x.tobytes())


def load_labels(path) -> np.ndarray:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                out.append(int(line))
            except ValueError:
                raise ParseError(f"label is not an integer: {line!r}", lineno) from None
    return np.array(out, dtype=np.int64)


def save_labels(labels, path) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def standardize(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    std = x.std(axis=0)
    std[std == 0] = 1.0
    return (x - x.mean(axis=0)) / std


# ---------------------------------------------------------------------------
# synthetic benchmark


@dataclass(frozen=True)
class SynthConfig:
    n: int = 300
    k: int = 3
    p_in: float = 0.2
    p_out: float = 0.01
    sep: float = 4.0
    dim: int = 20
    seed: int = 0

    def validate(self):
        if self.k < 1 or self.n < self.k:
            raise ParameterError("synthetic benchmark needs n >= k >= 1")
        if self.dim < self.k:
            raise ParameterError("feature dimension must be at least k")
        if not 0 <= self.p_out < self.p_in <= 1:
            raise ParameterError("need 0 <= p_out < p_in <= 1")
        if self.sep <= 0:
            raise ParameterError("sep must be positive")


def make_synthetic(cfg: SynthConfig = SynthConfig()) -> Dataset:
    """Planted-partition graph with Gaussian blob features.

    Nodes are split into k near-equal blocks; an edge appears with probability
    ``p_in`` inside a block and ``p_out`` across blocks. Block j's features are
    unit-variance Gaussians centred at ``sep`` times the j-th column of a random
    orthonormal basis.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    labels = np.repeat(np.arange(cfg.k), -(-cfg.n // cfg.k))[: cfg.n]
    basis, _ = np.linalg.qr(rng.standard_normal((cfg.dim, cfg.k)))
    centers = cfg.sep * basis.T
    features = centers[labels] + rng.standard_normal((cfg.n, cfg.dim))
    iu, ju = np.triu_indices(cfg.n, k=1)
    prob = np.where(labels[iu] == labels[ju], cfg.p_in, cfg.p_out)
    keep = rng.random(iu.size) < prob
    graph = SparseAdjacency.from_edges(cfg.n, iu[keep], ju[keep])
    return Dataset(features, labels, graph, name=f"sbm-n{cfg.n}-k{cfg.k}")


def write_dataset(ds: Dataset, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"features": out / "features.csv", "graph": out / "graph.txt", "labels": out / "labels.txt"}
    save_features_csv(ds.features, paths["features"])
    if ds.graph is not None:
        save_edge_list(ds.graph, paths["graph"])
    if ds.labels is not None:
        save_labels(ds.labels, paths["labels"])
    return paths


def read_dataset(features, graph=None, labels=None, name="dataset") -> Dataset:
    x = load_features(features)
    g = load_edge_list(graph, n=x.shape[0]) if graph is not None else None
    y = load_labels(labels) if labels is not None else None
    return Dataset(x, y, g, name)
