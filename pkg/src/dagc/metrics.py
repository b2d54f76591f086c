"""External clustering metrics: ACC, NMI, ARI and macro-F1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ContractError


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # true classes x predicted clusters
    true_sizes: np.ndarray
    pred_sizes: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def contingency(truth, pred) -> ContingencyTable:
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise ContractError(f"label arrays differ in length ({truth.size} vs {pred.size})")
    _, t = np.unique(truth, return_inverse=True)
    _, p = np.unique(pred, return_inverse=True)
    kt = int(t.max()) + 1 if t.size else 0
    kp = int(p.max()) + 1 if p.size else 0
    counts = np.zeros((kt, kp), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ContingencyTable(counts, counts.sum(axis=1), counts.sum(axis=0))


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect assignment; ``result[row]`` is the chosen column."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ContractError(f"hungarian needs a square cost matrix, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ContractError("hungarian needs finite costs")
    if cost.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    return kernels.hungarian(cost)


def _matching(table: ContingencyTable) -> tuple[np.ndarray, np.ndarray]:
    """Padded square contingency and its maximum-weight class->cluster matching."""
    kt, kp = table.counts.shape
    m = max(kt, kp)
    padded = np.zeros((m, m), dtype=np.int64)
    padded[:kt, :kp] = table.counts
    return padded, hungarian(-padded.astype(np.float64))


def clustering_accuracy(truth, pred) -> float:
    table = contingency(truth, pred)
    if table.n == 0:
        return 0.0
    padded, match = _matching(table)
    return float(padded[np.arange(len(match)), match].sum()) / table.n


def _entropy(sizes: np.ndarray, n: int) -> float:
    pr = sizes[sizes > 0] / n
    return float(-np.sum(pr * np.log(pr)))


def nmi(truth, pred) -> float:
    """Mutual information over the geometric mean of the two entropies."""
    table = contingency(truth, pred)
    n = table.n
    if n == 0:
        return 0.0
    h_t = _entropy(table.true_sizes, n)
    h_p = _entropy(table.pred_sizes, n)
    if h_t == 0.0 or h_p == 0.0:
        return 1.0 if h_t == h_p else 0.0
    c = table.counts
    nz = c > 0
    outer = np.outer(table.true_sizes, table.pred_sizes)
    mi = float(np.sum(c[nz] / n * np.log(c[nz] * n / outer[nz])))
    return float(max(0.0, min(1.0, mi / np.sqrt(h_t * h_p))))


def _pairs(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return float(np.sum(x * (x - 1.0) / 2.0))


def ari(truth, pred) -> float:
    """Adjusted Rand index via pair counting on the contingency table."""
    table = contingency(truth, pred)
    n = table.n
    if n < 2:
        return 1.0
    index = _pairs(table.counts)
    a = _pairs(table.true_sizes)
    b = _pairs(table.pred_sizes)
    expected = a * b / (n * (n - 1) / 2.0)
    max_index = (a + b) / 2.0
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


def _f1_matrix(table: ContingencyTable, m: int) -> np.ndarray:
    """F1 of every (class, cluster) pair, zero-padded to m x m."""
    kt, kp = table.counts.shape
    c = table.counts.astype(np.float64)
    denom = table.true_sizes[:, None] + table.pred_sizes[None, :]
    out = np.zeros((m, m))
    out[:kt, :kp] = np.divide(2.0 * c, denom, out=np.zeros_like(c), where=c > 0)
    return out


def macro_f1(truth, pred) -> float:
    """Per-class F1 after optimal cluster-to-class matching, averaged over classes.

    The matching maximizes matched count as for ACC; among count-optimal
    matchings it takes the one with the largest F1 sum, so the score does not
    depend on how labels happen to be numbered.
    """
    table = contingency(truth, pred)
    kt, kp = table.counts.shape
    if kt == 0:
        return 0.0
    m = max(kt, kp)
    f1 = _f1_matrix(table, m)
    padded = np.zeros((m, m))
    padded[:kt, :kp] = table.counts
    # a unit of count outweighs any possible difference in F1 sum (< m + 1)
    match = hungarian(-(padded * (m + 1) + f1))
    return float(np.sum(f1[np.arange(kt), match[:kt]]) / kt)


def evaluate(truth, pred) -> dict[str, float]:
    return {
        "ACC": clustering_accuracy(truth, pred),
        "NMI": nmi(truth, pred),
        "ARI": ari(truth, pred),
        "F1": macro_f1(truth, pred),
    }


METRIC_NAMES = ("ACC", "NMI", "ARI", "F1")
