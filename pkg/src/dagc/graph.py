"""Sparse graph structures, the renormalized propagation operator and KNN graphs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .autodiff import Tensor, _emit
from .errors import ParameterError, ParseError, ShapeError

DEFAULT_KNN = 3


@dataclass(frozen=True, eq=False)
class SparseAdjacency:
    """Symmetric CSR matrix with sorted, unique column indices per row."""

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        for arr in (self.row_offsets, self.col_indices, self.values):
            arr.flags.writeable = False

    @classmethod
    def from_edges(cls, n: int, u, v) -> "SparseAdjacency":
        """Undirected graph from edge endpoints; duplicates and self-loops are dropped."""
        u = np.asarray(u, dtype=np.int64).ravel()
        v = np.asarray(v, dtype=np.int64).ravel()
        if u.shape != v.shape:
            raise ShapeError("edge endpoint arrays differ in length")
        if u.size and (min(u.min(), v.min()) < 0 or max(u.max(), v.max()) >= n):
            raise ParameterError(f"edge endpoint outside [0, {n})")
        keep = u != v
        u, v = u[keep], v[keep]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        keys = np.unique(rows * n + cols)
        rows, cols = keys // n, keys % n
        return cls._from_sorted(n, rows, cols, np.ones(keys.size))

    @classmethod
    def _from_sorted(cls, n, rows, cols, vals) -> "SparseAdjacency":
        counts = np.bincount(rows, minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(
            n,
            offsets,
            np.ascontiguousarray(cols, dtype=np.int64),
            np.ascontiguousarray(vals, dtype=np.float64),
        )

    @classmethod
    def from_dense(cls, dense) -> "SparseAdjacency":
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls._from_sorted(dense.shape[0], rows, cols, dense[rows, cols])

    @property
    def nnz(self) -> int:
        return int(self.col_indices.size)

    def row_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n), np.diff(self.row_offsets))

    def edges(self) -> np.ndarray:
        """Undirected edges (u, v) with u < v, shape (m, 2)."""
        r = self.row_ids()
        c = self.col_indices
        keep = r < c
        return np.stack([r[keep], c[keep]], axis=1)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[self.row_ids(), self.col_indices] = self.values
        return out

    def is_symmetric(self, tol=0.0) -> bool:
        d = self.to_dense() if self.n <= 4096 else None
        if d is not None:
            return bool(np.all(np.abs(d - d.T) <= tol))
        r, c = self.row_ids(), self.col_indices
        fwd = dict(zip(zip(r.tolist(), c.tolist()), self.values.tolist()))
        return all(abs(fwd.get((j, i), np.inf) - w) <= tol for (i, j), w in fwd.items())

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def same_structure(self, other: "SparseAdjacency") -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )


class PropagationOperator(SparseAdjacency):
    """D^{-1/2} (A + I) D^{-1/2} stored in CSR form."""


def normalize_adjacency(a: SparseAdjacency) -> PropagationOperator:
    rows = a.row_ids()
    cols = a.col_indices
    off = rows != cols
    n = a.n
    diag = np.arange(n)
    rows = np.concatenate([rows[off], diag])
    cols = np.concatenate([cols[off], diag])
    vals = np.concatenate([a.values[off], np.ones(n)])
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    deg = np.bincount(rows, weights=vals, minlength=n)
    inv_sqrt = 1.0 / np.sqrt(deg)
    vals = vals * inv_sqrt[rows] * inv_sqrt[cols]
    return PropagationOperator._from_sorted(n, rows, cols, vals)


def identity_operator(n: int) -> PropagationOperator:
    return normalize_adjacency(SparseAdjacency.from_edges(n, [], []))


def spmm(op: SparseAdjacency, z: Tensor) -> Tensor:
    """Sparse-dense product ``op @ z``; differentiable in ``z``.

    The backward pass reuses ``op`` as its own transpose, so ``op`` must be
    symmetric (every propagation operator is).
    """
    if op.n != z.rows:
        raise ShapeError(f"spmm: operator has {op.n} nodes, features have {z.rows} rows")
    args = (op.row_offsets, op.col_indices, op.values)
    out = kernels.csr_spmm(*args, z.data)
    return _emit(out, (z,), lambda g: (kernels.csr_spmm(*args, g),))


def similarity_matrix(x: np.ndarray, row_cosine: bool = False, rows=None) -> np.ndarray:
    """Gram matrix scaled by the squared Frobenius norm of ``x``.

    With ``row_cosine`` the rows are unit-normalized first instead, giving
    ordinary cosine similarity.
    """
    x = np.asarray(x, dtype=np.float64)
    if row_cosine:
        x = x / np.linalg.norm(x, axis=1, keepdims=True)
        scale = 1.0
    else:
        scale = 1.0 / np.einsum("ij,ij->", x, x)
    left = x if rows is None else x[rows]
    return (left @ x.T) * scale


def knn_selection(x, k_hat: int, row_cosine: bool = False, block: int = 1024) -> np.ndarray:
    """Each node's ``k_hat`` most similar other nodes, shape (n, k_hat)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k_hat < n:
        raise ParameterError(f"k_hat must satisfy 1 <= k_hat < n (k_hat={k_hat}, n={n})")
    if np.any(~np.any(x != 0, axis=1)):
        raise ParameterError("features contain an all-zero row")
    out = np.empty((n, k_hat), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(n, start + block)
        sim = similarity_matrix(x, row_cosine, rows=slice(start, stop))
        out[start:stop] = kernels.topk_rows(sim, k_hat, start)
    return out


def build_knn_graph(x, k_hat: int = DEFAULT_KNN, row_cosine: bool = False) -> SparseAdjacency:
    """Undirected KNN graph: an edge exists if either endpoint selected the other."""
    x = x.data if isinstance(x, Tensor) else x
    sel = knn_selection(x, k_hat, row_cosine)
    n = sel.shape[0]
    return SparseAdjacency.from_edges(n, np.repeat(np.arange(n), k_hat), sel.ravel())


# ---------------------------------------------------------------------------
# edge-list files


def load_edge_list(path, n: int | None = None) -> SparseAdjacency:
    """Read whitespace-separated ``u v`` pairs (0-indexed, ``#`` comments).

    The node count is ``n`` if given, else a ``# nodes: N`` header if present,
    else the largest index plus one.
    """
    us, vs = [], []
    header_n = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if line.startswith("#"):
                body = line[1:].strip()
                if body.lower().startswith("nodes:"):
                    try:
                        header_n = int(body.split(":", 1)[1])
                    except ValueError:
                        raise ParseError(f"bad node-count header {line!r}", lineno) from None
                continue
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"expected two node indices, got {line!r}", lineno)
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer node index in {line!r}", lineno) from None
            if a < 0 or b < 0:
                raise ParseError(f"negative node index in {line!r}", lineno)
            if n is not None and max(a, b) >= n:
                raise ParseError(f"node index {max(a, b)} >= declared n={n}", lineno)
            us.append(a)
            vs.append(b)
    if n is None:
        n = header_n if header_n is not None else (max(max(us), max(vs)) + 1 if us else 0)
        if us and max(max(us), max(vs)) >= n:
            raise ParseError(f"node index exceeds header node count {n}")
    return SparseAdjacency.from_edges(n, us, vs)


def save_edge_list(a: SparseAdjacency, path) -> None:
    lines = [f"# nodes: {a.n}"]
    lines += [f"{u} {v}" for u, v in a.edges().tolist()]
    Path(path).write_text("\n".join(lines) + "\n")
