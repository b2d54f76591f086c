"""Dense reverse-mode automatic differentiation on 2-D float64 matrices.

Usage::

    w = Tensor(np.ones((3, 2)), requires_grad=True)
    with Tape() as tape:
        loss = sum_all(square(matmul(x, w)))
    grads = tape.backward(loss)
    grads[w]  # same shape as w

Operations only record onto the active tape when at least one input is a
leaf with ``requires_grad`` or the output of an already recorded operation.
Outside a ``Tape`` context nothing is recorded, so inference runs with no
bookkeeping.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, ShapeError

LOG_FLOOR = 1e-12

_active_tapes: list["Tape"] = []


def _as_matrix(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"expected at most 2 dimensions, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


class Tensor:
    """Immutable dense matrix that may participate in a differentiation tape."""

    __slots__ = ("data", "requires_grad", "node_id", "grad", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_matrix(data)
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self.grad: np.ndarray | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        # Skips the defensive copy for arrays freshly produced by an op.
        out = cls.__new__(cls)
        if arr.ndim != 2:
            arr = arr.reshape(arr.shape[0] if arr.ndim else 1, -1)
        if arr.dtype != np.float64:
            arr = arr.astype(np.float64)
        arr.flags.writeable = False
        out.data = arr
        out.requires_grad = False
        out.node_id = None
        out.grad = None
        return out

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def tracked(self) -> bool:
        return self.requires_grad or self.node_id is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.data[0, 0])

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.rows}x{self.cols}{flag})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return hadamard(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)


class _Op:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations, replayed in reverse by :meth:`backward`."""

    def __init__(self):
        self.ops: list[_Op] = []

    def __enter__(self):
        _active_tapes.append(self)
        return self

    def __exit__(self, *exc):
        _active_tapes.remove(self)
        return False

    def __len__(self):
        return len(self.ops)

    def record(self, output: Tensor, inputs: Sequence[Tensor], backward: Callable):
        output.node_id = len(self.ops)
        self.ops.append(_Op(tuple(inputs), output, backward))

    def leaves(self) -> list[Tensor]:
        seen: dict[int, Tensor] = {}
        for op in self.ops:
            for t in op.inputs:
                if t.requires_grad and t.node_id is None:
                    seen.setdefault(id(t), t)
        return list(seen.values())

    def backward(self, loss: Tensor, wrt: Sequence[Tensor] | None = None) -> "GradMap":
        """Accumulate d(loss)/d(leaf) for every leaf on the tape.

        Leaves that do not reach ``loss`` receive a zero gradient. Each leaf's
        ``grad`` attribute is also set.
        """
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {}
        if loss.node_id is not None:
            grads[id(loss)] = np.ones((1, 1))
            for op in reversed(self.ops[: loss.node_id + 1]):
                g = grads.pop(id(op.output), None)
                if g is None:
                    continue
                in_grads = op.backward(g)
                for t, gi in zip(op.inputs, in_grads):
                    if gi is None or not t.tracked:
                        continue
                    key = id(t)
                    if key in grads:
                        grads[key] = grads[key] + gi
                    else:
                        grads[key] = gi
        elif loss.requires_grad:
            grads[id(loss)] = np.ones((1, 1))
        targets = list(wrt) if wrt is not None else self.leaves()
        if wrt is None and loss.requires_grad and loss.node_id is None:
            targets.append(loss)
        result = GradMap()
        for t in targets:
            g = grads.get(id(t))
            if g is None:
                g = np.zeros(t.shape)
            t.grad = g
            result[t] = g
        return result


class GradMap:
    """Gradient lookup keyed by tensor identity."""

    def __init__(self):
        self._entries: dict[int, tuple[Tensor, np.ndarray]] = {}

    def __setitem__(self, key: Tensor, value: np.ndarray):
        self._entries[id(key)] = (key, value)

    def __getitem__(self, key: Tensor) -> np.ndarray:
        return self._entries[id(key)][1]

    def __contains__(self, key) -> bool:
        return id(key) in self._entries

    def __len__(self):
        return len(self._entries)

    def items(self):
        return list(self._entries.values())


def _emit(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor._wrap(data)
    if _active_tapes and any(t.tracked for t in inputs):
        _active_tapes[-1].record(out, inputs, backward)
    return out


def constant(data) -> Tensor:
    return Tensor(data)


def _check_same(a: Tensor, b: Tensor, what: str):
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shapes {a.shape} and {b.shape} differ")


# ---------------------------------------------------------------------------
# binary ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions of {a.shape} and {b.shape} disagree")
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T if a.tracked else None, ad.T @ g if b.tracked else None)

    return _emit(ad @ bd, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "add")
    return _emit(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "sub")
    return _emit(a.data - b.data, (a, b), lambda g: (g, -g))


def hadamard(a: Tensor, b: Tensor) -> Tensor:
    _check_same(a, b, "hadamard")
    ad, bd = a.data, b.data
    return _emit(ad * bd, (a, b), lambda g: (g * bd, g * ad))


def elementwise(a: Tensor, b: Tensor, kind: str) -> Tensor:
    if kind == "add":
        return add(a, b)
    if kind == "hadamard":
        return hadamard(a, b)
    raise ValueError(f"unknown elementwise kind {kind!r}")


def add_row(a: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x m row vector to every row of an n x m matrix."""
    if bias.rows != 1 or bias.cols != a.cols:
        raise ShapeError(f"add_row: bias {bias.shape} does not fit {a.shape}")
    return _emit(a.data + bias.data, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True)))


def col_broadcast_scale(w: Tensor, a: Tensor) -> Tensor:
    """Scale row r of ``a`` by the scalar ``w[r, 0]``."""
    if w.cols != 1 or w.rows != a.rows:
        raise ShapeError(f"col_broadcast_scale: weights {w.shape} do not fit {a.shape}")
    wd, ad = w.data, a.data

    def backward(g):
        gw = np.einsum("ij,ij->i", g, ad)[:, None] if w.tracked else None
        return gw, g * wd

    return _emit(wd * ad, (w, a), backward)


def pairwise_sq_dist(h: Tensor, mu: Tensor) -> Tensor:
    """Squared Euclidean distances between rows of ``h`` (n x d) and ``mu`` (k x d)."""
    if h.cols != mu.cols:
        raise ShapeError(f"pairwise_sq_dist: feature widths of {h.shape} and {mu.shape} differ")
    hd, md = h.data, mu.data
    diff = hd[:, None, :] - md[None, :, :]
    out = np.einsum("ijk,ijk->ij", diff, diff)

    def backward(g):
        gh = 2.0 * np.einsum("ij,ijk->ik", g, diff) if h.tracked else None
        gm = -2.0 * np.einsum("ij,ijk->jk", g, diff) if mu.tracked else None
        return gh, gm

    return _emit(out, (h, mu), backward)


# ---------------------------------------------------------------------------
# unary ops


def scale(a: Tensor, c: float) -> Tensor:
    return _emit(a.data * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _emit(a.data + c, (a,), lambda g: (g,))


def square(a: Tensor) -> Tensor:
    ad = a.data
    return _emit(ad * ad, (a,), lambda g: (2.0 * ad * g,))


def power(a: Tensor, p: float) -> Tensor:
    """Elementwise ``a ** p``; ``a`` must be strictly positive."""
    ad = a.data
    if np.any(ad <= 0):
        raise DegenerateInputError("power: input must be strictly positive")
    out = ad**p
    return _emit(out, (a,), lambda g: (g * p * out / ad,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    if np.any(ad <= 0):
        raise DegenerateInputError("log: input must be strictly positive; clamp first")
    return _emit(np.log(ad), (a,), lambda g: (g / ad,))


def clamp_min(a: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    ad = a.data
    keep = ad >= floor
    return _emit(np.where(keep, ad, floor), (a,), lambda g: (g * keep,))


def safe_log(a: Tensor) -> Tensor:
    return log(clamp_min(a, LOG_FLOOR))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)
    return _emit(out, (a,), lambda g: (g * (out > 0),))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    ad = a.data
    pos = ad >= 0
    return _emit(np.where(pos, ad, slope * ad), (a,), lambda g: (np.where(pos, g, slope * g),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _emit(out, (a,), lambda g: (g * (1.0 - out * out),))


def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _emit(np.array([[a.data.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def unary(a: Tensor, kind: str) -> Tensor:
    ops = {"log": log, "square": square, "sum_all": sum_all, "relu": relu, "tanh": tanh}
    try:
        return ops[kind](a)
    except KeyError:
        raise ValueError(f"unknown unary kind {kind!r}") from None


def row_softmax(a: Tensor) -> Tensor:
    ad = a.data
    e = np.exp(ad - ad.max(axis=1, keepdims=True))
    out = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (out * (g - np.einsum("ij,ij->i", g, out)[:, None]),)

    return _emit(out, (a,), backward)


def row_l2_normalize(a: Tensor) -> Tensor:
    ad = a.data
    norms = np.sqrt(np.einsum("ij,ij->i", ad, ad))[:, None]
    if np.any(norms == 0):
        raise DegenerateInputError("row_l2_normalize: input has an all-zero row")
    out = ad / norms

    def backward(g):
        return ((g - out * np.einsum("ij,ij->i", g, out)[:, None]) / norms,)

    return _emit(out, (a,), backward)


def row_normalize(a: Tensor) -> Tensor:
    """Divide each row by its sum; rows must have positive sums."""
    ad = a.data
    s = ad.sum(axis=1, keepdims=True)
    if np.any(s <= 0):
        raise DegenerateInputError("row_normalize: row sums must be positive")
    out = ad / s

    def backward(g):
        return ((g - np.einsum("ij,ij->i", g, out)[:, None]) / s,)

    return _emit(out, (a,), backward)


def concat_cols(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ShapeError("concat_cols: no parts")
    n = parts[0].rows
    for p in parts[1:]:
        if p.rows != n:
            raise ShapeError(f"concat_cols: row counts {n} and {p.rows} differ")
    if len(parts) == 1:
        return parts[0]
    bounds = np.cumsum([0] + [p.cols for p in parts])

    def backward(g):
        return tuple(g[:, bounds[i] : bounds[i + 1]] for i in range(len(parts)))

    return _emit(np.concatenate([p.data for p in parts], axis=1), parts, backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= a.cols:
        raise ShapeError(f"slice_cols: [{start}, {stop}) out of range for {a.shape}")
    shape = a.shape

    def backward(g):
        full = np.zeros(shape)
        full[:, start:stop] = g
        return (full,)

    return _emit(a.data[:, start:stop], (a,), backward)


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(f: Callable[..., Tensor], at, eps: float = 1e-5) -> float:
    """Largest relative error between tape gradients and central differences.

    ``f`` maps the tensors in ``at`` to a scalar tensor. The error for each
    entry is ``|analytic - numeric| / max(1, |numeric|)``.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    single = isinstance(at, Tensor)
    base = [at] if single else list(at)
    leaves = [Tensor(t.data, requires_grad=True) for t in base]
    with Tape() as tape:
        loss = f(*leaves)
    analytic = tape.backward(loss, wrt=leaves)

    worst = 0.0
    for idx, leaf in enumerate(leaves):
        g = analytic[leaf]
        values = leaf.data.copy()
        for pos in np.ndindex(values.shape):
            args = [Tensor._wrap(t.data) for t in leaves]
            plus = values.copy()
            plus[pos] += eps
            args[idx] = Tensor._wrap(plus)
            fp = f(*args).item()
            minus = values.copy()
            minus[pos] -= eps
            args[idx] = Tensor._wrap(minus)
            fm = f(*args).item()
            numeric = (fp - fm) / (2.0 * eps)
            err = abs(g[pos] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst
