"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``.

Used when the extension is not built. Results agree with the compiled
versions: selections and assignments exactly, sums to rounding.
"""

import numpy as np


def csr_spmm(indptr, indices, data, dense):
    n = indptr.shape[0] - 1
    out = np.zeros((n, dense.shape[1]))
    if data.shape[0] == 0:
        return out
    prod = data[:, None] * dense[indices]
    nonempty = indptr[1:] > indptr[:-1]
    if nonempty.any():
        out[nonempty] = np.add.reduceat(prod, indptr[:-1][nonempty], axis=0)
    return out


def topk_rows(sim, k, row_offset):
    b = sim.shape[0]
    work = np.array(sim, dtype=np.float64)
    work[np.arange(b), np.arange(b) + row_offset] = -np.inf
    # stable sort on the negation keeps lower column indices first on ties
    order = np.argsort(-work, axis=1, kind="stable")
    return np.ascontiguousarray(order[:, :k].astype(np.int64))


def hungarian(cost):
    m = cost.shape[0]
    u = np.zeros(m + 1)
    v = np.zeros(m + 1)
    p = np.zeros(m + 1, dtype=np.int64)
    way = np.zeros(m + 1, dtype=np.int64)
    for i in range(1, m + 1):
        p[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used[1:]
            cur = cost[i0 - 1] - u[i0] - v[1:]
            upd = free & (cur < minv[1:])
            minv[1:][upd] = cur[upd]
            way[1:][upd] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while True:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
            if j0 == 0:
                break
    assignment = np.empty(m, dtype=np.int64)
    assignment[p[1:] - 1] = np.arange(m)
    return assignment
