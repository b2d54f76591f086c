"""Hot-loop kernels, compiled when available.

``BACKEND`` is ``"cython"`` when the extension module imported and
``"python"`` otherwise. Both implementations live side by side so tests and
benchmarks can compare them directly.
"""

import numpy as np

from . import _pykernels as python_impl

try:
    from . import _kernels as compiled_impl
except ImportError:  # extension not built
    compiled_impl = None

_impl = compiled_impl if compiled_impl is not None else python_impl
BACKEND = "cython" if compiled_impl is not None else "python"


def available_backends():
    names = ["python"]
    if compiled_impl is not None:
        names.insert(0, "cython")
    return names


def get_impl(name=None):
    if name is None:
        return _impl
    if name == "python":
        return python_impl
    if name == "cython":
        if compiled_impl is None:
            raise ImportError("compiled kernels are not built")
        return compiled_impl
    raise ValueError(f"unknown backend {name!r}")


def csr_spmm(indptr, indices, data, dense):
    return _impl.csr_spmm(indptr, indices, data, np.ascontiguousarray(dense, dtype=np.float64))


def topk_rows(sim, k, row_offset=0):
    return _impl.topk_rows(np.ascontiguousarray(sim, dtype=np.float64), int(k), int(row_offset))


def hungarian(cost):
    return _impl.hungarian(np.ascontiguousarray(cost, dtype=np.float64))
