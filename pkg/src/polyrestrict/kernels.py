"""Hot-loop dispatch: compiled kernel when available, numpy otherwise.

``BACKEND`` records which implementation was selected at import time. Set the
environment variable ``POLYRESTRICT_PURE_PYTHON=1`` to force the fallback.
"""
import os

import numpy as np

_CHUNK = 1 << 22  # complex entries per dense block in the numpy path


def extension_direct_numpy(points, nodes, sq, fw, nthreads=1):
    """Dense-block evaluation of sum_j fw_j exp(i(x'.w_j + x_n |w_j|^2))."""
    points = np.ascontiguousarray(points, dtype=float)
    nodes = np.ascontiguousarray(nodes, dtype=float)
    m = max(len(fw), 1)
    rows = max(1, _CHUNK // m)
    out = np.empty(len(points), dtype=complex)
    for start in range(0, len(points), rows):
        blk = points[start:start + rows]
        phase = blk[:, :-1] @ nodes.T + blk[:, -1:] * sq[None, :]
        out[start:start + rows] = np.exp(1j * phase) @ fw
    return out


try:
    if os.environ.get("POLYRESTRICT_PURE_PYTHON"):
        raise ImportError("pure python requested")
    from ._kernels import extension_direct as _compiled

    def extension_direct(points, nodes, sq, fw, nthreads=1):
        return _compiled(np.ascontiguousarray(points, dtype=float),
                         np.ascontiguousarray(nodes, dtype=float),
                         np.ascontiguousarray(sq, dtype=float),
                         np.ascontiguousarray(fw, dtype=complex), int(nthreads))

    BACKEND = "cython"
except ImportError:
    extension_direct = extension_direct_numpy
    BACKEND = "numpy"


def default_threads():
    env = os.environ.get("POLYRESTRICT_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))
