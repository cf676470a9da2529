"""Backend selection for the hot kernels.

The numba backend is used when numba imports cleanly; setting the
environment variable ``NETGEOM_DISABLE_NUMBA=1`` (checked once, at import
time) forces the pure-numpy twin instead. Both backends implement the same
functions with identical numerics; ``benchmarks/bench_kernels.py`` compares
their speed.
"""

import os

import numpy as np

_flag = os.environ.get("NETGEOM_DISABLE_NUMBA", "").strip().lower()
if _flag in {"1", "true", "yes", "on"}:
    from . import numpy_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        BACKEND = "numpy"


def lsap(cost):
    return _impl.lsap(np.ascontiguousarray(cost, dtype=np.float64))


def count_argmax_errors(logits, labels):
    return int(_impl.count_argmax_errors(np.ascontiguousarray(logits),
                                         np.ascontiguousarray(labels)))


def count_sign_errors(scores, labels):
    return int(_impl.count_sign_errors(np.ascontiguousarray(scores),
                                       np.ascontiguousarray(labels)))


def sign_act(z):
    return _impl.sign_act(np.ascontiguousarray(z))
