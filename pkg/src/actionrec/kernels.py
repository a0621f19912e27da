"""Backend selection for the hot kernels.

The compiled extension ``actionrec._ckernels`` is used when it imports;
otherwise the numpy fallback is used. Setting ``ACTIONREC_PURE_PYTHON=1``
forces the fallback.
"""

import logging
import os

import numpy as np

from . import _fallback

logger = logging.getLogger(__name__)

_compiled = None
if not os.environ.get("ACTIONREC_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        logger.debug("compiled kernels unavailable, using numpy fallback")

BACKEND = "compiled" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback


def available_backends():
    return ["compiled", "python"] if _compiled is not None else ["python"]


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active backend)."""
    if name is None:
        return _impl
    if name == "python":
        return _fallback
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def merge_components(a, b, w, n_nodes, k, min_size, backend=None):
    impl = get_backend(backend)
    return impl.merge_components(
        np.ascontiguousarray(a, dtype=np.int64),
        np.ascontiguousarray(b, dtype=np.int64),
        np.ascontiguousarray(w, dtype=np.float64),
        int(n_nodes), float(k), int(min_size),
    )


def greedy_sweeps(unary, pair, h, max_sweeps, backend=None):
    """Run coordinate sweeps on ``h`` (int64, modified in place)."""
    impl = get_backend(backend)
    return impl.greedy_sweeps(
        np.ascontiguousarray(unary, dtype=np.float64),
        np.ascontiguousarray(pair, dtype=np.float64),
        h, int(max_sweeps),
    )


def cs_sgd_epochs(X, y, W, W_avg, order, lam, t0=0, avg_from=1, backend=None):
    impl = get_backend(backend)
    return impl.cs_sgd_epochs(
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
        W, W_avg,
        np.ascontiguousarray(order, dtype=np.int64),
        float(lam), int(t0), int(avg_from),
    )
