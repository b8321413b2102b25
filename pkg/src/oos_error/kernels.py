"""Backend selection for the batch kernels.

The compiled extension is used when it imports; otherwise, or when the
environment variable ``OOS_PURE_PYTHON`` is set to a non-empty value, the
numpy fallback is used. ``BACKEND`` names the active one.
"""

import os

import numpy as np

from . import _kernels_py

LOSS_CODES = {"squared": 0, "absolute": 1}

_compiled = None
if not os.environ.get("OOS_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
BACKEND = "cython" if _compiled is not None else "numpy"


def backends():
    """Available implementations, keyed by name."""
    out = {"numpy": _kernels_py}
    if _compiled is not None:
        out["cython"] = _compiled
    return out


def _prepare(data, sizes):
    data = np.ascontiguousarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    return data, np.ascontiguousarray(sizes, dtype=np.int64)


def pairwise_loss_sums(data, sizes, loss: str, impl=None):
    """Per-row sums of ``L(Z_i, mean_l)`` over each test block ``j``; shape ``(rows, k, k)``."""
    data, sizes = _prepare(data, sizes)
    return (impl or _impl).pairwise_loss_sums(data, sizes, LOSS_CODES[loss])


def oos_rows(data, sizes, loss: str, impl=None):
    """Out-of-source estimate for each row of ``data`` (mean rule)."""
    data, sizes = _prepare(data, sizes)
    return (impl or _impl).oos_rows(data, sizes, LOSS_CODES[loss])
