"""Backend selection for the filter-bank kernels.

The compiled extension is preferred; the numpy fallback is used when it is not
built or when the environment variable ``PRISM_PURE_PYTHON`` is set to a
non-empty value other than ``0``.
"""
from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

_force_py = os.environ.get("PRISM_PURE_PYTHON", "") not in ("", "0")

if _force_py:
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
        BACKEND = "python"


def _block(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x, dtype=np.float64)


def smooth(x, kernel, origin):
    """Mirror-extended correlation ``out[t] = sum_i kernel[i] * x[t + i - origin]``."""
    return _impl.smooth(_block(x), _block(kernel), int(origin))


def smooth_adjoint(g, kernel, origin):
    return _impl.smooth_adjoint(_block(g), _block(kernel), int(origin))


def ema(x, alpha):
    """Causal exponential moving average started at the first sample."""
    return _impl.ema(_block(x), float(alpha))


def ema_adjoint(g, alpha):
    return _impl.ema_adjoint(_block(g), float(alpha))


def backends():
    """Return the available kernel modules keyed by name (for benchmarks/tests)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels as compiled  # type: ignore[attr-defined]

        out["cython"] = compiled
    except ImportError:
        pass
    return out
