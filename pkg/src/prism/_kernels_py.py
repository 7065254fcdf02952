"""Pure numpy implementations of the filter-bank kernels.

These mirror :mod:`prism._kernels` exactly and are used whenever the compiled
extension is unavailable (or ``PRISM_PURE_PYTHON=1`` is set).
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.signal import lfilter


def mirror_index(i: np.ndarray, n: int) -> np.ndarray:
    """Whole-sample symmetric reflection of integer positions into ``[0, n)``."""
    if n == 1:
        return np.zeros_like(i)
    period = 2 * n - 2
    i = np.mod(i, period)
    return np.where(i >= n, period - i, i)


@lru_cache(maxsize=256)
def _smoothing_matrix(kernel: tuple, origin: int, length: int) -> np.ndarray:
    # S[t, j] collects every kernel tap that lands on sample j after reflection
    h = np.asarray(kernel)
    t = np.arange(length)[:, None]
    cols = mirror_index(t + np.arange(len(h))[None, :] - origin, length)
    mat = np.zeros((length, length))
    np.add.at(mat, (np.broadcast_to(t, cols.shape), cols), np.broadcast_to(h, cols.shape))
    mat.setflags(write=False)
    return mat


def smooth(x: np.ndarray, kernel: np.ndarray, origin: int) -> np.ndarray:
    mat = _smoothing_matrix(tuple(kernel.tolist()), int(origin), x.shape[1])
    return x @ mat.T


def smooth_adjoint(g: np.ndarray, kernel: np.ndarray, origin: int) -> np.ndarray:
    mat = _smoothing_matrix(tuple(kernel.tolist()), int(origin), g.shape[1])
    return g @ mat


def ema(x: np.ndarray, alpha: float) -> np.ndarray:
    keep = 1.0 - alpha
    zi = (keep * x[:, :1])
    out, _ = lfilter([alpha], [1.0, -keep], x, axis=1, zi=zi)
    return out


def ema_adjoint(g: np.ndarray, alpha: float) -> np.ndarray:
    keep = 1.0 - alpha
    acc = lfilter([1.0], [1.0, -keep], g[:, ::-1], axis=1)[:, ::-1]
    out = alpha * acc
    out[:, 0] = acc[:, 0]
    return out
