"""Same-length, exactly additive multi-band decompositions.

Every family except ``fft`` builds a ladder of progressively smoother copies
``s_0, s_1, ..., s_{K-2}`` of the input and returns the telescoping bands::

    b_0 = x - s_0,  b_k = s_{k-1} - s_k,  b_{K-1} = s_{K-2}

so the bands sum back to ``x`` by construction. ``fft`` instead partitions the
real-FFT bins with rectangular masks. Band 0 is always the finest band and
band ``K-1`` the coarsest.

All decompositions are linear; :func:`decompose_adjoint` applies the
transposed operator and is what the autodiff engine uses for gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import kernels
from .autodiff import Tensor, linear_map
from .errors import ConfigError

FAMILIES = ("haar", "fft", "ema", "dog", "binomial")

_DEFAULTS = {
    "haar": dict(K=6),
    "fft": dict(K=4),
    "ema": dict(K=4, tau0=8.0, grow=3.0),
    "dog": dict(K=6, sigma0=1.0, ratio=1.6),
    "binomial": dict(K=4, k0=3, k_grow=2),
}


@dataclass(frozen=True)
class FilterSpec:
    """Filter family, band count and family parameters.

    Unused parameters are ignored by the other families. ``fft_edges`` picks
    between ``"dyadic"`` (octave) and ``"linear"`` (equal-width) masks.
    """

    family: str = "haar"
    K: int = 6
    tau0: float = 8.0
    grow: float = 3.0
    sigma0: float = 1.0
    ratio: float = 1.6
    k0: int = 3
    k_grow: int = 2
    fft_edges: str = "dyadic"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown filter family {self.family!r}; expected one of {FAMILIES}")
        if self.K < 1:
            raise ConfigError(f"band count K must be >= 1, got {self.K}")
        if self.fft_edges not in ("dyadic", "linear"):
            raise ConfigError(f"fft_edges must be 'dyadic' or 'linear', got {self.fft_edges!r}")
        if self.tau0 <= 0 or self.grow <= 0 or self.sigma0 <= 0 or self.ratio <= 0:
            raise ConfigError("filter scale parameters must be positive")
        if self.k0 < 1 or self.k_grow < 1:
            raise ConfigError("binomial orders must be >= 1")

    @classmethod
    def default(cls, family: str = "haar", **overrides) -> "FilterSpec":
        if family not in _DEFAULTS:
            raise ConfigError(f"unknown filter family {family!r}; expected one of {FAMILIES}")
        return cls(family=family, **{**_DEFAULTS[family], **overrides})

    def min_length(self) -> int:
        if self.family == "haar":
            return max(2, 2 ** (self.K - 1))
        return 2


@dataclass
class BandSet:
    """``K`` bands of shape ``(L, C)`` stacked as ``bands[k, t, c]``."""

    bands: np.ndarray
    spec: FilterSpec = field(default_factory=FilterSpec)

    @property
    def K(self) -> int:
        return self.bands.shape[0]

    def total(self) -> np.ndarray:
        return self.bands.sum(axis=0)


# ---------------------------------------------------------------- smoothing ladder

def haar_kernel(j: int) -> np.ndarray:
    n = 2 ** (j + 1)
    return np.full(n, 1.0 / n)


def gaussian_kernel(sigma: float) -> np.ndarray:
    r = max(1, int(math.ceil(4.0 * sigma)))
    t = np.arange(-r, r + 1, dtype=np.float64)
    h = np.exp(-0.5 * (t / sigma) ** 2)
    return h / h.sum()


def binomial_kernel(order: int) -> np.ndarray:
    h = np.array([math.comb(order, i) for i in range(order + 1)], dtype=np.float64)
    return h / h.sum()


def ema_alpha(tau: float) -> float:
    return 1.0 - math.exp(-1.0 / tau)


@lru_cache(maxsize=64)
def smoothing_ladder(spec: FilterSpec) -> tuple:
    """Stages ``s_0..s_{K-2}`` as ``("conv", kernel, origin)`` or ``("ema", alpha)``."""
    stages = []
    order = spec.k0
    for j in range(spec.K - 1):
        if spec.family == "haar":
            h = haar_kernel(j)
        elif spec.family == "dog":
            h = gaussian_kernel(spec.sigma0 * spec.ratio ** j)
        elif spec.family == "binomial":
            h = binomial_kernel(order)
            order *= spec.k_grow
        elif spec.family == "ema":
            stages.append(("ema", ema_alpha(spec.tau0 * spec.grow ** j)))
            continue
        else:
            raise ConfigError(f"{spec.family} has no smoothing ladder")
        h.setflags(write=False)
        stages.append(("conv", h, len(h) // 2))
    return tuple(stages)


def _apply(stage, x):
    if stage[0] == "ema":
        return kernels.ema(x, stage[1])
    return kernels.smooth(x, stage[1], stage[2])


def _apply_adjoint(stage, g):
    if stage[0] == "ema":
        return kernels.ema_adjoint(g, stage[1])
    return kernels.smooth_adjoint(g, stage[1], stage[2])


# ---------------------------------------------------------------- fft masks

@lru_cache(maxsize=128)
def fft_band_of_bin(length: int, K: int, edges: str = "dyadic") -> np.ndarray:
    """Band index (0 = finest) of every real-FFT bin for a length-``length`` signal.

    Dyadic edges put bin ``b`` (frequency ``b/length`` cycles per sample) in
    the smallest ``k`` with ``b * 2**(k+2) >= length``, i.e. band ``k`` spans
    ``[f_N / 2**(k+1), f_N / 2**k)`` with ``f_N = 1/2``; DC and anything
    below the last edge land in band ``K-1``.
    """
    nbins = length // 2 + 1
    out = np.full(nbins, K - 1, dtype=np.intp)
    if edges == "linear":
        # equal-width slices of [0, nbins), finest first
        for b in range(nbins):
            out[b] = K - 1 - min(K - 1, (b * K) // nbins)
        return out
    for b in range(1, nbins):
        k = 0
        while b * 2 ** (k + 2) < length and k < K - 1:
            k += 1
        out[b] = k
    return out


def _fft_bands(x: np.ndarray, spec: FilterSpec) -> np.ndarray:
    length = x.shape[-1]
    which = fft_band_of_bin(length, spec.K, spec.fft_edges)
    spectrum = np.fft.rfft(x, axis=-1)
    out = np.empty((spec.K,) + x.shape)
    for k in range(spec.K):
        out[k] = np.fft.irfft(np.where(which == k, spectrum, 0.0), n=length, axis=-1)
    return out


# ---------------------------------------------------------------- public API

def _check_length(length: int, spec: FilterSpec) -> None:
    if length < spec.min_length():
        raise ConfigError(
            f"segment length {length} is below the minimum {spec.min_length()} "
            f"for family {spec.family!r} with K={spec.K}"
        )


def decompose_array(x: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Decompose rows of ``x`` (shape ``(N, L)``) into bands of shape ``(K, N, L)``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    _check_length(x.shape[-1], spec)
    if spec.K == 1:
        return x[None].copy()
    if spec.family == "fft":
        return _fft_bands(x, spec)
    out = np.empty((spec.K,) + x.shape)
    prev = x
    for j, stage in enumerate(smoothing_ladder(spec)):
        s = _apply(stage, x)
        out[j] = prev - s
        prev = s
    out[spec.K - 1] = prev
    return out


def decompose_adjoint(g: np.ndarray, spec: FilterSpec) -> np.ndarray:
    """Transpose of :func:`decompose_array`: maps ``(K, N, L)`` back to ``(N, L)``."""
    if spec.K == 1:
        return np.array(g[0])
    if spec.family == "fft":
        # each rectangular mask is a symmetric projector
        length = g.shape[-1]
        which = fft_band_of_bin(length, spec.K, spec.fft_edges)
        spectrum = sum(np.where(which == k, np.fft.rfft(g[k], axis=-1), 0.0) for k in range(spec.K))
        return np.fft.irfft(spectrum, n=length, axis=-1)
    gx = np.array(g[0])
    for j, stage in enumerate(smoothing_ladder(spec)):
        gx += _apply_adjoint(stage, np.ascontiguousarray(g[j + 1] - g[j]))
    return gx


def decompose(segment: np.ndarray, spec: FilterSpec | None = None) -> BandSet:
    """Split an ``(L, C)`` segment (or a length-``L`` vector) into ``K`` additive bands."""
    spec = spec or FilterSpec.default()
    seg = np.asarray(segment, dtype=np.float64)
    vector = seg.ndim == 1
    if vector:
        seg = seg[:, None]
    if seg.ndim != 2:
        raise ConfigError(f"segment must be (L, C), got shape {seg.shape}")
    bands = decompose_array(seg.T, spec).transpose(0, 2, 1)
    if vector:
        bands = bands[..., 0]
    return BandSet(np.ascontiguousarray(bands), spec)


def recombine(bands, weights) -> np.ndarray:
    """Weighted band sum ``out[t, c] = sum_k weights[k, c] * bands[k, t, c]``."""
    b = bands.bands if isinstance(bands, BandSet) else np.asarray(bands, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if b.ndim != 3 or w.shape != (b.shape[0], b.shape[2]):
        raise ConfigError(f"weights {w.shape} do not match bands (K, L, C) = {b.shape}")
    return np.einsum("kc,ktc->tc", w, b)


def decompose_tensor(x: Tensor, spec: FilterSpec) -> Tensor:
    """Differentiable decomposition along the last axis: ``(..., L) -> (K, ..., L)``."""
    lead = x.shape[:-1]
    length = x.shape[-1]

    def fwd(a):
        return decompose_array(a.reshape(-1, length), spec).reshape((spec.K,) + lead + (length,))

    def adj(g):
        return decompose_adjoint(g.reshape(spec.K, -1, length), spec).reshape(lead + (length,))

    return linear_map(x, fwd, adj)


def with_bands(spec: FilterSpec, K: int) -> FilterSpec:
    return replace(spec, K=K)
