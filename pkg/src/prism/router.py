"""Band importance routing.

Each band of each channel is summarised by six statistics (mean, std, peak
magnitude, mean absolute first and second differences, crest factor). A small
ReLU MLP turns the statistics into a score, and a temperature softmax over
the bands of a channel turns scores into mixing weights.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError

MODES = ("per_level", "shared_all", "per_node", "uniform", "passthrough")
STAT_NAMES = ("mu", "sigma", "a_max", "d1", "d2", "crest")
N_STATS = len(STAT_NAMES)
EPS = 1e-8


@dataclass(frozen=True)
class RouterConfig:
    """Router geometry.

    ``mode`` selects how MLP weights are shared: one MLP per tree level
    (``per_level``), one for the whole tree (``shared_all``), one per node
    (``per_node``), or no MLP at all with equal (``uniform``) or unit
    (``passthrough``) weights.
    """

    mode: str = "per_level"
    hidden: int = 32
    temperature: float = 1.0
    crest_clamp: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown router mode {self.mode!r}; expected one of {MODES}")
        if self.hidden < 1:
            raise ConfigError(f"router hidden width must be >= 1, got {self.hidden}")
        if not self.temperature > 0:
            raise ConfigError(f"router temperature must be > 0, got {self.temperature}")
        if self.crest_clamp is not None and not self.crest_clamp > 0:
            raise ConfigError("crest_clamp must be positive when set")

    @property
    def learned(self) -> bool:
        return self.mode in ("per_level", "shared_all", "per_node")


@dataclass
class BandStats:
    mu: float
    sigma: float
    a_max: float
    d1: float
    d2: float
    crest: float

    def as_array(self) -> np.ndarray:
        return np.array([self.mu, self.sigma, self.a_max, self.d1, self.d2, self.crest])


@dataclass
class ImportanceWeights:
    scores: np.ndarray
    weights: np.ndarray
    node: tuple


def group_key(config: RouterConfig, level: int, node: int) -> str | None:
    """Name of the parameter group that scores node ``(level, node)``."""
    if config.mode == "per_level":
        return f"router.L{level}"
    if config.mode == "shared_all":
        return "router.all"
    if config.mode == "per_node":
        return f"router.L{level}.N{node}"
    return None


def routed_levels(depth: int) -> list:
    """Tree levels whose segments are decomposed and weighted."""
    return [0] if depth == 0 else list(range(1, depth + 1))


def init_router_params(config: RouterConfig, depth: int, rng: np.random.Generator) -> dict:
    params = {}
    keys = []
    for level in routed_levels(depth):
        for node in range(2 ** level):
            key = group_key(config, level, node)
            if key is not None and key not in keys:
                keys.append(key)
    for key in keys:
        h = config.hidden
        b1 = 1.0 / np.sqrt(N_STATS)
        b2 = 1.0 / np.sqrt(h)
        params[f"{key}.W1"] = rng.uniform(-b1, b1, size=(h, N_STATS))
        params[f"{key}.b1"] = rng.uniform(-b1, b1, size=(h,))
        params[f"{key}.W2"] = rng.uniform(-b2, b2, size=(1, h))
        params[f"{key}.b2"] = rng.uniform(-b2, b2, size=(1,))
    return params


# ---------------------------------------------------------------- statistics

def band_stats_tensor(x: ad.Tensor, crest_clamp: float | None = None) -> ad.Tensor:
    """Differentiable statistics over the last axis: ``(..., L) -> (..., 6)``."""
    L = x.shape[-1]
    if L < 3:
        raise ConfigError(f"band statistics need at least 3 samples, got {L}")
    mu = ad.mean(x, axis=-1)
    sigma = ad.std(x, axis=-1, eps=EPS)
    a_max = ad.max_(ad.abs_(x), axis=-1)
    first = ad.sub(x[..., 1:], x[..., :-1])
    second = ad.sub(first[..., 1:], first[..., :-1])
    d1 = ad.mean(ad.abs_(first), axis=-1)
    d2 = ad.mean(ad.abs_(second), axis=-1)
    crest = ad.div(a_max, ad.add(sigma, EPS))
    if crest_clamp is not None:
        crest = ad.minimum(crest, crest_clamp)
    return ad.stack([mu, sigma, a_max, d1, d2, crest], axis=-1)


def band_stats(band, crest_clamp: float | None = None) -> BandStats:
    """Summary statistics of a single-channel band."""
    x = np.asarray(band, dtype=np.float64)
    if x.ndim != 1:
        raise ConfigError(f"band_stats expects a vector, got shape {x.shape}")
    return BandStats(*band_stats_tensor(ad.Tensor(x), crest_clamp).data.tolist())


# ---------------------------------------------------------------- scoring

def score_tensor(stats: ad.Tensor, params: dict, key: str) -> ad.Tensor:
    """Apply a group's MLP to ``(..., 6)`` statistics, giving ``(...)`` scores."""
    hidden = ad.relu(ad.affine(stats, params[f"{key}.W1"], params[f"{key}.b1"]))
    out = ad.affine(hidden, params[f"{key}.W2"], params[f"{key}.b2"])
    return ad.reshape(out, out.shape[:-1])


def weight_tensor(stats: ad.Tensor, params: dict, config: RouterConfig, level: int, node: int,
                  band_axis: int = 0):
    """Scores and softmax weights for statistics laid out with bands on ``band_axis``.

    Returns ``(scores, weights)`` with the statistics axis removed.
    """
    shape = stats.shape[:-1]
    K = shape[band_axis]
    if config.mode == "uniform":
        return ad.Tensor(np.zeros(shape)), ad.Tensor(np.full(shape, 1.0 / K))
    if config.mode == "passthrough":
        return ad.Tensor(np.zeros(shape)), ad.Tensor(np.ones(shape))
    scores = score_tensor(stats, params, group_key(config, level, node))
    return scores, ad.softmax(scores, axis=band_axis, temperature=config.temperature)


def score_and_weight(stats, params: dict, config: RouterConfig, node: tuple = (1, 0)) -> ImportanceWeights:
    """Importance of ``K`` bands for ``C`` channels from a ``(K, C, 6)`` statistics array.

    A grid of :class:`BandStats` (``K`` rows of ``C`` entries) is accepted too.
    """
    if isinstance(stats, (list, tuple)) and stats and isinstance(stats[0], (list, tuple)):
        stats = np.array([[s.as_array() for s in row] for row in stats])
    arr = np.asarray(stats, dtype=np.float64)
    if arr.ndim < 2 or arr.shape[-1] != N_STATS:
        raise ConfigError(f"statistics must end in an axis of {N_STATS}, got shape {arr.shape}")
    params = {k: ad.as_tensor(v) for k, v in params.items()}
    level, index = node
    s, w = weight_tensor(ad.Tensor(arr), params, config, level, index, band_axis=0)
    return ImportanceWeights(s.data, w.data, node)
