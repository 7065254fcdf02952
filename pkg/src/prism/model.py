"""The forecaster: split, decompose, weight, recombine, stitch, and additive heads.

Internally every signal is laid out as ``(batch, channel, time)``; bands add
a leading ``K`` axis. Public entry points take ``(T, C)`` or ``(B, T, C)``
arrays and return forecasts in the same time-first layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import ConfigError
from .filters import FilterSpec, decompose_tensor
from .router import RouterConfig, band_stats_tensor, init_router_params, routed_levels, weight_tensor
from .tree import PartitionPlan, plan, split_tensor, stitch_tree_tensor


@dataclass(frozen=True)
class PrismConfig:
    """Model geometry. ``depth`` counts binary splits, so there are ``2**depth`` leaves."""

    T_context: int = 336
    T_forecast: int = 96
    overlap: int = 8
    depth: int = 1
    filter: FilterSpec = field(default_factory=FilterSpec.default)
    router: RouterConfig = field(default_factory=RouterConfig)
    head_hidden: int = 64

    def __post_init__(self):
        if self.T_forecast < 1:
            raise ConfigError(f"T_forecast must be positive, got {self.T_forecast}")
        if self.head_hidden < 1:
            raise ConfigError(f"head_hidden must be positive, got {self.head_hidden}")
        p = self.plan
        if self.T_context % p.leaf_count:
            raise ConfigError(
                f"T_context={self.T_context} is not divisible by the leaf count {p.leaf_count}"
            )
        if self.router.learned and p.leaf_length < 3:
            raise ConfigError("leaf segments need at least 3 samples for band statistics")

    @property
    def plan(self) -> PartitionPlan:
        return plan(self.T_context, self.overlap, self.depth,
                    min_leaf=max(self.filter.min_length(), 3 if self.router.learned else 1))

    @property
    def M(self) -> int:
        return 2 ** self.depth

    @property
    def K(self) -> int:
        return self.filter.K

    @property
    def chunk(self) -> int:
        return self.T_context // self.M


def init_params(config: PrismConfig, seed: int = 0) -> dict:
    """Seeded initialisation: every weight and bias ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    rng = np.random.default_rng(seed)
    params = init_router_params(config.router, config.depth, rng)
    for m in range(config.M):
        for k in range(config.K):
            b1 = 1.0 / np.sqrt(config.chunk)
            b2 = 1.0 / np.sqrt(config.head_hidden)
            params[f"head.m{m}.k{k}.W1"] = rng.uniform(-b1, b1, size=(config.head_hidden, config.chunk))
            params[f"head.m{m}.k{k}.b1"] = rng.uniform(-b1, b1, size=(config.head_hidden,))
            params[f"head.m{m}.k{k}.W2"] = rng.uniform(-b2, b2, size=(config.T_forecast, config.head_hidden))
            params[f"head.m{m}.k{k}.b2"] = rng.uniform(-b2, b2, size=(config.T_forecast,))
    return params


def param_count(params: dict) -> int:
    return int(sum(p.size for p in params.values()))


@dataclass
class ForwardRecord:
    """Intermediates kept by :func:`forward_tensor` when asked."""

    weights: dict = field(default_factory=dict)   # (level, node) -> (K, B, C)
    scores: dict = field(default_factory=dict)
    stitched: np.ndarray | None = None            # (K, B, C, T_context), weighted
    contributions: np.ndarray | None = None       # (M, K, B, C, T_forecast)


def _weighted_bands(x, params, config: PrismConfig, level: int, node: int, record):
    bands = decompose_tensor(x, config.filter)                    # (K, B, C, L)
    if config.router.learned:
        stats = band_stats_tensor(bands, config.router.crest_clamp)
    else:
        stats = ad.Tensor(np.zeros(bands.shape[:-1] + (6,)))
    scores, w = weight_tensor(stats, params, config.router, level, node, band_axis=0)
    if record is not None:
        record.weights[(level, node)] = w.data.copy()
        record.scores[(level, node)] = scores.data.copy()
    return ad.mul(bands, ad.reshape(w, w.shape + (1,)))


def head_tensor(x, params, m: int, k: int):
    pre = f"head.m{m}.k{k}"
    hidden = ad.relu(ad.affine(x, params[f"{pre}.W1"], params[f"{pre}.b1"]))
    return ad.affine(hidden, params[f"{pre}.W2"], params[f"{pre}.b2"])


def forward_tensor(x, params: dict, config: PrismConfig, record: ForwardRecord | None = None):
    """Forecast from a ``(B, C, T_context)`` tensor; returns ``(B, C, T_forecast)``."""
    if x.shape[-1] != config.T_context:
        raise ConfigError(f"context length {x.shape[-1]} does not match T_context={config.T_context}")
    nodes = [x]
    for level in range(1, config.depth + 1):
        children = []
        for seg in nodes:
            children.extend(split_tensor(seg, config.overlap))
        if level < config.depth:
            nodes = [ad.sum_(_weighted_bands(c, params, config, level, j, record), axis=0)
                     for j, c in enumerate(children)]
        else:
            nodes = children
    final_level = routed_levels(config.depth)[-1]
    leaves = [_weighted_bands(c, params, config, final_level, j, record) for j, c in enumerate(nodes)]
    full = stitch_tree_tensor(leaves, config.overlap)             # (K, B, C, T_context)

    cl = config.chunk
    total = None
    contribs = []
    for m in range(config.M):
        chunk = full[..., m * cl:(m + 1) * cl]
        for k in range(config.K):
            out = head_tensor(chunk[k], params, m, k)
            contribs.append(out)
            total = out if total is None else ad.add(total, out)
    if record is not None:
        record.stitched = full.data.copy()
        record.contributions = np.stack([c.data for c in contribs]).reshape(
            (config.M, config.K) + contribs[0].shape)
    return total


def _to_internal(context: np.ndarray):
    arr = np.asarray(context, dtype=np.float64)
    single = arr.ndim == 2
    if single:
        arr = arr[None]
    if arr.ndim != 3:
        raise ConfigError(f"context must be (T, C) or (B, T, C), got shape {arr.shape}")
    return np.ascontiguousarray(arr.transpose(0, 2, 1)), single


def _from_internal(out: np.ndarray, single: bool) -> np.ndarray:
    out = out.transpose(0, 2, 1)
    return out[0] if single else out


def forward(context, params: dict, config: PrismConfig) -> np.ndarray:
    """Forecast ``(T_forecast, C)`` from ``(T_context, C)`` (or batched with a leading axis)."""
    x, single = _to_internal(context)
    tensors = {k: ad.Tensor(v) for k, v in params.items()}
    return _from_internal(forward_tensor(ad.Tensor(x), tensors, config).data, single)


def forward_record(context, params: dict, config: PrismConfig):
    x, single = _to_internal(context)
    rec = ForwardRecord()
    tensors = {k: ad.Tensor(v) for k, v in params.items()}
    out = forward_tensor(ad.Tensor(x), tensors, config, rec)
    return _from_internal(out.data, single), rec


# ---------------------------------------------------------------- losses

def _check_pair(pred, target):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise ConfigError(f"prediction shape {p.shape} does not match target shape {t.shape}")
    return p, t


def loss(pred, target) -> float:
    """Mean squared error over every entry."""
    p, t = _check_pair(pred, target)
    return float(np.mean((p - t) ** 2))


def mae(pred, target) -> float:
    """Mean absolute error over every entry."""
    p, t = _check_pair(pred, target)
    return float(np.mean(np.abs(p - t)))


def mse_tensor(pred, target) -> ad.Tensor:
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ConfigError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    return ad.mean(ad.square(ad.sub(pred, target)))


def loss_and_grads(contexts, targets, params: dict, config: PrismConfig):
    """Batch MSE and its gradient for every parameter.

    ``contexts`` is ``(B, T_context, C)`` and ``targets`` ``(B, T_forecast, C)``.
    """
    x, _ = _to_internal(contexts)
    y, _ = _to_internal(targets)
    tape = ad.Tape()
    leaves = {k: tape.leaf(v, k) for k, v in params.items()}
    pred = forward_tensor(ad.Tensor(x), leaves, config)
    value = mse_tensor(pred, y)
    return float(value.data), ad.backward(tape, value)


# ---------------------------------------------------------------- trace

@dataclass
class ForecastTrace:
    """Per-(segment, band) contributions, ordered left to right then band 0..K-1.

    ``context_components[m, k]`` is chunk ``m`` of the weighted, stitched band
    ``k`` placed on the full context axis (zero elsewhere);
    ``head_contributions[m, k]`` is what head ``(m, k)`` adds to the forecast.
    """

    context_components: np.ndarray   # (M, K, T_context, C)
    head_contributions: np.ndarray   # (M, K, T_forecast, C)
    leaf_weights: np.ndarray         # (M, K, C)
    forecast: np.ndarray             # (T_forecast, C)

    @property
    def labels(self) -> list:
        M, K = self.head_contributions.shape[:2]
        return [(m, k) for m in range(M) for k in range(K)]

    @property
    def cumulative_context(self) -> np.ndarray:
        c = self.context_components
        return np.cumsum(c.reshape((-1,) + c.shape[2:]), axis=0)

    @property
    def cumulative_forecast(self) -> np.ndarray:
        c = self.head_contributions
        return np.cumsum(c.reshape((-1,) + c.shape[2:]), axis=0)


def decompose_trace(context, params: dict, config: PrismConfig) -> ForecastTrace:
    """Split a single-window forecast into its ``M * K`` additive components."""
    ctx = np.asarray(context, dtype=np.float64)
    if ctx.ndim != 2:
        raise ConfigError(f"trace expects a single (T, C) context, got shape {ctx.shape}")
    out, rec = forward_record(ctx, params, config)
    M, K, cl = config.M, config.K, config.chunk
    full = rec.stitched[:, 0].transpose(0, 2, 1)                  # (K, T, C)
    comps = np.zeros((M, K) + full.shape[1:])
    for m in range(M):
        comps[m, :, m * cl:(m + 1) * cl] = full[:, m * cl:(m + 1) * cl]
    heads = rec.contributions[:, :, 0].transpose(0, 1, 3, 2)      # (M, K, T_f, C)
    level = routed_levels(config.depth)[-1]
    leaf_w = np.stack([rec.weights[(level, m)][:, 0] for m in range(M)])
    return ForecastTrace(comps, heads, leaf_w, out)
