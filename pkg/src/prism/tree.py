"""Overlapping binary partitioning of a context window and its inverse.

A segment of length ``T(i)`` splits into a left and a right child of length
``T(i+1) = (T(i) + o) / 2`` that share ``o`` central samples. Stitching
blends the shared samples with a linear cross-fade, so ``stitch(split(x))``
returns ``x`` exactly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import ConfigError


@dataclass(frozen=True)
class PartitionPlan:
    """Validated level geometry: ``depth`` splits give ``2**depth`` leaves."""

    T_context: int
    overlap: int
    depth: int
    level_lengths: tuple

    @property
    def leaf_count(self) -> int:
        return 2 ** self.depth

    @property
    def leaf_length(self) -> int:
        return self.level_lengths[-1]


def plan(T_context: int, overlap: int, depth: int, K: int = 1, min_leaf: int | None = None) -> PartitionPlan:
    """Build the level lengths ``T(0) = T_context, T(i+1) = (T(i) + o) / 2``.

    ``min_leaf`` defaults to ``2**(K-1)``, the shortest segment a ``K``-band
    Haar ladder accepts.
    """
    if T_context < 1:
        raise ConfigError(f"T_context must be positive, got {T_context}")
    if overlap < 0:
        raise ConfigError(f"overlap must be >= 0, got {overlap}")
    if depth < 0:
        raise ConfigError(f"depth must be >= 0, got {depth}")
    if min_leaf is None:
        min_leaf = 2 ** (K - 1)
    lengths = [T_context]
    for level in range(depth):
        total = lengths[-1] + overlap
        if total % 2:
            raise ConfigError(
                f"level {level}: T({level}) + o = {lengths[-1]} + {overlap} is odd; "
                f"segments cannot be split evenly"
            )
        lengths.append(total // 2)
    leaf = lengths[-1]
    if leaf < min_leaf:
        raise ConfigError(f"level {depth}: leaf length {leaf} is shorter than the {min_leaf} samples the filter bank needs")
    if depth > 0 and overlap >= leaf:
        raise ConfigError(f"level {depth}: overlap {overlap} must be smaller than the leaf length {leaf}")
    return PartitionPlan(T_context, overlap, depth, tuple(lengths))


def crossfade_ramp(overlap: int) -> np.ndarray:
    """Right-hand weights ``alpha_j = (j+1)/(o+1)`` across the shared samples."""
    return np.arange(1, overlap + 1, dtype=np.float64) / (overlap + 1)


def split(segment: np.ndarray, overlap: int, axis: int = 0):
    """Return ``(first T', last T')`` samples along ``axis`` with ``T' = (T + o) / 2``."""
    seg = np.asarray(segment)
    n = seg.shape[axis]
    if (n + overlap) % 2:
        raise ConfigError(f"segment length {n} + overlap {overlap} is odd")
    half = (n + overlap) // 2
    left = np.take(seg, np.arange(half), axis=axis)
    right = np.take(seg, np.arange(n - half, n), axis=axis)
    return left, right


def stitch(left: np.ndarray, right: np.ndarray, overlap: int, axis: int = 0) -> np.ndarray:
    """Concatenate two equal-length pieces, cross-fading the ``overlap`` shared samples."""
    left = np.moveaxis(np.asarray(left, dtype=np.float64), axis, 0)
    right = np.moveaxis(np.asarray(right, dtype=np.float64), axis, 0)
    n = left.shape[0]
    if right.shape != left.shape:
        raise ConfigError(f"stitch needs equal shapes, got {left.shape} and {right.shape}")
    if overlap >= n and n > 0 or overlap < 0:
        raise ConfigError(f"overlap {overlap} must lie in [0, {n})")
    alpha = crossfade_ramp(overlap).reshape((-1,) + (1,) * (left.ndim - 1))
    blend = (1.0 - alpha) * left[n - overlap:] + alpha * right[:overlap]
    out = np.concatenate([left[: n - overlap], blend, right[overlap:]], axis=0)
    return np.moveaxis(out, 0, axis)


def split_tree(x: np.ndarray, p: PartitionPlan, axis: int = 0) -> list:
    """All levels of the tree: ``levels[i]`` holds the ``2**i`` segments at level ``i``."""
    levels = [[np.asarray(x)]]
    for _ in range(p.depth):
        nxt = []
        for seg in levels[-1]:
            nxt.extend(split(seg, p.overlap, axis))
        levels.append(nxt)
    return levels


def stitch_tree(leaves: list, p: PartitionPlan, axis: int = 0) -> np.ndarray:
    """Merge the ``2**depth`` leaves bottom-up back to a length-``T_context`` signal."""
    if len(leaves) != p.leaf_count:
        raise ConfigError(f"expected {p.leaf_count} leaves, got {len(leaves)}")
    nodes = list(leaves)
    while len(nodes) > 1:
        nodes = [stitch(nodes[j], nodes[j + 1], p.overlap, axis) for j in range(0, len(nodes), 2)]
    return nodes[0]


# ---------------------------------------------------------------- tensor versions (time on the last axis)

def split_tensor(x: ad.Tensor, overlap: int):
    n = x.shape[-1]
    half = (n + overlap) // 2
    return x[..., :half], x[..., n - half:]


def stitch_tensor(left: ad.Tensor, right: ad.Tensor, overlap: int) -> ad.Tensor:
    n = left.shape[-1]
    if overlap == 0:
        return ad.concat([left, right], axis=-1)
    alpha = crossfade_ramp(overlap)
    blend = ad.add(ad.mul(left[..., n - overlap:], 1.0 - alpha), ad.mul(right[..., :overlap], alpha))
    return ad.concat([left[..., : n - overlap], blend, right[..., overlap:]], axis=-1)


def stitch_tree_tensor(leaves: list, overlap: int) -> ad.Tensor:
    nodes = list(leaves)
    while len(nodes) > 1:
        nodes = [stitch_tensor(nodes[j], nodes[j + 1], overlap) for j in range(0, len(nodes), 2)]
    return nodes[0]
