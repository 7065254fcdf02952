"""Loading, chronological splitting, normalisation and windowing of series."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeSeries:
    """``values`` is ``(T, C)``; timestamps are kept as the raw strings from the file."""

    values: np.ndarray
    channel_names: tuple = ()
    timestamps: tuple | None = None
    sampling_period: str | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise DataError(f"values must be a non-empty (T, C) matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError("values contain non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not self.channel_names:
            object.__setattr__(self, "channel_names", tuple(f"ch{i}" for i in range(v.shape[1])))
        elif len(self.channel_names) != v.shape[1]:
            raise DataError(f"{len(self.channel_names)} channel names for {v.shape[1]} channels")
        if self.timestamps is not None and len(self.timestamps) != v.shape[0]:
            raise DataError(f"{len(self.timestamps)} timestamps for {v.shape[0]} rows")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def C(self) -> int:
        return self.values.shape[1]

    def slice(self, start: int, stop: int) -> "TimeSeries":
        ts = None if self.timestamps is None else self.timestamps[start:stop]
        return replace(self, values=self.values[start:stop], timestamps=ts)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.6
    val_frac: float = 0.2
    test_frac: float = 0.2

    def __post_init__(self):
        fr = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fr}")

    def bounds(self, T: int) -> tuple:
        """``(train_end, val_end)``; the test slice runs to ``T``."""
        a = math.floor(self.train_frac * T + 1e-9)
        b = math.floor((self.train_frac + self.val_frac) * T + 1e-9)
        return a, b


ETT_SPLIT = SplitSpec(0.6, 0.2, 0.2)
DEFAULT_SPLIT = SplitSpec(0.7, 0.1, 0.2)


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class WindowPair:
    context: np.ndarray
    target: np.ndarray
    origin_index: int


@dataclass
class Windows:
    """A stacked set of windows: ``contexts (N, T_ctx, C)``, ``targets (N, T_f, C)``."""

    contexts: np.ndarray
    targets: np.ndarray
    origins: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    def __len__(self) -> int:
        return self.contexts.shape[0]

    def __getitem__(self, i: int) -> WindowPair:
        return WindowPair(self.contexts[i], self.targets[i], int(self.origins[i]))

    def take(self, idx) -> "Windows":
        return Windows(self.contexts[idx], self.targets[idx], self.origins[idx])


# ---------------------------------------------------------------- loading

def load_csv(path, time_column: str | None = "date") -> TimeSeries:
    """Read a header-first CSV whose first column is a timestamp.

    Every other column becomes a channel, in file order. ``time_column=None``
    treats every column as numeric. Cells must parse as floats.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    if len(body) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(body)}")
    first = 1 if time_column is not None else 0
    if time_column is not None and header[0].strip() != time_column:
        raise DataError(f"{path}: first column is {header[0]!r}, expected {time_column!r}")
    names = tuple(h.strip() for h in header[first:])
    if not names:
        raise DataError(f"{path}: no data columns")
    values = np.empty((len(body), len(names)))
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row[first:]):
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise DataError(
                    f"{path}: row {i + 2}, column {names[j]!r}: cannot parse {cell!r} as a number"
                ) from None
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"{path}: row {bad[0] + 2}, column {names[bad[1]]!r}: non-finite value")
    stamps = tuple(r[0] for r in body) if first else None
    if stamps is not None:
        _check_increasing(path, stamps)
    return TimeSeries(values, names, stamps)


def _check_increasing(path, stamps) -> None:
    # only ISO-formatted stamps are compared; anything else is kept verbatim
    try:
        parsed = [datetime.fromisoformat(s.strip()) for s in stamps]
    except ValueError:
        return
    for i in range(1, len(parsed)):
        if parsed[i] <= parsed[i - 1]:
            raise DataError(f"{path}: row {i + 2}: timestamp {stamps[i]!r} does not increase")


# ---------------------------------------------------------------- splitting and scaling

def chrono_split(ts: TimeSeries, spec: SplitSpec = ETT_SPLIT):
    """Contiguous ``(train, val, test)`` slices with boundaries at ``floor(frac * T)``."""
    if ts.T < 10:
        raise DataError(f"series of length {ts.T} is too short to split (need >= 10)")
    a, b = spec.bounds(ts.T)
    for name, lo, hi in (("train", 0, a), ("val", a, b), ("test", b, ts.T)):
        if hi <= lo:
            raise DataError(f"{name} slice is empty for T={ts.T} with fractions {spec}")
    return ts.slice(0, a), ts.slice(a, b), ts.slice(b, ts.T)


def fit_norm(train: TimeSeries) -> NormStats:
    """Per-channel mean and population std, std floored at 1e-8."""
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    flat = std < 1e-8
    if np.any(flat):
        names = [n for n, f in zip(train.channel_names, flat) if f]
        log.warning("constant channel(s) %s: std floored at 1e-8", names)
        std = np.where(flat, 1e-8, std)
    return NormStats(mean, std)


def apply_norm(ts: TimeSeries, stats: NormStats) -> TimeSeries:
    return replace(ts, values=(ts.values - stats.mean) / stats.std)


def invert_norm(values: np.ndarray, stats: NormStats) -> np.ndarray:
    return np.asarray(values) * stats.std + stats.mean


# ---------------------------------------------------------------- windows

def window_count(T: int, T_context: int, T_forecast: int, stride: int = 1) -> int:
    return (T - T_context - T_forecast) // stride + 1


def make_windows(ts, T_context: int, T_forecast: int, stride: int = 1, first_target: int = 0) -> Windows:
    """All ``(context, target)`` pairs at origins ``0, stride, 2*stride, ...``.

    ``first_target`` drops windows whose target would start before that index;
    it is how evaluation splits borrow context from the preceding slice.
    """
    values = ts.values if isinstance(ts, TimeSeries) else np.asarray(ts, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    if T_context < 1 or T_forecast < 1:
        raise ConfigError("T_context and T_forecast must be positive")
    T = values.shape[0]
    need = T_context + T_forecast
    if T < need:
        raise ConfigError(f"series of length {T} is too short: windows need at least {need} samples")
    start = max(0, first_target - T_context)
    start += (-start) % stride
    origins = np.arange(start, T - need + 1, stride)
    view = np.lib.stride_tricks.sliding_window_view(values, need, axis=0)  # (N, C, need)
    sel = view[origins].transpose(0, 2, 1)
    return Windows(np.ascontiguousarray(sel[:, :T_context]), np.ascontiguousarray(sel[:, T_context:]), origins)


@dataclass
class PreparedData:
    train: Windows
    val: Windows
    test: Windows
    norm: NormStats
    series: TimeSeries


def prepare(ts: TimeSeries, split: SplitSpec, T_context: int, T_forecast: int,
            stride: int = 1, borrow_context: bool = True) -> PreparedData:
    """Split, normalise with train statistics, and window all three slices.

    With ``borrow_context`` the validation and test windows may take their
    context from the end of the preceding slice; every target still lies
    entirely inside its own slice.
    """
    train, val, test = chrono_split(ts, split)
    norm = fit_norm(train)
    full = apply_norm(ts, norm)
    a, b = split.bounds(ts.T)

    def windows(lo: int, hi: int, name: str) -> Windows:
        start = max(0, lo - T_context) if borrow_context else lo
        seg = full.values[start:hi]
        try:
            w = make_windows(seg, T_context, T_forecast, stride, first_target=lo - start)
        except ConfigError as exc:
            raise ConfigError(f"{name} split: {exc}") from None
        w.origins = w.origins + start
        return w

    return PreparedData(windows(0, a, "train"), windows(a, b, "val"), windows(b, ts.T, "test"), norm, full)


def synthetic_series(T: int = 4000, channels: int = 1, periods=(24, 168), trend: float = 1.0,
                     noise: float = 0.1, seed: int = 0) -> TimeSeries:
    """Unit-amplitude sinusoids plus a linear trend rising by ``trend`` over the series and Gaussian noise.

    Each channel gets its own random phases.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)[:, None]
    values = trend * t / max(T - 1, 1) + noise * rng.standard_normal((T, channels))
    for p in periods:
        values = values + np.sin(2 * np.pi * t / p + rng.uniform(0, 2 * np.pi, size=(1, channels)))
    return TimeSeries(values, tuple(f"s{i}" for i in range(channels)))
