"""Training with early stopping, evaluation, multi-seed runs and importance export."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .data import PreparedData, Windows
from .errors import ConfigError, NumericError
from .model import PrismConfig, forward, forward_record, init_params, loss_and_grads
from .router import routed_levels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings. ``patience`` counts epochs without an improvement above ``min_delta``."""

    batch_size: int = 512
    lr: float = 1e-4
    patience: int = 15
    min_delta: float = 2e-4
    max_epochs: int = 100
    seeds: tuple = (0, 1, 2, 3)
    eval_batch_size: int = 1024

    def __post_init__(self):
        for name in ("batch_size", "patience", "max_epochs", "eval_batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be >= 1, got {getattr(self, name)}")
        if not self.lr > 0:
            raise ConfigError(f"train.lr must be > 0, got {self.lr}")
        if self.min_delta < 0:
            raise ConfigError(f"train.min_delta must be >= 0, got {self.min_delta}")
        if not self.seeds:
            raise ConfigError("train.seeds must list at least one seed")


@dataclass
class Metrics:
    mse: float
    mae: float


@dataclass
class TrainResult:
    params: dict
    history: list
    best_epoch: int
    best_val: float
    stopped_early: bool


class EarlyStopping:
    """Strict min-delta patience rule with separate best-snapshot tracking.

    ``step`` returns ``(is_best, should_stop)``. ``is_best`` is true for any
    new minimum of the validation loss, so the kept parameters always belong
    to the best epoch seen. Only drops larger than ``min_delta`` below the
    reference value reset the patience counter.
    """

    def __init__(self, patience: int, min_delta: float):
        self.patience = patience
        self.min_delta = min_delta
        self.reference = np.inf
        self.best = np.inf
        self.wait = 0

    def step(self, value: float) -> tuple:
        is_best = value < self.best
        if is_best:
            self.best = value
        if self.reference - value > self.min_delta:
            self.reference = value
            self.wait = 0
        else:
            self.wait += 1
        return is_best, self.wait >= self.patience


def _seed_streams(seed: int):
    init_seq, shuffle_seq = np.random.SeedSequence(seed).spawn(2)
    return int(init_seq.generate_state(1)[0]), np.random.default_rng(shuffle_seq)


def predict(params: dict, config: PrismConfig, contexts: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    out = [forward(contexts[i:i + batch_size], params, config) for i in range(0, len(contexts), batch_size)]
    return np.concatenate(out, axis=0)


def evaluate(params: dict, config: PrismConfig, windows: Windows, batch_size: int = 1024) -> Metrics:
    """Per-window MSE/MAE averaged uniformly over windows."""
    if len(windows) == 0:
        raise ConfigError("cannot evaluate on an empty window set")
    pred = predict(params, config, windows.contexts, batch_size)
    err = pred - windows.targets
    mse = np.mean(np.mean(err ** 2, axis=(1, 2)))
    mae = np.mean(np.mean(np.abs(err), axis=(1, 2)))
    return Metrics(float(mse), float(mae))


def repeat_last_metrics(windows: Windows) -> Metrics:
    """Naive baseline: repeat the final context value over the horizon."""
    pred = np.repeat(windows.contexts[:, -1:, :], windows.targets.shape[1], axis=1)
    err = pred - windows.targets
    return Metrics(float(np.mean(err ** 2)), float(np.mean(np.abs(err))))


def train(config: PrismConfig, data: PreparedData, tc: TrainConfig, seed: int = 0,
          params: dict | None = None) -> TrainResult:
    """Minibatch Adam on the train windows with per-epoch validation and early stopping.

    Returns the parameters of the epoch with the lowest validation MSE.
    """
    if len(data.train) == 0 or len(data.val) == 0:
        raise ConfigError("train and validation splits need at least one window each")
    init_seed, rng = _seed_streams(seed)
    params = init_params(config, init_seed) if params is None else {k: v.copy() for k, v in params.items()}
    state = ad.AdamState.for_params(params, lr=tc.lr)
    stopper = EarlyStopping(tc.patience, tc.min_delta)
    best = {k: v.copy() for k, v in params.items()}
    best_epoch, history, stopped = 0, [], False

    n = len(data.train)
    for epoch in range(1, tc.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, tc.batch_size)):
            idx = order[lo:lo + tc.batch_size]
            try:
                value, grads = loss_and_grads(data.train.contexts[idx], data.train.targets[idx], params, config)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {b}: {exc}") from None
            if not np.isfinite(value):
                raise NumericError(f"training loss is not finite at epoch {epoch}, batch {b}")
            params = ad.adam_step(params, grads, state)
            total += value * len(idx)
        val = evaluate(params, config, data.val, tc.eval_batch_size).mse
        if not np.isfinite(val):
            raise NumericError(f"validation loss is not finite at epoch {epoch}")
        row = {"epoch": epoch, "train_mse": total / n, "val_mse": val, "seconds": time.perf_counter() - t0}
        history.append(row)
        log.info("seed %d epoch %d train %.5f val %.5f (%.1fs)", seed, epoch, row["train_mse"], val, row["seconds"])
        is_best, stop = stopper.step(val)
        if is_best:
            best = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch
        if stop:
            stopped = True
            break
    return TrainResult(best, history, best_epoch, stopper.best, stopped)


# ---------------------------------------------------------------- reports

@dataclass
class SeedReport:
    seed: int
    test_mse: float
    test_mae: float
    epochs: int
    best_epoch: int
    best_val_mse: float
    seconds: float


@dataclass
class RunReport:
    seeds: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def aggregate(self) -> dict:
        out = {}
        for key in ("test_mse", "test_mae", "best_val_mse", "seconds", "epochs"):
            vals = np.array([getattr(s, key) for s in self.seeds], dtype=np.float64)
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
        return out

    def to_dict(self) -> dict:
        return {"meta": self.meta, "seeds": [asdict(s) for s in self.seeds], "aggregate": self.aggregate()}

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls([SeedReport(**s) for s in d["seeds"]], d.get("meta", {}))


def write_history(history: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_mse", "val_mse", "seconds"])
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(v)) if k != "epoch" else v) for k, v in row.items()})


def run_seeds(config: PrismConfig, data: PreparedData, tc: TrainConfig, on_seed=None) -> RunReport:
    """Train and test once per seed. ``on_seed(seed, result, metrics)`` is called after each."""
    report = RunReport(meta={"param_count": int(sum(v.size for v in init_params(config, 0).values()))})
    for seed in tc.seeds:
        t0 = time.perf_counter()
        result = train(config, data, tc, seed)
        metrics = evaluate(result.params, config, data.test, tc.eval_batch_size)
        report.seeds.append(SeedReport(int(seed), metrics.mse, metrics.mae, len(result.history),
                                       result.best_epoch, result.best_val, time.perf_counter() - t0))
        if on_seed is not None:
            on_seed(seed, result, metrics)
    return report


# ---------------------------------------------------------------- importance

def collect_importance(params: dict, config: PrismConfig, contexts: np.ndarray, batch_size: int = 1024) -> dict:
    """Mean softmax weight per node: ``(level, node) -> (K, C)`` averaged over windows."""
    sums, count = {}, 0
    for i in range(0, len(contexts), batch_size):
        _, rec = forward_record(contexts[i:i + batch_size], params, config)
        for key, w in rec.weights.items():
            s = w.sum(axis=1)
            sums[key] = s if key not in sums else sums[key] + s
        count += len(contexts[i:i + batch_size])
    return {key: s / count for key, s in sums.items()}


def export_importance(params, config: PrismConfig, contexts: np.ndarray, grouping: str = "node",
                      batch_size: int = 1024) -> list:
    """Rows of ``level, node, channel, band, mean_weight``.

    ``params`` may be a single parameter dict or a list of them (e.g. one per
    seed), in which case weights are averaged across the list. Groupings:
    ``node`` averages over channels; ``channel`` keeps them; ``level`` also
    averages over the nodes of a level (left vs. right segments); ``band``
    averages over every routed node.
    """
    if grouping not in ("node", "channel", "level", "band"):
        raise ConfigError(f"unknown grouping {grouping!r}")
    plist = params if isinstance(params, (list, tuple)) else [params]
    acc = None
    for p in plist:
        imp = collect_importance(p, config, contexts, batch_size)
        acc = imp if acc is None else {k: acc[k] + imp[k] for k in acc}
    acc = {k: v / len(plist) for k, v in acc.items()}

    rows = []
    if grouping in ("node", "channel"):
        for (level, node), w in sorted(acc.items()):
            if grouping == "channel":
                for c in range(w.shape[1]):
                    rows.extend({"level": level, "node": node, "channel": c, "band": k,
                                 "mean_weight": float(w[k, c])} for k in range(w.shape[0]))
            else:
                rows.extend({"level": level, "node": node, "channel": "all", "band": k,
                             "mean_weight": float(w[k].mean())} for k in range(w.shape[0]))
        return rows
    levels = routed_levels(config.depth)
    keys = [(lv, n) for lv in levels for n in range(2 ** lv)] if grouping == "band" else None
    groups = {"all": keys} if grouping == "band" else {lv: [(lv, n) for n in range(2 ** lv)] for lv in levels}
    for level, members in groups.items():
        w = np.mean([acc[m] for m in members], axis=0)
        rows.extend({"level": level, "node": "all", "channel": "all", "band": k,
                     "mean_weight": float(w[k].mean())} for k in range(w.shape[0]))
    return rows


def write_importance(rows: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["level", "node", "channel", "band", "mean_weight"])
        w.writeheader()
        w.writerows(rows)
