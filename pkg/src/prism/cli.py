"""Command-line entry points.

Exit codes: 0 success, 2 spec error, 3 data error, 4 checkpoint error,
5 numeric divergence.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunSpec, SpecError, emit, load_spec
from .data import load_csv, prepare, synthetic_series
from .errors import CheckpointError, ConfigError, DataError, PrismError
from .filters import FilterSpec, decompose
from .model import decompose_trace
from .training import (
    evaluate,
    export_importance,
    predict,
    repeat_last_metrics,
    run_seeds,
    write_history,
    write_importance,
)

log = logging.getLogger("prism")


def _run_dir(base) -> Path:
    stamp = _dt.datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    path = Path(base) / f"run-{stamp}"
    path.mkdir(parents=True, exist_ok=False)
    return path


def load_series(spec: RunSpec):
    if spec.data.synthetic is not None:
        try:
            return synthetic_series(**spec.data.synthetic)
        except TypeError as exc:
            raise SpecError([("data.synthetic", str(exc))]) from None
    return load_csv(spec.data.path, spec.data.time_column)


def prepare_data(spec: RunSpec):
    ts = load_series(spec)
    try:
        return prepare(ts, spec.data.split_spec, spec.model.T_context, spec.model.T_forecast,
                       spec.data.stride, spec.data.borrow_context)
    except ConfigError as exc:
        # series too short for the requested geometry
        raise DataError(str(exc)) from None


def _spec_with_overrides(args) -> RunSpec:
    spec = load_spec(args.spec)
    if getattr(args, "seed", None) is not None:
        spec = replace(spec, train=replace(spec.train, seeds=(args.seed,)))
    return spec


def _load_checked(path, spec: RunSpec):
    config, params, meta = checkpoint.load(path)
    diffs = checkpoint.config_mismatches(config, spec.model)
    if diffs:
        raise CheckpointError("checkpoint does not match spec: " + "; ".join(diffs))
    return config, params, meta


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    spec = _spec_with_overrides(args)
    data = prepare_data(spec)
    out = _run_dir(args.out or spec.out_dir)
    (out / "spec.yaml").write_text(emit(spec))

    def on_seed(seed, result, metrics):
        meta = {"seed": int(seed), "best_epoch": result.best_epoch,
                "norm_mean": data.norm.mean.tolist(), "norm_std": data.norm.std.tolist()}
        checkpoint.save(out / f"checkpoint_seed{seed}.prism", spec.model, result.params, meta)
        write_history(result.history, out / f"history_seed{seed}.csv")
        log.info("seed %s: test mse %.4f mae %.4f", seed, metrics.mse, metrics.mae)

    report = run_seeds(spec.model, data, spec.train, on_seed)
    base = repeat_last_metrics(data.test)
    report.meta.update({"repeat_last_test_mse": base.mse, "repeat_last_test_mae": base.mae,
                        "windows": {"train": len(data.train), "val": len(data.val), "test": len(data.test)}})
    report.write(out / "report.json")
    print(json.dumps({"run_dir": str(out), "aggregate": report.aggregate()}, indent=2))
    return 0


def cmd_eval(args) -> int:
    spec = load_spec(args.spec)
    config, params, _ = _load_checked(args.checkpoint, spec)
    data = prepare_data(spec)
    m = evaluate(params, config, data.test, spec.train.eval_batch_size)
    result = {"checkpoint": str(args.checkpoint), "test_mse": m.mse, "test_mae": m.mae, "windows": len(data.test)}
    out = Path(args.out) if args.out else Path(args.checkpoint).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / f"eval_{Path(args.checkpoint).stem}.json").write_text(json.dumps(result, indent=2) + "\n")
    if args.predictions:
        np.save(args.predictions, predict(params, config, data.test.contexts, spec.train.eval_batch_size))
    print(json.dumps(result, indent=2))
    return 0


def cmd_decompose(args) -> int:
    if args.spec:
        spec = load_spec(args.spec)
        ts, fspec = load_series(spec), spec.model.filter
    elif args.csv:
        ts = load_csv(args.csv)
        fspec = FilterSpec.default(args.family, **({"K": args.bands} if args.bands else {}))
    else:
        raise SpecError([("--spec/--csv", "one of --spec or --csv is required")])
    bands = decompose(ts.values, fspec).bands                    # (K, T, C)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "bands.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "channel"] + [f"band_{k}" for k in range(bands.shape[0])])
        for c, name in enumerate(ts.channel_names):
            for t in range(bands.shape[1]):
                w.writerow([t, name] + [repr(float(v)) for v in bands[:, t, c]])
    print(path)
    return 0


def _window(data, split: str, index: int):
    windows = {"train": data.train, "val": data.val, "test": data.test}[split]
    if not 0 <= index < len(windows):
        raise DataError(f"window index {index} outside [0, {len(windows)}) of the {split} split")
    return windows[index]


def cmd_trace(args) -> int:
    spec = load_spec(args.spec)
    config, params, _ = _load_checked(args.checkpoint, spec)
    data = prepare_data(spec)
    pair = _window(data, args.split, args.window)
    tr = decompose_trace(pair.context, params, config)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trace_{args.split}{args.window}.csv"
    cum_ctx, cum_fc = tr.cumulative_context, tr.cumulative_forecast
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["order", "segment", "band", "side", "weight", "t", "channel", "value", "cumulative"])
        for i, (m, k) in enumerate(tr.labels):
            for side, comp, cum in (("context", tr.context_components[m, k], cum_ctx[i]),
                                    ("forecast", tr.head_contributions[m, k], cum_fc[i])):
                for t in range(comp.shape[0]):
                    for c in range(comp.shape[1]):
                        w.writerow([i, m, k, side, repr(float(tr.leaf_weights[m, k, c])), t, c,
                                    repr(float(comp[t, c])), repr(float(cum[t, c]))])
    print(path)
    return 0


def cmd_importance(args) -> int:
    spec = load_spec(args.spec)
    params = [_load_checked(c, spec)[1] for c in args.checkpoint]
    data = prepare_data(spec)
    windows = {"train": data.train, "val": data.val, "test": data.test}[args.split]
    rows = export_importance(params, spec.model, windows.contexts, args.grouping, spec.train.eval_batch_size)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    path = out / "importance.csv"
    write_importance(rows, path)
    print(path)
    return 0


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prism", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model per seed and write a run report")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", help="base output directory (default: spec output.dir)")
    p.add_argument("--seed", type=int, help="train this single seed instead of train.seeds")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="test MSE/MAE of a checkpoint")
    p.add_argument("--spec", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out")
    p.add_argument("--predictions", help="also save test-window forecasts to this .npy file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("decompose", help="write the band decomposition of a series as CSV")
    p.add_argument("--spec")
    p.add_argument("--csv")
    p.add_argument("--family", default="haar")
    p.add_argument("--bands", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("trace", help="per-(segment, band) components of one forecast")
    p.add_argument("--spec", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--window", type=int, default=0)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("importance", help="export mean band importance weights")
    p.add_argument("--spec", required=True)
    p.add_argument("--checkpoint", required=True, nargs="+")
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--grouping", choices=("node", "channel", "level", "band"), default="node")
    p.add_argument("--out")
    p.set_defaults(func=cmd_importance)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecError as exc:
        for fld, msg in exc.problems:
            print(f"spec error: {fld}: {msg}", file=sys.stderr)
        return 2
    except PrismError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
