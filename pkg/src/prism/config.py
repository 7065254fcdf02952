"""Run specifications: a YAML document with ``data``, ``model``, ``train`` and ``output`` sections.

Every field is optional and falls back to the defaults below::

    data:
      path: ETTh1.csv          # or `synthetic: {T: 4000, channels: 1, seed: 0}`
      time_column: date
      split: [0.6, 0.2, 0.2]
      stride: 1
      borrow_context: true
    model:
      T_context: 336
      T_forecast: 96           # 96, 192, 336 or 720 in the benchmark protocol
      overlap: 8
      depth: 1                 # number of binary splits; 2**depth leaves
      head_hidden: 64
      filter: {family: haar, K: 6}
      router: {mode: per_level, hidden: 32, temperature: 1.0, crest_clamp: null}
    train:
      batch_size: 512
      lr: 0.0001
      patience: 15
      min_delta: 0.0002
      max_epochs: 100
      seeds: [0, 1, 2, 3]
    output:
      dir: runs
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import SplitSpec
from .errors import ConfigError, PrismError
from .filters import FilterSpec
from .model import PrismConfig
from .router import RouterConfig
from .training import TrainConfig

BENCHMARK_HORIZONS = (96, 192, 336, 720)


class SpecError(ConfigError):
    """A run spec failed validation; ``problems`` lists ``(field, message)`` pairs."""

    def __init__(self, problems: list):
        self.problems = problems
        super().__init__("; ".join(f"{f}: {m}" for f, m in problems))


@dataclass(frozen=True)
class DataSpec:
    path: str | None = None
    time_column: str | None = "date"
    split: tuple = (0.6, 0.2, 0.2)
    stride: int = 1
    borrow_context: bool = True
    synthetic: dict | None = None

    @property
    def split_spec(self) -> SplitSpec:
        return SplitSpec(*self.split)


@dataclass(frozen=True)
class RunSpec:
    data: DataSpec = field(default_factory=DataSpec)
    model: PrismConfig = field(default_factory=PrismConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    out_dir: str = "runs"


def _plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    return obj


def model_to_dict(cfg: PrismConfig) -> dict:
    return _plain(cfg)


def spec_to_dict(spec: RunSpec) -> dict:
    return {
        "data": _plain(spec.data),
        "model": model_to_dict(spec.model),
        "train": _plain(spec.train),
        "output": {"dir": spec.out_dir},
    }


def _build(cls, section: dict | None, path: str, problems: list, convert=None):
    """Instantiate ``cls`` from a mapping, recording unknown keys and validation failures."""
    section = {} if section is None else section
    if not isinstance(section, dict):
        problems.append((path, f"expected a mapping, got {type(section).__name__}"))
        return None
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in section.items():
        if key not in names:
            problems.append((f"{path}.{key}", "unknown field"))
            continue
        if convert and key in convert:
            value = convert[key](value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except PrismError as exc:
        problems.append((path, str(exc)))
    except (TypeError, ValueError) as exc:
        problems.append((path, f"invalid value: {exc}"))
    return None


def model_from_dict(d: dict | None, problems: list | None = None, path: str = "model") -> PrismConfig | None:
    own = problems is None
    problems = [] if own else problems
    d = dict(d or {})
    filt = d.pop("filter", None) or {}
    router = _build(RouterConfig, d.pop("router", None), f"{path}.router", problems)
    if isinstance(filt, dict):
        filt = dict(filt)
        family = filt.pop("family", "haar")
        try:
            fspec = FilterSpec.default(family, **filt)
        except PrismError as exc:
            problems.append((f"{path}.filter", str(exc)))
            fspec = None
        except TypeError as exc:
            problems.append((f"{path}.filter", f"invalid field: {exc}"))
            fspec = None
    else:
        problems.append((f"{path}.filter", "expected a mapping"))
        fspec = None
    model = None
    if router is not None and fspec is not None:
        model = _build(PrismConfig, {**d, "filter": fspec, "router": router}, path, problems)
    if own and problems:
        raise SpecError(problems)
    return model


def spec_from_dict(d: dict) -> RunSpec:
    """Validate a parsed spec document; raise :class:`SpecError` naming every bad field."""
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise SpecError([("<root>", "spec must be a mapping")])
    problems = []
    for key in d:
        if key not in ("data", "model", "train", "output"):
            problems.append((key, "unknown section"))
    data = _build(DataSpec, d.get("data"), "data", problems, {"split": tuple})
    if data is not None:
        if data.path is None and data.synthetic is None:
            problems.append(("data.path", "missing dataset path (or data.synthetic block)"))
        try:
            data.split_spec
        except PrismError as exc:
            problems.append(("data.split", str(exc)))
        if data.stride < 1:
            problems.append(("data.stride", "must be >= 1"))
    model = model_from_dict(d.get("model"), problems)
    train = _build(TrainConfig, d.get("train"), "train", problems,
                   {"seeds": lambda s: tuple(int(x) for x in s)})
    output = d.get("output") or {}
    if not isinstance(output, dict) or set(output) - {"dir"}:
        problems.append(("output", "only the `dir` field is allowed"))
    if problems:
        raise SpecError(problems)
    return RunSpec(data, model, train, str(output.get("dir", "runs")))


def emit(spec: RunSpec) -> str:
    return yaml.safe_dump(spec_to_dict(spec), sort_keys=False)


def parse(text: str) -> RunSpec:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SpecError([("<root>", f"not valid YAML: {exc}")]) from None
    return spec_from_dict(doc)


def load_spec(path) -> RunSpec:
    p = Path(path)
    if not p.is_file():
        raise SpecError([("--spec", f"file not found: {p}")])
    return parse(p.read_text())
