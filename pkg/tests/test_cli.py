import csv
import json

import numpy as np
import pytest
import yaml

from prism import checkpoint
from prism.cli import main
from prism.config import load_spec

SPEC = {
    "data": {"synthetic": {"T": 500, "channels": 2, "periods": [12, 40], "seed": 2}, "stride": 3},
    "model": {"T_context": 32, "T_forecast": 8, "overlap": 4, "depth": 1, "head_hidden": 8,
              "filter": {"family": "haar", "K": 3}, "router": {"hidden": 4}},
    "train": {"batch_size": 32, "lr": 0.001, "max_epochs": 2, "seeds": [5]},
}


def _spec(tmp_path, doc=None, name="spec.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc or SPEC))
    return p


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    base = tmp_path_factory.mktemp("run")
    spec = _spec(base)
    assert main(["train", "--spec", str(spec), "--out", str(base / "out")]) == 0
    run = next((base / "out").iterdir())
    return spec, run


def test_train_writes_run_directory(trained):
    spec, run = trained
    assert run.name.startswith("run-")
    names = sorted(p.name for p in run.iterdir())
    assert names == ["checkpoint_seed5.prism", "history_seed5.csv", "report.json", "spec.yaml"]
    report = json.loads((run / "report.json").read_text())
    assert [s["seed"] for s in report["seeds"]] == [5]
    assert set(report["aggregate"]) >= {"test_mse", "test_mae"}
    assert load_spec(run / "spec.yaml") == load_spec(spec)


def test_seed_override(tmp_path):
    spec = _spec(tmp_path, {**SPEC, "train": {**SPEC["train"], "max_epochs": 1}})
    assert main(["train", "--spec", str(spec), "--out", str(tmp_path / "o"), "--seed", "9"]) == 0
    run = next((tmp_path / "o").iterdir())
    assert (run / "checkpoint_seed9.prism").is_file()


def test_eval_matches_report(trained, tmp_path, capsys):
    spec, run = trained
    ck = run / "checkpoint_seed5.prism"
    pred = tmp_path / "pred.npy"
    assert main(["eval", "--spec", str(spec), "--checkpoint", str(ck), "--out", str(tmp_path),
                 "--predictions", str(pred)]) == 0
    result = json.loads((tmp_path / "eval_checkpoint_seed5.json").read_text())
    seed = json.loads((run / "report.json").read_text())["seeds"][0]
    assert result["test_mse"] == seed["test_mse"] and result["test_mae"] == seed["test_mae"]
    assert np.load(pred).shape == (result["windows"], 8, 2)


def test_trace_final_cumulative_equals_eval_forecast(trained, tmp_path):
    spec, run = trained
    ck = run / "checkpoint_seed5.prism"
    pred = tmp_path / "pred.npy"
    main(["eval", "--spec", str(spec), "--checkpoint", str(ck), "--out", str(tmp_path), "--predictions", str(pred)])
    assert main(["trace", "--spec", str(spec), "--checkpoint", str(ck), "--window", "3", "--out", str(tmp_path)]) == 0
    with (tmp_path / "trace_test3.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len({(r["segment"], r["band"]) for r in rows}) == 2 * 3
    last = max(int(r["order"]) for r in rows)
    final = np.zeros((8, 2))
    for r in rows:
        if r["side"] == "forecast" and int(r["order"]) == last:
            final[int(r["t"]), int(r["channel"])] = float(r["cumulative"])
    assert np.max(np.abs(final - np.load(pred)[3])) <= 1e-9


def test_importance_export(trained, tmp_path):
    spec, run = trained
    ck = str(run / "checkpoint_seed5.prism")
    assert main(["importance", "--spec", str(spec), "--checkpoint", ck, ck, "--grouping", "level",
                 "--out", str(tmp_path)]) == 0
    with (tmp_path / "importance.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    assert sum(float(r["mean_weight"]) for r in rows) == pytest.approx(1.0)


def test_decompose_constant_series(tmp_path):
    src = tmp_path / "c.csv"
    src.write_text("date,x\n" + "".join(f"2020-01-01 {h:02d}:00:00,4.0\n" for h in range(20)))
    assert main(["decompose", "--csv", str(src), "--family", "dog", "--bands", "4", "--out", str(tmp_path)]) == 0
    with (tmp_path / "bands.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20 and list(rows[0]) == ["t", "channel", "band_0", "band_1", "band_2", "band_3"]
    for r in rows:
        assert all(abs(float(r[f"band_{k}"])) <= 1e-9 for k in range(3))
        assert float(r["band_3"]) == pytest.approx(4.0, abs=1e-9)


def test_missing_dataset_path_exits_2(tmp_path, capsys):
    doc = {k: v for k, v in SPEC.items() if k != "data"}
    assert main(["train", "--spec", str(_spec(tmp_path, doc))]) == 2
    assert "data.path" in capsys.readouterr().err


def test_data_error_exits_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("date,a\nt0,1\nt1,\nt2,3\n")
    doc = {**SPEC, "data": {"path": str(bad)}}
    assert main(["train", "--spec", str(_spec(tmp_path, doc)), "--out", str(tmp_path)]) == 3
    assert "row 3" in capsys.readouterr().err


def test_truncated_checkpoint_exits_4(trained, tmp_path):
    spec, run = trained
    blob = (run / "checkpoint_seed5.prism").read_bytes()
    cut = tmp_path / "cut.prism"
    cut.write_bytes(blob[: len(blob) // 2])
    assert main(["eval", "--spec", str(spec), "--checkpoint", str(cut), "--out", str(tmp_path)]) == 4


def test_band_count_mismatch_exits_4(trained, tmp_path, capsys):
    _, run = trained
    doc = {**SPEC, "model": {**SPEC["model"], "filter": {"family": "haar", "K": 4}}}
    other = _spec(tmp_path, doc)
    code = main(["eval", "--spec", str(other), "--checkpoint", str(run / "checkpoint_seed5.prism")])
    assert code == 4
    assert "model.filter.K" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exits_5(tmp_path, capsys):
    doc = {**SPEC, "train": {**SPEC["train"], "lr": 1.0e300, "max_epochs": 3}}
    assert main(["train", "--spec", str(_spec(tmp_path, doc)), "--out", str(tmp_path)]) == 5
    assert "NumericError" in capsys.readouterr().err


def test_commands_are_deterministic(tmp_path):
    spec = _spec(tmp_path, {**SPEC, "train": {**SPEC["train"], "max_epochs": 1}})
    for i in range(2):
        assert main(["train", "--spec", str(spec), "--out", str(tmp_path / f"o{i}")]) == 0
    a, b = (next((tmp_path / f"o{i}").iterdir()) for i in range(2))
    ca = checkpoint.load(a / "checkpoint_seed5.prism")[1]
    cb = checkpoint.load(b / "checkpoint_seed5.prism")[1]
    assert all(np.array_equal(ca[k], cb[k]) for k in ca)
