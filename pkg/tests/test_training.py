import json

import numpy as np
import pytest

from prism.data import ETT_SPLIT, TimeSeries, Windows, prepare, synthetic_series
from prism.errors import ConfigError, NumericError
from prism.filters import FilterSpec
from prism.model import PrismConfig, init_params
from prism.router import RouterConfig
from prism.training import (
    EarlyStopping,
    RunReport,
    TrainConfig,
    evaluate,
    export_importance,
    repeat_last_metrics,
    run_seeds,
    train,
    write_history,
    write_importance,
)


def small_config(**kw):
    base = dict(T_context=32, T_forecast=8, overlap=4, depth=1, filter=FilterSpec.default("haar", K=3),
                router=RouterConfig(hidden=8), head_hidden=16)
    base.update(kw)
    return PrismConfig(**base)


@pytest.fixture(scope="module")
def small_data():
    return prepare(synthetic_series(T=600, channels=2, periods=(12, 40), seed=1), ETT_SPLIT, 32, 8, stride=2)


def _trace(values, patience, delta):
    es = EarlyStopping(patience, delta)
    return [es.step(v) for v in values]


def test_defaults():
    tc = TrainConfig()
    assert (tc.batch_size, tc.lr, tc.patience, tc.min_delta, tc.max_epochs, len(tc.seeds)) == (512, 1e-4, 15, 2e-4, 100, 4)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


def test_early_stop_on_rising_validation():
    steps = _trace([1.0, 1.1, 1.2, 1.3], patience=1, delta=2e-4)
    assert steps[0] == (True, False)
    assert steps[1] == (False, True)


def test_improvement_of_exactly_delta_does_not_reset():
    # 0.25 and 0.75 are exact in binary, so the drop is exactly delta
    steps = _trace([1.0, 0.75, 0.75], patience=2, delta=0.25)
    assert steps[1] == (True, False)     # new minimum is snapshotted ...
    assert steps[2] == (False, True)     # ... but the wait counter kept running


def test_improvement_above_delta_resets():
    steps = _trace([1.0, 1.0, 0.7, 0.7, 0.7], patience=2, delta=0.25)
    assert [s[1] for s in steps] == [False, False, False, False, True]


def test_train_returns_best_epoch_params(small_data):
    cfg = small_config()
    tc = TrainConfig(batch_size=16, lr=1e-3, max_epochs=6, patience=2, seeds=(0,))
    res = train(cfg, small_data, tc, seed=0)
    vals = [h["val_mse"] for h in res.history]
    assert res.best_val == min(vals)
    assert res.best_epoch == int(np.argmin(vals)) + 1
    assert abs(evaluate(res.params, cfg, small_data.val).mse - min(vals)) <= 1e-12


def test_early_stopping_returns_first_epoch_when_val_rises(small_data, monkeypatch):
    import prism.training as tr

    vals = iter([1.0, 1.1, 1.2, 1.3])
    real = tr.evaluate
    monkeypatch.setattr(tr, "evaluate", lambda *a, **k: tr.Metrics(next(vals), 0.0))
    res = train(small_config(), small_data, TrainConfig(batch_size=64, patience=1, max_epochs=10), seed=0)
    monkeypatch.setattr(tr, "evaluate", real)
    assert len(res.history) == 2 and res.stopped_early and res.best_epoch == 1


def test_training_is_deterministic(small_data):
    cfg = small_config()
    tc = TrainConfig(batch_size=32, lr=1e-3, max_epochs=2)
    a, b = train(cfg, small_data, tc, seed=7), train(cfg, small_data, tc, seed=7)
    strip = lambda h: [(r["epoch"], r["train_mse"], r["val_mse"]) for r in h]
    assert strip(a.history) == strip(b.history)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = train(cfg, small_data, tc, seed=8)
    assert strip(c.history) != strip(a.history)


def test_train_loss_decreases_over_first_epochs(small_data):
    res = train(small_config(), small_data, TrainConfig(batch_size=16, lr=1e-3, max_epochs=5, patience=10), seed=0)
    losses = [h["train_mse"] for h in res.history]
    assert len(losses) == 5
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_divergence_reports_epoch_and_batch(small_data):
    cfg = small_config()
    params = init_params(cfg, 0)
    params["head.m0.k0.b2"] = params["head.m0.k0.b2"] + np.inf
    with pytest.raises(NumericError, match="epoch 1"):
        train(cfg, small_data, TrainConfig(batch_size=64, max_epochs=1), params=params)


def test_evaluate_is_order_invariant(small_data, rng):
    cfg = small_config()
    params = init_params(cfg, 0)
    perm = rng.permutation(len(small_data.test))
    a = evaluate(params, cfg, small_data.test)
    b = evaluate(params, cfg, small_data.test.take(perm), batch_size=7)
    assert a.mse == pytest.approx(b.mse, rel=1e-12) and a.mae == pytest.approx(b.mae, rel=1e-12)


def test_evaluate_perfect_and_empty():
    cfg = small_config()
    params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
    w = Windows(np.ones((3, 32, 1)), np.zeros((3, 8, 1)), np.arange(3))
    m = evaluate(params, cfg, w)
    assert (m.mse, m.mae) == (0.0, 0.0)
    with pytest.raises(ConfigError):
        evaluate(params, cfg, w.take(np.arange(0)))


def test_predict_zero_on_standardized_noise():
    ts = TimeSeries(np.random.default_rng(0).normal(size=(6000, 3)))
    data = prepare(ts, ETT_SPLIT, 32, 8)
    cfg = small_config()
    params = {k: np.zeros_like(v) for k, v in init_params(cfg, 0).items()}
    assert evaluate(params, cfg, data.test).mse == pytest.approx(1.0, abs=0.1)


def test_repeat_last_baseline():
    ctx = np.arange(12.0).reshape(2, 6, 1)
    w = Windows(ctx, np.full((2, 3, 1), 5.0), np.arange(2))
    m = repeat_last_metrics(w)
    assert (m.mse, m.mae) == ((0.0 + 36.0) / 2, (0.0 + 6.0) / 2)


def test_run_report_round_trip(small_data, tmp_path):
    tc = TrainConfig(batch_size=64, lr=1e-3, max_epochs=1, seeds=(0, 1))
    seen = []
    rep = run_seeds(small_config(), small_data, tc, on_seed=lambda s, r, m: seen.append(s))
    assert seen == [0, 1] and len(rep.seeds) == 2
    agg = rep.aggregate()
    mses = [s.test_mse for s in rep.seeds]
    assert agg["test_mse"]["mean"] == pytest.approx(np.mean(mses))
    assert agg["test_mse"]["std"] == pytest.approx(np.std(mses))
    rep.write(tmp_path / "r.json")
    back = RunReport.from_dict(json.loads((tmp_path / "r.json").read_text()))
    assert back.aggregate() == agg
    write_history([{"epoch": 1, "train_mse": 0.5, "val_mse": 0.25, "seconds": 1.0}], tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines() == ["epoch,train_mse,val_mse,seconds", "1,0.5,0.25,1.0"]


def test_uniform_router_exports_one_over_k(small_data, tmp_path):
    cfg = small_config(router=RouterConfig(mode="uniform"), depth=2, overlap=0)
    rows = export_importance(init_params(cfg, 0), cfg, small_data.test.contexts[:5], "node")
    assert len(rows) == (2 + 4) * 3
    assert all(r["mean_weight"] == pytest.approx(1 / 3, abs=1e-15) for r in rows)
    write_importance(rows, tmp_path / "imp.csv")
    assert (tmp_path / "imp.csv").read_text().startswith("level,node,channel,band,mean_weight")


def test_export_groupings(small_data):
    cfg = small_config()
    p0, p1 = init_params(cfg, 0), init_params(cfg, 1)
    ctx = small_data.test.contexts[:1]
    node = export_importance(p0, cfg, ctx, "node")
    assert len(node) == 2 * 3                      # one window, two leaves, K rows each
    chan = export_importance(p0, cfg, ctx, "channel")
    assert len(chan) == 2 * 2 * 3
    level = export_importance(p0, cfg, ctx, "level")
    assert len(level) == 3 and sum(r["mean_weight"] for r in level) == pytest.approx(1.0)
    pair = export_importance([p0, p1], cfg, ctx, "band")
    single = [export_importance(p, cfg, ctx, "band") for p in (p0, p1)]
    for k in range(3):
        assert pair[k]["mean_weight"] == pytest.approx((single[0][k]["mean_weight"] + single[1][k]["mean_weight"]) / 2)
    with pytest.raises(ConfigError):
        export_importance(p0, cfg, ctx, "seed")
