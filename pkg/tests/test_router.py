import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prism import autodiff as ad
from prism.errors import ConfigError
from prism.router import (
    RouterConfig,
    band_stats,
    band_stats_tensor,
    group_key,
    init_router_params,
    routed_levels,
    score_and_weight,
)


def _params(mode="per_level", depth=2, seed=0, hidden=8):
    cfg = RouterConfig(mode=mode, hidden=hidden)
    return cfg, init_router_params(cfg, depth, np.random.default_rng(seed))


def test_stats_constant():
    s = band_stats(np.full(10, 2.0))
    assert s.as_array()[:5].tolist() == [2.0, 0.0, 2.0, 0.0, 0.0]
    assert s.crest == pytest.approx(2e8, rel=1e-12)


def test_stats_zeros():
    assert band_stats(np.zeros(5)).as_array().tolist() == [0.0] * 6


def test_stats_hand_example():
    s = band_stats(np.array([0.0, 1.0, 0.0, 1.0]))
    assert (s.mu, s.sigma, s.a_max, s.d1, s.d2) == (0.5, 0.5, 1.0, 1.0, 2.0)
    assert s.crest == pytest.approx(2.0, rel=1e-7)


def test_stats_need_three_samples():
    with pytest.raises(ConfigError):
        band_stats(np.zeros(2))


def test_crest_clamp():
    assert band_stats(np.full(4, 2.0), crest_clamp=1e6).crest == 1e6


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 16), n=st.integers(3, 40), scale=st.floats(1e-3, 1e3))
def test_stats_invariants(seed, n, scale):
    s = band_stats(np.random.default_rng(seed).normal(scale=scale, size=n)).as_array()
    assert np.all(np.isfinite(s))
    assert np.all(s[1:] >= 0)


def test_stats_gradient_matches_finite_differences(rng):
    x0 = rng.normal(size=(3, 12))
    weight = rng.normal(size=(3, 6))
    res = ad.grad_check(lambda t: ad.sum_(ad.mul(band_stats_tensor(t["x"]), weight)), {"x": x0}, h=1e-6)
    assert res.max_rel_err < 1e-4


def test_identical_stats_give_uniform_weights(rng):
    cfg, params = _params()
    stats = np.broadcast_to(rng.normal(size=(1, 3, 6)), (5, 3, 6))
    w = score_and_weight(stats, params, cfg).weights
    assert np.allclose(w, 0.2, atol=1e-12)


def test_grid_of_band_stats_accepted(rng):
    cfg, params = _params()
    grid = [[band_stats(rng.normal(size=8)) for _ in range(2)] for _ in range(4)]
    arr = np.array([[s.as_array() for s in row] for row in grid])
    a = score_and_weight(grid, params, cfg)
    assert a.weights.shape == (4, 2)
    assert np.array_equal(a.weights, score_and_weight(arr, params, cfg).weights)


def test_temperature_limits(rng):
    stats = rng.normal(size=(4, 3, 6))
    _, params = _params()
    hot = score_and_weight(stats, params, RouterConfig(hidden=8, temperature=1e6)).weights
    assert np.max(np.abs(hot - 0.25)) <= 1e-6
    cold = score_and_weight(30.0 * stats, params, RouterConfig(hidden=8, temperature=0.01))
    s = cold.scores
    top2 = np.sort(s, axis=0)[-2:]
    assert np.all(top2[1] - top2[0] > 0.2), "fixture must have well separated scores"
    one_hot = (s == s.max(axis=0)).astype(float)
    assert np.max(np.abs(cold.weights - one_hot)) <= 1e-6


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2 ** 16), K=st.integers(2, 7), C=st.integers(1, 5),
       mode=st.sampled_from(["per_level", "shared_all", "per_node", "uniform", "passthrough"]),
       tau=st.floats(0.05, 20.0))
def test_weights_normalized(seed, K, C, mode, tau):
    rng = np.random.default_rng(seed)
    cfg = RouterConfig(mode=mode, hidden=6, temperature=tau)
    params = init_router_params(cfg, 2, rng)
    w = score_and_weight(rng.normal(scale=3.0, size=(K, C, 6)), params, cfg, node=(2, 3)).weights
    if mode == "passthrough":
        assert np.array_equal(w, np.ones((K, C)))
    else:
        assert np.allclose(w.sum(axis=0), 1.0, atol=1e-9)
        # cold temperatures may saturate to exact 0/1 in float64
        assert np.all((w >= 0) & (w <= 1))
        if tau >= 1.0:
            assert np.all((w > 0) & (w < 1))


def test_uniform_mode():
    cfg = RouterConfig(mode="uniform")
    out = score_and_weight(np.random.default_rng(1).normal(size=(4, 2, 6)), {}, cfg)
    assert np.array_equal(out.scores, np.zeros((4, 2)))
    assert np.array_equal(out.weights, np.full((4, 2), 0.25))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 16), shift=st.floats(-50, 50))
def test_softmax_shift_invariance(seed, shift):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=(5, 3))
    a = ad.softmax(ad.Tensor(scores), axis=0).data
    b = ad.softmax(ad.Tensor(scores + shift), axis=0).data
    assert np.max(np.abs(a - b)) <= 1e-12


def test_sharing_contract(rng):
    stats = rng.normal(size=(4, 2, 6))
    w = lambda cfg, params, node: score_and_weight(stats, params, cfg, node=node).weights

    cfg, params = _params("per_level")
    assert np.array_equal(w(cfg, params, (2, 0)), w(cfg, params, (2, 3)))
    assert not np.allclose(w(cfg, params, (1, 0)), w(cfg, params, (2, 0)))

    cfg, params = _params("shared_all")
    assert np.array_equal(w(cfg, params, (1, 1)), w(cfg, params, (2, 2)))

    cfg, params = _params("per_node")
    assert not np.allclose(w(cfg, params, (2, 0)), w(cfg, params, (2, 1)))


def test_parameter_groups():
    assert routed_levels(0) == [0]
    assert routed_levels(2) == [1, 2]
    names = lambda mode: sorted({k.rsplit(".", 1)[0] for k in _params(mode)[1]})
    assert names("per_level") == ["router.L1", "router.L2"]
    assert names("shared_all") == ["router.all"]
    assert len(names("per_node")) == 2 + 4
    assert names("uniform") == [] and names("passthrough") == []
    assert group_key(RouterConfig(), 1, 1) == "router.L1"
    _, p = _params(hidden=8)
    assert p["router.L1.W1"].shape == (8, 6) and p["router.L1.W2"].shape == (1, 8)


def test_config_validation():
    with pytest.raises(ConfigError):
        RouterConfig(mode="threshold")
    with pytest.raises(ConfigError):
        RouterConfig(temperature=0.0)
    with pytest.raises(ConfigError):
        RouterConfig(hidden=0)
