import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hsnc.dataio import HyperspectralTile, L2Product, L2ProductSet
from hsnc.errors import DataError, DegenerateDistributionError, DomainError
from hsnc.normalize import (
    L2Normalizer,
    RadianceStats,
    compute_radiance_stats,
    denormalize_batch,
    fit_l2_normalizer,
    fit_l2_normalizers,
    load_l2_normalizers,
    load_radiance_stats,
    normalize_batch,
    pool_l2,
    pooled_targets,
    save_l2_normalizers,
    save_radiance_stats,
    transform_l2,
    transform_radiance,
)


def _tile(tile_id, data):
    return HyperspectralTile(tile_id, np.asarray(data, dtype=np.float32))


def test_radiance_stats_match_direct_computation():
    g = np.random.default_rng(0)
    tiles = [_tile(f"t{i}", np.exp(g.uniform(1, 8, (3, 4, 5)))) for i in range(5)]
    stats = compute_radiance_stats(tiles)
    logs = np.log(np.concatenate([t.data.reshape(3, -1) for t in tiles], axis=1).astype(np.float64))
    assert_allclose(stats.mu, logs.mean(axis=1), rtol=1e-6)
    assert_allclose(stats.sigma, logs.std(axis=1), rtol=1e-5)
    assert stats.pixel_count == 5 * 20
    assert stats.source_ids == [f"t{i}" for i in range(5)]


def test_radiance_stats_floor_at_one():
    stats = compute_radiance_stats([_tile("z", np.zeros((2, 2, 2)))])
    assert_array_equal(stats.mu, 0.0)
    assert_array_equal(stats.sigma, 0.0)


def test_radiance_stats_reject_mixed_channels():
    with pytest.raises(DataError):
        compute_radiance_stats([_tile("a", np.ones((2, 2, 2))), _tile("b", np.ones((3, 2, 2)))])
    with pytest.raises(DataError):
        compute_radiance_stats([])


def test_radiance_forward_clips():
    stats = RadianceStats(np.zeros(1), np.ones(1), 1)
    z = transform_radiance(_tile("a", [[[math.exp(12.0)]]]), stats, "forward")
    assert z.space == "normalized"
    assert_allclose(z.data, 10.0)


def test_radiance_round_trip():
    g = np.random.default_rng(1)
    tile = _tile("a", np.exp(g.uniform(2, 9, (4, 6, 6))))
    stats = compute_radiance_stats([tile])
    back = transform_radiance(transform_radiance(tile, stats, "forward"), stats, "inverse")
    assert back.space == "raw"
    assert np.max(np.abs(back.data - tile.data) / tile.data) < 1e-5
    assert_allclose(denormalize_batch(normalize_batch(tile.data, stats), stats), tile.data, rtol=1e-5)


def test_stats_json_round_trip_is_bit_exact(tmp_path):
    g = np.random.default_rng(2)
    stats = RadianceStats(g.standard_normal(16), g.uniform(0.1, 2, 16), 123, ["x", "y"])
    save_radiance_stats(stats, tmp_path / "stats.json")
    back = load_radiance_stats(tmp_path / "stats.json")
    assert_array_equal(back.mu, stats.mu)
    assert_array_equal(back.sigma, stats.sigma)
    assert back.pixel_count == 123 and back.source_ids == ["x", "y"]


def test_asinh_fit_uses_mad():
    n = fit_l2_normalizer(np.array([1.0, 2.0, 3.0]), "asinh")
    assert_allclose(n.scale, 1.4826)


def test_zscore_fit_is_population_std():
    n = fit_l2_normalizer(np.array([0.0, 0.0, 0.0, 10.0]), "zscore")
    assert_allclose(n.mu, 2.5)
    assert_allclose(n.sigma, math.sqrt(18.75))


def test_fit_ignores_nan_and_rejects_degenerate():
    n = fit_l2_normalizer(np.array([np.nan, 1.0, 2.0, 3.0, np.inf]), "asinh")
    assert_allclose(n.scale, 1.4826)
    with pytest.raises(DegenerateDistributionError):
        fit_l2_normalizer(np.array([4.0, 4.0, 4.0]), "zscore")
    with pytest.raises(DegenerateDistributionError):
        fit_l2_normalizer(np.array([1.0, 1.0, 1.0, 5.0]), "asinh")
    with pytest.raises(DegenerateDistributionError):
        fit_l2_normalizer(np.array([1.0]), "zscore")


def test_logit_squeeze_values():
    n = L2Normalizer("logit")
    out = transform_l2(np.array([0.0, 0.5, 1.0]), n, "forward")
    assert_allclose(out[0], math.log(0.01 / 0.99), atol=1e-6)
    assert_allclose(out[1], 0.0, atol=1e-12)
    assert_allclose(out[2], math.log(0.99 / 0.01), atol=1e-6)
    with pytest.raises(DomainError):
        transform_l2(np.array([1.2]), n, "forward")


@pytest.mark.parametrize("n", [
    L2Normalizer("asinh", unit_scale=1e15, scale=2.5),
    L2Normalizer("zscore", mu=300.0, sigma=40.0),
    L2Normalizer("logit"),
])
def test_l2_inverse_composition(n):
    g = np.random.default_rng(3)
    if n.kind == "logit":
        x = g.uniform(0, 1, 50)
    elif n.kind == "asinh":
        x = g.uniform(-5, 5, 50) * 1e15
    else:
        x = g.uniform(200, 500, 50)
    back = transform_l2(transform_l2(x, n, "forward"), n, "inverse")
    assert np.max(np.abs(back - x) / n.unit_scale) < 1e-6


def test_l2_nan_passes_through():
    for n in (L2Normalizer("asinh"), L2Normalizer("zscore"), L2Normalizer("logit")):
        out = transform_l2(np.array([np.nan, 0.5]), n, "forward")
        assert np.isnan(out[0]) and np.isfinite(out[1])


def test_pool_l2_block_mean_and_nan():
    m = np.arange(1, 17, dtype=np.float64).reshape(4, 4)
    assert_allclose(pool_l2(m, 4), [[8.5]])
    m[0, 0] = np.nan
    assert_allclose(pool_l2(m, 4), [[(136.0 - 1.0) / 15.0]])
    assert np.isnan(pool_l2(np.full((4, 4), np.nan), 4)[0, 0])
    with pytest.raises(DataError):
        pool_l2(np.zeros((6, 6)), 4)


def _l2set(set_id, g, h=8):
    return L2ProductSet(set_id, {
        "no2": L2Product(g.uniform(0, 5e15, (h, h)), "asinh"),
        "o3": L2Product(g.uniform(200, 500, (h, h)), "zscore"),
        "hcho": L2Product(g.uniform(0, 5e16, (h, h)), "asinh"),
        "cloud": L2Product(g.uniform(0, 1, (h, h)), "logit"),
    })


def test_fit_l2_normalizers_uses_train_only_and_round_trips(tmp_path):
    g = np.random.default_rng(4)
    sets = [_l2set(f"t{i}", g) for i in range(4)]
    sets[3].products["o3"].values[:] = 1e6
    norms = fit_l2_normalizers(sets, ["t0", "t1", "t2"])
    assert set(norms) == {"no2", "o3", "hcho", "cloud"}
    assert norms["o3"].mu < 500
    assert norms["no2"].unit_scale == 1e15 and norms["hcho"].unit_scale == 1e16
    save_l2_normalizers(norms, tmp_path / "l2.json")
    back = load_l2_normalizers(tmp_path / "l2.json")
    for p in norms:
        assert back[p].params() == norms[p].params()
        assert back[p].kind == norms[p].kind


def test_pooled_targets_pool_then_normalize():
    g = np.random.default_rng(5)
    s = _l2set("t0", g)
    norms = fit_l2_normalizers([s], ["t0"])
    out = pooled_targets(s, norms, 4, ["o3", "cloud"])
    assert out["o3"].shape == (2, 2)
    expected = transform_l2(pool_l2(s["o3"], 4), norms["o3"], "forward")
    assert_allclose(out["o3"], expected, rtol=1e-6)


@pytest.mark.parametrize("seed", range(5))
def test_asinh_is_odd_and_strictly_increasing(seed):
    g = np.random.default_rng(seed)
    n = L2Normalizer("asinh", unit_scale=1e15, scale=float(g.uniform(0.1, 5.0)))
    x = np.unique(g.uniform(-50.0, 50.0, 200)) * 1e15
    fwd = transform_l2(x, n, "forward")
    assert_allclose(transform_l2(-x, n, "forward"), -fwd, rtol=0, atol=1e-12)
    assert np.all(np.diff(fwd) > 0)


@pytest.mark.parametrize("seed", range(5))
def test_logit_is_strictly_increasing_on_unit_interval(seed):
    u = np.unique(np.concatenate([[0.0, 1.0], np.random.default_rng(seed).uniform(0.0, 1.0, 200)]))
    fwd = transform_l2(u, L2Normalizer("logit"), "forward")
    assert np.all(np.isfinite(fwd))
    assert np.all(np.diff(fwd) > 0)


@pytest.mark.parametrize("seed", range(5))
def test_pooling_commutes_with_a_constant_shift(seed):
    g = np.random.default_rng(seed)
    m = g.standard_normal((8, 12)) * 10.0
    c = float(g.uniform(-100.0, 100.0))
    assert_allclose(pool_l2(m + c, 4), pool_l2(m, 4) + c, rtol=1e-12, atol=1e-9)
