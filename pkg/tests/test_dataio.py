import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hsnc.dataio import (
    Dataset,
    HyperspectralTile,
    L2Product,
    L2ProductSet,
    SampleBuffer,
    TileCache,
    decode_l2,
    decode_tile,
    encode_l2,
    encode_tile,
    fixed_validation_ids,
    generate_dataset,
    make_templates,
    read_tile,
    sample_batch,
    split_files,
    synth_generate,
    tile_ids,
    write_tile,
)
from hsnc.dataio.split import id_hash
from hsnc.errors import DataError, FormatError, UsageError
from hsnc.models import SynthConfig
from hsnc.tensor.rng import RngState
from hsnc.utils import fnv1a64


def test_fnv1a64_reference_values():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def test_tile_header_is_24_bytes():
    tile = HyperspectralTile("x", np.ones((2, 3, 4)))
    buf = encode_tile(tile)
    assert len(buf) == 24 + 2 * 3 * 4 * 4
    assert buf[:8] == b"HSTILE01"


@pytest.mark.parametrize("seed", range(100))
def test_tile_round_trip_bitwise(seed):
    g = np.random.default_rng(seed)
    shape = tuple(int(v) for v in g.integers(1, 6, size=3))
    space = "raw" if seed % 2 else "normalized"
    data = g.uniform(0, 100, shape) if space == "raw" else g.standard_normal(shape)
    tile = HyperspectralTile(f"t{seed}", data, space)
    back = decode_tile(encode_tile(tile), tile.id)
    assert back.space == space
    assert back.data.tobytes() == tile.data.tobytes()


def test_tile_truncated_and_bad_magic():
    buf = encode_tile(HyperspectralTile("x", np.ones((2, 2, 2))))
    with pytest.raises(FormatError) as err:
        decode_tile(buf[:-4])
    assert err.value.offset == 24 and err.value.expected == 32 and err.value.actual == 28
    with pytest.raises(FormatError) as err:
        decode_tile(b"NOTATILE" + buf[8:])
    assert err.value.offset == 0
    with pytest.raises(FormatError):
        decode_tile(buf[:10])


def test_tile_rejects_negative_raw_values():
    with pytest.raises(DataError):
        HyperspectralTile("x", -np.ones((1, 1, 1)))
    HyperspectralTile("x", -np.ones((1, 1, 1)), "normalized")


def _random_l2(seed):
    g = np.random.default_rng(seed)
    h, w = (int(v) for v in g.integers(1, 6, size=2))
    products = {}
    for name, kind in (("no2", "asinh"), ("o3", "zscore"), ("hcho", "asinh"), ("cloud", "logit")):
        v = g.uniform(0, 1, (h, w))
        v[g.uniform(size=(h, w)) < 0.3] = np.nan
        products[name] = L2Product(v, kind)
    return L2ProductSet(f"s{seed}", products)


@pytest.mark.parametrize("seed", range(100))
def test_l2_round_trip_bitwise_with_nan(seed):
    s = _random_l2(seed)
    back = decode_l2(encode_l2(s), s.id)
    assert list(back.products) == list(s.products)
    for name in s.products:
        assert back.products[name].kind == s.products[name].kind
        assert back[name].tobytes() == s[name].tobytes()


def test_l2_truncated_and_bad_magic():
    buf = encode_l2(_random_l2(0))
    with pytest.raises(FormatError) as err:
        decode_l2(buf[:-1])
    assert err.value.expected is not None and err.value.actual == err.value.expected - 1
    with pytest.raises(FormatError) as err:
        decode_l2(b"XXXXXXXX" + buf[8:])
    assert err.value.offset == 0


def test_l2_set_validation():
    with pytest.raises(DataError):
        L2ProductSet("x", {"so2": L2Product(np.zeros((2, 2)), "asinh")})
    with pytest.raises(DataError):
        L2ProductSet("x", {"cloud": L2Product(np.full((2, 2), 1.5), "logit")})
    with pytest.raises(DataError):
        L2ProductSet("x", {"no2": L2Product(np.zeros((2, 2)), "asinh"),
                           "o3": L2Product(np.zeros((3, 2)), "zscore")})


def test_split_is_hash_based_and_stable():
    ids = tile_ids(300)
    s = split_files(ids, 70)
    assert s.train_ids == sorted(s.train_ids)
    assert set(s.train_ids) | set(s.val_ids) == set(ids)
    assert all(id_hash(i) % 100 < 70 for i in s.train_ids)
    assert 150 < len(s.train_ids) < 260
    grown = split_files(list(reversed(ids)) + tile_ids(400)[300:], 70)
    assert set(s.train_ids) <= set(grown.train_ids)
    assert set(s.val_ids) <= set(grown.val_ids)


def test_split_rejects_duplicates():
    with pytest.raises(UsageError):
        split_files(["a", "b", "a"])


def test_fixed_validation_ids_is_order_independent():
    ids = tile_ids(50)
    assert fixed_validation_ids(ids, 10) == fixed_validation_ids(list(reversed(ids)), 10)
    assert len(fixed_validation_ids(ids, 100)) == 50


def test_cache_evicts_least_recent():
    c = TileCache(2)
    c.set("a", 1)
    c.set("b", 2)
    assert c.get("a") == 1
    c.set("c", 3)
    assert "b" not in c and "a" in c and len(c) == 2
    assert c.get("b") is None
    assert c.hits == 1 and c.misses == 1


def test_buffer_refresh_and_resume():
    ids = tile_ids(20)
    buf = SampleBuffer(ids, 5, RngState(3).split("buffer"))
    assert len(buf) == 5
    for _ in range(7):
        buf.refresh()
    state = buf.state_dict()
    clone = SampleBuffer.from_state_dict(state)
    for _ in range(30):
        buf.refresh()
        clone.refresh()
        assert buf.slots == clone.slots
    assert buf.epoch >= 1


def test_buffer_visits_every_id():
    ids = tile_ids(12)
    buf = SampleBuffer(ids, 3, RngState(0))
    seen = set(buf.slots)
    for _ in range(len(ids)):
        buf.refresh()
        seen.update(buf.slots)
    assert seen == set(ids)


def test_small_buffer_list_never_refreshes():
    buf = SampleBuffer(["a", "b"], 5, RngState(0))
    before = list(buf.slots)
    buf.refresh()
    assert buf.slots == before
    batch = sample_batch(buf, 6, RngState(1))
    assert len(batch) == 6 and set(batch) <= {"a", "b"}
    with pytest.raises(UsageError):
        sample_batch(SampleBuffer([], 3, RngState(0)), 2, RngState(0))


def test_synth_planted_model_shapes_and_ranges():
    cfg = SynthConfig(channels=16, tile=8, n_tiles=1, nan_fraction=0.1)
    tile, l2 = synth_generate(cfg, RngState(1).split("t"), "t00000")
    assert tile.shape == (16, 8, 8) and tile.space == "raw"
    assert np.all(tile.data > 0)
    o3 = l2["o3"][np.isfinite(l2["o3"])]
    assert o3.min() >= 200.0 and o3.max() <= 500.0
    cloud = l2["cloud"][np.isfinite(l2["cloud"])]
    assert cloud.min() >= 0.0 and cloud.max() <= 1.0
    assert 0 < np.isnan(l2["no2"]).mean() < 0.4


def test_synth_without_absorbers_or_clouds_is_continuum():
    cfg = SynthConfig(channels=8, tile=4, n_tiles=1, absorber_scale=0.0, cloud_cover=0.0, noise=0.0,
                      nan_fraction=0.0)
    tile, l2 = synth_generate(cfg, RngState(2), "t00000")
    tpl = make_templates(cfg)
    assert_allclose(tile.data, np.broadcast_to(tpl.continuum[:, None, None], tile.shape), rtol=1e-6)
    assert_array_equal(l2["cloud"], 0.0)
    assert_array_equal(l2["no2"], 0.0)


@pytest.mark.parametrize("scale", [0.0, 0.25, 3.0])
def test_o3_stays_in_column_range_for_any_absorber_scale(scale):
    cfg = SynthConfig(channels=8, tile=8, n_tiles=1, absorber_scale=scale, nan_fraction=0.0)
    _, l2 = synth_generate(cfg, RngState(4), "t00000")
    assert l2["o3"].min() >= 200.0 and l2["o3"].max() <= 500.0
    assert l2["o3"].max() - l2["o3"].min() > 1.0


def test_full_cloud_cover_gives_cloud_continuum():
    cfg = SynthConfig(channels=8, tile=4, n_tiles=1, cloud_cover=1.0, noise=0.0, nan_fraction=0.0)
    tile, l2 = synth_generate(cfg, RngState(2), "t00000")
    tpl = make_templates(cfg)
    assert_array_equal(l2["cloud"], 1.0)
    assert_allclose(tile.data, np.broadcast_to(tpl.cloud_continuum[:, None, None], tile.shape), rtol=1e-6)


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_generate_dataset_is_byte_identical(tmp_path):
    cfg = SynthConfig(channels=8, tile=8, n_tiles=6, seed=11)
    generate_dataset(cfg, tmp_path / "a")
    generate_dataset(cfg, tmp_path / "b")
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys()
    assert "truth/templates.json" in a and "split.json" in a
    assert all(a[k] == b[k] for k in a)


def test_dataset_reads_back_generated_files(synth_dir):
    ds = Dataset(synth_dir)
    assert len(ds) == 24
    tid = ds.ids()[0]
    t = ds.tile(tid)
    assert t is ds.tile(tid)
    assert ds.cache.hits == 1
    assert ds.l2(tid).h == 8
    assert ds.stack(ds.ids()[:3]).shape == (3, 8, 8, 8)
    assert ds.synth_config().n_tiles == 24
    assert ds.templates().cross_sections.shape == (3, 8)
    split = ds.split(70)
    assert sorted(split.train_ids + split.val_ids) == ds.ids()
    with pytest.raises(DataError):
        ds.tile("missing")


def test_read_tile_takes_id_from_file_name(tmp_path):
    write_tile(HyperspectralTile("ignored", np.ones((1, 2, 2))), tmp_path / "abc.hst")
    assert read_tile(tmp_path / "abc.hst").id == "abc"
    with pytest.raises(FormatError):
        read_tile(tmp_path / "missing.hst")
