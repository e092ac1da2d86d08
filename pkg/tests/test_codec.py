import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hsnc.codec import (
    LatentCode,
    composite_channels,
    compress,
    compression_ratio,
    decode_latent,
    decompress,
    encode_latent,
    eval_reconstruction,
    ratio_report,
    read_latent,
    sample_spectra,
    shape_ratio,
    write_latent,
    write_recon_report,
)
from hsnc.dataio import Dataset, HyperspectralTile
from hsnc.errors import DataError, FormatError
from hsnc.models import VaeConfig
from hsnc.normalize import RadianceStats, load_radiance_stats
from hsnc.tensor.rng import RngState
from hsnc.utils import read_json
from hsnc.vae import init_params


def test_reference_compression_ratios():
    full, desk = VaeConfig.full(), VaeConfig.desk()
    assert shape_ratio(full.input_shape, full.latent_shape) == 514.0
    assert shape_ratio(full.input_shape, full.latent_shape, with_logvar=True) == 257.0
    assert shape_ratio(desk.input_shape, desk.latent_shape) == 128.0
    code = LatentCode("t", np.zeros(desk.latent_shape))
    assert compression_ratio(desk.input_shape, code) == 128.0


def test_ratio_report_counts_bytes():
    code = LatentCode("t", np.zeros((8, 8, 8)), dtype="f16")
    r = ratio_report((64, 32, 32), code)
    assert r["element_ratio"] == 128.0
    assert r["byte_ratio"] == 256.0
    assert r["latent_bytes"] == 1024.0
    assert r["file_ratio"] == pytest.approx((65536 * 4 + 24) / (1024 + 24))


@pytest.mark.parametrize("dtype", ["f32", "f16"])
@pytest.mark.parametrize("with_logvar", [False, True])
def test_latent_container_round_trip(tmp_path, dtype, with_logvar):
    g = np.random.default_rng(0)
    mean = g.standard_normal((4, 3, 2))
    code = LatentCode("abc", mean, g.standard_normal((4, 3, 2)) if with_logvar else None, dtype)
    buf = encode_latent(code)
    assert buf[:8] == b"HSLAT01\x00"
    assert len(buf) == 24 + code.payload_bytes
    write_latent(code, tmp_path / "abc.hsl")
    back = read_latent(tmp_path / "abc.hsl")
    assert back.tile_id == "abc" and back.dtype == dtype and back.content == code.content
    assert back.mean.tobytes() == code.mean.tobytes()
    if with_logvar:
        assert back.logvar.tobytes() == code.logvar.tobytes()


def test_f16_rounds_to_nearest():
    code = LatentCode("t", np.array([[[1.0 + 2 ** -11, 0.1, 70000.0]]]), dtype="f16")
    assert code.mean.dtype == np.float16
    assert code.mean[0, 0, 0] == np.float16(1.0)
    assert_allclose(code.mean[0, 0, 1], 0.1, rtol=1e-3)
    assert np.isinf(code.mean[0, 0, 2])


def test_latent_container_errors():
    buf = encode_latent(LatentCode("t", np.zeros((2, 2, 2))))
    with pytest.raises(FormatError) as err:
        decode_latent(buf[:-4])
    assert err.value.offset == 24 and err.value.expected == 32 and err.value.actual == 28
    with pytest.raises(FormatError) as err:
        decode_latent(b"HSTILE01" + buf[8:])
    assert err.value.offset == 0
    bad = bytearray(buf)
    bad[20] = 9
    with pytest.raises(FormatError) as err:
        decode_latent(bytes(bad))
    assert err.value.offset == 20
    with pytest.raises(FormatError):
        decode_latent(buf[:12])
    with pytest.raises(DataError):
        LatentCode("t", np.zeros((2, 2)))
    with pytest.raises(DataError):
        LatentCode("t", np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


def test_composite_channels():
    assert composite_channels(64) == [6, 31, 56]
    assert composite_channels(1028) == [100, 500, 900]
    assert all(0 <= c < 4 for c in composite_channels(4))


def _model(cfg):
    params = init_params(cfg, RngState(0))
    g = np.random.default_rng(1)
    for name in ("enc.out.w", "dec.conv_out.w"):
        params[name].data[...] = 0.1 * g.standard_normal(params[name].shape)
    return params


def test_compress_decompress_shapes_and_positivity(synth_dir, small_cfg):
    ds = Dataset(synth_dir)
    stats = load_radiance_stats(synth_dir / "stats.json")
    params = _model(small_cfg)
    tile = ds.tile(ds.ids()[0])
    code = compress(tile, stats, params, small_cfg, content="mean_logvar")
    assert code.shape == small_cfg.latent_shape and code.logvar is not None
    recon = decompress(code, stats, params, small_cfg)
    assert recon.shape == tile.shape and recon.space == "raw"
    assert np.all(recon.data > 0)
    assert compress(tile, stats, params, small_cfg).logvar is None
    with pytest.raises(DataError):
        decompress(LatentCode("x", np.zeros((3, 2, 2))), stats, params, small_cfg)
    with pytest.raises(DataError):
        compress(HyperspectralTile("x", np.ones((8, 4, 4))), stats, params, small_cfg)


def test_f16_latents_reconstruct_close_to_f32(synth_dir, small_cfg):
    ds = Dataset(synth_dir)
    stats = load_radiance_stats(synth_dir / "stats.json")
    params = _model(small_cfg)
    tile = ds.tile(ds.ids()[1])
    a = decompress(compress(tile, stats, params, small_cfg, "f32"), stats, params, small_cfg)
    b = decompress(compress(tile, stats, params, small_cfg, "f16"), stats, params, small_cfg)
    rel = np.abs(np.log(a.data.astype(np.float64)) - np.log(b.data.astype(np.float64)))
    assert rel.max() < 1e-2


def test_eval_reconstruction_exact_and_report(tmp_path):
    stats = RadianceStats(np.zeros(3), np.ones(3), 1)
    orig = [HyperspectralTile(f"t{i}", np.full((3, 2, 2), float(i + 1))) for i in range(2)]
    report = eval_reconstruction(orig, orig, stats, compression_ratio=4.0)
    assert_array_equal(report.rmse_normalized, 0.0)
    assert_array_equal(report.rmse_physical, 0.0)
    assert_allclose(report.mean_spectrum, 1.5)
    shifted = [HyperspectralTile(t.id, t.data * np.e) for t in orig]
    report = eval_reconstruction(orig, shifted, stats)
    assert_allclose(report.rmse_normalized, 1.0, rtol=1e-5)
    paths = write_recon_report(report, tmp_path / "eval")
    summary = read_json(tmp_path / "eval" / "summary.json")
    assert summary["channels"] == 3 and summary["n_tiles"] == 2
    assert len(paths) == 4
    with pytest.raises(DataError):
        eval_reconstruction(orig, orig[:1], stats)


def test_sample_spectra_rows():
    t = HyperspectralTile("t", np.arange(24, dtype=np.float64).reshape(6, 2, 2) + 1)
    frame = sample_spectra(t, t, RngState(0), n=2)
    assert len(frame) == 12
    assert (frame["original"] == frame["reconstruction"]).all()
