import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hsnc.errors import DimensionError, FormatError
from hsnc.models import VaeConfig
from hsnc.tensor import Graph, RngState, Tensor, backward, check_gradients
from hsnc.vae import (
    Checkpoint,
    GaussianLatent,
    add_supervision,
    compute_losses,
    count_params,
    count_params_closed_form,
    decode,
    encode,
    init_params,
    kl_divergence,
    kl_divergence_reference,
    load_checkpoint,
    load_model,
    masked_mse,
    param_shapes,
    reconstruct,
    reparameterize,
    save_checkpoint,
    supervised_forward,
    vae_param_hash,
)
from hsnc.vae.checkpoint import checkpoint_summary

DESK_PARAMS = 338225


def test_desk_parameter_count_golden():
    cfg = VaeConfig.desk()
    assert count_params(cfg) == DESK_PARAMS
    assert count_params_closed_form(cfg) == DESK_PARAMS


@pytest.mark.parametrize("cfg", [VaeConfig.tiny(), VaeConfig.full(),
                                 VaeConfig.desk().model_copy(update={"supervised": True,
                                                                     "head_products": ["no2", "cloud"]})])
def test_count_paths_agree(cfg):
    assert count_params(cfg) == count_params_closed_form(cfg)


def test_param_names_are_unique():
    names = [s.name for s in param_shapes(VaeConfig.desk())]
    assert len(names) == len(set(names))
    assert "log_s2" in names and "enc.mid.attn.wq" in names


def test_desk_shapes():
    cfg = VaeConfig.desk()
    params = init_params(cfg, RngState(0))
    x = Tensor(np.random.default_rng(0).standard_normal((2, 64, 32, 32)).astype(np.float32))
    lat = encode(x, params, cfg)
    assert lat.mu.shape == (2, 8, 8, 8) and lat.logvar.shape == (2, 8, 8, 8)
    assert decode(lat.mu, params, cfg).shape == (2, 64, 32, 32)


def test_fresh_model_is_zero_map(tiny_cfg):
    params = init_params(tiny_cfg, RngState(3))
    x = Tensor(np.random.default_rng(1).standard_normal((2, 4, 8, 8)).astype(np.float32))
    lat = encode(x, params, tiny_cfg)
    assert_array_equal(lat.mu.data, 0.0)
    assert_array_equal(lat.logvar.data, 0.0)
    assert_array_equal(reconstruct(x, params, tiny_cfg).data, 0.0)
    assert params["log_s2"].item() == pytest.approx(6.0)


def test_init_is_seeded_and_per_name(tiny_cfg):
    a = init_params(tiny_cfg, RngState(5))
    b = init_params(tiny_cfg, RngState(5))
    assert vae_param_hash(a) == vae_param_hash(b)
    sup = tiny_cfg.model_copy(update={"supervised": True, "head_products": ["cloud"]})
    c = init_params(sup, RngState(5))
    assert_array_equal(c["enc.conv_in.w"].data, a["enc.conv_in.w"].data)
    assert "head.cloud.w" in c and "head.cloud.w" not in a


def test_encoder_names_bad_axis(tiny_cfg):
    params = init_params(tiny_cfg, RngState(0))
    with pytest.raises(DimensionError) as err:
        encode(Tensor(np.zeros((1, 3, 8, 8))), params, tiny_cfg)
    assert err.value.axis == "channel"
    with pytest.raises(DimensionError) as err:
        decode(Tensor(np.zeros((1, 2, 2, 3))), params, tiny_cfg)
    assert err.value.axis == "width"


def test_logvar_is_clamped(tiny_cfg):
    params = init_params(tiny_cfg, RngState(0))
    params["enc.out.b"].data[2:] = 100.0
    lat = encode(Tensor(np.zeros((1, 4, 8, 8))), params, tiny_cfg)
    assert_array_equal(lat.logvar.data, 20.0)


def test_reparameterize_eval_returns_mean():
    lat = GaussianLatent(Tensor(np.ones((1, 2, 2, 2))), Tensor(np.zeros((1, 2, 2, 2))))
    assert reparameterize(lat, RngState(0), training=False) is lat.mu
    z = reparameterize(lat, RngState(0), training=True)
    assert z.shape == lat.mu.shape and not np.allclose(z.data, 1.0)


def test_kl_identities():
    zero = GaussianLatent(Tensor(np.zeros((3, 2, 2, 2))), Tensor(np.zeros((3, 2, 2, 2))))
    assert kl_divergence(zero).item() == 0.0
    g = np.random.default_rng(0)
    for _ in range(1000):
        mu = g.standard_normal((2, 2, 2, 2)) * 3
        logvar = g.uniform(-30, 20, (2, 2, 2, 2)) if g.uniform() < 0.1 else g.uniform(-5, 5, (2, 2, 2, 2))
        lat = GaussianLatent(Tensor(mu, dtype=np.float64), Tensor(logvar, dtype=np.float64))
        kl = kl_divergence(lat).item()
        assert kl >= 0.0
        assert abs(kl - kl_divergence_reference(mu, logvar)) <= 1e-6 * max(1.0, abs(kl))


def test_losses_at_init(tiny_cfg):
    params = init_params(tiny_cfg, RngState(0))
    x = Tensor(np.full((2, 4, 8, 8), 0.5, dtype=np.float32))
    lat = encode(x, params, tiny_cfg)
    xhat = decode(lat.mu, params, tiny_cfg)
    terms = compute_losses(x, xhat, lat, params["log_s2"], tiny_cfg)
    v = terms.values()
    assert v["rec"] == pytest.approx(0.5)
    assert v["pixel_mse"] == pytest.approx(0.25)
    assert v["kl"] == pytest.approx(0.0, abs=1e-12)
    assert v["nll"] == pytest.approx(0.5 / np.exp(6.0) + 6.0, rel=1e-6)


def test_masked_mse_ignores_nan_and_handles_empty():
    pred = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    target = np.array([[[1.0, np.nan], [5.0, np.nan]]])
    mse, n = masked_mse(pred, target)
    assert n == 2 and mse.item() == pytest.approx(2.0)
    mse, n = masked_mse(pred, np.full((1, 2, 2), np.nan))
    assert n == 0 and mse.item() == 0.0


def test_supervision_adds_head_losses(caplog):
    cfg = VaeConfig.tiny().model_copy(update={"supervised": True, "head_products": ["o3", "cloud"]})
    params = init_params(cfg, RngState(0))
    x = Tensor(np.ones((2, 4, 8, 8), dtype=np.float32))
    lat = encode(x, params, cfg)
    heads = supervised_forward(lat, params, cfg)
    assert heads["o3"].shape == (2, 1, 2, 2)
    terms = compute_losses(x, decode(lat.mu, params, cfg), lat, params["log_s2"], cfg)
    base = terms.total.item()
    targets = {"o3": np.ones((2, 2, 2)), "cloud": np.full((2, 2, 2), np.nan)}
    terms = add_supervision(terms, heads, targets)
    v = terms.values()
    assert "mse_o3" in v and v["mse_cloud"] == 0.0
    assert v["total"] == pytest.approx(base + v["mse_o3"], rel=1e-6)
    assert "cloud" in caplog.text


def test_tiny_model_end_to_end_gradients(tiny_cfg):
    params = init_params(tiny_cfg, RngState(1))
    g = np.random.default_rng(2)
    # leave the zero-initialized outputs non-zero so every path carries gradient
    for name in params:
        if name.endswith("conv2.w") or name in ("enc.out.w", "dec.conv_out.w"):
            params[name].data[...] = 0.05 * g.standard_normal(params[name].shape)
    names = ["enc.conv_in.w", "enc.mid.attn.wq", "dec.level0.up.w", "dec.conv_out.w"]
    x = g.standard_normal((1, 4, 8, 8))
    eps = g.standard_normal((1, 2, 2, 2))

    def fn(*ws):
        p = params.copy()
        for n, w in zip(names, ws):
            p.tensors[n] = w
        lat = encode(Tensor(x, dtype=np.float64), p, tiny_cfg)
        z = lat.mu + (lat.logvar * 0.5).exp() * Tensor(eps, dtype=np.float64)
        return decode(z, p, tiny_cfg)

    err = check_gradients(fn, [params[n].data for n in names], n_coords=6, dtype=np.float64)
    assert err < 1e-2


def test_backward_reaches_every_parameter(tiny_cfg):
    params = init_params(tiny_cfg, RngState(0))
    x = Tensor(np.random.default_rng(0).standard_normal((2, 4, 8, 8)).astype(np.float32))
    with Graph() as graph:
        lat = encode(x, params, tiny_cfg)
        z = reparameterize(lat, RngState(1))
        terms = compute_losses(x, decode(z, params, tiny_cfg), lat, params["log_s2"], tiny_cfg)
    backward(graph, terms.total)
    grads = params.grads()
    assert np.abs(grads["dec.conv_out.w"]).sum() > 0
    assert np.abs(grads["log_s2"]).sum() > 0
    assert all(np.all(np.isfinite(gr)) for gr in grads.values())


def test_checkpoint_round_trip(tmp_path, tiny_cfg):
    params = init_params(tiny_cfg, RngState(4))
    optim = {"m/log_s2": np.array(0.5, dtype=np.float32), "v/enc.conv_in.w": np.ones((8, 4, 3, 3), np.float32)}
    ckpt = Checkpoint(tiny_cfg, params, optim, {"step": 12}, {"batch": RngState(1).state_dict()}, {"slots": ["a"]})
    path = tmp_path / "c.bin"
    save_checkpoint(path, ckpt)
    back = load_checkpoint(path)
    assert back.step == 12 and back.vae_config == tiny_cfg
    assert vae_param_hash(back.params) == vae_param_hash(params)
    assert_allclose(back.optim["v/enc.conv_in.w"], 1.0)
    assert back.buffer == {"slots": ["a"]}
    cfg, frozen = load_model(path)
    assert cfg == tiny_cfg and not frozen["log_s2"].requires_grad
    assert checkpoint_summary(path)["params"] == count_params(tiny_cfg)


def test_checkpoint_errors(tmp_path, tiny_cfg):
    path = tmp_path / "c.bin"
    save_checkpoint(path, Checkpoint(tiny_cfg, init_params(tiny_cfg, RngState(0))))
    buf = path.read_bytes()
    (tmp_path / "short.bin").write_bytes(buf[:-8])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "short.bin")
    (tmp_path / "magic.bin").write_bytes(b"XXXXXXXX" + buf[8:])
    with pytest.raises(FormatError) as err:
        load_checkpoint(tmp_path / "magic.bin")
    assert err.value.offset == 0
