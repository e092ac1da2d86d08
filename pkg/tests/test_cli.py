import json

import numpy as np
import pytest

from hsnc.cli import run
from hsnc.dataio import read_tile
from hsnc.codec import read_latent
from hsnc.utils import load_jsonl, read_json

SYNTH = ["--channels", "4", "--tile", "8", "--n-tiles", "16", "--seed", "3"]


def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.jsonl"}


@pytest.fixture
def workspace(tmp_path):
    data = tmp_path / "data"
    assert run(["synth", "--out", str(data), *SYNTH]) == 0
    assert run(["stats", "--data", str(data), "--out", str(data)]) == 0
    return tmp_path


@pytest.fixture
def trained(workspace):
    data = workspace / "data"
    run_dir = workspace / "vae"
    code = run(["train-vae", "--preset", "tiny", "--data", str(data), "--stats", str(data / "stats.json"),
                "--steps", "2", "--batch", "2", "--out", str(run_dir)])
    assert code == 0
    return workspace


def test_usage_errors_exit_2(capsys):
    assert run([]) == 2
    assert run(["bogus"]) == 2
    assert run(["synth", "--no-such-flag"]) == 2
    assert run(["synth"]) == 2
    assert "error: UsageError" in capsys.readouterr().err


def test_data_errors_exit_1(tmp_path, capsys):
    assert run(["stats", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 1
    assert "DataError" in capsys.readouterr().err


def test_bad_config_file_is_reported(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("[1, 2]", encoding="utf-8")
    assert run(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1
    cfg.write_text(json.dumps({"channels": 0}), encoding="utf-8")
    assert run(["synth", "--config", str(cfg), "--out", str(tmp_path / "d")]) == 1
    assert "ConfigurationError" in capsys.readouterr().err


def test_print_config_merges_file_and_flags(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"channels": 16, "seed": 1}), encoding="utf-8")
    assert run(["synth", "--config", str(cfg), "--seed", "9", "--print-config"]) == 0
    merged = json.loads(capsys.readouterr().out)["synth"]
    assert merged["channels"] == 16 and merged["seed"] == 9
    assert not (tmp_path / "out").exists()


def test_print_config_train_preset(capsys):
    assert run(["train-vae", "--preset", "desk", "--steps", "7", "--print-config"]) == 0
    merged = json.loads(capsys.readouterr().out)
    assert merged["vae"]["in_channels"] == 64 and merged["train"]["steps"] == 7


def test_supervised_needs_l2_norms(tmp_path):
    assert run(["train-supervised", "--preset", "tiny", "--out", str(tmp_path / "r")]) == 2


def test_synth_is_byte_identical(tmp_path):
    assert run(["synth", "--out", str(tmp_path / "a"), *SYNTH]) == 0
    assert run(["synth", "--out", str(tmp_path / "b"), *SYNTH]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert a.keys() == b.keys() and all(a[k] == b[k] for k in a)


def test_manifest_has_one_record_per_command(workspace):
    records = load_jsonl(workspace / "data" / "manifest.jsonl")
    assert [r["command"] for r in records] == ["synth", "stats"]
    assert records[0]["seed"] == 3 and records[0]["config_hashes"]["synth"]
    assert records[1]["input_ids"]


def test_encode_decode_round_trip(trained, capsys):
    data, model = trained / "data", trained / "vae" / "final.bin"
    stats = data / "stats.json"
    capsys.readouterr()
    assert run(["encode", "--model", str(model), "--stats", str(stats), "--in", str(data / "tiles"),
                "--out", str(trained / "lat"), "--dtype", "f16"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["element_ratio"] == 4 * 8 * 8 / (2 * 2 * 2)
    latents = sorted((trained / "lat").glob("*.hsl"))
    assert len(latents) == 16 and read_latent(latents[0]).dtype == "f16"
    assert run(["decode", "--model", str(model), "--stats", str(stats), "--in", str(trained / "lat"),
                "--out", str(trained / "rec")]) == 0
    tiles = sorted((trained / "rec").glob("*.hst"))
    assert [p.stem for p in tiles] == [p.stem for p in latents]
    rec = read_tile(tiles[0])
    assert rec.shape == (4, 8, 8) and np.all(rec.data > 0)
    assert len(load_jsonl(trained / "lat" / "manifest.jsonl")) == 1


def test_encode_single_file_output(trained):
    data, model = trained / "data", trained / "vae" / "final.bin"
    src = sorted((data / "tiles").glob("*.hst"))[0]
    out = trained / "one" / "x.hsl"
    assert run(["encode", "--model", str(model), "--stats", str(data / "stats.json"), "--in", str(src),
                "--out", str(out), "--with-logvar"]) == 0
    assert read_latent(out).content == "mean_logvar"
    assert (trained / "one" / "manifest.jsonl").exists()


def test_eval_recon_writes_report(trained):
    data, model = trained / "data", trained / "vae" / "final.bin"
    out = trained / "eval"
    assert run(["eval-recon", "--model", str(model), "--stats", str(data / "stats.json"), "--data", str(data),
                "--n-tiles", "3", "--out", str(out)]) == 0
    summary = read_json(out / "summary.json")
    assert summary["channels"] == 4 and summary["compression_ratio"] == 32.0
    assert (out / "rmse_per_channel.csv").exists()
    assert len(list(out.glob("spectra_*.csv"))) == summary["n_tiles"]


def test_probes_and_report(trained):
    data, model = trained / "data", trained / "vae" / "final.bin"
    cfg = trained / "probes.json"
    cfg.write_text(json.dumps({"linear": {"patience": 2}, "mlp": {"patience": 2, "hidden": [8, 8]}}),
                   encoding="utf-8")
    probes = trained / "probes"
    assert run(["train-probes", "--model", str(model), "--data", str(data), "--stats", str(data / "stats.json"),
                "--config", str(cfg), "--max-epochs", "4", "--pixels-per-file", "4", "--out", str(probes)]) == 0
    assert len(read_json(probes / "probe_report.json")["entries"]) == 8
    assert run(["train-probes", "--model", str(model), "--data", str(data), "--products", "so2",
                "--out", str(trained / "bad")]) == 2

    out = trained / "report"
    assert run(["report", "--run", str(trained / "vae"), "--probes", str(probes), "--out", str(out)]) == 0
    assert read_json(out / "report.json")["train_records"] == 2
    assert (out / "probes.csv").read_bytes() == (probes / "probe_report.csv").read_bytes()
    assert run(["report", "--out", str(out)]) == 2
