"""One method per CLI subcommand, composing the module operations."""
from __future__ import annotations

import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from tqdm import tqdm

from . import __version__
from .codec import (
    compress,
    decompress,
    eval_reconstruction,
    ratio_report,
    read_latent,
    sample_spectra,
    write_latent,
    write_recon_report,
)
from .dataio import Dataset, fixed_validation_ids, generate_dataset, read_tile, write_tile
from .errors import DataError, UsageError
from .log import progress_enabled
from .models import PRODUCTS, DataConfig, ProbeConfig, RunManifest, SynthConfig, TrainConfig, VaeConfig
from .normalize import (
    compute_radiance_stats,
    fit_l2_normalizers,
    load_l2_normalizers,
    load_radiance_stats,
    save_l2_normalizers,
    save_radiance_stats,
)
from .probes import evaluate_probe_suite, write_probe_report
from .tensor.rng import RngState
from .train import train_vae
from .utils import append_jsonl, load_jsonl, write_json
from .vae import load_model, vae_param_hash

logger = logging.getLogger(__name__)

MANIFEST = "manifest.jsonl"


@dataclass
class StepResult:
    outputs: List[Path] = field(default_factory=list)
    input_ids: List[str] = field(default_factory=list)
    config: Dict[str, Any] = field(default_factory=dict)
    config_hashes: Dict[str, str] = field(default_factory=dict)
    seed: Optional[int] = None
    summary: Dict[str, Any] = field(default_factory=dict)


def manifest_dir(out: Path) -> Path:
    """Directory that receives manifest.jsonl: ``out`` itself, or its parent for file outputs."""
    return out if out.suffix == "" or out.is_dir() else out.parent


def record_manifest(command: str, out: Path, result: StepResult, started_at: str, wall_time_s: float) -> Path:
    m = RunManifest(
        command=command,
        config_hashes=result.config_hashes,
        config=result.config,
        input_ids=result.input_ids,
        output_paths=[str(p) for p in result.outputs],
        seed=result.seed,
        tool_version=__version__,
        started_at=started_at,
        wall_time_s=round(wall_time_s, 3),
    )
    d = manifest_dir(out)
    d.mkdir(parents=True, exist_ok=True)
    path = d / MANIFEST
    append_jsonl(path, [m.model_dump(mode="json")])
    return path


def _inputs(path: Path, suffix: str) -> List[Path]:
    if path.is_dir():
        files = sorted(path.glob(f"*{suffix}"))
        if not files:
            raise DataError(f"no *{suffix} files in {path}")
        return files
    if not path.exists():
        raise DataError(f"input {path} does not exist")
    return [path]


def _target(out: Path, src: Path, suffix: str, many: bool) -> Path:
    if many or out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        return out / f"{src.stem}{suffix}"
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


class Pipeline:
    def synth(self, cfg: SynthConfig, out: Path, train_pct: int = 70) -> StepResult:
        split = generate_dataset(cfg, out, train_pct)
        ids = split.train_ids + split.val_ids
        return StepResult(
            outputs=[out / "tiles", out / "l2", out / "synth.json", out / "split.json", out / "truth" / "templates.json"],
            config={"synth": cfg.model_dump(mode="json"), "train_pct": train_pct},
            config_hashes={"synth": cfg.config_hash()},
            seed=cfg.seed,
            summary={"tiles": len(ids), "train": len(split.train_ids), "val": len(split.val_ids)},
        )

    def stats(self, data_dir: Path, out: Path, tile_ids: Optional[Sequence[str]] = None,
              train_pct: int = 70) -> StepResult:
        """Radiance stats over an explicit tile list (default: the training split) and L2 normalizers."""
        ds = Dataset(data_dir)
        split = ds.split(train_pct)
        ids = list(tile_ids) if tile_ids else split.train_ids
        unknown = sorted(set(ids) - set(ds.ids()))
        if unknown:
            raise DataError(f"unknown tile ids {unknown[:5]}")
        if not ids:
            raise DataError(f"no tiles to compute stats from in {data_dir}")
        out.mkdir(parents=True, exist_ok=True)
        stats = compute_radiance_stats(ds.tile(i) for i in tqdm(ids, desc="stats", disable=not progress_enabled()))
        save_radiance_stats(stats, out / "stats.json")
        outputs = [out / "stats.json"]
        l2_ids = [i for i in split.train_ids if (ds.root / "l2" / f"{i}.hsl2").exists()]
        if l2_ids:
            norms = fit_l2_normalizers((ds.l2(i) for i in l2_ids), l2_ids)
            save_l2_normalizers(norms, out / "l2_norms.json")
            outputs.append(out / "l2_norms.json")
        else:
            logger.warning("no L2 products for the training split; skipped normalizer fitting")
        return StepResult(outputs=outputs, input_ids=ids, config={"data": str(data_dir), "train_pct": train_pct},
                          summary={"channels": stats.channels, "pixels": stats.pixel_count})

    def train(self, vae_cfg: VaeConfig, train_cfg: TrainConfig, data_cfg: DataConfig, out: Path,
              resume: Optional[Path] = None) -> StepResult:
        res = train_vae(vae_cfg, train_cfg, data_cfg, out, resume=resume)
        return StepResult(
            outputs=[res.run_dir / "config.json", res.run_dir / "metrics.jsonl", res.final_path],
            input_ids=res.val_ids,
            config={"vae": vae_cfg.model_dump(mode="json"), "train": train_cfg.model_dump(mode="json"),
                    "data": data_cfg.model_dump(mode="json"), "resume": str(resume) if resume else None},
            config_hashes={"vae": vae_cfg.config_hash(), "train": train_cfg.config_hash(), "data": data_cfg.config_hash()},
            seed=train_cfg.seed,
            summary={"steps": res.steps_done, "last_val": res.last_val},
        )

    def encode(self, model: Path, stats_path: Path, src: Path, out: Path,
               dtype: str = "f32", with_logvar: bool = False) -> StepResult:
        cfg, params = load_model(model)
        stats = load_radiance_stats(stats_path)
        files = _inputs(src, ".hst")
        outputs, ids = [], []
        content = "mean_logvar" if with_logvar else "mean_only"
        ratio = {}
        for f in tqdm(files, desc="encode", disable=not progress_enabled()):
            tile = read_tile(f)
            code = compress(tile, stats, params, cfg, dtype=dtype, content=content)
            target = _target(out, f, ".hsl", len(files) > 1 or src.is_dir())
            write_latent(code, target)
            outputs.append(target)
            ids.append(tile.id)
            ratio = ratio_report(tile.shape, code)
        return StepResult(outputs=outputs, input_ids=ids,
                          config={"model": str(model), "stats": str(stats_path), "dtype": dtype, "content": content},
                          config_hashes={"vae": cfg.config_hash()}, summary=ratio)

    def decode(self, model: Path, stats_path: Path, src: Path, out: Path) -> StepResult:
        cfg, params = load_model(model)
        stats = load_radiance_stats(stats_path)
        files = _inputs(src, ".hsl")
        outputs, ids = [], []
        for f in tqdm(files, desc="decode", disable=not progress_enabled()):
            code = read_latent(f)
            tile = decompress(code, stats, params, cfg)
            target = _target(out, f, ".hst", len(files) > 1 or src.is_dir())
            write_tile(tile, target)
            outputs.append(target)
            ids.append(code.tile_id)
        return StepResult(outputs=outputs, input_ids=ids, config={"model": str(model), "stats": str(stats_path)},
                          config_hashes={"vae": cfg.config_hash()})

    def eval_recon(self, model: Path, stats_path: Path, data_dir: Path, out: Path, n_tiles: int = 8,
                   dtype: str = "f32", train_pct: int = 70, seed: int = 42) -> StepResult:
        cfg, params = load_model(model)
        stats = load_radiance_stats(stats_path)
        ds = Dataset(data_dir)
        ids = fixed_validation_ids(ds.split(train_pct).val_ids, n_tiles)
        if not ids:
            raise DataError(f"no validation tiles in {data_dir}")
        orig, recon, ratio = [], [], 1.0
        for i in tqdm(ids, desc="eval-recon", disable=not progress_enabled()):
            tile = ds.tile(i)
            code = compress(tile, stats, params, cfg, dtype=dtype)
            orig.append(tile)
            recon.append(decompress(code, stats, params, cfg))
            ratio = ratio_report(tile.shape, code)["element_ratio"]
        report = eval_reconstruction(orig, recon, stats, compression_ratio=ratio)
        outputs = write_recon_report(report, out)
        rng = RngState(seed).split("spectra")
        for a, b in zip(orig, recon):
            p = out / f"spectra_{a.id}.csv"
            sample_spectra(a, b, rng.split(a.id)).to_csv(p, index=False)
            outputs.append(p)
        return StepResult(outputs=outputs, input_ids=ids,
                          config={"model": str(model), "stats": str(stats_path), "dtype": dtype, "n_tiles": n_tiles},
                          config_hashes={"vae": cfg.config_hash()}, seed=seed, summary=report.summary())

    def train_probes(self, model: Path, data_dir: Path, stats_path: Path, l2_norm_path: Path, out: Path,
                     probe_cfgs: Sequence[ProbeConfig], products: Sequence[str] = PRODUCTS,
                     max_files: int = 70) -> StepResult:
        bad = [p for p in products if p not in PRODUCTS]
        if bad:
            raise UsageError(f"unknown products {bad}; choose from {', '.join(PRODUCTS)}")
        cfg, params = load_model(model)
        before = vae_param_hash(params)
        stats = load_radiance_stats(stats_path)
        norms = load_l2_normalizers(l2_norm_path)
        ds = Dataset(data_dir)
        ids = fixed_validation_ids(ds.ids(), max_files)
        tiles = [ds.tile(i) for i in ids]
        l2sets = [ds.l2(i) for i in ids]
        report = evaluate_probe_suite(params, cfg, tiles, l2sets, stats, norms, probe_cfgs, products)
        if vae_param_hash(params) != before:
            raise DataError("probe training modified the frozen encoder")
        outputs = write_probe_report(report, out)
        return StepResult(
            outputs=outputs, input_ids=ids,
            config={"model": str(model), "products": list(products), "max_files": max_files,
                    "probes": [p.model_dump(mode="json") for p in probe_cfgs]},
            config_hashes={"vae": cfg.config_hash(), **{p.kind: p.config_hash() for p in probe_cfgs}},
            seed=probe_cfgs[0].seed if probe_cfgs else None,
            summary={"entries": len(report.entries), "vae_param_hash": before},
        )

    def report(self, out: Path, run_dir: Optional[Path] = None, probes_dir: Optional[Path] = None) -> StepResult:
        """Merge training metrics and probe results into flat CSV/JSON bundles."""
        if run_dir is None and probes_dir is None:
            raise UsageError("report needs --run and/or --probes")
        out.mkdir(parents=True, exist_ok=True)
        outputs: List[Path] = []
        summary: Dict[str, Any] = {}
        if run_dir is not None:
            records = load_jsonl(run_dir / "metrics.jsonl")
            for kind in ("train", "val"):
                rows = [r for r in records if r.get("kind") == kind]
                frame = pd.DataFrame(rows).drop(columns=["kind"], errors="ignore")
                path = out / f"{kind}_metrics.csv"
                frame.to_csv(path, index=False)
                outputs.append(path)
                summary[f"{kind}_records"] = len(rows)
        if probes_dir is not None:
            src = probes_dir / "probe_report.csv"
            if not src.exists():
                raise DataError(f"no probe_report.csv in {probes_dir}")
            shutil.copyfile(src, out / "probes.csv")
            outputs.append(out / "probes.csv")
        write_json(out / "report.json", summary)
        outputs.append(out / "report.json")
        return StepResult(outputs=outputs, config={"run": str(run_dir) if run_dir else None,
                                                   "probes": str(probes_dir) if probes_dir else None},
                          summary=summary)
