from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..dataio import Dataset, SampleBuffer, TileCache, fixed_validation_ids, sample_batch
from ..errors import ConfigurationError, DataError, TrainingFault, UsageError
from ..log import progress_enabled
from ..models import DataConfig, TrainConfig, VaeConfig
from ..normalize import L2Normalizer, RadianceStats, load_l2_normalizers, load_radiance_stats, normalize_batch, pooled_targets
from ..tensor.core import Graph, Tensor, backward
from ..tensor.rng import RngState
from ..utils import append_jsonl, load_jsonl, write_json
from ..vae import (
    Checkpoint,
    VaeParams,
    add_supervision,
    compute_losses,
    decode,
    encode,
    init_params,
    load_checkpoint,
    reparameterize,
    save_checkpoint,
    supervised_forward,
)
from ..vae.losses import HEAD_WEIGHT
from .optim import OptimState, adamw_step, clip_grad_norm

logger = logging.getLogger(__name__)

METRICS_VERSION = 1
VAL_CHUNK = 16


@dataclass
class TrainResult:
    run_dir: Path
    final_path: Path
    steps_done: int
    val_ids: List[str] = field(default_factory=list)
    last_train: Dict[str, float] = field(default_factory=dict)
    last_val: Dict[str, float] = field(default_factory=dict)


class SupervisionTargets:
    """Pooled, normalized L2 maps per tile id, cached."""

    def __init__(self, dataset: Dataset, normalizers: Mapping[str, L2Normalizer], cfg: VaeConfig):
        self.dataset = dataset
        self.normalizers = normalizers
        self.products = list(cfg.head_products)
        self.factor = cfg.tile // cfg.latent_size
        self.cache = TileCache(4096)

    def for_tile(self, tile_id: str) -> Dict[str, np.ndarray]:
        hit = self.cache.get(tile_id)
        if hit is None:
            hit = pooled_targets(self.dataset.l2(tile_id), self.normalizers, self.factor, self.products)
            self.cache.set(tile_id, hit)
        return hit

    def batch(self, tile_ids: Sequence[str]) -> Dict[str, np.ndarray]:
        maps = [self.for_tile(i) for i in tile_ids]
        return {p: np.stack([m[p] for m in maps]) for p in self.products}


def mean_predictor_baseline(x: np.ndarray) -> float:
    """Mean over channels of the per-channel std of normalized data."""
    return float(np.std(x.astype(np.float64), axis=(0, 2, 3)).mean())


def ema(values: Sequence[float], span: int = 100) -> np.ndarray:
    return pd.Series(list(values), dtype="float64").ewm(span=span, adjust=False).mean().to_numpy()


def validate(params: VaeParams, cfg: VaeConfig, val_x: np.ndarray,
             val_targets: Optional[Mapping[str, np.ndarray]] = None) -> Dict[str, float]:
    """Evaluation-mode losses (z = mu) averaged over the whole held-out set."""
    n = 0 if val_x is None else len(val_x)
    if n == 0:
        raise UsageError("validate: empty validation set")
    abs_sum = sq_sum = kl_sum = 0.0
    sq_p = {p: 0.0 for p in cfg.head_products} if cfg.supervised and val_targets is not None else {}
    cnt_p = {p: 0 for p in sq_p}
    for start in range(0, n, VAL_CHUNK):
        xb = val_x[start: start + VAL_CHUNK]
        lat = encode(Tensor(xb), params, cfg)
        xhat = decode(lat.mu, params, cfg).data
        diff = xb.astype(np.float64) - xhat
        abs_sum += float(np.abs(diff).reshape(len(xb), -1).sum(axis=1).sum())
        sq_sum += float(np.square(diff).reshape(len(xb), -1).sum(axis=1).sum())
        mu, lv = lat.mu.data.astype(np.float64), lat.logvar.data.astype(np.float64)
        kl_sum += float((-0.5 * (1.0 + lv - mu * mu - np.exp(lv))).reshape(len(xb), -1).sum(axis=1).sum())
        if sq_p:
            heads = supervised_forward(lat, params, cfg)
            for p, pred in heads.items():
                t = val_targets[p][start: start + VAL_CHUNK]
                mask = np.isfinite(t)
                d = np.where(mask, pred.data[:, 0].astype(np.float64) - np.where(mask, t, 0.0), 0.0)
                sq_p[p] += float(np.square(d).sum())
                cnt_p[p] += int(mask.sum())
    elems = val_x[0].size * n
    rec = abs_sum / elems
    log_s2 = float(params["log_s2"].data)
    nll = rec / math.exp(log_s2) + log_s2
    kl = kl_sum / n
    out = {"rec": rec, "nll": nll, "kl": kl, "pixel_mse": sq_sum / elems}
    total = nll + cfg.kl_weight * kl
    for p in sq_p:
        out[f"mse_{p}"] = sq_p[p] / cnt_p[p] if cnt_p[p] else 0.0
        total += HEAD_WEIGHT * out[f"mse_{p}"]
    out["total"] = total
    return out


def _load_stats(data_cfg: DataConfig, vae_cfg: VaeConfig) -> RadianceStats:
    stats = load_radiance_stats(data_cfg.stats_path)
    if stats.channels != vae_cfg.in_channels:
        raise DataError(f"stats have {stats.channels} channels, model expects {vae_cfg.in_channels}")
    return stats


def _trim_metrics(path: Path, step: int) -> None:
    if not path.exists():
        return
    kept = [r for r in load_jsonl(path) if r.get("step", 0) <= step or r.get("kind") == "header"]
    path.unlink()
    append_jsonl(path, kept)


def train_vae(vae_cfg: VaeConfig, train_cfg: TrainConfig, data_cfg: DataConfig, out_dir: str | Path,
              resume: Optional[str | Path] = None) -> TrainResult:
    """Fixed-budget training with validation, checkpoints and bitwise resume.

    The run directory gets config.json, metrics.jsonl (a header record, then
    one record per step and per validation), ckpt_step_{N}.bin every
    ``ckpt_every`` steps and final.bin at the end.
    """
    for c in (vae_cfg, train_cfg, data_cfg):
        c.ensure_valid()
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    metrics = run_dir / "metrics.jsonl"

    dataset = Dataset(data_cfg.data_dir)
    stats = _load_stats(data_cfg, vae_cfg)
    split = dataset.split(data_cfg.train_pct)
    if not split.train_ids:
        raise DataError(f"no training tiles in {data_cfg.data_dir}")
    val_ids = fixed_validation_ids(split.val_ids, data_cfg.val_buffer)

    targets: Optional[SupervisionTargets] = None
    if vae_cfg.supervised:
        if not data_cfg.l2_norm_path:
            raise ConfigurationError("supervised training needs data.l2_norm_path (run `hsnc stats` first)")
        targets = SupervisionTargets(dataset, load_l2_normalizers(data_cfg.l2_norm_path), vae_cfg)

    root = RngState(train_cfg.seed)
    if resume:
        ckpt = load_checkpoint(resume)
        if ckpt.vae_config != vae_cfg:
            raise ConfigurationError(f"checkpoint {resume} was trained with a different model config")
        saved = ckpt.train_state.get("train_trajectory_hash")
        if saved is None and "train_config" in ckpt.train_state:
            saved = TrainConfig.model_validate(ckpt.train_state["train_config"]).trajectory_hash()
        if saved is not None and saved != train_cfg.trajectory_hash():
            raise ConfigurationError(
                f"checkpoint {resume} was trained with different optimizer or batch settings; "
                "only steps, val_every, ckpt_every and log_every may change on resume")
        params = ckpt.params
        opt = OptimState.from_blobs(ckpt.optim, ckpt.train_state.get("opt_t", 0))
        buffer = SampleBuffer.from_state_dict(ckpt.buffer)
        batch_rng = RngState.from_state_dict(ckpt.rng["batch"])
        noise_rng = RngState.from_state_dict(ckpt.rng["noise"])
        start = ckpt.step
        _trim_metrics(metrics, start)
        append_jsonl(metrics, [{"kind": "resume", "step": start, "from": str(resume)}])
        logger.info("resumed from %s at step %d", resume, start)
    else:
        params = init_params(vae_cfg, root.split("init"))
        opt = OptimState.zeros(params)
        buffer = SampleBuffer(split.train_ids, data_cfg.train_buffer, root.split("buffer"))
        batch_rng = root.split("batch")
        noise_rng = root.split("noise")
        start = 0
        write_json(run_dir / "config.json", {
            "vae_config": vae_cfg.model_dump(mode="json"),
            "train_config": train_cfg.model_dump(mode="json"),
            "data_config": data_cfg.model_dump(mode="json"),
            "val_ids": val_ids,
            "n_train": len(split.train_ids),
        })
        if metrics.exists():
            metrics.unlink()
        append_jsonl(metrics, [{
            "kind": "header",
            "version": METRICS_VERSION,
            "vae_config_hash": vae_cfg.config_hash(),
            "train_config_hash": train_cfg.config_hash(),
            "n_params": params.num_elements(),
        }])

    def snapshot(step: int) -> Checkpoint:
        return Checkpoint(
            vae_config=vae_cfg, params=params, optim=opt.to_blobs(),
            train_state={"step": step, "opt_t": opt.t, "train_config": train_cfg.model_dump(mode="json"),
                         "train_trajectory_hash": train_cfg.trajectory_hash()},
            rng={"batch": batch_rng.state_dict(), "noise": noise_rng.state_dict()},
            buffer=buffer.state_dict(),
        )

    val_x = normalize_batch(dataset.stack(val_ids), stats) if val_ids else np.empty((0,) + vae_cfg.input_shape, np.float32)
    val_targets = targets.batch(val_ids) if targets is not None and val_ids else None

    last_train: Dict[str, float] = {}
    last_val: Dict[str, float] = {}
    steps = range(start + 1, train_cfg.steps + 1)
    for step in tqdm(steps, desc="train", disable=not progress_enabled()):
        ids = sample_batch(buffer, train_cfg.batch, batch_rng)
        buffer.refresh()
        x = Tensor(normalize_batch(dataset.stack(ids), stats))
        with Graph() as graph:
            lat = encode(x, params, vae_cfg)
            z = reparameterize(lat, noise_rng, training=True)
            xhat = decode(z, params, vae_cfg)
            terms = compute_losses(x, xhat, lat, params["log_s2"], vae_cfg)
            if targets is not None:
                terms = add_supervision(terms, supervised_forward(lat, params, vae_cfg), targets.batch(ids))
        values = terms.values()
        if not math.isfinite(values["total"]):
            logger.error("non-finite loss at step %d; last good checkpoint kept", step)
            raise TrainingFault(f"non-finite loss {values['total']}", step=step)
        params.zero_grad()
        backward(graph, terms.total)
        grads = params.grads()
        scale = clip_grad_norm(grads, train_cfg.clip_norm, step=step)
        adamw_step(params, grads, opt, train_cfg)
        last_train = dict(values, clip_scale=scale)
        append_jsonl(metrics, [dict(last_train, kind="train", step=step)])
        if step % train_cfg.log_every == 0:
            logger.info("step %d total=%.5f rec=%.5f kl=%.3f clip=%.3f",
                        step, values["total"], values["rec"], values["kl"], scale)
        if step % train_cfg.val_every == 0 and len(val_x):
            last_val = validate(params, vae_cfg, val_x, val_targets)
            append_jsonl(metrics, [dict(last_val, kind="val", step=step)])
            logger.info("validation step %d rec=%.5f total=%.5f", step, last_val["rec"], last_val["total"])
        if step % train_cfg.ckpt_every == 0:
            path = run_dir / f"ckpt_step_{step}.bin"
            save_checkpoint(path, snapshot(step))
            logger.info("checkpoint %s", path)

    done = max(start, train_cfg.steps)
    final = run_dir / "final.bin"
    save_checkpoint(final, snapshot(done))
    logger.info("training finished at step %d; wrote %s", done, final)
    return TrainResult(run_dir, final, done, val_ids, last_train, last_val)
