import argparse
from pathlib import Path

import numpy as np

# IMPORTANT: run from project root, so imports resolve.
from hsnc.codec import compress
from hsnc.dataio import Dataset, fixed_validation_ids
from hsnc.log import setup_logging
from hsnc.models import DataConfig, SynthConfig, TrainConfig, VaeConfig
from hsnc.normalize import load_radiance_stats, normalize_batch
from hsnc.tensor.core import Tensor
from hsnc.pipeline import Pipeline
from hsnc.train import ema, mean_predictor_baseline
from hsnc.utils import Timer, load_jsonl
from hsnc.vae import decode, load_model

DESK_SYNTH = SynthConfig(channels=64, tile=32, n_tiles=2000, seed=42)


def ensure_dataset(pipe: Pipeline, root: Path) -> None:
    if not (root / "split.json").exists():
        pipe.synth(DESK_SYNTH, root)
    if not (root / "stats.json").exists():
        pipe.stats(root, root)


def records(run_dir: Path, kind: str):
    return [r for r in load_jsonl(run_dir / "metrics.jsonl") if r.get("kind") == kind]


def f16_perturbation(final: Path, root: Path, n: int = 8) -> float:
    """RMSE between decodes of f32 and f16-rounded means, in normalized space."""
    cfg, params = load_model(final)
    stats = load_radiance_stats(root / "stats.json")
    ds = Dataset(root)
    errs = []
    for tile_id in fixed_validation_ids(ds.split(70).val_ids, n):
        mu = compress(ds.tile(tile_id), stats, params, cfg, dtype="f32").mean
        a = decode(Tensor(mu[None]), params, cfg).data
        b = decode(Tensor(mu.astype(np.float16).astype(np.float32)[None]), params, cfg).data
        errs.append(np.mean((a - b) ** 2))
    return float(np.sqrt(np.mean(errs)))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--data", type=Path, default=Path("runs/desk_data"))
    ap.add_argument("--out", type=Path, default=Path("runs/desk"))
    ap.add_argument("--steps", type=int, default=3000)
    ap.add_argument("--supervised", action="store_true", help="also run the supervised variant")
    args = ap.parse_args()
    setup_logging()

    pipe = Pipeline()
    with Timer() as t_data:
        ensure_dataset(pipe, args.data)

    vae_cfg = VaeConfig.desk()
    train_cfg = TrainConfig.desk().model_copy(update={"steps": args.steps})
    data_cfg = DataConfig(data_dir=str(args.data), stats_path=str(args.data / "stats.json"),
                          l2_norm_path=str(args.data / "l2_norms.json"))

    with Timer() as t_train:
        res = pipe.train(vae_cfg, train_cfg, data_cfg, args.out / "vae")
    run_dir = args.out / "vae"

    totals = [r["total"] for r in records(run_dir, "train")]
    smooth = ema(totals, span=100)
    early = smooth[min(499, len(smooth) - 1)]
    late = smooth[-1]

    ds = Dataset(args.data)
    stats = load_radiance_stats(args.data / "stats.json")
    val_ids = fixed_validation_ids(ds.split(70).val_ids, data_cfg.val_buffer)
    baseline = mean_predictor_baseline(normalize_batch(ds.stack(val_ids), stats))
    val = records(run_dir, "val")
    final_rec = val[-1]["rec"] if val else float("nan")
    f16_rmse = f16_perturbation(res.final_path, args.data)

    print("\n=== Desk training metrics ===")
    print(f"dataset_s: {t_data.elapsed_s:.1f}  train_s: {t_train.elapsed_s:.1f}")
    print(f"steps: {res.steps_done}")
    print(f"ema100_total@500: {early:.5f}  ema100_total@end: {late:.5f}  decreased: {late < early}")
    print(f"mean_predictor_baseline: {baseline:.5f}")
    print(f"final_val_rec: {final_rec:.5f}  ratio: {final_rec / baseline:.3f}  pass(<=0.5): {final_rec <= 0.5 * baseline}")
    print(f"f16_decode_rmse: {f16_rmse:.5f}  pass(<1e-2): {f16_rmse < 1e-2}")

    if args.supervised:
        sup_cfg = vae_cfg.model_copy(update={"supervised": True, "head_products": ["no2", "o3", "hcho", "cloud"]})
        with Timer() as t_sup:
            pipe.train(sup_cfg, train_cfg, data_cfg, args.out / "supervised")
        sup_train = records(args.out / "supervised", "train")
        sup_val = records(args.out / "supervised", "val")
        cloud0 = sup_train[0]["mse_cloud"]
        cloud_end = float(ema([r["mse_cloud"] for r in sup_train], span=100)[-1])
        sup_rec = sup_val[-1]["rec"] if sup_val else float("nan")
        print("\n=== Supervised variant ===")
        print(f"train_s: {t_sup.elapsed_s:.1f}")
        print(f"cloud_mse@1: {cloud0:.5f}  cloud_mse_ema@end: {cloud_end:.5f}  decreased: {cloud_end < cloud0}")
        print(f"val_rec: {sup_rec:.5f}  vs_unsupervised: {sup_rec / final_rec:.3f}  "
              f"within_10pct: {abs(sup_rec - final_rec) <= 0.1 * final_rec}")


if __name__ == "__main__":
    main()
