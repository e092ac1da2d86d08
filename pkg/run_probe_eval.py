import argparse
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
from tqdm import tqdm

# IMPORTANT: run from project root, so imports resolve.
from hsnc.log import progress_enabled, setup_logging
from hsnc.models import ProbeConfig
from hsnc.pipeline import Pipeline
from hsnc.probes import ProbeDataset, predict, r_squared, train_probe
from hsnc.tensor.rng import RngState
from hsnc.utils import Timer, read_json

DIM = 8


def planted(kind: str, n: int, rng: RngState) -> Tuple[ProbeDataset, ProbeDataset]:
    z = rng.split("z").normal((n, DIM))
    w = rng.split("w").normal((DIM,))
    w /= np.linalg.norm(w)
    if kind == "linear":
        y = z @ w + 0.5
    else:
        y = np.sin(3.0 * (z @ w))
    cut = int(round(0.8 * n))
    return ProbeDataset(z[:cut], y[:cut]), ProbeDataset(z[cut:], y[cut:])


def oracle_r2(target: str, cfg: ProbeConfig, seed: int) -> float:
    rng = RngState(seed).split("oracle", target)
    train, test = planted(target, 4000, rng.split("data"))
    model, _ = train_probe(train, test, cfg, rng.split(cfg.kind))
    return r_squared(predict(model, test.features), test.targets)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", type=Path, default=Path("runs/desk/vae/final.bin"))
    ap.add_argument("--data", type=Path, default=Path("runs/desk_data"))
    ap.add_argument("--out", type=Path, default=Path("runs/desk/probes"))
    ap.add_argument("--max-files", type=int, default=70)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    setup_logging()

    linear = ProbeConfig.linear(max_epochs=200, patience=20, batch=256, seed=args.seed)
    mlp = ProbeConfig.mlp(hidden=[64, 64], max_epochs=300, patience=30, batch=256, lr=3e-3, seed=args.seed)

    r2: Dict[str, float] = {}
    timings = []
    jobs = [("linear", linear), ("linear", mlp), ("nonlinear", linear), ("nonlinear", mlp)]
    for target, cfg in tqdm(jobs, desc="oracles", disable=not progress_enabled()):
        with Timer() as t:
            r2[f"{target}/{cfg.kind}"] = oracle_r2(target, cfg, args.seed)
        timings.append(t.elapsed_s)

    print("\n=== Probe oracle metrics ===")
    for key, value in r2.items():
        print(f"{key:18s} R2={value:.4f}")
    print(f"linear_oracle_pass(>0.999): {r2['linear/linear'] > 0.999}")
    gap = r2["nonlinear/mlp"] - r2["nonlinear/linear"]
    print(f"nonlinear_gap: {gap:.3f}  pass(>=0.2): {gap >= 0.2}")
    print(f"oracle_time_s: {sum(timings):.1f}")

    if not args.model.exists():
        print(f"\n(no trained model at {args.model}; run run_desk_eval.py first for the latent ordering check)")
        return

    with Timer() as t:
        result = Pipeline().train_probes(
            args.model, args.data, args.data / "stats.json", args.data / "l2_norms.json", args.out,
            [ProbeConfig.linear(seed=args.seed), ProbeConfig.mlp(hidden=[128, 128], max_epochs=500, seed=args.seed)],
            max_files=args.max_files,
        )

    entries = {(e["product"], e["kind"]): e for e in read_json(args.out / "probe_report.json")["entries"]}
    print("\n=== Desk latent probes ===")
    for (product, kind), e in sorted(entries.items()):
        print(f"{product:6s} {kind:6s} R2={e['r2']:.4f}  mse={e['mse']:.5f}  best_epoch={e['best_epoch']}")
    lin, deep = entries[("cloud", "linear")]["r2"], entries[("cloud", "mlp")]["r2"]
    print(f"cloud_mlp_ge_linear: {deep >= lin}  ({deep:.4f} vs {lin:.4f})")
    print(f"probe_time_s: {t.elapsed_s:.1f}  files: {len(result.input_ids)}")


if __name__ == "__main__":
    main()
