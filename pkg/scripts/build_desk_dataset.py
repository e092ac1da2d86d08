"""Acceptance dataset: C=64, 32x32 tiles, 2000 tiles, seed 42, plus stats and L2 normalizers."""
import argparse
import os
import sys
from pathlib import Path

sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from hsnc.log import setup_logging
from hsnc.models import SynthConfig
from hsnc.pipeline import Pipeline
from hsnc.utils import Timer


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", type=Path, default=Path("runs/desk_data"))
    ap.add_argument("--n-tiles", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()
    setup_logging()

    pipe = Pipeline()
    cfg = SynthConfig(channels=64, tile=32, n_tiles=args.n_tiles, seed=args.seed)
    with Timer() as t:
        synth = pipe.synth(cfg, args.out)
        stats = pipe.stats(args.out, args.out)
    print(f"tiles={synth.summary['tiles']} train={synth.summary['train']} val={synth.summary['val']}")
    print(f"stats over {len(stats.input_ids)} tiles -> {', '.join(str(p) for p in stats.outputs)}")
    print(f"elapsed_s: {t.elapsed_s:.1f}")


if __name__ == "__main__":
    main()
