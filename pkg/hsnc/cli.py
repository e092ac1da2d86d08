"""``hsnc`` command line: parse flags, merge configs, dispatch to ``Pipeline``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from . import __version__
from .config import settings
from .errors import ConfigurationError, HsncError, UsageError
from .log import setup_logging
from .models import (
    PRODUCTS,
    DataConfig,
    ProbeConfig,
    SynthConfig,
    TrainConfig,
    VaeConfig,
    build_config,
)
from .pipeline import Pipeline, StepResult, record_manifest
from .utils import Timer

logger = logging.getLogger(__name__)

VAE_PRESETS: Dict[str, Callable[[], VaeConfig]] = {"full": VaeConfig.full, "desk": VaeConfig.desk, "tiny": VaeConfig.tiny}
TRAIN_PRESETS: Dict[str, Callable[[], TrainConfig]] = {"full": TrainConfig, "desk": TrainConfig.desk, "tiny": TrainConfig.desk}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise UsageError(message)


def _csv(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _read_config(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    return data


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--print-config", action="store_true", help="print the merged config and exit")
    p.add_argument("--deterministic", action="store_true", help="single-threaded numerics")
    p.add_argument("--log-level", default=None)
    p.add_argument("--out", type=Path, required=False, default=None,
                   help="output directory (or file for single-tile encode/decode)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hsnc", description="Hyperspectral neural compression toolkit")
    parser.add_argument("--version", action="version", version=f"hsnc {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    _common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--n-tiles", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--tile", type=int)
    p.add_argument("--train-pct", type=int, default=70)

    p = sub.add_parser("stats", help="radiance stats and L2 normalizers from the training split")
    _common(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--tiles", type=_csv, default=None, help="comma-separated tile ids")
    p.add_argument("--train-pct", type=int, default=70)

    for name in ("train-vae", "train-supervised"):
        p = sub.add_parser(name, help=f"{name.split('-')[1]} VAE training")
        _common(p)
        p.add_argument("--preset", choices=sorted(VAE_PRESETS), default="desk")
        p.add_argument("--data", type=Path)
        p.add_argument("--stats", type=Path)
        p.add_argument("--l2-norms", type=Path)
        p.add_argument("--steps", type=int)
        p.add_argument("--batch", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--resume", type=Path)
        if name == "train-supervised":
            p.add_argument("--products", type=_csv, default=list(PRODUCTS))

    p = sub.add_parser("encode", help="compress tiles to latent files")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--stats", type=Path, required=True)
    p.add_argument("--in", dest="src", type=Path, required=True)
    p.add_argument("--dtype", choices=("f32", "f16"), default="f32")
    p.add_argument("--with-logvar", action="store_true")

    p = sub.add_parser("decode", help="reconstruct tiles from latent files")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--stats", type=Path, required=True)
    p.add_argument("--in", dest="src", type=Path, required=True)

    p = sub.add_parser("eval-recon", help="per-channel reconstruction RMSE on validation tiles")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--stats", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--n-tiles", type=int, default=8)
    p.add_argument("--dtype", choices=("f32", "f16"), default="f32")
    p.add_argument("--train-pct", type=int, default=70)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("train-probes", help="linear/MLP probes on frozen latents")
    _common(p)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path)
    p.add_argument("--stats", type=Path)
    p.add_argument("--l2-norms", type=Path)
    p.add_argument("--products", type=_csv, default=list(PRODUCTS))
    p.add_argument("--kinds", type=_csv, default=["linear", "mlp"])
    p.add_argument("--max-files", type=int, default=70)
    p.add_argument("--pixels-per-file", type=int)
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("report", help="merge metrics and probe results into CSV/JSON")
    _common(p)
    p.add_argument("--run", type=Path)
    p.add_argument("--probes", type=Path)
    return parser


def _train_configs(args, file_cfg: Dict[str, Any], supervised: bool):
    vae_base = VAE_PRESETS[args.preset]().model_dump()
    vae_base.update(file_cfg.get("vae", {}))
    if supervised:
        vae_base.update(supervised=True, head_products=args.products)
    vae_cfg = build_config(VaeConfig, vae_base)

    train_base = TRAIN_PRESETS[args.preset]().model_dump()
    train_base.update(file_cfg.get("train", {}))
    train_cfg = build_config(TrainConfig, train_base, steps=args.steps, batch=args.batch, lr=args.lr, seed=args.seed)

    data_base = dict(file_cfg.get("data", {}))
    data_cfg = build_config(
        DataConfig, data_base,
        data_dir=str(args.data) if args.data else None,
        stats_path=str(args.stats) if args.stats else None,
        l2_norm_path=str(args.l2_norms) if args.l2_norms else None,
    )
    if supervised and not data_cfg.l2_norm_path:
        raise UsageError("train-supervised needs --l2-norms (or data.l2_norm_path in --config)")
    return vae_cfg, train_cfg, data_cfg


def _probe_configs(args, file_cfg: Dict[str, Any]) -> List[ProbeConfig]:
    out = []
    for kind in args.kinds:
        if kind not in ("linear", "mlp"):
            raise UsageError(f"unknown probe kind {kind!r}; choose from linear, mlp")
        preset = ProbeConfig.linear() if kind == "linear" else ProbeConfig.mlp()
        base = preset.model_dump()
        base.update(file_cfg.get(kind, {}))
        out.append(build_config(ProbeConfig, base, pixels_per_file=args.pixels_per_file,
                                max_epochs=args.max_epochs, seed=args.seed))
    return out


def _merged(args) -> Dict[str, Any]:
    """The config a subcommand will run with, as a JSON-ready dict."""
    file_cfg = _read_config(args.config)
    cmd = args.command
    if cmd == "synth":
        cfg = build_config(SynthConfig, file_cfg, seed=args.seed, n_tiles=args.n_tiles,
                           channels=args.channels, tile=args.tile)
        return {"synth": cfg}
    if cmd in ("train-vae", "train-supervised"):
        vae_cfg, train_cfg, data_cfg = _train_configs(args, file_cfg, cmd == "train-supervised")
        return {"vae": vae_cfg, "train": train_cfg, "data": data_cfg}
    if cmd == "train-probes":
        merged: Dict[str, Any] = {p.kind: p for p in _probe_configs(args, file_cfg)}
        merged["data"] = build_config(
            DataConfig, dict(file_cfg.get("data", {})),
            data_dir=str(args.data) if args.data else None,
            stats_path=str(args.stats) if args.stats else None,
            l2_norm_path=str(args.l2_norms) if args.l2_norms else None,
        )
        return merged
    return {}


def _dispatch(args, merged: Dict[str, Any], pipe: Pipeline) -> StepResult:
    cmd, out = args.command, args.out
    if cmd == "synth":
        return pipe.synth(merged["synth"], out, train_pct=args.train_pct)
    if cmd == "stats":
        return pipe.stats(args.data, out, tile_ids=args.tiles, train_pct=args.train_pct)
    if cmd in ("train-vae", "train-supervised"):
        return pipe.train(merged["vae"], merged["train"], merged["data"], out, resume=args.resume)
    if cmd == "encode":
        return pipe.encode(args.model, args.stats, args.src, out, dtype=args.dtype, with_logvar=args.with_logvar)
    if cmd == "decode":
        return pipe.decode(args.model, args.stats, args.src, out)
    if cmd == "eval-recon":
        return pipe.eval_recon(args.model, args.stats, args.data, out, n_tiles=args.n_tiles, dtype=args.dtype,
                               train_pct=args.train_pct, seed=args.seed)
    if cmd == "train-probes":
        data_cfg: DataConfig = merged["data"]
        data = Path(data_cfg.data_dir)
        norms = Path(data_cfg.l2_norm_path) if data_cfg.l2_norm_path else data / "l2_norms.json"
        probes = [v for v in merged.values() if isinstance(v, ProbeConfig)]
        return pipe.train_probes(args.model, data, Path(data_cfg.stats_path), norms, out, probes,
                                 products=args.products, max_files=args.max_files)
    if cmd == "report":
        return pipe.report(out, run_dir=args.run, probes_dir=args.probes)
    raise UsageError(f"unknown command {cmd!r}")


def _execute(argv: Sequence[str]) -> int:
    args = build_parser().parse_args(list(argv))
    if not args.command:
        raise UsageError("missing subcommand; see hsnc --help")
    setup_logging(args.log_level)
    if args.deterministic:
        settings.deterministic = True

    merged = _merged(args)
    if args.print_config:
        payload = {k: v.model_dump(mode="json") for k, v in merged.items()}
        print(json.dumps(payload, indent=2, sort_keys=True))
        return 0
    if args.out is None:
        raise UsageError(f"{args.command} needs --out")

    started = datetime.now(timezone.utc).isoformat()
    with Timer() as timer:
        result = _dispatch(args, merged, Pipeline())
    path = record_manifest(args.command, args.out, result, started, timer.elapsed_s)
    logger.info("%s done in %.1fs; manifest %s", args.command, timer.elapsed_s, path)
    if result.summary:
        print(json.dumps(result.summary, indent=2, sort_keys=True, default=str))
    return 0


def run(argv: Sequence[str]) -> int:
    try:
        return _execute(argv)
    except HsncError as exc:
        print(f"error: {exc.one_line()}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        print("error: Interrupted: stopped by user", file=sys.stderr)
        return 130
