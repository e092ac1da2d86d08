from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..dataio.tile import HyperspectralTile, L2ProductSet
from ..models import ProbeConfig, ProbeReportEntry, VaeConfig
from ..normalize import L2Normalizer, RadianceStats
from ..tensor.rng import RngState
from ..utils import write_json
from ..vae import VaeParams
from .dataset import build_probe_dataset, encode_latents
from .model import predict
from .trainer import r_squared, train_probe

logger = logging.getLogger(__name__)


@dataclass
class ProbeSuiteReport:
    entries: List[ProbeReportEntry] = field(default_factory=list)
    scatter: Dict[Tuple[str, str], Tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    histories: Dict[Tuple[str, str], List[Dict[str, float]]] = field(default_factory=dict)
    linear_weights: Dict[str, List[float]] = field(default_factory=dict)

    def entry(self, product: str, kind: str) -> ProbeReportEntry:
        for e in self.entries:
            if e.product == product and e.kind == kind:
                return e
        raise KeyError((product, kind))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([e.model_dump() for e in self.entries])


def evaluate_probe_suite(params: VaeParams, cfg: VaeConfig, tiles: Sequence[HyperspectralTile],
                         l2sets: Sequence[L2ProductSet], stats: Optional[RadianceStats],
                         normalizers: Mapping[str, L2Normalizer], probe_cfgs: Sequence[ProbeConfig],
                         products: Sequence[str]) -> ProbeSuiteReport:
    """Train one probe per (product, kind) on frozen latent means and score it on the held-out rows."""
    latents = encode_latents(params, cfg, tiles, stats)
    report = ProbeSuiteReport()
    for product in products:
        for pcfg in probe_cfgs:
            rng = RngState(pcfg.seed).split("probe", product, pcfg.kind)
            train, test = build_probe_dataset(params, cfg, tiles, l2sets, pcfg, product, rng.split("data"),
                                              stats=stats, normalizers=normalizers, latents=latents)
            model, history = train_probe(train, test, pcfg, rng.split("train"))
            held_out = test if len(test) >= 2 else train
            pred = predict(model, held_out.features)
            r2 = r_squared(pred, held_out.targets)
            err = float(np.mean((pred.astype(np.float64) - held_out.targets) ** 2))
            report.entries.append(ProbeReportEntry(product=product, kind=pcfg.kind, r2=r2, mse=err,
                                                   n_train=len(train), n_test=len(test),
                                                   best_epoch=model.best_epoch))
            report.scatter[(product, pcfg.kind)] = (pred, held_out.targets)
            report.histories[(product, pcfg.kind)] = history
            if pcfg.kind == "linear":
                report.linear_weights[product] = model.linear_weights()
            logger.info("probe %s/%s: R2=%.4f mse=%.5f best_epoch=%d", product, pcfg.kind, r2, err, model.best_epoch)
    return report


def write_probe_report(report: ProbeSuiteReport, out_dir: str | Path) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "probe_report.json", out / "probe_report.csv", out / "linear_weights.json"]
    write_json(paths[0], {"entries": [e.model_dump() for e in report.entries]})
    report.frame().to_csv(paths[1], index=False)
    write_json(paths[2], report.linear_weights)
    for (product, kind), (pred, truth) in report.scatter.items():
        p = out / f"scatter_{product}_{kind}.csv"
        pd.DataFrame({"pred": pred, "truth": truth}).to_csv(p, index=False)
        paths.append(p)
    for (product, kind), history in report.histories.items():
        p = out / f"history_{product}_{kind}.csv"
        best = report.entry(product, kind).best_epoch
        frame = pd.DataFrame(history)
        frame["best"] = frame["epoch"] == best
        frame.to_csv(p, index=False)
        paths.append(p)
    return paths
