"""Linear and MLP probes on frozen latent means."""

from .dataset import ProbeDataset, build_probe_dataset, encode_latents
from .model import ProbeModel, init_probe, predict, probe_forward
from .suite import ProbeSuiteReport, evaluate_probe_suite, write_probe_report
from .trainer import mse, r_squared, train_probe

__all__ = [
    "ProbeDataset", "build_probe_dataset", "encode_latents",
    "ProbeModel", "init_probe", "predict", "probe_forward",
    "ProbeSuiteReport", "evaluate_probe_suite", "write_probe_report",
    "mse", "r_squared", "train_probe",
]
