from .loop import SupervisionTargets, TrainResult, ema, mean_predictor_baseline, train_vae, validate
from .optim import OptimState, adamw_step, clip_grad_norm, global_norm

__all__ = [
    "SupervisionTargets", "TrainResult", "ema", "mean_predictor_baseline", "train_vae", "validate",
    "OptimState", "adamw_step", "clip_grad_norm", "global_norm",
]
