from __future__ import annotations

import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..errors import UndefinedMetricError, UsageError
from ..log import progress_enabled
from ..models import ProbeConfig, TrainConfig
from ..tensor import ops
from ..tensor.core import Graph, Tensor, backward
from ..tensor.rng import RngState
from ..train.optim import OptimState, adamw_step
from .dataset import ProbeDataset
from .model import ProbeModel, init_probe, predict, probe_forward

logger = logging.getLogger(__name__)

# (epoch, model after that epoch) -> validation mse
Evaluator = Callable[[int, ProbeModel], float]


def r_squared(pred: np.ndarray, truth: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    truth = np.asarray(truth, dtype=np.float64).reshape(-1)
    if len(truth) < 2 or len(pred) != len(truth):
        raise UndefinedMetricError(f"r_squared needs >= 2 paired values, got {len(pred)} and {len(truth)}")
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise UndefinedMetricError("r_squared: truth has zero variance")
    return 1.0 - float(np.sum((truth - pred) ** 2)) / ss_tot


def mse(model: ProbeModel, ds: ProbeDataset) -> float:
    return float(np.mean((predict(model, ds.features).astype(np.float64) - ds.targets) ** 2))


def train_probe(ds_train: ProbeDataset, ds_test: ProbeDataset, probe_cfg: ProbeConfig, rng: RngState,
                evaluator: Optional[Evaluator] = None) -> Tuple[ProbeModel, List[Dict[str, float]]]:
    """Minibatch AdamW on MSE with early stopping on the held-out MSE.

    Returns the parameters of the best epoch (not the last) and the per-epoch
    history. ``evaluator`` replaces the held-out MSE when given.
    """
    if len(ds_train) == 0:
        raise UsageError("train_probe: empty training set")
    probe_cfg.ensure_valid()
    model = init_probe(probe_cfg.kind, ds_train.dim, rng.split("init"), probe_cfg.hidden, probe_cfg.dropout)
    opt_cfg = TrainConfig(lr=probe_cfg.lr, weight_decay=probe_cfg.weight_decay)
    opt = OptimState.zeros(model.params)
    shuffle_rng, drop_rng = rng.split("shuffle"), rng.split("dropout")
    X, y = ds_train.features, ds_train.targets

    best = model.copy()
    best_mse, best_epoch = np.inf, 0
    history: List[Dict[str, float]] = []
    epochs = tqdm(range(1, probe_cfg.max_epochs + 1), desc=f"probe[{probe_cfg.kind}]",
                  disable=not progress_enabled(), leave=False)
    for epoch in epochs:
        order = shuffle_rng.generator.permutation(len(X))
        sq_sum = 0.0
        for start in range(0, len(order), probe_cfg.batch):
            idx = order[start: start + probe_cfg.batch]
            with Graph() as graph:
                pred = probe_forward(model, Tensor(X[idx]), training=True, rng=drop_rng)
                loss = ops.mean(ops.square(ops.sub(pred, Tensor(y[idx]))))
            for t in model.params.values():
                t.zero_grad()
            backward(graph, loss)
            grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in model.params.items()}
            adamw_step(model.params, grads, opt, opt_cfg)
            sq_sum += loss.item() * len(idx)
        train_mse = sq_sum / len(X)
        if evaluator is not None:
            test_mse = float(evaluator(epoch, model))
        else:
            test_mse = mse(model, ds_test) if len(ds_test) else train_mse
        history.append({"epoch": epoch, "train_mse": train_mse, "test_mse": test_mse})
        if test_mse < best_mse:
            best_mse, best_epoch = test_mse, epoch
            best = model.copy()
        elif epoch - best_epoch >= probe_cfg.patience:
            logger.info("early stop at epoch %d (best %d, mse %.6f)", epoch, best_epoch, best_mse)
            break
    best.best_epoch = best_epoch
    return best, history
