"""Variational autoencoder: parameters, forward pass, losses and checkpoints."""

from .checkpoint import Checkpoint, load_checkpoint, load_model, save_checkpoint
from .losses import LossTerms, add_supervision, compute_losses, kl_divergence, kl_divergence_reference, masked_mse
from .model import GaussianLatent, decode, encode, reconstruct, reparameterize, supervised_forward
from .params import ParamSpec, VaeParams, count_params, count_params_closed_form, init_params, param_shapes, vae_param_hash

__all__ = [
    "Checkpoint", "load_checkpoint", "load_model", "save_checkpoint",
    "LossTerms", "add_supervision", "compute_losses", "kl_divergence", "kl_divergence_reference", "masked_mse",
    "GaussianLatent", "decode", "encode", "reconstruct", "reparameterize", "supervised_forward",
    "ParamSpec", "VaeParams", "count_params", "count_params_closed_form", "init_params", "param_shapes",
    "vae_param_hash",
]
