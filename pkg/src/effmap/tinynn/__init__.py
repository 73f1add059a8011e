"""Minimal tensor/gradient engine and the 3D residual patch classifier."""

from .adam import AdamState, adam_step
from .checkpoint import Checkpoint, load_checkpoint, model_from_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .layers import (
    AdaptiveAvgPool3d,
    BatchNorm3d,
    Conv3d,
    Dense,
    Dropout,
    MaxPool3d,
    Param,
    ReLU,
)
from .losses import bce_logit_grad, loss_bce, sigmoid
from .model import ModelConfig, PatchClassifier, build_model
from .train import TrainConfig, predict_patches, train

__all__ = [
    "AdamState",
    "adam_step",
    "Checkpoint",
    "load_checkpoint",
    "model_from_checkpoint",
    "save_checkpoint",
    "grad_check",
    "AdaptiveAvgPool3d",
    "BatchNorm3d",
    "Conv3d",
    "Dense",
    "Dropout",
    "MaxPool3d",
    "Param",
    "ReLU",
    "bce_logit_grad",
    "loss_bce",
    "sigmoid",
    "ModelConfig",
    "PatchClassifier",
    "build_model",
    "TrainConfig",
    "predict_patches",
    "train",
]
