"""Interpretable aesthetic scoring: per-attribute attention, learned score mixing, guidance."""

from .autodiff import Tensor, Tape, backward, default_rng
from .model import ATTRIBUTE_NAMES, AestheticModel, EvaluationReport, ModelConfig, load_checkpoint, save_checkpoint
from .train import TrainingConfig, eval_metrics, fit

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "default_rng",
    "ATTRIBUTE_NAMES",
    "AestheticModel",
    "EvaluationReport",
    "ModelConfig",
    "load_checkpoint",
    "save_checkpoint",
    "TrainingConfig",
    "eval_metrics",
    "fit",
]

__version__ = "0.1.0"
