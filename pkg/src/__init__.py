"""
QTL - Transferencia de aprendizaje cuántica para clasificación de imágenes MRI
"""

from .autodiff import ParameterSet, Tape, Tensor, backward
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, TrainConfig
from .dqn import DressedQuantumNet
from .metrics import MetricsReport, auc, confusion, prf1
from .models import BaselineCnn, FrozenFeatures, TransferModel, build_baseline, make_ctl_head, make_qtl_model
from .quantum_backend import Backend, Circuit, NoiseModel, build_ansatz

__version__ = "1.0.0"

__all__ = [
    "Tensor",
    "Tape",
    "ParameterSet",
    "backward",
    "Circuit",
    "Backend",
    "NoiseModel",
    "build_ansatz",
    "DressedQuantumNet",
    "BaselineCnn",
    "FrozenFeatures",
    "TransferModel",
    "build_baseline",
    "make_ctl_head",
    "make_qtl_model",
    "MetricsReport",
    "confusion",
    "prf1",
    "auc",
    "RunConfig",
    "TrainConfig",
    "save_checkpoint",
    "load_checkpoint",
]
