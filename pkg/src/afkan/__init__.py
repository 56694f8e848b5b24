"""Kolmogorov-Arnold style layers on a small numpy autodiff core."""

from .basis import FUNCTION_TYPES, GridSpec
from .layers import Model, ModelSpec, init_model, load_model, save_model
from .tensor import Tensor, grad_check, no_grad
from .train import TrainConfig, multi_run, train_model

__version__ = "0.1.0"

__all__ = [
    "FUNCTION_TYPES", "GridSpec", "Model", "ModelSpec", "Tensor",
    "TrainConfig", "grad_check", "init_model", "load_model", "multi_run",
    "no_grad", "save_model", "train_model", "__version__",
]
