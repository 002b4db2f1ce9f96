"""LeMoLE - long-term forecasting with a mixture of linear experts conditioned on text prompts."""

__version__ = "0.1.0"

from .config import Config
from .errors import LemoleError
from .model import LemoleModel, build_model, count_params, model_backward, model_forward
from .training import TrainConfig, grad_check, train

__all__ = [
    "Config",
    "LemoleError",
    "LemoleModel",
    "TrainConfig",
    "__version__",
    "build_model",
    "count_params",
    "grad_check",
    "model_backward",
    "model_forward",
    "train",
]
