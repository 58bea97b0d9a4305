"""
Time-independent conditional models c(x)[i, .] ~ p0(. | x^UM).
"""

from .base_model import ConditionalModel, LossEvaluator, SoftmaxModel, loss_gradient
from .checkpoint import CheckpointFile, load_checkpoint, save_checkpoint
from .factory import build_model
from .neural_model import NeuralModel
from .oracle_model import OracleModel
from .tabular_model import TabularModel
from .uniform_model import UniformModel

__all__ = [
    "CheckpointFile",
    "ConditionalModel",
    "LossEvaluator",
    "NeuralModel",
    "OracleModel",
    "SoftmaxModel",
    "TabularModel",
    "UniformModel",
    "build_model",
    "load_checkpoint",
    "loss_gradient",
    "save_checkpoint",
]
