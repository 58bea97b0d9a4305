"""
Model construction from a backend name and hyperparameters.
"""

import logging
from typing import Any, Dict, Optional

from radd.contracts import ModelBackend
from radd.diffusion.space import ExactJointTable, Vocab
from radd.errors import ConfigError

from .base_model import ConditionalModel
from .neural_model import NeuralModel
from .oracle_model import OracleModel
from .tabular_model import TabularModel
from .uniform_model import UniformModel


logger = logging.getLogger(__name__)


def build_model(
    backend: ModelBackend,
    vocab: Vocab,
    d: int,
    table: Optional[ExactJointTable] = None,
    hyper: Optional[Dict[str, Any]] = None,
) -> ConditionalModel:
    """
    Create a freshly initialized model.

    Args:
        backend: Which backend to build
        vocab: Vocabulary
        d: Sequence length
        table: Joint table, required for the oracle backend
        hyper: Extra constructor arguments (neural: embed_dim, hidden, seed, head_scale)

    Raises:
        ConfigError: If the oracle backend is requested without a table
    """
    backend = ModelBackend(backend)
    hyper = dict(hyper or {})

    if backend is ModelBackend.ORACLE:
        if table is None:
            raise ConfigError("oracle backend needs a joint table", key_path="data.table")
        model: ConditionalModel = OracleModel(table)
    elif backend is ModelBackend.TABULAR:
        model = TabularModel(vocab, d)
    elif backend is ModelBackend.NEURAL:
        if "hidden" in hyper:
            hyper["hidden"] = tuple(hyper["hidden"])
        model = NeuralModel(vocab, d, **hyper)
    else:
        model = UniformModel(vocab, d)

    logger.debug(f"Built {backend.value} model: N={vocab.n_tokens}, d={d}, params={model.n_params}")
    return model
