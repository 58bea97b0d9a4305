"""
Checkpoint I/O

Versioned JSON checkpoints: {"format": 1, "backend": ..., "vocab": N, "d": d,
"params": [...], "hyper": {...}}. Floats are written with full repr
precision, so save -> load -> predict is bitwise identical.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from radd.contracts import ModelBackend
from radd.diffusion.space import Vocab
from radd.errors import CompatibilityError

from .base_model import ConditionalModel
from .neural_model import NeuralModel
from .tabular_model import TabularModel
from .uniform_model import UniformModel


logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = 1


class CheckpointFile(BaseModel):
    """On-disk checkpoint."""

    format: int = Field(CHECKPOINT_FORMAT, description="Checkpoint format version")
    backend: ModelBackend = Field(..., description="Model backend")
    vocab: int = Field(..., ge=1, description="Number of real tokens N")
    d: int = Field(..., ge=1, description="Sequence length")
    params: List[float] = Field(default_factory=list, description="Flat parameter vector")
    hyper: Dict[str, Any] = Field(default_factory=dict, description="Backend constructor arguments")

    model_config = {
        "json_schema_extra": {
            "example": {
                "format": 1,
                "backend": "tabular",
                "vocab": 2,
                "d": 1,
                "params": [0.0, 0.0, 0.3, -0.3],
                "hyper": {},
            }
        }
    }


def save_checkpoint(model: ConditionalModel, path: Union[str, Path]) -> Path:
    """
    Write a model checkpoint.

    Raises:
        CompatibilityError: For the oracle backend, which wraps a table instead of parameters
    """
    if model.backend is ModelBackend.ORACLE:
        raise CompatibilityError("Oracle models are rebuilt from their table, not checkpointed")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = CheckpointFile(
        backend=model.backend,
        vocab=model.vocab.n_tokens,
        d=model.d,
        params=model.get_params().tolist(),
        hyper=model.hyperparameters(),
    )
    path.write_text(record.model_dump_json())
    logger.info(f"Saved {model.backend.value} checkpoint ({model.n_params} params) to {path}")
    return path


def _build(record: CheckpointFile) -> ConditionalModel:
    vocab = Vocab(record.vocab)
    params = np.asarray(record.params, dtype=np.float64)
    if record.backend is ModelBackend.TABULAR:
        return TabularModel(vocab, record.d, params=params)
    if record.backend is ModelBackend.NEURAL:
        hyper = dict(record.hyper)
        hidden = tuple(hyper.pop("hidden", (64, 64)))
        return NeuralModel(vocab, record.d, hidden=hidden, params=params, **hyper)
    if record.backend is ModelBackend.UNIFORM:
        return UniformModel(vocab, record.d)
    raise CompatibilityError(f"Backend {record.backend.value} cannot be restored from a checkpoint")


def load_checkpoint(
    path: Union[str, Path],
    vocab: Optional[Vocab] = None,
    d: Optional[int] = None,
    backend: Optional[ModelBackend] = None,
) -> ConditionalModel:
    """
    Load a checkpoint and check it against the expected configuration.

    Args:
        path: Checkpoint file
        vocab: Expected vocabulary, if any
        d: Expected sequence length, if any
        backend: Expected backend, if any

    Returns:
        The restored model

    Raises:
        FileNotFoundError: If path does not exist
        CompatibilityError: On format, vocabulary, length, backend or size mismatch
    """
    path = Path(path)
    try:
        record = CheckpointFile.model_validate_json(path.read_text())
    except ValidationError as e:
        raise CompatibilityError(f"{path} is not a valid checkpoint: {e.errors()[0]['msg']}") from e

    if record.format != CHECKPOINT_FORMAT:
        raise CompatibilityError(f"Unsupported checkpoint format {record.format} (expected {CHECKPOINT_FORMAT})")
    if vocab is not None and record.vocab != vocab.n_tokens:
        raise CompatibilityError(f"Checkpoint vocabulary N={record.vocab} does not match configured N={vocab.n_tokens}")
    if d is not None and record.d != d:
        raise CompatibilityError(f"Checkpoint length d={record.d} does not match configured d={d}")
    if backend is not None and record.backend is not ModelBackend(backend):
        raise CompatibilityError(
            f"Checkpoint backend {record.backend.value} does not match configured {ModelBackend(backend).value}"
        )

    try:
        model = _build(record)
    except ValueError as e:
        raise CompatibilityError(f"Checkpoint {path} does not fit its backend: {e}") from e
    logger.info(f"Loaded {record.backend.value} checkpoint from {path}")
    return model
