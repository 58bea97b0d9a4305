"""
Oracle Model

Wraps an exact joint table: predict() returns the true conditionals. Every
loss reaches its information-theoretic floor with this backend.
"""

import numpy as np

from radd.contracts import ModelBackend
from radd.diffusion.space import ExactJointTable, SequenceState, conditional_of

from .base_model import ConditionalModel


class OracleModel(ConditionalModel):
    """Exact conditionals p0(. | x^UM) read off an ExactJointTable."""

    backend = ModelBackend.ORACLE

    def __init__(self, table: ExactJointTable):
        super().__init__(table.vocab, table.d)
        self.table = table

    def _predict(self, x: SequenceState) -> np.ndarray:
        return conditional_of(self.table, x)
