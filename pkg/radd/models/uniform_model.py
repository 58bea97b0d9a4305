"""
Uniform Model

Untrained baseline: every masked row is 1/N, so per-token perplexity is N.
Also the cheapest stand-in when only masking dynamics matter (NFE counts).
"""

import numpy as np

from radd.contracts import ModelBackend
from radd.diffusion.space import SequenceState

from .base_model import ConditionalModel


class UniformModel(ConditionalModel):
    backend = ModelBackend.UNIFORM

    def _predict(self, x: SequenceState) -> np.ndarray:
        return np.full((self.d, self.vocab.n_tokens), 1.0 / self.vocab.n_tokens)
