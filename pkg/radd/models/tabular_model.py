"""
Tabular Model

One free logit vector per (context state, position): exactly expressive, so
training can reach the true conditionals. Only usable at tiny (N, d).
"""

from typing import Any, Dict, Optional, Tuple

import numpy as np

from radd.contracts import ModelBackend
from radd.diffusion.space import SequenceState, Vocab
from radd.errors import DomainError

from .base_model import SoftmaxModel


# (N+1)^d * d * N logits must stay below this
MAX_TABULAR_PARAMS = 5 * 10**7


class TabularModel(SoftmaxModel):
    """
    Logits indexed by (context in [0, N]^d, position, token).

    Zero logits give uniform rows, i.e. the untrained baseline.
    """

    backend = ModelBackend.TABULAR

    def __init__(self, vocab: Vocab, d: int, params: Optional[np.ndarray] = None):
        n_contexts = vocab.size_with_mask ** d
        size = n_contexts * d * vocab.n_tokens
        if size > MAX_TABULAR_PARAMS:
            raise DomainError(
                f"Tabular model for N={vocab.n_tokens}, d={d} needs {size} logits "
                f"(limit {MAX_TABULAR_PARAMS})"
            )
        super().__init__(vocab, d, np.zeros(size) if params is None else params, size)
        self.n_contexts = n_contexts
        self._block = d * vocab.n_tokens
        self._shape = (vocab.size_with_mask,) * d

    @classmethod
    def random(cls, vocab: Vocab, d: int, rng: np.random.Generator, scale: float = 1.0) -> "TabularModel":
        """Gaussian logits; used to exercise the losses away from uniform rows."""
        size = vocab.size_with_mask ** d * d * vocab.n_tokens
        return cls(vocab, d, rng.normal(0.0, scale, size=size))

    def context_index(self, x: SequenceState) -> int:
        return int(np.ravel_multi_index(x.key, self._shape))

    def logits_for(self, x: SequenceState) -> np.ndarray:
        """Read-only d x N logit block of the context x."""
        start = self.context_index(x) * self._block
        return self._params[start:start + self._block].reshape(self.d, self.vocab.n_tokens)

    def _logits(self, x: SequenceState) -> Tuple[np.ndarray, Any]:
        return self.logits_for(x), self.context_index(x)

    def _backward(self, x: SequenceState, cache: Any, dlogits: np.ndarray) -> np.ndarray:
        grad = np.zeros_like(self._params)
        start = cache * self._block
        grad[start:start + self._block] = dlogits.reshape(-1)
        return grad

    def hyperparameters(self) -> Dict[str, Any]:
        return {}
