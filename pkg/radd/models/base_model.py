"""
Base Conditional Model

The time-independent network contract: predict(x) returns, for every masked
position i, a distribution over the N data tokens approximating
p0(. | x^UM). There is deliberately no time argument; the concrete score at
time t is score_scale(t) * predict(x).
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Callable, Dict, Tuple

import numpy as np
from scipy.special import softmax

from radd.contracts import ModelBackend
from radd.diffusion.space import SequenceState, Vocab
from radd.errors import NumericError, ShapeError


# maps a (d x N) probability matrix to (loss value, d loss / d probs)
LossEvaluator = Callable[[np.ndarray], Tuple[float, np.ndarray]]


class ConditionalModel(ABC):
    """
    Base class for all conditional model backends.

    Provides:
    - Shape validation and the one-hot convention for unmasked rows
    - A flat parameter vector view for optimizers
    - loss_gradient() for Monte-Carlo loss samples
    """

    backend: ModelBackend

    def __init__(self, vocab: Vocab, d: int):
        """
        Initialize base model.

        Args:
            vocab: Vocabulary the model predicts over
            d: Sequence length the model is built for
        """
        if d < 1:
            raise ShapeError(f"Sequence length must be at least 1, got {d}")
        self.vocab = vocab
        self.d = d
        self.logger = logging.getLogger(f"radd.models.{self.backend.value}")

    # -----------------------------------------------------------------
    # prediction
    # -----------------------------------------------------------------

    def check_input(self, x: SequenceState) -> None:
        if x.d != self.d or x.vocab != self.vocab:
            raise ShapeError(
                f"{self.backend.value} model expects d={self.d}, N={self.vocab.n_tokens}; "
                f"got d={x.d}, N={x.vocab.n_tokens}"
            )

    @abstractmethod
    def _predict(self, x: SequenceState) -> np.ndarray:
        """d x N matrix; only rows at masked positions are used."""

    def predict(self, x: SequenceState) -> np.ndarray:
        """
        Conditional distributions for every position.

        Args:
            x: Sequence over [0, N]

        Returns:
            d x N matrix; masked rows are probability vectors, unmasked rows
            the one-hot of the observed token

        Raises:
            ShapeError: If x does not match the model's (d, N)
        """
        self.check_input(x)
        probs = np.array(self._predict(x), dtype=np.float64)
        _one_hot_unmasked(probs, x)
        return probs

    # -----------------------------------------------------------------
    # parameters
    # -----------------------------------------------------------------

    @property
    def n_params(self) -> int:
        return 0

    def get_params(self) -> np.ndarray:
        """Copy of the flat parameter vector."""
        return np.zeros(0)

    def set_params(self, params: np.ndarray) -> None:
        params = np.asarray(params, dtype=np.float64).reshape(-1)
        if params.size != self.n_params:
            raise ShapeError(f"Expected {self.n_params} parameters, got {params.size}")

    def hyperparameters(self) -> Dict[str, Any]:
        """Constructor arguments beyond (vocab, d) needed to rebuild the model."""
        return {}

    def loss_gradient(self, x: SequenceState, evaluator: LossEvaluator) -> Tuple[float, np.ndarray]:
        """
        Value and parameter gradient of a scalar loss of predict(x).

        Non-parametric backends return an empty gradient.
        """
        value, _ = evaluator(self.predict(x))
        return value, np.zeros(0)


class SoftmaxModel(ConditionalModel):
    """
    Backends whose rows are a softmax over N logits.

    Subclasses provide _logits() and _backward(); this class handles the
    softmax, the one-hot convention and the chain rule from probabilities to
    logits.
    """

    def __init__(self, vocab: Vocab, d: int, params: np.ndarray, size: int):
        super().__init__(vocab, d)
        self._params = np.array(params, dtype=np.float64).reshape(-1)
        if self._params.size != size:
            raise ShapeError(f"{self.backend.value} model expects {size} parameters, got {self._params.size}")

    @abstractmethod
    def _logits(self, x: SequenceState) -> Tuple[np.ndarray, Any]:
        """d x N logits plus whatever _backward needs."""

    @abstractmethod
    def _backward(self, x: SequenceState, cache: Any, dlogits: np.ndarray) -> np.ndarray:
        """Flat parameter gradient given d loss / d logits."""

    def _predict(self, x: SequenceState) -> np.ndarray:
        logits, _ = self._logits(x)
        return softmax(logits, axis=1)

    @property
    def n_params(self) -> int:
        return int(self._params.size)

    def get_params(self) -> np.ndarray:
        return self._params.copy()

    def set_params(self, params: np.ndarray) -> None:
        super().set_params(params)
        self._params[:] = np.asarray(params, dtype=np.float64).reshape(-1)

    def loss_gradient(self, x: SequenceState, evaluator: LossEvaluator) -> Tuple[float, np.ndarray]:
        """
        Analytic gradient of evaluator(predict(x)) w.r.t. the flat parameters.

        Raises:
            NumericError: If the gradient has a non-finite entry; the first
                offending parameter index is attached
        """
        self.check_input(x)
        logits, cache = self._logits(x)
        probs = softmax(logits, axis=1)
        _one_hot_unmasked(probs, x)

        value, dprobs = evaluator(probs)
        dprobs = np.asarray(dprobs, dtype=np.float64)
        unmasked = ~x.masked
        dprobs = np.where(unmasked[:, None], 0.0, dprobs)
        # softmax Jacobian row by row: p * (g - <g, p>)
        dlogits = probs * (dprobs - np.sum(dprobs * probs, axis=1, keepdims=True))
        dlogits[unmasked] = 0.0

        grad = self._backward(x, cache, dlogits)
        bad = np.flatnonzero(~np.isfinite(grad))
        if bad.size:
            raise NumericError(
                f"Non-finite gradient in {self.backend.value} model at parameter {int(bad[0])}",
                param_index=int(bad[0]),
            )
        return value, grad


def _one_hot_unmasked(probs: np.ndarray, x: SequenceState) -> None:
    unmasked = np.flatnonzero(~x.masked)
    if unmasked.size:
        probs[unmasked] = 0.0
        probs[unmasked, x.tokens[unmasked]] = 1.0


def loss_gradient(
    model: ConditionalModel,
    x: SequenceState,
    evaluator: LossEvaluator,
) -> Tuple[float, np.ndarray]:
    """Module-level form of ConditionalModel.loss_gradient."""
    return model.loss_gradient(x, evaluator)
