"""
State space: vocabulary, token sequences and the exact joint-distribution
oracle used for brute-force verification.
"""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.special import entr

from radd.errors import DegenerateContextError, DomainError, ShapeError


logger = logging.getLogger(__name__)

# enumeration guard for oracle instances
MAX_TABLE_SIZE = 10**7

_NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Vocab:
    """N real tokens 0..N-1 plus the absorbing mask token N."""

    n_tokens: int

    def __post_init__(self):
        if self.n_tokens < 1:
            raise DomainError(f"Vocabulary needs at least one token, got {self.n_tokens}")

    @property
    def mask_id(self) -> int:
        return self.n_tokens

    @property
    def size_with_mask(self) -> int:
        return self.n_tokens + 1


class SequenceState:
    """
    A length-d sequence over [0, N] where N is the mask token.

    Immutable: the token array is read-only and every edit returns a new
    state. Equality and hashing go through the token tuple.
    """

    __slots__ = ("tokens", "vocab", "_key")

    def __init__(self, tokens: Union[Sequence[int], np.ndarray], vocab: Vocab):
        arr = np.array(tokens, dtype=np.int64).reshape(-1)
        if arr.size < 1:
            raise ShapeError("Sequence length must be at least 1")
        if np.any(arr < 0) or np.any(arr > vocab.mask_id):
            raise DomainError(f"Token ids must lie in [0, {vocab.mask_id}], got {arr.tolist()}")
        arr.setflags(write=False)
        self.tokens = arr
        self.vocab = vocab
        self._key = None

    @classmethod
    def all_masked(cls, d: int, vocab: Vocab) -> "SequenceState":
        return cls(np.full(d, vocab.mask_id, dtype=np.int64), vocab)

    @property
    def d(self) -> int:
        return int(self.tokens.size)

    @property
    def masked(self) -> np.ndarray:
        """Boolean mask of positions holding the mask token."""
        return self.tokens == self.vocab.mask_id

    @property
    def masked_positions(self) -> np.ndarray:
        return np.flatnonzero(self.masked)

    @property
    def n_masked(self) -> int:
        """d1 in the joint-law formulas."""
        return int(np.count_nonzero(self.masked))

    @property
    def n_unmasked(self) -> int:
        """d2 = d - d1."""
        return self.d - self.n_masked

    @property
    def is_clean(self) -> bool:
        return self.n_masked == 0

    @property
    def key(self) -> tuple:
        if self._key is None:
            self._key = tuple(int(v) for v in self.tokens)
        return self._key

    def replace(self, positions: Iterable[int], values: Iterable[int]) -> "SequenceState":
        """Copy with tokens at positions set to values."""
        arr = self.tokens.copy()
        arr[np.asarray(list(positions), dtype=np.int64)] = np.asarray(list(values), dtype=np.int64)
        return SequenceState(arr, self.vocab)

    def mask_positions(self, positions: Iterable[int]) -> "SequenceState":
        positions = list(positions)
        return self.replace(positions, [self.vocab.mask_id] * len(positions))

    def agrees_on_unmasked(self, other: "SequenceState") -> bool:
        """True when every unmasked token of self matches other at that position."""
        keep = ~self.masked
        return bool(np.array_equal(self.tokens[keep], other.tokens[keep]))

    def tolist(self) -> List[int]:
        return [int(v) for v in self.tokens]

    def __len__(self) -> int:
        return self.d

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SequenceState):
            return NotImplemented
        return self.vocab == other.vocab and self.key == other.key

    def __hash__(self) -> int:
        return hash((self.vocab.n_tokens, self.key))

    def __repr__(self) -> str:
        shown = ["M" if v == self.vocab.mask_id else str(v) for v in self.key]
        return f"SequenceState({' '.join(shown)})"


class JointTableFile(BaseModel):
    """On-disk form of an ExactJointTable."""

    n_tokens: int = Field(..., ge=1, description="Number of real tokens N")
    d: int = Field(..., ge=1, description="Sequence length")
    probs: List[float] = Field(..., description="N**d probabilities, position 0 most significant")


class ExactJointTable:
    """
    Explicit probability table p0 over X^d.

    Stored as a d-dimensional tensor with one axis per position so marginals
    over masked positions are plain axis sums.
    """

    def __init__(self, vocab: Vocab, d: int, probs: Union[Sequence[float], np.ndarray]):
        size = vocab.n_tokens ** d
        if size > MAX_TABLE_SIZE:
            raise DomainError(
                f"Table with N={vocab.n_tokens}, d={d} has {size} entries; "
                f"the oracle is capped at {MAX_TABLE_SIZE}"
            )
        flat = np.array(probs, dtype=np.float64).reshape(-1)
        if flat.size != size:
            raise ShapeError(f"Expected {size} probabilities, got {flat.size}")
        if np.any(flat < 0) or not np.all(np.isfinite(flat)):
            raise DomainError("Table entries must be finite and nonnegative")
        total = float(flat.sum())
        if abs(total - 1.0) > _NORMALIZATION_TOL:
            raise DomainError(f"Table entries must sum to 1, got {total!r}")
        flat.setflags(write=False)
        self.vocab = vocab
        self.d = d
        self.probs = flat
        self.tensor = flat.reshape((vocab.n_tokens,) * d)

    # -----------------------------------------------------------------
    # constructors
    # -----------------------------------------------------------------

    @classmethod
    def from_unnormalized(cls, vocab: Vocab, d: int, weights: np.ndarray) -> "ExactJointTable":
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        return cls(vocab, d, weights / weights.sum())

    @classmethod
    def uniform(cls, vocab: Vocab, d: int) -> "ExactJointTable":
        size = vocab.n_tokens ** d
        return cls(vocab, d, np.full(size, 1.0 / size))

    @classmethod
    def point_mass(cls, vocab: Vocab, x: Sequence[int]) -> "ExactJointTable":
        d = len(x)
        probs = np.zeros(vocab.n_tokens ** d)
        probs[np.ravel_multi_index(tuple(int(v) for v in x), (vocab.n_tokens,) * d)] = 1.0
        return cls(vocab, d, probs)

    @classmethod
    def random(
        cls,
        vocab: Vocab,
        d: int,
        rng: np.random.Generator,
        concentration: float = 1.0,
    ) -> "ExactJointTable":
        """Dirichlet-distributed table; small concentration gives peaked tables."""
        weights = rng.dirichlet(np.full(vocab.n_tokens ** d, concentration))
        # dirichlet draws can underflow to exact zeros at tiny concentration
        weights = np.maximum(weights, 1e-300)
        return cls.from_unnormalized(vocab, d, weights)

    @classmethod
    def mixture(
        cls,
        vocab: Vocab,
        d: int,
        rng: np.random.Generator,
        n_components: int = 3,
        concentration: float = 0.5,
    ) -> "ExactJointTable":
        """Mixture of product distributions: correlated but smooth test targets."""
        n = vocab.n_tokens
        weights = rng.dirichlet(np.full(n_components, 2.0))
        total = np.zeros((n,) * d)
        for w in weights:
            component = np.ones(())
            for _ in range(d):
                component = np.multiply.outer(component, rng.dirichlet(np.full(n, concentration)))
            total = total + w * component
        return cls.from_unnormalized(vocab, d, np.maximum(total, 1e-300))

    # -----------------------------------------------------------------
    # serialization
    # -----------------------------------------------------------------

    def to_json(self) -> str:
        return JointTableFile(n_tokens=self.vocab.n_tokens, d=self.d, probs=self.probs.tolist()).model_dump_json()

    @classmethod
    def from_json(cls, text: str) -> "ExactJointTable":
        data = JointTableFile.model_validate_json(text)
        return cls(Vocab(data.n_tokens), data.d, data.probs)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExactJointTable":
        return cls.from_json(Path(path).read_text())

    # -----------------------------------------------------------------
    # queries
    # -----------------------------------------------------------------

    def _check(self, x: SequenceState) -> None:
        if x.d != self.d or x.vocab != self.vocab:
            raise ShapeError(
                f"Sequence (d={x.d}, N={x.vocab.n_tokens}) does not match table "
                f"(d={self.d}, N={self.vocab.n_tokens})"
            )

    def _index(self, x: SequenceState) -> tuple:
        mask_id = self.vocab.mask_id
        return tuple(slice(None) if v == mask_id else int(v) for v in x.key)

    def prob(self, x: SequenceState) -> float:
        """p0(x) for a fully unmasked sequence."""
        self._check(x)
        if not x.is_clean:
            raise DomainError(f"prob() needs a clean sequence, got {x}")
        return float(self.tensor[x.key])

    def marginal(self, context: SequenceState) -> float:
        """p0(x^UM): probability of the unmasked tokens, masked positions summed out."""
        self._check(context)
        return float(np.sum(self.tensor[self._index(context)]))

    def entropy(self) -> float:
        """H(p0) in nats."""
        return float(np.sum(entr(self.probs)))

    def enumerate_sequences(self) -> Iterator[SequenceState]:
        for combo in itertools.product(range(self.vocab.n_tokens), repeat=self.d):
            yield SequenceState(combo, self.vocab)

    def index_of(self, x: SequenceState) -> int:
        return int(np.ravel_multi_index(x.key, (self.vocab.n_tokens,) * self.d))

    def sequence_at(self, index: int) -> SequenceState:
        return SequenceState(np.unravel_index(index, (self.vocab.n_tokens,) * self.d), self.vocab)

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """size x d array of token ids drawn from p0."""
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return np.stack(np.unravel_index(idx, (self.vocab.n_tokens,) * self.d), axis=1).astype(np.int64)


def conditional_of(p0: ExactJointTable, context: SequenceState) -> np.ndarray:
    """
    Exact conditionals p0(. | x^UM) for every masked position.

    Args:
        p0: Joint table
        context: Sequence whose unmasked tokens form the condition

    Returns:
        d x N matrix; masked rows are the exact conditionals, unmasked rows
        the one-hot of the observed token

    Raises:
        DegenerateContextError: If the unmasked tokens have probability zero
    """
    p0._check(context)
    n = p0.vocab.n_tokens
    out = np.zeros((context.d, n))
    unmasked = ~context.masked
    out[unmasked, context.tokens[unmasked]] = 1.0

    masked_positions = context.masked_positions
    if masked_positions.size == 0:
        return out

    # axes of the slice are the masked positions, in order
    block = p0.tensor[p0._index(context)]
    total = float(block.sum())
    if total <= 0.0:
        raise DegenerateContextError(f"Context {context} has probability zero under p0")
    for axis, position in enumerate(masked_positions):
        other_axes = tuple(a for a in range(block.ndim) if a != axis)
        row = block.sum(axis=other_axes) if other_axes else block
        out[position] = row / total
    return out


def sample_from_table(p0: ExactJointTable, rng: np.random.Generator) -> SequenceState:
    """One sequence drawn from p0; deterministic given the generator state."""
    return SequenceState(p0.sample_many(rng, 1)[0], p0.vocab)


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    """0.5 * sum |p - q| for two distributions over the same support."""
    return 0.5 * float(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64)).sum())


def load_table(path: Union[str, Path], vocab: Optional[Vocab] = None) -> ExactJointTable:
    """Load a JSON table and optionally check it against an expected vocabulary."""
    table = ExactJointTable.load(path)
    if vocab is not None and table.vocab != vocab:
        raise ShapeError(f"Table vocabulary N={table.vocab.n_tokens} does not match N={vocab.n_tokens}")
    logger.debug(f"Loaded joint table from {path}: N={table.vocab.n_tokens}, d={table.d}")
    return table
