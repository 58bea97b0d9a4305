"""
Byte-level corpus ingestion.

A file is cut into consecutive non-overlapping blocks of d bytes (the
trailing partial block is dropped). Each block goes to the train or held-out
split by a hash of its index, so the split is stable across runs and
independent of the training seed.
"""

import hashlib
import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from radd.contracts import DataSplit
from radd.diffusion.space import SequenceState, Vocab
from radd.errors import DomainError, EmptyCorpusError


logger = logging.getLogger(__name__)

BYTE_VOCAB = Vocab(256)


def _heldout_score(index: int) -> float:
    digest = hashlib.blake2b(str(index).encode("ascii"), digest_size=8).digest()
    return int.from_bytes(digest, "big") / 2.0**64


class Corpus:
    """
    Fixed-length byte blocks of one file.

    Args:
        path: Source file (any bytes)
        d: Block length
        heldout_fraction: Share of blocks in the held-out split
    """

    vocab = BYTE_VOCAB

    def __init__(self, path: Union[str, Path], d: int, heldout_fraction: float = 0.1):
        if d < 1:
            raise DomainError(f"Block length must be at least 1, got {d}")
        if not 0.0 <= heldout_fraction < 1.0:
            raise DomainError(f"heldout_fraction must lie in [0, 1), got {heldout_fraction}")
        self.path = Path(path)
        self.d = d
        self.heldout_fraction = heldout_fraction

        raw = self.path.read_bytes()
        self.n_blocks = len(raw) // d
        if self.n_blocks == 0:
            raise EmptyCorpusError(f"{self.path} holds {len(raw)} bytes, fewer than one block of {d}")
        self._blocks = np.frombuffer(raw[: self.n_blocks * d], dtype=np.uint8).reshape(self.n_blocks, d).astype(np.int64)

        heldout = np.array([_heldout_score(i) < heldout_fraction for i in range(self.n_blocks)], dtype=bool)
        self._split_index = {
            DataSplit.TRAIN: np.flatnonzero(~heldout),
            DataSplit.HELDOUT: np.flatnonzero(heldout),
        }
        logger.info(
            f"Loaded corpus {self.path}: {self.n_blocks} blocks of {d} bytes "
            f"({self._split_index[DataSplit.HELDOUT].size} held out)"
        )

    def block_indices(self, split: DataSplit) -> np.ndarray:
        """File-order indices of the blocks in a split."""
        return self._split_index[DataSplit(split)].copy()

    def block(self, index: int) -> np.ndarray:
        return self._blocks[index].copy()

    def blocks(self, split: DataSplit = DataSplit.TRAIN, seed: Optional[int] = None) -> np.ndarray:
        """
        Blocks of a split as an (n, d) int array.

        File order when seed is None, otherwise a seeded shuffle.
        """
        index = self.block_indices(split)
        if seed is not None:
            index = np.random.default_rng(seed).permutation(index)
        return self._blocks[index].copy()

    def sequences(self, split: DataSplit = DataSplit.TRAIN, seed: Optional[int] = None):
        for row in self.blocks(split, seed):
            yield SequenceState(row, self.vocab)


def load_blocks(
    path: Union[str, Path],
    d: int,
    split: DataSplit = DataSplit.TRAIN,
    heldout_fraction: float = 0.1,
    seed: Optional[int] = None,
) -> np.ndarray:
    """
    Blocks of one split of a byte file.

    Raises:
        FileNotFoundError: If the file does not exist
        EmptyCorpusError: If the file is shorter than d bytes
    """
    return Corpus(path, d, heldout_fraction).blocks(split, seed)


def decode_block(block: Union[np.ndarray, SequenceState], errors: str = "replace") -> str:
    """Bytes of a block as text; masks are shown as '_'."""
    tokens = block.tokens if isinstance(block, SequenceState) else np.asarray(block)
    return block_bytes(tokens).decode("utf-8", errors=errors)


def block_bytes(tokens: np.ndarray) -> bytes:
    """Raw bytes of a block; the mask token becomes '_'."""
    tokens = np.asarray(tokens, dtype=np.int64)
    shown = np.where(tokens >= 256, ord("_"), tokens)
    return bytes(shown.astype(np.uint8).tolist())


def encode_text(text: str) -> np.ndarray:
    """UTF-8 bytes of text as token ids."""
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).astype(np.int64)
