"""
Builds the objects a command runs on (table, corpus, model, kernel) from a
validated RunConfig.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from radd.config import DataConfig, RunConfig, SyntheticTableConfig
from radd.contracts import ModelBackend
from radd.corpus import BYTE_VOCAB, Corpus, encode_text
from radd.diffusion.forward import ForwardKernel
from radd.diffusion.space import ExactJointTable, Vocab, load_table
from radd.errors import ConfigError
from radd.models import ConditionalModel, build_model, load_checkpoint
from radd.trainer import CorpusSource, DataSource, TableSource


logger = logging.getLogger(__name__)


@dataclass
class Problem:
    """Vocabulary, length and data source of a run."""

    vocab: Vocab
    d: int
    table: Optional[ExactJointTable] = None
    corpus: Optional[Corpus] = None

    @property
    def is_bytes(self) -> bool:
        return self.vocab == BYTE_VOCAB

    def source(self) -> DataSource:
        if self.table is not None:
            return TableSource(self.table)
        if self.corpus is not None:
            return CorpusSource(self.corpus)
        raise ConfigError("this command needs training data", key_path="data")


def synthetic_table(config: SyntheticTableConfig) -> ExactJointTable:
    """Seeded random table of the configured kind."""
    vocab = Vocab(config.n_tokens)
    rng = np.random.default_rng(config.seed)
    if config.kind == "mixture":
        return ExactJointTable.mixture(vocab, config.d, rng, n_components=config.components,
                                       concentration=config.concentration)
    if config.kind == "dirichlet":
        return ExactJointTable.random(vocab, config.d, rng, concentration=config.concentration)
    if config.kind == "uniform":
        return ExactJointTable.uniform(vocab, config.d)
    if config.point is None or len(config.point) != config.d:
        raise ConfigError(f"point_mass needs a point of length {config.d}", key_path="data.synthetic.point")
    return ExactJointTable.point_mass(vocab, config.point)


def build_problem(data: Optional[DataConfig]) -> Optional[Problem]:
    """Problem described by the data section; None when the section is absent."""
    if data is None:
        return None
    if data.synthetic is not None:
        table = synthetic_table(data.synthetic)
        logger.info(f"Generated {data.synthetic.kind} table: N={table.vocab.n_tokens}, d={table.d}")
        return Problem(table.vocab, table.d, table=table)
    if data.table is not None:
        table = load_table(data.table)
        return Problem(table.vocab, table.d, table=table)
    corpus = Corpus(data.corpus, data.d, data.heldout_fraction)
    return Problem(corpus.vocab, corpus.d, corpus=corpus)


def resolve_model(config: RunConfig, problem: Optional[Problem]) -> Tuple[ConditionalModel, Problem]:
    """
    Load the configured checkpoint or build a fresh model.

    A run without a data section takes its vocabulary and length from the
    checkpoint.

    Raises:
        ConfigError: If neither data nor a checkpoint pins down (N, d)
        CompatibilityError: If the checkpoint disagrees with the data
    """
    spec = config.model
    if spec.checkpoint is not None:
        if problem is None:
            model = load_checkpoint(spec.checkpoint, backend=spec.backend)
            return model, Problem(model.vocab, model.d)
        model = load_checkpoint(spec.checkpoint, vocab=problem.vocab, d=problem.d, backend=spec.backend)
        return model, problem

    if problem is None:
        raise ConfigError("either data or model.checkpoint is required", key_path="data")
    if spec.backend is ModelBackend.ORACLE and problem.table is None:
        raise ConfigError("the oracle backend needs table or synthetic data", key_path="model.backend")
    model = build_model(spec.backend, problem.vocab, problem.d, table=problem.table, hyper=spec.hyper())
    return model, problem


def build_kernel(config: RunConfig, vocab: Vocab) -> ForwardKernel:
    return ForwardKernel(config.schedule.build(), vocab)


def resolve_prompt(config: RunConfig, problem: Problem) -> Optional[List[Tuple[int, int]]]:
    """(position, token) pairs from sampling.prompt or the byte prompt_text."""
    sampling = config.sampling
    if sampling.prompt is not None:
        return [(int(p), int(v)) for p, v in sampling.prompt]
    if sampling.prompt_text is None:
        return None
    if not problem.is_bytes:
        raise ConfigError("prompt_text needs a byte vocabulary", key_path="sampling.prompt_text")
    tokens = encode_text(sampling.prompt_text)
    if tokens.size > problem.d:
        raise ConfigError(f"prompt is {tokens.size} bytes, longer than d={problem.d}", key_path="sampling.prompt_text")
    return [(i, int(v)) for i, v in enumerate(tokens)]
