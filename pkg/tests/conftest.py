"""
Pytest configuration and fixtures for testing.
"""

from pathlib import Path

import numpy as np
import pytest

from radd.diffusion import ExactJointTable, ForwardKernel, NoiseSchedule, Vocab
from radd.models import NeuralModel, OracleModel, TabularModel, UniformModel


FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator; every test gets a fresh one."""
    return np.random.default_rng(1234)


@pytest.fixture
def vocab2() -> Vocab:
    return Vocab(2)


@pytest.fixture
def vocab3() -> Vocab:
    return Vocab(3)


@pytest.fixture
def loglinear() -> NoiseSchedule:
    return NoiseSchedule.loglinear(eps=1e-3)


@pytest.fixture
def geometric() -> NoiseSchedule:
    return NoiseSchedule.geometric()


@pytest.fixture
def kernel3(loglinear, vocab3) -> ForwardKernel:
    return ForwardKernel(loglinear, vocab3)


@pytest.fixture
def fixture_table() -> ExactJointTable:
    """N=2, d=3 table stored in the joint-table JSON format."""
    return ExactJointTable.load(FIXTURES / "table_n2_d3.json")


@pytest.fixture
def skewed_table(vocab2) -> ExactJointTable:
    """N=2, d=2 with H(p0) well below the uniform 2 log 2."""
    return ExactJointTable(vocab2, 2, [0.7, 0.1, 0.1, 0.1])


@pytest.fixture
def mixture_table(vocab3) -> ExactJointTable:
    return ExactJointTable.mixture(vocab3, 3, np.random.default_rng(7))


@pytest.fixture
def oracle(mixture_table) -> OracleModel:
    return OracleModel(mixture_table)


@pytest.fixture
def random_tabular(vocab3) -> TabularModel:
    return TabularModel.random(vocab3, 3, np.random.default_rng(11), scale=1.5)


@pytest.fixture
def uniform3(vocab3) -> UniformModel:
    return UniformModel(vocab3, 3)


@pytest.fixture
def tiny_neural(vocab3) -> NeuralModel:
    return NeuralModel(vocab3, 4, embed_dim=4, hidden=(8, 8), seed=0, head_scale=1.0)


@pytest.fixture
def corpus_file(tmp_path) -> Path:
    path = tmp_path / "corpus.txt"
    path.write_bytes((FIXTURES / "corpus.txt").read_bytes())
    return path
