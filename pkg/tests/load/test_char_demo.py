"""
Load Test: Byte-Level Demo

Trains the neural model exactly as configs/char_demo.json describes on the
bundled prose corpus, then checks held-out perplexity and AO-order samples.
Takes several minutes; run with `pytest -m slow`.
"""

from pathlib import Path

import numpy as np
import pytest

from radd.cli.resources import build_kernel, build_problem, resolve_model, resolve_prompt
from radd.config import load_run_config
from radd.contracts import DataSplit
from radd.corpus import block_bytes, decode_block
from radd.evaluation import perplexity
from radd.sampler import ao_sample
from radd.trainer import Trainer


ROOT = Path(__file__).resolve().parents[2]
CONFIG = ROOT / "configs" / "char_demo.json"
PRINTABLE = set(range(32, 127)) | {9, 10}


@pytest.mark.slow
class TestCharDemo:
    """Ten thousand steps on ~1 MB of text"""

    @pytest.fixture(scope="class")
    def demo(self, tmp_path_factory):
        config = load_run_config(CONFIG, {
            "data.corpus": str(ROOT / "data" / "prose.txt"),
            "out": str(tmp_path_factory.mktemp("char_demo")),
        })
        problem = build_problem(config.data)
        model, problem = resolve_model(config, problem)
        kernel = build_kernel(config, problem.vocab)
        before = perplexity(model, self._heldout(problem, config), loss=config.eval.loss,
                            estimator=config.eval.estimator, kernel=kernel, draws=config.eval.draws)
        result = Trainer(model, problem.source(), config.train, kernel=kernel,
                         monitor_size=config.data.monitor_size).run()
        model.set_params(result.ema_params)
        return config, problem, model, kernel, before

    @staticmethod
    def _heldout(problem, config):
        return list(problem.corpus.blocks(DataSplit.HELDOUT, seed=config.eval.seed)[: config.eval.max_examples])

    def test_bundled_corpus_size(self, demo):
        # Arrange
        config, problem, _, _, _ = demo

        # Assert
        assert config.data.d == 32
        assert config.train.steps == 10_000
        assert problem.corpus.n_blocks * 32 > 900_000

    def test_heldout_perplexity(self, demo):
        # Arrange
        config, problem, model, kernel, before = demo

        # Act
        after = perplexity(model, self._heldout(problem, config), loss=config.eval.loss,
                           estimator=config.eval.estimator, kernel=kernel, draws=config.eval.draws)

        # Assert
        assert before.perplexity == pytest.approx(256, rel=0.05)
        assert after.perplexity < 15

    def test_ao_samples_decode_to_text(self, demo):
        # Arrange
        config, problem, model, _, _ = demo
        prompt = resolve_prompt(config, problem)

        # Act
        report = ao_sample(model, problem.d, order=config.sampling.order, prompt=prompt,
                           trajectories=config.sampling.trajectories, seed=config.sampling.seed)

        # Assert
        for tokens in report.sequences:
            raw = block_bytes(np.asarray(tokens))
            assert raw.startswith(b"The ")
            assert decode_block(np.asarray(tokens)).strip()
            assert sum(byte in PRINTABLE for byte in raw) >= 0.9 * len(raw)
