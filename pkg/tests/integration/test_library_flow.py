"""
Integration Test: Library Flow

Table -> training -> checkpoint -> perplexity -> sampling, through the
public library API without the command line.
"""

import math

import numpy as np
import pytest

from radd.config import TrainConfig
from radd.contracts import SamplerMethod
from radd.diffusion import ExactJointTable, ForwardKernel, NoiseSchedule, SequenceState, Vocab
from radd.evaluation import distribution_distance, expected_exact_loss, perplexity
from radd.models import OracleModel, TabularModel, load_checkpoint, save_checkpoint
from radd.sampler import StepGrid, sample
from radd.trainer import TableSource, Trainer


class TestTrainEvaluateSample:
    """A tabular model trained on a mixture table, end to end"""

    def test_training_closes_the_entropy_gap(self, mixture_table, vocab3):
        # Arrange
        model = TabularModel(vocab3, 3)
        entropy = mixture_table.entropy()
        before = expected_exact_loss(model, mixture_table)

        # Act
        Trainer(model, TableSource(mixture_table), TrainConfig(loss="ao", steps=300, batch=32, lr=0.1, seed=2)).run()
        after = expected_exact_loss(model, mixture_table)

        # Assert
        assert before == pytest.approx(3 * math.log(3))
        assert entropy - 1e-9 <= after < before
        assert after - entropy < 0.5 * (before - entropy)

    def test_checkpoint_preserves_perplexity(self, mixture_table, vocab3, tmp_path, rng):
        # Arrange
        model = TabularModel(vocab3, 3)
        Trainer(model, TableSource(mixture_table), TrainConfig(loss="ldce", steps=50, batch=16, lr=0.1)).run()
        dataset = [SequenceState(row, vocab3) for row in mixture_table.sample_many(rng, 20)]

        # Act
        path = save_checkpoint(model, tmp_path / "model.json")
        restored = load_checkpoint(path, vocab=vocab3, d=3)

        # Assert
        original = perplexity(model, dataset)
        reloaded = perplexity(restored, dataset)
        assert reloaded.loss_nats_per_token == original.loss_nats_per_token
        assert reloaded.n_examples == 20

    def test_paired_losses_agree_on_the_oracle(self, oracle, mixture_table, vocab3, rng):
        # Arrange
        kernel = ForwardKernel(NoiseSchedule.loglinear(), vocab3)
        dataset = [SequenceState(row, vocab3) for row in mixture_table.sample_many(rng, 10)]

        # Act
        reports = {loss: perplexity(oracle, dataset, loss=loss, kernel=kernel) for loss in ("ao", "ldce", "dse", "tdce")}

        # Assert
        assert reports["ldce"].loss_nats_per_token == pytest.approx(reports["ao"].loss_nats_per_token, rel=1e-8)
        assert reports["dse"].loss_nats_per_token == pytest.approx(reports["tdce"].loss_nats_per_token, rel=1e-8)


class TestOracleSampling:
    """Samplers driven by the exact conditionals reproduce p0"""

    def test_ao_and_tweedie_match_the_table(self, oracle, mixture_table):
        # Act
        tv_ao = distribution_distance(oracle, mixture_table, trials=4000, method=SamplerMethod.AO, seed=3)
        tv_tweedie = distribution_distance(oracle, mixture_table, trials=4000, method=SamplerMethod.TWEEDIE,
                                           steps=16, seed=3)

        # Assert
        assert tv_ao < 0.1
        assert tv_tweedie < 0.1

    def test_prompted_samples_keep_the_prompt(self, vocab3):
        # Arrange
        model = OracleModel(ExactJointTable.uniform(vocab3, 3))
        kernel = ForwardKernel(NoiseSchedule.loglinear(), vocab3)

        # Act
        report = sample(model, kernel, StepGrid.uniform(4), prompt=[(1, 2)], trajectories=10, seed=0)

        # Assert
        assert all(tokens[1] == 2 for tokens in report.sequences)
        assert all(nfe <= 4 for nfe in report.nfe)


@pytest.mark.slow
class TestTrainingReachesTheFloor:
    """Tabular training on a 4-token, length-4 mixture lands near H(p0)"""

    @pytest.fixture(scope="class")
    def table(self):
        return ExactJointTable.mixture(Vocab(4), 4, np.random.default_rng(3))

    @pytest.fixture(scope="class")
    def trained(self, table):
        models = {}
        for loss in ("ldce", "ao"):
            model = TabularModel(table.vocab, table.d)
            config = TrainConfig(loss=loss, steps=3000, batch=64, lr=0.05, ema_decay=0.995, seed=0)
            result = Trainer(model, TableSource(table), config).run()
            model.set_params(result.ema_params)
            models[loss] = model
        return models

    def test_exact_loss_within_five_percent_of_entropy(self, table, trained):
        # Act
        loss = expected_exact_loss(trained["ldce"], table)

        # Assert
        assert table.entropy() - 1e-9 <= loss <= 1.05 * table.entropy()

    def test_generated_samples_match_the_table(self, table, trained):
        # Act
        tv = distribution_distance(trained["ldce"], table, trials=50_000, method=SamplerMethod.AO, seed=4)

        # Assert
        assert tv < 0.05

    def test_ao_and_ldce_training_agree(self, table, trained):
        # Act
        ldce = expected_exact_loss(trained["ldce"], table)
        ao = expected_exact_loss(trained["ao"], table)

        # Assert
        assert abs(ldce - ao) < 0.05
