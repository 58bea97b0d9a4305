"""
Tests for the optimizer and training loop.
"""

import math

import numpy as np
import pandas as pd
import pytest

import radd.trainer
from radd.config import TrainConfig
from radd.errors import ConfigError, DivergenceError, NumericError, ShapeError
from radd.evaluation import expected_exact_loss
from radd.losses import LossSample
from radd.models import TabularModel, UniformModel
from radd.trainer import (
    METRIC_COLUMNS,
    AdamState,
    TableSource,
    Trainer,
    adam_step,
    clip_by_global_norm,
    write_metrics,
)


def test_first_adam_step_moves_by_lr():
    """With bias correction the first step is lr * sign(g)."""
    params = np.array([1.0, -2.0, 0.5])
    grads = np.array([0.3, -4.0, 1e-3])
    config = TrainConfig(lr=0.1)

    new_params, state = adam_step(params, grads, AdamState.zeros_like(params), config)

    np.testing.assert_allclose(new_params, params - 0.1 * np.sign(grads), rtol=1e-4)
    assert state.step == 1


def test_adam_rejects_non_finite_gradients():
    params = np.zeros(3)
    state = AdamState.zeros_like(params)

    with pytest.raises(NumericError) as info:
        adam_step(params, np.array([0.0, np.nan, 1.0]), state, TrainConfig())
    assert info.value.param_index == 1
    with pytest.raises(NumericError):
        adam_step(params, np.zeros(2), state, TrainConfig())


def test_ema_shadow():
    params = np.zeros(2)
    config = TrainConfig(lr=1.0, ema_decay=0.5)

    new_params, state = adam_step(params, np.ones(2), AdamState.zeros_like(params), config)

    np.testing.assert_allclose(state.ema, 0.5 * new_params)


def test_clip_by_global_norm():
    grads = np.array([3.0, 4.0])

    clipped, norm = clip_by_global_norm(grads, 1.0)
    assert norm == 5.0
    np.testing.assert_allclose(clipped, [0.6, 0.8])

    same, _ = clip_by_global_norm(grads, 10.0)
    np.testing.assert_array_equal(same, grads)


def test_trainer_needs_parameters(skewed_table, vocab2):
    with pytest.raises(ConfigError):
        Trainer(UniformModel(vocab2, 2), TableSource(skewed_table), TrainConfig())


def test_trainer_checks_shapes(skewed_table, vocab2):
    with pytest.raises(ShapeError):
        Trainer(TabularModel(vocab2, 3), TableSource(skewed_table), TrainConfig())


def test_training_approaches_entropy(skewed_table, vocab2):
    model = TabularModel(vocab2, 2)
    before = expected_exact_loss(model, skewed_table)

    Trainer(model, TableSource(skewed_table), TrainConfig(steps=300, batch=32, lr=0.1, seed=1)).run()

    after = expected_exact_loss(model, skewed_table)
    assert before == pytest.approx(2 * math.log(2))
    assert after < 1.1
    assert after >= skewed_table.entropy() - 1e-9


def test_training_is_reproducible(skewed_table, vocab2):
    config = TrainConfig(steps=20, batch=8, lr=0.05, seed=4, loss="dse")

    runs = []
    for threads in (1, 1, 2):
        model = TabularModel(vocab2, 2)
        result = Trainer(model, TableSource(skewed_table), config, threads=threads).run()
        runs.append((model.get_params(), result.metrics))

    for params, metrics in runs[1:]:
        np.testing.assert_array_equal(params, runs[0][0])
        pd.testing.assert_series_equal(metrics["loss_mc"], runs[0][1]["loss_mc"])


def test_metrics_rows(skewed_table, vocab2):
    result = Trainer(
        TabularModel(vocab2, 2), TableSource(skewed_table), TrainConfig(steps=25, batch=4, seed=0), monitor_size=8
    ).run()

    metrics = result.metrics
    assert list(metrics.columns) == METRIC_COLUMNS
    assert metrics["step"].tolist() == [1, 10, 20, 25]
    assert metrics["loss_exact_heldout"].iloc[:-1].isna().all()
    assert result.final_heldout_loss == pytest.approx(metrics["loss_exact_heldout"].iloc[-1])
    assert result.ema_params.shape == result.model.get_params().shape


def test_divergence_stops_training(monkeypatch, skewed_table, vocab2):
    model = TabularModel(vocab2, 2)
    calls = []

    def exploding_loss(kind, model, x0, kernel, rng, with_grad=False):
        calls.append(1)
        value = 1.0 if len(calls) == 1 else 50.0
        return LossSample(value=value, grad=np.zeros(model.n_params))

    monkeypatch.setattr(radd.trainer, "mc_loss", exploding_loss)
    config = TrainConfig(steps=50, batch=1, divergence_factor=10.0, divergence_patience=3)

    with pytest.raises(DivergenceError) as info:
        Trainer(model, TableSource(skewed_table), config).run()
    assert "step 4" in str(info.value)
    assert info.value.report


def test_non_finite_gradient_aborts(monkeypatch, skewed_table, vocab2):
    model = TabularModel(vocab2, 2)
    before = model.get_params()

    def broken_loss(kind, model, x0, kernel, rng, with_grad=False):
        grad = np.zeros(model.n_params)
        grad[3] = np.inf
        return LossSample(value=1.0, grad=grad)

    monkeypatch.setattr(radd.trainer, "mc_loss", broken_loss)

    with pytest.raises(NumericError):
        Trainer(model, TableSource(skewed_table), TrainConfig(steps=5, batch=2)).run()
    np.testing.assert_array_equal(model.get_params(), before)


def test_write_metrics_leaves_missing_heldout_loss_blank(tmp_path):
    metrics = pd.DataFrame(
        [{"step": 1, "loss_mc": 1.5, "loss_exact_heldout": math.nan, "grad_norm": 0.2, "wallclock_ms": 3.0}],
        columns=METRIC_COLUMNS,
    )

    path = write_metrics(metrics, tmp_path / "run" / "metrics.csv")

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(METRIC_COLUMNS)
    assert lines[1].startswith("1,1.5,,0.2,")
