"""
Tests for the conditional model backends and checkpoint I/O.
"""

import numpy as np
import pytest

from radd.contracts import ModelBackend
from radd.diffusion import SequenceState, Vocab, conditional_of
from radd.errors import CompatibilityError, ConfigError, ShapeError
from radd.models import (
    NeuralModel,
    OracleModel,
    TabularModel,
    UniformModel,
    build_model,
    load_checkpoint,
    save_checkpoint,
)


def nll_at(position: int, token: int):
    """-log p[position, token] with its probability gradient."""

    def evaluate(probs):
        dprobs = np.zeros_like(probs)
        dprobs[position, token] = -1.0 / probs[position, token]
        return -float(np.log(probs[position, token])), dprobs

    return evaluate


def test_uniform_rows(uniform3, vocab3):
    probs = uniform3.predict(SequenceState([3, 1, 3], vocab3))

    np.testing.assert_allclose(probs[0], [1 / 3] * 3)
    assert probs[1].tolist() == [0.0, 1.0, 0.0]
    assert uniform3.n_params == 0


def test_oracle_returns_true_conditionals(oracle, mixture_table, vocab3):
    x = SequenceState([3, 2, 3], vocab3)

    np.testing.assert_array_equal(oracle.predict(x), conditional_of(mixture_table, x))


def test_predict_checks_shape(uniform3):
    with pytest.raises(ShapeError):
        uniform3.predict(SequenceState([3, 3], Vocab(3)))
    with pytest.raises(ShapeError):
        uniform3.predict(SequenceState([2, 2, 2], Vocab(2)))


def test_rows_are_distributions(random_tabular, tiny_neural, vocab3, rng):
    for model in (random_tabular, tiny_neural):
        tokens = rng.integers(0, 4, size=model.d)
        probs = model.predict(SequenceState(tokens, vocab3))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(probs >= 0)


def test_untrained_tabular_is_uniform(vocab3):
    model = TabularModel(vocab3, 2)

    np.testing.assert_allclose(model.predict(SequenceState([3, 3], vocab3)), 1 / 3)
    assert model.n_params == 16 * 2 * 3


def test_tabular_gradient_is_softmax_minus_one_hot(random_tabular, vocab3):
    x = SequenceState([1, 3, 3], vocab3)
    probs = random_tabular.predict(x)

    value, grad = random_tabular.loss_gradient(x, nll_at(1, 2))

    start = random_tabular.context_index(x) * 3 * 3
    block = grad[start:start + 9].reshape(3, 3)
    expected = np.zeros((3, 3))
    expected[1] = probs[1] - np.eye(3)[2]
    assert value == pytest.approx(-np.log(probs[1, 2]))
    np.testing.assert_allclose(block, expected, atol=1e-15)
    assert np.count_nonzero(grad) == np.count_nonzero(expected)


def test_neural_gradient_matches_finite_differences(tiny_neural, vocab3):
    x = SequenceState([0, 3, 2, 3], vocab3)
    evaluator = nll_at(3, 1)
    _, grad = tiny_neural.loss_gradient(x, evaluator)
    params = tiny_neural.get_params()
    h = 1e-6

    for index in np.random.default_rng(0).choice(params.size, size=25, replace=False):
        shifted = params.copy()
        shifted[index] += h
        tiny_neural.set_params(shifted)
        up, _ = evaluator(tiny_neural.predict(x))
        shifted[index] -= 2 * h
        tiny_neural.set_params(shifted)
        down, _ = evaluator(tiny_neural.predict(x))
        tiny_neural.set_params(params)
        assert grad[index] == pytest.approx((up - down) / (2 * h), abs=1e-6)


def test_head_scale_zero_gives_uniform_rows(vocab3):
    model = NeuralModel(vocab3, 3, embed_dim=4, hidden=(8, 8), head_scale=0.0)

    np.testing.assert_allclose(model.predict(SequenceState([3, 0, 3], vocab3))[0], 1 / 3)


def test_wrong_parameter_count(vocab3, random_tabular):
    with pytest.raises(ShapeError):
        TabularModel(vocab3, 1, params=np.zeros(3))
    with pytest.raises(ShapeError):
        random_tabular.set_params(np.zeros(5))


def test_get_params_is_a_copy(random_tabular):
    params = random_tabular.get_params()
    params[:] = 0.0

    assert np.any(random_tabular.get_params() != 0.0)


def test_checkpoint_round_trip_is_bitwise(tmp_path, random_tabular, tiny_neural, vocab3):
    for model in (random_tabular, tiny_neural):
        path = save_checkpoint(model, tmp_path / f"{model.backend.value}.json")
        restored = load_checkpoint(path, vocab=vocab3, d=model.d, backend=model.backend)

        x = SequenceState([3] * model.d, vocab3)
        np.testing.assert_array_equal(restored.predict(x), model.predict(x))
        np.testing.assert_array_equal(restored.get_params(), model.get_params())


def test_checkpoint_mismatches(tmp_path, random_tabular):
    path = save_checkpoint(random_tabular, tmp_path / "model.json")

    with pytest.raises(CompatibilityError):
        load_checkpoint(path, vocab=Vocab(4))
    with pytest.raises(CompatibilityError):
        load_checkpoint(path, d=4)
    with pytest.raises(CompatibilityError):
        load_checkpoint(path, backend=ModelBackend.NEURAL)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"format": 1, "backend": "tabular"}')

    with pytest.raises(CompatibilityError):
        load_checkpoint(path)
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing.json")


def test_oracle_is_not_checkpointed(tmp_path, oracle):
    with pytest.raises(CompatibilityError):
        save_checkpoint(oracle, tmp_path / "oracle.json")


def test_build_model(vocab3, mixture_table):
    assert isinstance(build_model(ModelBackend.ORACLE, vocab3, 3, table=mixture_table), OracleModel)
    assert isinstance(build_model("uniform", vocab3, 3), UniformModel)

    neural = build_model(ModelBackend.NEURAL, vocab3, 3, hyper={"embed_dim": 4, "hidden": [8, 8]})
    assert neural.hidden == (8, 8)

    with pytest.raises(ConfigError):
        build_model(ModelBackend.ORACLE, vocab3, 3)
