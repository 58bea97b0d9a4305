"""
Tests for noise schedules.
"""

import math

import numpy as np
import pytest

from radd.contracts import ScheduleKind
from radd.diffusion.schedule import NoiseSchedule, evaluate, lambda_inverse
from radd.errors import DomainError


def test_loglinear_mask_prob_is_linear(loglinear):
    """lambda(t) = (1 - eps) t for T = 1."""
    ts = np.linspace(0.0, 1.0, 11)
    np.testing.assert_allclose(loglinear.mask_prob(ts), (1 - 1e-3) * ts, rtol=0, atol=1e-15)
    assert loglinear.final_mask_prob == pytest.approx(1 - 1e-3, abs=1e-15)


def test_loglinear_with_horizon():
    schedule = NoiseSchedule.loglinear(eps=0.01, T=2.0)

    assert schedule.mask_prob(1.0) == pytest.approx(0.99 / 2)
    assert schedule.final_mask_prob == pytest.approx(0.99)


def test_sigma_bar_starts_at_zero(loglinear, geometric):
    assert loglinear.sigma_bar(0.0) == 0.0
    assert geometric.sigma_bar(0.0) == 0.0


def test_geometric_endpoint(geometric):
    """sigma_bar(T) = sigma_max - sigma_min."""
    assert geometric.sigma_bar(1.0) == pytest.approx(5.0 - 1e-4, rel=1e-12)
    assert geometric.final_mask_prob == pytest.approx(1 - math.exp(-(5.0 - 1e-4)), rel=1e-12)


def test_survival_and_mask_prob_sum_to_one(loglinear, geometric):
    ts = np.linspace(0.0, 1.0, 51)
    for schedule in (loglinear, geometric):
        np.testing.assert_allclose(schedule.survival(ts) + schedule.mask_prob(ts), 1.0, atol=1e-15)


def test_sigma_is_derivative_of_sigma_bar(loglinear, geometric):
    h = 1e-6
    ts = np.linspace(0.05, 0.9, 20)
    for schedule in (loglinear, geometric):
        fd = (schedule.sigma_bar(ts + h) - schedule.sigma_bar(ts - h)) / (2 * h)
        np.testing.assert_allclose(fd, schedule.sigma(ts), rtol=1e-6)


def test_lambda_inverse_round_trip(loglinear, geometric):
    ts = np.linspace(0.0, 1.0, 1000)
    for schedule in (loglinear, geometric):
        np.testing.assert_allclose(schedule.lambda_inverse(schedule.mask_prob(ts)), ts, rtol=0, atol=1e-12)


def test_scalar_in_scalar_out(loglinear):
    assert isinstance(loglinear.sigma(0.5), float)
    assert isinstance(loglinear.sigma(np.array([0.5])), np.ndarray)


def test_score_scale(loglinear):
    lam = loglinear.mask_prob(0.25)
    assert loglinear.score_scale(0.25) == pytest.approx((1 - lam) / lam)


def test_score_scale_undefined_at_zero(loglinear):
    with pytest.raises(DomainError):
        loglinear.score_scale(0.0)


def test_time_outside_horizon(loglinear):
    with pytest.raises(DomainError):
        loglinear.sigma(-0.1)
    with pytest.raises(DomainError):
        loglinear.mask_prob(1.5)
    with pytest.raises(DomainError):
        loglinear.sigma_bar(float("nan"))


def test_lambda_inverse_out_of_range(loglinear):
    with pytest.raises(DomainError):
        loglinear.lambda_inverse(1.0)


def test_invalid_parameters():
    with pytest.raises(DomainError):
        NoiseSchedule.loglinear(eps=0.0)
    with pytest.raises(DomainError):
        NoiseSchedule.geometric(sigma_min=2.0, sigma_max=1.0)
    with pytest.raises(DomainError):
        NoiseSchedule.loglinear(T=0.0)


def test_config_round_trip(geometric):
    restored = NoiseSchedule.from_config(geometric.to_config())

    assert restored == geometric
    assert restored.kind is ScheduleKind.GEOMETRIC


def test_evaluate_bundles_values(loglinear):
    values = evaluate(loglinear, 0.5)

    assert values.sigma == pytest.approx(loglinear.sigma(0.5))
    assert values.sigma_bar == pytest.approx(loglinear.sigma_bar(0.5))
    assert values.mask_prob == pytest.approx(0.5 * (1 - 1e-3))
    assert lambda_inverse(loglinear, values.mask_prob) == pytest.approx(0.5)
