"""
Load Test Configuration

Statistical checks that need 10^4-10^5 draws. Tolerances are expressed in
Monte-Carlo standard errors.
"""

import numpy as np
import pytest
from scipy.stats import binom, norm


# z-score beyond which a sample mean is treated as biased
Z_TOLERANCE = 3.0


@pytest.fixture
def within_standard_errors():
    """Assert that the mean of draws matches an expected value within Z_TOLERANCE standard errors."""

    def check(draws, expected: float) -> None:
        values = np.asarray(draws, dtype=np.float64)
        stderr = values.std(ddof=1) / np.sqrt(values.size)
        z = abs(values.mean() - expected) / max(stderr, 1e-12)
        assert z < Z_TOLERANCE, f"mean {values.mean():.6f} vs expected {expected:.6f} ({z:.1f} standard errors)"

    return check


@pytest.fixture
def coordinates_agree():
    """
    Assert that two vectors of means agree coordinate by coordinate.

    Each coordinate must lie within Z_TOLERANCE combined standard errors,
    except for as many exceedances as chance alone produces at that
    tolerance (the 99.9% binomial quantile over the compared coordinates).
    No coordinate may exceed 5 standard errors.
    """

    def check(mean_a, stderr_a, mean_b, stderr_b) -> None:
        diff = np.abs(np.asarray(mean_a) - np.asarray(mean_b))
        stderr = np.sqrt(np.asarray(stderr_a) ** 2 + np.asarray(stderr_b) ** 2)
        # coordinates no draw ever touched carry no information
        live = (stderr > 0) | (diff > 0)
        z = diff[live] / np.maximum(stderr[live], 1e-12)
        allowed = int(binom.ppf(0.999, z.size, 2 * norm.sf(Z_TOLERANCE)))
        outside = int(np.sum(z > Z_TOLERANCE))
        assert outside <= allowed, f"{outside} of {z.size} coordinates beyond {Z_TOLERANCE} standard errors"
        assert z.max(initial=0.0) < 5.0, f"coordinate {int(np.argmax(z))} off by {z.max():.1f} standard errors"

    return check
