"""
Noise schedules.

A schedule is the clock of the absorbing diffusion: sigma(t) is the
instantaneous masking rate, sigma_bar(t) its integral and
lambda(t) = 1 - exp(-sigma_bar(t)) the probability that a token is masked
by time t. All quantities are closed form; derivatives are analytic.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, NamedTuple, Union

import numpy as np

from radd.contracts import ScheduleKind
from radd.errors import DomainError


ArrayLike = Union[float, np.ndarray]

# slack for endpoint comparisons; values inside it are clipped onto the endpoint
_ENDPOINT_TOL = 1e-12


class ScheduleValues(NamedTuple):
    """sigma, sigma_bar and lambda at one time."""
    sigma: float
    sigma_bar: float
    mask_prob: float


def _as_output(value: np.ndarray, like: ArrayLike) -> ArrayLike:
    return float(value) if np.ndim(like) == 0 else value


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Log-linear or geometric noise schedule on [0, T].

    LogLinear makes lambda(t) = (1 - eps) t / T, i.e. the expected number of
    masked tokens grows linearly in t. Geometric interpolates log sigma_bar
    between sigma_min and sigma_max (shifted so sigma_bar(0) = 0).
    """

    kind: ScheduleKind = ScheduleKind.LOGLINEAR
    eps: float = 1e-3
    sigma_min: float = 1e-4
    sigma_max: float = 5.0
    T: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ScheduleKind(self.kind))
        if not self.T > 0:
            raise DomainError(f"Horizon T must be positive, got {self.T}")
        if self.kind is ScheduleKind.LOGLINEAR and not 0.0 < self.eps < 1.0:
            raise DomainError(f"eps must lie in (0, 1), got {self.eps}")
        if self.kind is ScheduleKind.GEOMETRIC:
            if not 0.0 < self.sigma_min < self.sigma_max:
                raise DomainError(
                    f"Geometric schedule needs 0 < sigma_min < sigma_max, "
                    f"got {self.sigma_min}, {self.sigma_max}"
                )

    @classmethod
    def loglinear(cls, eps: float = 1e-3, T: float = 1.0) -> "NoiseSchedule":
        return cls(kind=ScheduleKind.LOGLINEAR, eps=eps, T=T)

    @classmethod
    def geometric(cls, sigma_min: float = 1e-4, sigma_max: float = 5.0, T: float = 1.0) -> "NoiseSchedule":
        return cls(kind=ScheduleKind.GEOMETRIC, sigma_min=sigma_min, sigma_max=sigma_max, T=T)

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> "NoiseSchedule":
        """Build from the JSON form {"kind": "loglinear", "eps": 1e-3}."""
        kind = ScheduleKind(config.get("kind", ScheduleKind.LOGLINEAR))
        if kind is ScheduleKind.LOGLINEAR:
            return cls.loglinear(eps=config.get("eps", 1e-3), T=config.get("T", 1.0))
        return cls.geometric(
            sigma_min=config.get("sigma_min", 1e-4),
            sigma_max=config.get("sigma_max", 5.0),
            T=config.get("T", 1.0),
        )

    def to_config(self) -> Dict[str, Any]:
        if self.kind is ScheduleKind.LOGLINEAR:
            return {"kind": self.kind.value, "eps": self.eps, "T": self.T}
        return {
            "kind": self.kind.value,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "T": self.T,
        }

    # -----------------------------------------------------------------
    # core quantities
    # -----------------------------------------------------------------

    def _check_time(self, t: ArrayLike) -> np.ndarray:
        arr = np.asarray(t, dtype=np.float64)
        if np.any(~np.isfinite(arr)) or np.any(arr < -_ENDPOINT_TOL) or np.any(arr > self.T + _ENDPOINT_TOL):
            raise DomainError(f"Time must lie in [0, {self.T}], got {t}")
        return np.clip(arr, 0.0, self.T)

    def _log_ratio(self) -> float:
        return math.log(self.sigma_max / self.sigma_min)

    def sigma_bar(self, t: ArrayLike) -> ArrayLike:
        """Cumulative rate; sigma_bar(0) = 0."""
        u = self._check_time(t) / self.T
        if self.kind is ScheduleKind.LOGLINEAR:
            out = -np.log1p(-(1.0 - self.eps) * u)
        else:
            out = self.sigma_min * np.expm1(u * self._log_ratio())
        return _as_output(out, t)

    def sigma(self, t: ArrayLike) -> ArrayLike:
        """Instantaneous rate d sigma_bar / dt."""
        u = self._check_time(t) / self.T
        if self.kind is ScheduleKind.LOGLINEAR:
            rate = 1.0 - self.eps
            out = (rate / self.T) / (1.0 - rate * u)
        else:
            out = self.sigma_min * np.exp(u * self._log_ratio()) * self._log_ratio() / self.T
        return _as_output(out, t)

    def survival(self, t: ArrayLike) -> ArrayLike:
        """exp(-sigma_bar(t)), the probability a token is still unmasked at t."""
        u = self._check_time(t) / self.T
        if self.kind is ScheduleKind.LOGLINEAR:
            out = 1.0 - (1.0 - self.eps) * u
        else:
            out = np.exp(-self.sigma_min * np.expm1(u * self._log_ratio()))
        return _as_output(out, t)

    def mask_prob(self, t: ArrayLike) -> ArrayLike:
        """lambda(t) = 1 - exp(-sigma_bar(t))."""
        u = self._check_time(t) / self.T
        if self.kind is ScheduleKind.LOGLINEAR:
            out = (1.0 - self.eps) * u
        else:
            out = -np.expm1(-self.sigma_min * np.expm1(u * self._log_ratio()))
        return _as_output(out, t)

    def score_scale(self, t: ArrayLike) -> ArrayLike:
        """
        exp(-sigma_bar) / (1 - exp(-sigma_bar)), the analytic time factor of the
        concrete score. Infinite at t = 0, so callers keep t > 0.
        """
        lam = np.asarray(self.mask_prob(t))
        if np.any(lam <= 0.0):
            raise DomainError(f"Score scale is undefined where lambda(t) = 0 (t={t})")
        out = (1.0 - lam) / lam
        return _as_output(out, t)

    @property
    def final_mask_prob(self) -> float:
        """lambda(T); 1 - eps for LogLinear."""
        return float(self.mask_prob(self.T))

    def evaluate(self, t: float) -> ScheduleValues:
        """sigma, sigma_bar and lambda at t."""
        return ScheduleValues(
            sigma=float(self.sigma(t)),
            sigma_bar=float(self.sigma_bar(t)),
            mask_prob=float(self.mask_prob(t)),
        )

    def lambda_inverse(self, lam: ArrayLike) -> ArrayLike:
        """Time t with lambda(t) = lam, for 0 <= lam <= lambda(T)."""
        arr = np.asarray(lam, dtype=np.float64)
        top = self.final_mask_prob
        if np.any(~np.isfinite(arr)) or np.any(arr < -_ENDPOINT_TOL) or np.any(arr > top + _ENDPOINT_TOL):
            raise DomainError(f"Mask probability must lie in [0, {top}], got {lam}")
        arr = np.clip(arr, 0.0, top)
        if self.kind is ScheduleKind.LOGLINEAR:
            out = arr * self.T / (1.0 - self.eps)
        else:
            sigma_bar = -np.log1p(-arr)
            out = self.T * np.log1p(sigma_bar / self.sigma_min) / self._log_ratio()
        return _as_output(np.clip(out, 0.0, self.T), lam)


def evaluate(schedule: NoiseSchedule, t: float) -> ScheduleValues:
    """Module-level form of NoiseSchedule.evaluate."""
    return schedule.evaluate(t)


def lambda_inverse(schedule: NoiseSchedule, lam: ArrayLike) -> ArrayLike:
    """Module-level form of NoiseSchedule.lambda_inverse."""
    return schedule.lambda_inverse(lam)
