"""
Shared Data Contracts

Enums and JSON report models shared by the library modules and the CLI.
Numeric working types (schedules, sequences, tables) live next to the code
that owns them; the models here are what gets written to disk.
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


# =====================================================================
# ENUMS
# =====================================================================

class ScheduleKind(str, Enum):
    """Noise schedule families."""
    LOGLINEAR = "loglinear"
    GEOMETRIC = "geometric"


class LossKind(str, Enum):
    """The four equivalent training objectives."""
    DSE = "dse"
    TDCE = "tdce"
    LDCE = "ldce"
    AO = "ao"


class SamplerMethod(str, Enum):
    """Reverse-process generation methods."""
    TWEEDIE = "tweedie"
    EULER = "euler"
    AO = "ao"


class ModelBackend(str, Enum):
    """Conditional model backends."""
    ORACLE = "oracle"
    TABULAR = "tabular"
    NEURAL = "neural"
    UNIFORM = "uniform"


class EstimatorKind(str, Enum):
    """How a loss is evaluated for perplexity."""
    MC = "mc"
    EXACT = "exact"


class DataSplit(str, Enum):
    """Corpus splits."""
    TRAIN = "train"
    HELDOUT = "heldout"


class AOOrder(str, Enum):
    """Generation orders for any-order sampling."""
    RANDOM = "random"
    FORWARD = "forward"
    BACKWARD = "backward"


# =====================================================================
# SAMPLING
# =====================================================================

class SampleReport(BaseModel):
    """Generated sequences with per-trajectory NFE accounting."""

    sequences: List[List[int]] = Field(..., description="Generated token sequences")
    nfe: List[int] = Field(..., description="Model evaluations per trajectory")
    method: SamplerMethod = Field(..., description="Generation method")
    cache: bool = Field(..., description="Whether predictions were cached between steps")
    seed: Optional[int] = Field(None, description="Root seed of the trajectory substreams")
    steps: Optional[int] = Field(None, description="Number of grid steps (diffusion methods)")
    forced_fill: List[bool] = Field(
        default_factory=list,
        description="Trajectories where residual masks were filled after the last step",
    )
    clamp_events: int = Field(default=0, description="Euler unmask probabilities clamped into [0, 1]")
    wallclock_ms: float = Field(default=0.0, description="Total generation time")

    model_config = {
        "json_schema_extra": {
            "example": {
                "sequences": [[0, 1, 1, 0]],
                "nfe": [3],
                "method": "tweedie",
                "cache": True,
                "seed": 7,
                "steps": 4,
                "forced_fill": [False],
                "clamp_events": 0,
                "wallclock_ms": 1.7,
            }
        }
    }

    @property
    def nfe_mean(self) -> float:
        return float(sum(self.nfe)) / max(len(self.nfe), 1)


# =====================================================================
# EVALUATION
# =====================================================================

class EvalReport(BaseModel):
    """Likelihood and sample-quality summary."""

    loss: LossKind = Field(..., description="Loss the per-token value was computed with")
    estimator: EstimatorKind = Field(..., description="Exact enumeration or Monte-Carlo")
    loss_nats_per_token: float = Field(..., description="Mean loss per token in nats")
    perplexity: float = Field(..., description="exp(loss_nats_per_token)")
    n_examples: int = Field(..., description="Examples included in the mean")
    n_excluded: int = Field(default=0, description="Examples excluded for infinite loss")
    tv_distance: Optional[float] = Field(None, description="Total variation to the oracle table")
    unigram_entropy_nats: Optional[float] = Field(None, description="Pooled unigram entropy of samples")
    nfe_summary: Optional[Dict[str, float]] = Field(None, description="NFE mean/std of generated samples")

    model_config = {
        "json_schema_extra": {
            "example": {
                "loss": "ao",
                "estimator": "exact",
                "loss_nats_per_token": 0.61,
                "perplexity": 1.84,
                "n_examples": 256,
                "n_excluded": 0,
            }
        }
    }


# =====================================================================
# VERIFICATION
# =====================================================================

class CheckResult(BaseModel):
    """Outcome of one oracle check."""

    name: str = Field(..., description="Check identifier")
    description: str = Field(default="", description="What identity is checked")
    passed: bool = Field(..., description="Whether the measured error is within tolerance")
    error: float = Field(..., description="Largest measured error")
    tolerance: float = Field(..., description="Allowed error")
    elapsed_s: float = Field(default=0.0, description="Wallclock seconds")
    details: Dict[str, Any] = Field(default_factory=dict, description="Check-specific extras")


class VerificationReport(BaseModel):
    """All check results of one verify run."""

    checks: List[CheckResult] = Field(default_factory=list)
    elapsed_s: float = 0.0

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @property
    def failed(self) -> List[CheckResult]:
        return [check for check in self.checks if not check.passed]
