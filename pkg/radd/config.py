"""
Configuration

Two layers:
- RaddSettings: process environment (RADD_THREADS, RADD_LOG_LEVEL, ...)
- RunConfig: the JSON document a command runs from; every section rejects
  unknown keys, and validation errors surface as ConfigError with the dotted
  path of the offending key.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from radd.contracts import (
    AOOrder,
    EstimatorKind,
    LossKind,
    ModelBackend,
    SamplerMethod,
    ScheduleKind,
)
from radd.diffusion.schedule import NoiseSchedule
from radd.errors import ConfigError


logger = logging.getLogger(__name__)


class RaddSettings(BaseSettings):
    """Environment configuration."""

    threads: int = Field(default=1, ge=1, description="Worker threads for per-example work")
    log_level: str = Field(default="INFO", description="Root log level")
    log_format: str = Field(default="text", description="text or json")
    metrics_port: Optional[int] = Field(default=None, description="Prometheus exporter port; off when unset")

    model_config = SettingsConfigDict(env_prefix="RADD_", env_file=".env", case_sensitive=False, extra="ignore")


def get_settings() -> RaddSettings:
    """Read settings from the environment (and .env)."""
    return RaddSettings()


# =====================================================================
# RUN CONFIG SECTIONS
# =====================================================================

class _Section(BaseModel):
    model_config = {"extra": "forbid"}


class ScheduleConfig(_Section):
    """Noise schedule."""

    kind: ScheduleKind = Field(default=ScheduleKind.LOGLINEAR, description="Schedule family")
    eps: float = Field(default=1e-3, gt=0.0, lt=1.0, description="LogLinear floor: lambda(T) = 1 - eps")
    sigma_min: float = Field(default=1e-4, gt=0.0, description="Geometric start rate")
    sigma_max: float = Field(default=5.0, gt=0.0, description="Geometric end rate")
    T: float = Field(default=1.0, gt=0.0, description="Horizon")

    def build(self) -> NoiseSchedule:
        return NoiseSchedule.from_config(self.model_dump(mode="json"))


class SyntheticTableConfig(_Section):
    """A random joint table generated from a seed."""

    kind: str = Field(default="mixture", description="mixture, dirichlet, uniform or point_mass")
    n_tokens: int = Field(..., ge=1, description="Number of real tokens N")
    d: int = Field(..., ge=1, description="Sequence length")
    seed: int = Field(default=0, description="Generation seed")
    components: int = Field(default=3, ge=1, description="Mixture components")
    concentration: float = Field(default=0.5, gt=0.0, description="Dirichlet concentration")
    point: Optional[List[int]] = Field(default=None, description="Sequence for point_mass")

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value: str) -> str:
        if value not in ("mixture", "dirichlet", "uniform", "point_mass"):
            raise ValueError(f"unknown table kind '{value}'")
        return value


class DataConfig(_Section):
    """Where training and evaluation sequences come from; exactly one source."""

    table: Optional[str] = Field(default=None, description="Joint table JSON file")
    synthetic: Optional[SyntheticTableConfig] = Field(default=None, description="Seeded random table")
    corpus: Optional[str] = Field(default=None, description="Byte corpus file")
    d: Optional[int] = Field(default=None, ge=1, description="Block length for corpus data")
    heldout_fraction: float = Field(default=0.1, ge=0.0, lt=1.0, description="Corpus held-out share")
    monitor_size: int = Field(default=64, ge=1, description="Held-out examples for the exact loss in training metrics")

    @model_validator(mode="after")
    def _one_source(self) -> "DataConfig":
        given = [name for name in ("table", "synthetic", "corpus") if getattr(self, name) is not None]
        if len(given) != 1:
            raise ValueError(f"exactly one of table, synthetic, corpus is required (got {given or 'none'})")
        if self.corpus is not None and self.d is None:
            raise ValueError("corpus data needs a block length d")
        return self


class ModelConfig(_Section):
    """Conditional model backend."""

    backend: ModelBackend = Field(default=ModelBackend.TABULAR, description="Model backend")
    checkpoint: Optional[str] = Field(default=None, description="Checkpoint to load instead of initializing")
    embed_dim: int = Field(default=16, ge=1, description="Neural: embedding width")
    hidden: Tuple[int, int] = Field(default=(64, 64), description="Neural: hidden layer widths")
    init_seed: int = Field(default=0, description="Neural: initialization seed")
    head_scale: float = Field(default=0.01, ge=0.0, description="Neural: output head init scale")

    def hyper(self) -> Dict[str, Any]:
        if self.backend is not ModelBackend.NEURAL:
            return {}
        return {
            "embed_dim": self.embed_dim,
            "hidden": self.hidden,
            "seed": self.init_seed,
            "head_scale": self.head_scale,
        }


class TrainConfig(_Section):
    """Optimizer and loop settings."""

    loss: LossKind = Field(default=LossKind.LDCE, description="Training objective")
    steps: int = Field(default=1000, ge=1, description="Optimizer steps")
    batch: int = Field(default=64, ge=1, description="Examples per step")
    lr: float = Field(default=1e-2, gt=0.0, description="Adam learning rate")
    beta1: float = Field(default=0.9, gt=0.0, lt=1.0, description="Adam first-moment decay")
    beta2: float = Field(default=0.999, gt=0.0, lt=1.0, description="Adam second-moment decay")
    eps_adam: float = Field(default=1e-8, gt=0.0, description="Adam denominator floor")
    ema_decay: float = Field(default=0.999, ge=0.0, lt=1.0, description="Shadow parameter decay")
    grad_clip_norm: float = Field(default=1.0, gt=0.0, description="Global gradient norm cap")
    seed: int = Field(default=0, description="Root seed of data and loss draws")
    log_every: int = Field(default=10, ge=1, description="Metrics row interval")
    monitor_every: int = Field(default=100, ge=1, description="Exact held-out loss interval")
    divergence_factor: float = Field(default=10.0, gt=1.0, description="Loss multiple of the initial loss")
    divergence_patience: int = Field(default=100, ge=1, description="Consecutive steps above the factor")


class SamplingConfig(_Section):
    """Generation settings."""

    method: SamplerMethod = Field(default=SamplerMethod.TWEEDIE, description="tweedie, euler or ao")
    steps: int = Field(default=32, ge=1, description="Grid steps for diffusion methods")
    cache: bool = Field(default=True, description="Reuse predictions while the state is unchanged")
    trajectories: int = Field(default=16, ge=1, description="Number of sequences")
    seed: int = Field(default=0, description="Root seed of the trajectory substreams")
    order: AOOrder = Field(default=AOOrder.RANDOM, description="Order for ao sampling")
    prompt: Optional[List[Tuple[int, int]]] = Field(default=None, description="Fixed (position, token) pairs")
    prompt_text: Optional[str] = Field(default=None, description="Byte prompt placed at the start (corpus runs)")

    @model_validator(mode="after")
    def _one_prompt(self) -> "SamplingConfig":
        if self.prompt is not None and self.prompt_text is not None:
            raise ValueError("give prompt or prompt_text, not both")
        return self


class EvalConfig(_Section):
    """Likelihood and sample-quality evaluation."""

    loss: LossKind = Field(default=LossKind.AO, description="Loss the perplexity is based on")
    estimator: EstimatorKind = Field(default=EstimatorKind.EXACT, description="exact or mc")
    draws: int = Field(default=100, ge=1, description="MC draws per example")
    max_examples: int = Field(default=256, ge=1, description="Examples evaluated")
    seed: int = Field(default=0, description="Seed for MC draws and example selection")
    tv_trials: Optional[int] = Field(default=None, ge=1, description="Samples for the TV distance (table data)")
    results_csv: Optional[str] = Field(default=None, description="CSV the report row is appended to")


class EnfeConfig(_Section):
    """Expected-NFE sweep."""

    steps: List[int] = Field(default_factory=lambda: [2, 8, 32, 128], description="Step counts n")
    lengths: List[int] = Field(default_factory=lambda: [8, 64], description="Generation lengths l")
    method: SamplerMethod = Field(default=SamplerMethod.TWEEDIE, description="tweedie or euler")
    trajectories: int = Field(default=2000, ge=0, description="Empirical trajectories per cell; 0 skips")
    seed: int = Field(default=0, description="Root seed")

    @field_validator("steps", "lengths")
    @classmethod
    def _positive(cls, values: List[int]) -> List[int]:
        if not values or any(v < 1 for v in values):
            raise ValueError("values must be positive integers")
        return values


class RunConfig(_Section):
    """A complete run document."""

    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    data: Optional[DataConfig] = Field(default=None)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    sampling: SamplingConfig = Field(default_factory=SamplingConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    enfe: EnfeConfig = Field(default_factory=EnfeConfig)
    out: str = Field(default="runs/default", description="Output directory")

    model_config = {
        "extra": "forbid",
        "json_schema_extra": {
            "example": {
                "schedule": {"kind": "loglinear", "eps": 1e-3},
                "data": {"synthetic": {"kind": "mixture", "n_tokens": 4, "d": 4, "seed": 3}},
                "model": {"backend": "tabular"},
                "train": {"loss": "ldce", "steps": 2000, "batch": 64, "lr": 0.05},
                "out": "runs/synthetic",
            }
        },
    }


# =====================================================================
# LOADING
# =====================================================================

def _key_path(loc: Tuple[Union[str, int], ...]) -> str:
    return ".".join(str(part) for part in loc)


def parse_override(text: str) -> Tuple[str, Any]:
    """
    Parse "a.b=value"; the value is read as JSON when possible, else as a string.

    Raises:
        ConfigError: If there is no '='
    """
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(document: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Set dotted keys in a nested dict, creating sections as needed."""
    for dotted, value in overrides.items():
        parts = dotted.split(".")
        node = document
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigError("cannot set a key below a non-section value", key_path=dotted)
            node = child
        node[parts[-1]] = value
    return document


def validate_run_config(document: Dict[str, Any]) -> RunConfig:
    """
    Validate a raw document.

    Raises:
        ConfigError: With the dotted path of the first invalid key
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        first = e.errors()[0]
        raise ConfigError(first["msg"], key_path=_key_path(first["loc"])) from e


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read a JSON run config, apply overrides and validate.

    Args:
        path: Config file; defaults only when None
        overrides: Dotted key -> value pairs applied before validation

    Raises:
        FileNotFoundError: If path does not exist
        ConfigError: On malformed JSON or schema violations
    """
    document: Dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e.msg} (line {e.lineno})") from e
        if not isinstance(document, dict):
            raise ConfigError(f"{path} must hold a JSON object")
    document = apply_overrides(document, overrides or {})
    config = validate_run_config(document)
    logger.debug(f"Loaded run config from {path or 'defaults'} with {len(overrides or {})} overrides")
    return config


def save_resolved_config(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Write the resolved config next to the run artifacts."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.json"
    path.write_text(config.model_dump_json(indent=2), encoding="utf-8")
    return path
