"""
Trainer

Minibatch Adam on any of the four losses:
    batch of clean sequences -> MC loss + gradient per example
    -> mean -> global-norm clip -> Adam (bias corrected) -> EMA shadow

Every random draw comes from a SeedSequence tree rooted at config.seed:
one stream for data and one child stream per example per step, so runs are
bitwise reproducible whatever the thread count.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Protocol, Union

import numpy as np
import pandas as pd

from radd.config import TrainConfig
from radd.contracts import DataSplit
from radd.corpus import Corpus
from radd.diffusion.forward import ForwardKernel
from radd.diffusion.schedule import NoiseSchedule
from radd.diffusion.space import ExactJointTable, SequenceState, Vocab
from radd.errors import ConfigError, DivergenceError, EmptyCorpusError, NumericError, ShapeError
from radd.losses import LossSample, exact_loss_ao, mc_loss
from radd.models.base_model import ConditionalModel
from radd.utils.monitoring import track_train_step
from radd.utils.parallel import ordered_map


logger = logging.getLogger(__name__)

METRIC_COLUMNS = ["step", "loss_mc", "loss_exact_heldout", "grad_norm", "wallclock_ms"]

# exact held-out loss enumerates 2^d subsets per example
MAX_MONITOR_D = 12


# =====================================================================
# DATA SOURCES
# =====================================================================

class DataSource(Protocol):
    """Anything that yields clean training sequences of a fixed length."""

    vocab: Vocab
    d: int

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """size x d token ids."""

    def monitor_set(self, size: int, rng: np.random.Generator) -> List[SequenceState]:
        """Held-out sequences for the exact loss monitor."""


class TableSource:
    """i.i.d. draws from an exact joint table."""

    def __init__(self, table: ExactJointTable):
        self.table = table
        self.vocab = table.vocab
        self.d = table.d

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.table.sample_many(rng, size)

    def monitor_set(self, size: int, rng: np.random.Generator) -> List[SequenceState]:
        return [SequenceState(row, self.vocab) for row in self.table.sample_many(rng, size)]


class CorpusSource:
    """Uniform draws (with replacement) from the train blocks of a corpus."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self.vocab = corpus.vocab
        self.d = corpus.d
        self._train = corpus.blocks(DataSplit.TRAIN)
        if len(self._train) == 0:
            raise EmptyCorpusError(f"Corpus {corpus.path} has no train blocks")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self._train[rng.integers(0, len(self._train), size=size)]

    def monitor_set(self, size: int, rng: np.random.Generator) -> List[SequenceState]:
        heldout = self.corpus.blocks(DataSplit.HELDOUT)
        if len(heldout) == 0:
            return []
        picks = rng.permutation(len(heldout))[:size]
        return [SequenceState(heldout[i], self.vocab) for i in np.sort(picks)]


# =====================================================================
# OPTIMIZER
# =====================================================================

@dataclass
class AdamState:
    """Adam moments, step count and EMA shadow parameters."""

    m: np.ndarray
    v: np.ndarray
    ema: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), ema=params.copy())


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState, config: TrainConfig):
    """
    One Adam update with bias correction, then the EMA shadow update.

    Args:
        params: Current flat parameters
        grads: Gradient of the same shape
        state: Optimizer state (not modified)
        config: lr, beta1, beta2, eps_adam and ema_decay are read

    Returns:
        (new params, new state)

    Raises:
        NumericError: If grads has a non-finite entry; nothing is updated
    """
    if grads.shape != params.shape:
        raise NumericError(f"Gradient shape {grads.shape} does not match parameters {params.shape}")
    bad = np.flatnonzero(~np.isfinite(grads))
    if bad.size:
        raise NumericError(f"Non-finite gradient at parameter {int(bad[0])}; step aborted", param_index=int(bad[0]))

    step = state.step + 1
    m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    v = config.beta2 * state.v + (1.0 - config.beta2) * grads * grads
    m_hat = m / (1.0 - config.beta1 ** step)
    v_hat = v / (1.0 - config.beta2 ** step)
    new_params = params - config.lr * m_hat / (np.sqrt(v_hat) + config.eps_adam)
    ema = config.ema_decay * state.ema + (1.0 - config.ema_decay) * new_params
    return new_params, AdamState(m=m, v=v, ema=ema, step=step)


def clip_by_global_norm(grads: np.ndarray, max_norm: float):
    """(clipped gradient, norm before clipping)."""
    norm = float(np.linalg.norm(grads))
    if norm > max_norm:
        return grads * (max_norm / norm), norm
    return grads, norm


# =====================================================================
# TRAINING LOOP
# =====================================================================

@dataclass
class TrainResult:
    """Trained model plus everything the run produced."""

    model: ConditionalModel
    ema_params: np.ndarray
    metrics: pd.DataFrame
    initial_loss: float
    final_heldout_loss: Optional[float] = None
    elapsed_s: float = 0.0
    extras: Dict[str, float] = field(default_factory=dict)


class Trainer:
    """
    Single-writer training loop.

    Args:
        model: Model whose parameters are trained in place
        source: Training data
        config: Optimizer and loop settings
        kernel: Forward kernel for the time-based losses
        monitor_size: Held-out examples for the exact AO loss monitor when d permits
        threads: Workers for per-example loss evaluation
    """

    def __init__(
        self,
        model: ConditionalModel,
        source: DataSource,
        config: TrainConfig,
        kernel: Optional[ForwardKernel] = None,
        monitor_size: int = 64,
        threads: int = 1,
    ):
        if model.n_params == 0:
            raise ConfigError(f"{model.backend.value} model has no trainable parameters", key_path="model.backend")
        if source.d != model.d or source.vocab != model.vocab:
            raise ShapeError(
                f"Data (d={source.d}, N={source.vocab.n_tokens}) does not match model "
                f"(d={model.d}, N={model.vocab.n_tokens})"
            )
        self.model = model
        self.source = source
        self.config = config
        self.kernel = kernel or ForwardKernel(NoiseSchedule.loglinear(), model.vocab)
        self.monitor_size = monitor_size
        self.threads = threads
        self.logger = logging.getLogger("radd.trainer")

    def _example_loss(self, job) -> LossSample:
        row, seed_seq = job
        x0 = SequenceState(row, self.model.vocab)
        return mc_loss(self.config.loss, self.model, x0, self.kernel, np.random.default_rng(seed_seq), with_grad=True)

    def _monitor_loss(self, monitor: List[SequenceState]) -> float:
        if not monitor:
            return math.nan
        return float(np.mean([exact_loss_ao(self.model, x0) for x0 in monitor]))

    def run(self) -> TrainResult:
        """
        Run config.steps optimizer steps.

        Raises:
            DivergenceError: If the batch loss stays above divergence_factor
                times the first batch loss for divergence_patience steps
            NumericError: On non-finite gradients
        """
        config = self.config
        start = time.time()
        root = np.random.SeedSequence(config.seed)
        data_seq, monitor_seq, loss_seq = root.spawn(3)
        data_rng = np.random.default_rng(data_seq)

        monitor: List[SequenceState] = []
        if self.model.d <= MAX_MONITOR_D:
            monitor = self.source.monitor_set(self.monitor_size, np.random.default_rng(monitor_seq))

        params = self.model.get_params()
        state = AdamState.zeros_like(params)
        rows: List[Dict[str, float]] = []
        initial_loss = math.nan
        over_count = 0
        monitor_value = math.nan

        self.logger.info(
            f"Starting training: loss={config.loss.value}, steps={config.steps}, batch={config.batch}, "
            f"backend={self.model.backend.value}, params={self.model.n_params}"
        )

        for step in range(1, config.steps + 1):
            batch = self.source.sample(data_rng, config.batch)
            jobs = list(zip(batch, loss_seq.spawn(config.batch)))
            samples = ordered_map(self._example_loss, jobs, threads=self.threads)

            loss_value = 0.0
            grads = np.zeros_like(params)
            for sample in samples:
                loss_value += sample.value
                grads += sample.grad
            loss_value /= config.batch
            grads /= config.batch

            grads, grad_norm = clip_by_global_norm(grads, config.grad_clip_norm)
            params, state = adam_step(params, grads, state, config)
            self.model.set_params(params)
            track_train_step(config.loss.value)

            if step == 1:
                initial_loss = loss_value
            if initial_loss > 0 and loss_value > config.divergence_factor * initial_loss:
                over_count += 1
            else:
                over_count = 0

            monitored = bool(monitor) and (step % config.monitor_every == 0 or step == config.steps)
            if monitored:
                monitor_value = self._monitor_loss(monitor)

            if step % config.log_every == 0 or step == config.steps or step == 1:
                rows.append({
                    "step": step,
                    "loss_mc": loss_value,
                    "loss_exact_heldout": monitor_value if monitored else math.nan,
                    "grad_norm": grad_norm,
                    "wallclock_ms": (time.time() - start) * 1000.0,
                })
                self.logger.debug(f"step {step}: loss={loss_value:.4f} grad_norm={grad_norm:.4f}")

            if over_count >= config.divergence_patience:
                report = rows[-10:]
                self.logger.error(
                    f"Training diverged at step {step}: loss {loss_value:.4f} above "
                    f"{config.divergence_factor}x initial {initial_loss:.4f} for {over_count} steps"
                )
                raise DivergenceError(f"Training diverged at step {step}", report=report)

        elapsed = time.time() - start
        metrics = pd.DataFrame(rows, columns=METRIC_COLUMNS)
        final_heldout = None if math.isnan(monitor_value) else monitor_value
        self.logger.info(
            f"Completed training in {elapsed:.2f}s: final batch loss {metrics['loss_mc'].iloc[-1]:.4f}"
            + (f", held-out {final_heldout:.4f}" if final_heldout is not None else "")
        )
        return TrainResult(
            model=self.model,
            ema_params=state.ema.copy(),
            metrics=metrics,
            initial_loss=initial_loss,
            final_heldout_loss=final_heldout,
            elapsed_s=elapsed,
        )


def train(
    model: ConditionalModel,
    source: DataSource,
    config: TrainConfig,
    kernel: Optional[ForwardKernel] = None,
    monitor_size: int = 64,
    threads: int = 1,
) -> TrainResult:
    """Functional form of Trainer(...).run()."""
    return Trainer(model, source, config, kernel=kernel, monitor_size=monitor_size, threads=threads).run()


def write_metrics(metrics: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Metrics CSV; missing held-out values are written blank."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics.to_csv(path, index=False, columns=METRIC_COLUMNS, na_rep="")
    return path
