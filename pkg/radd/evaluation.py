"""
Evaluation

Likelihood (perplexity from any of the four losses), distance of generated
samples to an oracle table, and sample diversity.

Time-based losses are reported with the finite-horizon residual
d h(lambda(T)) included, so every estimator targets the same per-token
negative log-likelihood bound.
"""

import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
from scipy.special import entr

from radd.contracts import AOOrder, EstimatorKind, EvalReport, LossKind, SampleReport, SamplerMethod
from radd.diffusion.forward import ForwardKernel
from radd.diffusion.schedule import NoiseSchedule
from radd.diffusion.space import ExactJointTable, SequenceState, total_variation
from radd.errors import DomainError, InfiniteLossError
from radd.losses import exact_loss, finite_horizon_residual, mc_loss
from radd.models.base_model import ConditionalModel
from radd.sampler import StepGrid, ao_sample, sample
from radd.utils.parallel import ordered_map


logger = logging.getLogger(__name__)

Dataset = Union[Sequence[SequenceState], np.ndarray]


def _as_states(model: ConditionalModel, dataset: Dataset) -> List[SequenceState]:
    return [x if isinstance(x, SequenceState) else SequenceState(x, model.vocab) for x in dataset]


def _residual(kind: LossKind, kernel: ForwardKernel, d: int) -> float:
    return finite_horizon_residual(kernel, d) if kind is LossKind.TDCE else 0.0


def example_loss(
    model: ConditionalModel,
    x0: SequenceState,
    kind: LossKind,
    estimator: EstimatorKind,
    kernel: ForwardKernel,
    draws: int = 100,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Loss of one example in nats (not per token); math.inf when infinite.

    The exact estimator enumerates masking subsets; mc averages draws
    Monte-Carlo samples.
    """
    kind = LossKind(kind)
    if EstimatorKind(estimator) is EstimatorKind.EXACT:
        value = exact_loss(kind, model, x0, kernel)
    else:
        rng = rng or np.random.default_rng()
        try:
            value = float(np.mean([mc_loss(kind, model, x0, kernel, rng).value for _ in range(draws)]))
        except InfiniteLossError as e:
            logger.warning(f"Infinite loss on {x0}: {e}")
            return math.inf
    return value + _residual(kind, kernel, x0.d)


def perplexity(
    model: ConditionalModel,
    dataset: Dataset,
    loss: LossKind = LossKind.AO,
    estimator: EstimatorKind = EstimatorKind.EXACT,
    kernel: Optional[ForwardKernel] = None,
    draws: int = 100,
    seed: int = 0,
    threads: int = 1,
) -> EvalReport:
    """
    Per-token perplexity of a dataset.

    Args:
        model: Conditional model
        dataset: Clean sequences of length model.d
        loss: Which loss the bound comes from
        estimator: exact (enumeration) or mc
        kernel: Forward kernel for the time-based losses (log-linear by default)
        draws: MC draws per example
        seed: Root seed of the per-example MC streams
        threads: Workers over examples

    Returns:
        EvalReport; examples with infinite loss are excluded and counted
    """
    loss, estimator = LossKind(loss), EstimatorKind(estimator)
    kernel = kernel or ForwardKernel(NoiseSchedule.loglinear(), model.vocab)
    examples = _as_states(model, dataset)
    if not examples:
        raise DomainError("Perplexity needs at least one example")
    streams = [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(len(examples))]

    def evaluate(job) -> float:
        x0, rng = job
        return example_loss(model, x0, loss, estimator, kernel, draws=draws, rng=rng)

    values = np.asarray(ordered_map(evaluate, list(zip(examples, streams)), threads=threads))
    finite = np.isfinite(values)
    excluded = int((~finite).sum())
    if excluded:
        logger.warning(f"Excluded {excluded} of {len(values)} examples with infinite loss")

    if finite.any():
        per_token = float(np.mean(values[finite])) / model.d
    else:
        per_token = math.inf
    logger.info(
        f"Perplexity ({loss.value}, {estimator.value}) over {int(finite.sum())} examples: "
        f"{per_token:.4f} nats/token"
    )
    return EvalReport(
        loss=loss,
        estimator=estimator,
        loss_nats_per_token=per_token,
        perplexity=math.exp(per_token) if math.isfinite(per_token) else math.inf,
        n_examples=int(finite.sum()),
        n_excluded=excluded,
    )


def expected_exact_loss(
    model: ConditionalModel,
    table: ExactJointTable,
    loss: LossKind = LossKind.AO,
    kernel: Optional[ForwardKernel] = None,
) -> float:
    """E_{x0 ~ p0}[exact loss(x0)] by enumerating the table; H(p0) for the oracle."""
    loss = LossKind(loss)
    kernel = kernel or ForwardKernel(NoiseSchedule.loglinear(), model.vocab)
    total = 0.0
    for index in np.flatnonzero(table.probs > 0.0):
        x0 = table.sequence_at(int(index))
        total += float(table.probs[index]) * (exact_loss(loss, model, x0, kernel) + _residual(loss, kernel, x0.d))
    return total


# =====================================================================
# SAMPLE QUALITY
# =====================================================================

def empirical_distribution(sequences: Sequence[Sequence[int]], table: ExactJointTable) -> np.ndarray:
    """Histogram of generated sequences over the table's N^d outcomes."""
    arr = np.asarray(sequences, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != table.d:
        raise DomainError(f"Expected sequences of length {table.d}, got shape {arr.shape}")
    if np.any(arr >= table.vocab.n_tokens):
        raise DomainError("Generated sequences still contain masks")
    index = np.ravel_multi_index(tuple(arr.T), (table.vocab.n_tokens,) * table.d)
    counts = np.bincount(index, minlength=table.probs.size)
    return counts / counts.sum()


def sample_tv(sequences: Sequence[Sequence[int]], table: ExactJointTable) -> float:
    """Total variation between generated sequences and the table."""
    return total_variation(empirical_distribution(sequences, table), table.probs)


def distribution_distance(
    model: ConditionalModel,
    table: ExactJointTable,
    trials: int,
    method: SamplerMethod = SamplerMethod.AO,
    kernel: Optional[ForwardKernel] = None,
    steps: int = 32,
    cache: bool = True,
    order: AOOrder = AOOrder.RANDOM,
    seed: int = 0,
    threads: int = 1,
) -> float:
    """
    Total variation between the model's samples and p0.

    Args:
        model: Conditional model
        table: Oracle table p0
        trials: Number of generated sequences
        method: ao, tweedie or euler
        kernel: Forward kernel for the diffusion samplers
        steps: Uniform grid steps for the diffusion samplers
        order: Generation order for ao sampling
    """
    method = SamplerMethod(method)
    if method is SamplerMethod.AO:
        report = ao_sample(model, table.d, order=order, trajectories=trials, seed=seed, threads=threads)
    else:
        kernel = kernel or ForwardKernel(NoiseSchedule.loglinear(), model.vocab)
        grid = StepGrid.uniform(steps, kernel.schedule.T)
        report = sample(model, kernel, grid, method, cache=cache, trajectories=trials, seed=seed, threads=threads)
    tv = sample_tv(report.sequences, table)
    logger.info(f"TV distance over {trials} {method.value} samples: {tv:.4f}")
    return tv


def unigram_entropy(samples: Sequence[Sequence[int]]) -> float:
    """Entropy in nats of the pooled token distribution of a sample set."""
    tokens = np.concatenate([np.asarray(s, dtype=np.int64).reshape(-1) for s in samples]) if len(samples) else np.zeros(0)
    if tokens.size == 0:
        raise DomainError("Unigram entropy needs a nonempty sample set")
    counts = np.bincount(tokens)
    return float(np.sum(entr(counts / counts.sum())))


def nfe_summary(report: SampleReport) -> Dict[str, float]:
    nfe = np.asarray(report.nfe, dtype=np.float64)
    return {
        "mean": float(nfe.mean()),
        "std": float(nfe.std(ddof=1)) if nfe.size > 1 else 0.0,
        "min": float(nfe.min()),
        "max": float(nfe.max()),
    }


# =====================================================================
# OUTPUT
# =====================================================================

def write_report(
    report: EvalReport,
    path: Union[str, Path],
    results_csv: Optional[Union[str, Path]] = None,
) -> Path:
    """
    Write the report as JSON and optionally append it as a CSV row.

    The CSV gets a header when it is created.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")

    if results_csv is not None:
        results_csv = Path(results_csv)
        results_csv.parent.mkdir(parents=True, exist_ok=True)
        row = report.model_dump(mode="json")
        row["nfe_summary"] = None if report.nfe_summary is None else str(report.nfe_summary)
        frame = pd.DataFrame([row])
        frame.to_csv(results_csv, mode="a", header=not results_csv.exists(), index=False)
    logger.info(f"Wrote evaluation report to {path}")
    return path
