"""
Reverse-process generation.

Diffusion sampling walks a decreasing time grid T = t_n > ... > t_0 = 0.
At each step every masked position independently unmasks with probability
psi(t, s) and, when it does, draws its token from the model's conditional at
the current state. Because the model has no time input, a prediction stays
valid until the state changes; with caching on the model is only evaluated on
steps where at least one position unmasks.

RNG draw order inside a step is fixed: one uniform per masked position (left
to right) for the unmask decisions, then one uniform per newly unmasked
position (left to right) for the tokens. Cached and uncached runs therefore
consume identical random streams and produce identical sequences.
"""

import logging
import time
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from radd.contracts import AOOrder, SampleReport, SamplerMethod
from radd.diffusion.forward import ForwardKernel
from radd.diffusion.space import SequenceState, Vocab
from radd.errors import DomainError
from radd.models.base_model import ConditionalModel
from radd.models.uniform_model import UniformModel
from radd.utils.monitoring import (
    track_cache_access,
    track_euler_clamp,
    track_force_fill,
    track_model_evaluation,
)
from radd.utils.parallel import ordered_map


logger = logging.getLogger(__name__)

Prompt = Sequence[Tuple[int, int]]

NFE_COLUMNS = ["n", "l", "method", "cache", "enfe_analytic", "nfe_mean", "nfe_std", "trajectories"]

# round-off around 0 and 1 is not reported as a clamp
_CLAMP_TOL = 1e-12


# =====================================================================
# TIME GRID
# =====================================================================

class StepGrid:
    """
    Strictly decreasing sampling times T = t_n > ... > t_0 = 0.

    times[0] is T and times[-1] is 0; step k runs from t_k down to t_{k-1}.
    """

    def __init__(self, times: Sequence[float]):
        arr = np.asarray(times, dtype=np.float64).reshape(-1)
        if arr.size < 2:
            raise DomainError("A step grid needs at least two times")
        if arr[-1] != 0.0:
            raise DomainError(f"A step grid must end at 0, got {arr[-1]}")
        if np.any(np.diff(arr) >= 0.0):
            raise DomainError("Step grid times must be strictly decreasing")
        arr.setflags(write=False)
        self.times = arr

    @classmethod
    def uniform(cls, n: int, T: float = 1.0) -> "StepGrid":
        """t_k = k T / n; the endpoints are exact."""
        if n < 1:
            raise DomainError(f"Step count must be at least 1, got {n}")
        times = T * np.arange(n, -1, -1, dtype=np.float64) / n
        times[0], times[-1] = T, 0.0
        return cls(times)

    @property
    def n(self) -> int:
        return int(self.times.size - 1)

    @property
    def T(self) -> float:
        return float(self.times[0])

    def steps(self) -> Iterator[Tuple[float, float]]:
        """(t, s) pairs from the top of the grid down."""
        for t, s in zip(self.times[:-1], self.times[1:]):
            yield float(t), float(s)

    def __repr__(self) -> str:
        return f"StepGrid(n={self.n}, T={self.T})"


def _check_grid(kernel: ForwardKernel, grid: StepGrid) -> None:
    if abs(grid.T - kernel.schedule.T) > 1e-12:
        raise DomainError(f"Grid horizon {grid.T} does not match schedule horizon {kernel.schedule.T}")


# =====================================================================
# STEP PROBABILITIES
# =====================================================================

def raw_unmask_prob(kernel: ForwardKernel, method: SamplerMethod, s: float, t: float) -> float:
    """psi(t, s) before clamping; the Euler form can leave [0, 1] on coarse grids."""
    method = SamplerMethod(method)
    if not s < t:
        raise DomainError(f"Need s < t, got s={s}, t={t}")
    schedule = kernel.schedule
    if method is SamplerMethod.TWEEDIE:
        a_s = float(schedule.survival(s))
        a_t = float(schedule.survival(t))
        return (a_s - a_t) / (1.0 - a_t)
    if method is SamplerMethod.EULER:
        return float(schedule.sigma(t)) * kernel.score_scale(t) * (t - s)
    raise DomainError("Any-order sampling has no unmask probability")


def unmask_prob(kernel: ForwardKernel, method: SamplerMethod, s: float, t: float) -> float:
    """
    Probability that a masked position unmasks between t and s.

    tweedie: (exp(-sigma_bar(s)) - exp(-sigma_bar(t))) / (1 - exp(-sigma_bar(t)))
    euler: sigma(t) * score_scale(t) * (t - s), clamped into [0, 1]

    Both reduce to (t - s) / t under the log-linear schedule.

    Raises:
        DomainError: If s >= t
    """
    return float(np.clip(raw_unmask_prob(kernel, method, s, t), 0.0, 1.0))


def _draw_tokens(probs: np.ndarray, positions: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draw, one uniform per position in order."""
    u = rng.random(positions.size)
    tokens = np.empty(positions.size, dtype=np.int64)
    for j, position in enumerate(positions):
        cdf = np.cumsum(probs[position])
        tokens[j] = min(int(np.searchsorted(cdf, u[j] * cdf[-1], side="right")), probs.shape[1] - 1)
    return tokens


def reverse_step(
    model: ConditionalModel,
    x_t: SequenceState,
    kernel: ForwardKernel,
    method: SamplerMethod,
    s: float,
    t: float,
    rng: np.random.Generator,
) -> SequenceState:
    """
    One reverse step from t to s.

    Unmasked positions are copied; each masked position independently
    unmasks with probability psi(t, s) and draws its token from predict(x_t).
    """
    psi = unmask_prob(kernel, method, s, t)
    masked = x_t.masked_positions
    newly = masked[rng.random(masked.size) < psi]
    if newly.size == 0:
        return x_t
    probs = model.predict(x_t)
    return x_t.replace(newly, _draw_tokens(probs, newly, rng))


# =====================================================================
# TRAJECTORIES
# =====================================================================

@dataclass
class Trajectory:
    """Outcome of one generated sequence."""

    sequence: SequenceState
    nfe: int
    forced_fill: bool = False
    clamp_events: int = 0


def _initial_state(vocab: Vocab, d: int, prompt: Optional[Prompt]) -> SequenceState:
    x = SequenceState.all_masked(d, vocab)
    if not prompt:
        return x
    positions = [int(p) for p, _ in prompt]
    tokens = [int(v) for _, v in prompt]
    if len(set(positions)) != len(positions):
        raise DomainError(f"Prompt positions must be distinct, got {positions}")
    if any(not 0 <= p < d for p in positions):
        raise DomainError(f"Prompt positions must lie in [0, {d}), got {positions}")
    if any(not 0 <= v < vocab.n_tokens for v in tokens):
        raise DomainError(f"Prompt tokens must be data tokens in [0, {vocab.n_tokens}), got {tokens}")
    return x.replace(positions, tokens)


def _diffusion_trajectory(
    model: ConditionalModel,
    kernel: ForwardKernel,
    grid: StepGrid,
    method: SamplerMethod,
    cache: bool,
    prompt: Optional[Prompt],
    rng: np.random.Generator,
) -> Trajectory:
    x = _initial_state(model.vocab, model.d, prompt)
    probs: Optional[np.ndarray] = None
    probs_state: Optional[SequenceState] = None
    # prediction used by the last step that unmasked; identical with and without the cache
    fill_probs: Optional[np.ndarray] = None
    nfe = 0
    clamps = 0

    for t, s in grid.steps():
        masked = x.masked_positions
        if masked.size == 0:
            break
        raw = raw_unmask_prob(kernel, method, s, t)
        psi = min(max(raw, 0.0), 1.0)
        if raw < -_CLAMP_TOL or raw > 1.0 + _CLAMP_TOL:
            clamps += 1
        newly = masked[rng.random(masked.size) < psi]

        if not cache:
            probs, probs_state = model.predict(x), x
            nfe += 1
        elif newly.size:
            if probs_state is None or probs_state != x:
                probs, probs_state = model.predict(x), x
                nfe += 1
                track_cache_access("prediction", hit=False)
            else:
                track_cache_access("prediction", hit=True)

        if newly.size:
            fill_probs = probs
            x = x.replace(newly, _draw_tokens(probs, newly, rng))

    forced = False
    if x.n_masked:
        if fill_probs is None:
            # nothing unmasked, so x is still the initial state
            if probs is None:
                probs = model.predict(x)
                nfe += 1
            fill_probs = probs
        remaining = x.masked_positions
        x = x.replace(remaining, _draw_tokens(fill_probs, remaining, rng))
        forced = True

    return Trajectory(sequence=x, nfe=nfe, forced_fill=forced, clamp_events=clamps)


def _ao_order(d: int, order: Union[AOOrder, Sequence[int], None], rng: np.random.Generator) -> np.ndarray:
    if order is None or (isinstance(order, (str, AOOrder)) and AOOrder(order) is AOOrder.RANDOM):
        return rng.permutation(d)
    if isinstance(order, (str, AOOrder)):
        forward = np.arange(d)
        return forward if AOOrder(order) is AOOrder.FORWARD else forward[::-1].copy()
    perm = np.asarray(order, dtype=np.int64)
    if perm.shape != (d,) or not np.array_equal(np.sort(perm), np.arange(d)):
        raise DomainError(f"Order must be a permutation of range({d}), got {list(order)}")
    return perm


def _ao_trajectory(
    model: ConditionalModel,
    d: int,
    order: Union[AOOrder, Sequence[int], None],
    prompt: Optional[Prompt],
    rng: np.random.Generator,
) -> Trajectory:
    x = _initial_state(model.vocab, d, prompt)
    nfe = 0
    for position in _ao_order(d, order, rng):
        if not x.masked[position]:
            continue
        probs = model.predict(x)
        nfe += 1
        slot = np.array([position])
        x = x.replace(slot, _draw_tokens(probs, slot, rng))
    return Trajectory(sequence=x, nfe=nfe)


def _streams(rng: Optional[np.random.Generator], seed: Optional[int], trajectories: int):
    if rng is not None:
        return None
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(trajectories)]


def _run(
    body,
    rng: Optional[np.random.Generator],
    seed: Optional[int],
    trajectories: int,
    threads: int,
) -> List[Trajectory]:
    if trajectories < 1:
        raise DomainError(f"Need at least one trajectory, got {trajectories}")
    streams = _streams(rng, seed, trajectories)
    if streams is None:
        # one shared generator: trajectories run in order
        return [body(rng) for _ in range(trajectories)]
    return ordered_map(body, streams, threads=threads)


def _report(
    runs: List[Trajectory],
    model: ConditionalModel,
    method: SamplerMethod,
    cache: bool,
    seed: Optional[int],
    steps: Optional[int],
    elapsed_ms: float,
) -> SampleReport:
    total_nfe = sum(run.nfe for run in runs)
    clamps = sum(run.clamp_events for run in runs)
    forced = sum(run.forced_fill for run in runs)
    track_model_evaluation(model.backend.value, total_nfe)
    track_euler_clamp(clamps)
    for _ in range(forced):
        track_force_fill()
    if clamps:
        logger.warning(f"Euler unmask probability clamped into [0, 1] {clamps} times")
    if forced:
        logger.warning(f"{forced} trajectories still held masks after the last step and were force-filled")
    return SampleReport(
        sequences=[run.sequence.tolist() for run in runs],
        nfe=[run.nfe for run in runs],
        method=method,
        cache=cache,
        seed=seed,
        steps=steps,
        forced_fill=[run.forced_fill for run in runs],
        clamp_events=clamps,
        wallclock_ms=elapsed_ms,
    )


def sample(
    model: ConditionalModel,
    kernel: ForwardKernel,
    grid: StepGrid,
    method: SamplerMethod = SamplerMethod.TWEEDIE,
    cache: bool = True,
    prompt: Optional[Prompt] = None,
    rng: Optional[np.random.Generator] = None,
    trajectories: int = 1,
    seed: Optional[int] = None,
    threads: int = 1,
) -> SampleReport:
    """
    Generate sequences with the Tweedie or Euler reverse sampler.

    Args:
        model: Conditional model (frozen during sampling)
        kernel: Forward kernel whose schedule defines psi
        grid: Time grid
        method: tweedie or euler
        cache: Skip model calls on steps where nothing unmasks
        prompt: (position, token) pairs held fixed
        rng: Shared generator; trajectories then run sequentially
        trajectories: Number of sequences
        seed: Root seed of per-trajectory substreams, used when rng is None
        threads: Workers for independent trajectories

    Returns:
        SampleReport with per-trajectory NFE
    """
    method = SamplerMethod(method)
    if method is SamplerMethod.AO:
        return ao_sample(model, model.d, rng=rng, prompt=prompt, trajectories=trajectories, seed=seed, threads=threads)
    _check_grid(kernel, grid)
    start = time.time()

    def body(stream: np.random.Generator) -> Trajectory:
        return _diffusion_trajectory(model, kernel, grid, method, cache, prompt, stream)

    runs = _run(body, rng, seed, trajectories, threads)
    elapsed_ms = (time.time() - start) * 1000.0
    logger.info(
        f"Sampled {trajectories} sequences with {method.value} (n={grid.n}, cache={cache}): "
        f"mean NFE {np.mean([r.nfe for r in runs]):.2f} in {elapsed_ms:.1f}ms"
    )
    return _report(runs, model, method, cache, seed, grid.n, elapsed_ms)


def ao_sample(
    model: ConditionalModel,
    d: int,
    order: Union[AOOrder, Sequence[int], None] = None,
    rng: Optional[np.random.Generator] = None,
    prompt: Optional[Prompt] = None,
    trajectories: int = 1,
    seed: Optional[int] = None,
    threads: int = 1,
) -> SampleReport:
    """
    Any-order autoregressive sampling: fill one position at a time.

    Args:
        order: random (default), forward, backward, or an explicit permutation
        prompt: (position, token) pairs held fixed; their positions are skipped

    Returns:
        SampleReport with nfe equal to the masked count at the start
    """
    if d != model.d:
        raise DomainError(f"Model is built for d={model.d}, got d={d}")
    start = time.time()

    def body(stream: np.random.Generator) -> Trajectory:
        return _ao_trajectory(model, d, order, prompt, stream)

    runs = _run(body, rng, seed, trajectories, threads)
    elapsed_ms = (time.time() - start) * 1000.0
    logger.info(f"Sampled {trajectories} sequences in any order (d={d}) in {elapsed_ms:.1f}ms")
    return _report(runs, model, SamplerMethod.AO, False, seed, None, elapsed_ms)


# =====================================================================
# NFE ACCOUNTING
# =====================================================================

def step_unmask_probs(
    kernel: ForwardKernel,
    grid: StepGrid,
    method: SamplerMethod,
    closed_form: bool = False,
) -> np.ndarray:
    """
    r_k for k = 1..n: probability that a position masked at T unmasks in step k.

    Product form r_k = psi_k * prod_{j > k} (1 - psi_j) for either method;
    closed_form uses the telescoped Tweedie expression
    (exp(-sigma_bar(t_{k-1})) - exp(-sigma_bar(t_k))) / (1 - exp(-sigma_bar(t_n))).
    """
    method = SamplerMethod(method)
    _check_grid(kernel, grid)
    ascending = grid.times[::-1]
    if closed_form:
        if method is not SamplerMethod.TWEEDIE:
            raise DomainError("The telescoped closed form only exists for the Tweedie sampler")
        survival = np.asarray(kernel.schedule.survival(ascending), dtype=np.float64)
        return (survival[:-1] - survival[1:]) / (1.0 - survival[-1])

    n = grid.n
    psi = np.array([unmask_prob(kernel, method, ascending[k - 1], ascending[k]) for k in range(1, n + 1)])
    still_masked = np.ones(n)
    for k in range(n - 2, -1, -1):
        still_masked[k] = still_masked[k + 1] * (1.0 - psi[k + 1])
    return psi * still_masked


def enfe_analytic(kernel: ForwardKernel, grid: StepGrid, method: SamplerMethod, l: int) -> float:
    """
    Expected number of model calls with caching for l generated positions:
    sum_k 1 - (1 - r_k)^l.
    """
    if l < 1:
        raise DomainError(f"Generating length must be at least 1, got {l}")
    method = SamplerMethod(method)
    r = step_unmask_probs(kernel, grid, method, closed_form=method is SamplerMethod.TWEEDIE)
    return float(np.sum(1.0 - (1.0 - r) ** l))


def empirical_nfe(
    kernel: ForwardKernel,
    grid: StepGrid,
    method: SamplerMethod,
    l: int,
    trajectories: int,
    seed: int = 0,
    threads: int = 1,
    model: Optional[ConditionalModel] = None,
) -> Tuple[float, float]:
    """
    Mean and standard deviation of the cached NFE over sampled trajectories.

    NFE depends only on the masking dynamics, so a uniform model over two
    tokens is used unless one is given.
    """
    model = model or UniformModel(Vocab(2), l)
    report = sample(model, kernel, grid, method, cache=True, trajectories=trajectories, seed=seed, threads=threads)
    nfe = np.asarray(report.nfe, dtype=np.float64)
    std = float(nfe.std(ddof=1)) if nfe.size > 1 else 0.0
    return float(nfe.mean()), std


def enfe_sweep(
    kernel: ForwardKernel,
    steps: Sequence[int],
    lengths: Sequence[int],
    method: SamplerMethod = SamplerMethod.TWEEDIE,
    trajectories: int = 0,
    seed: int = 0,
    threads: int = 1,
) -> pd.DataFrame:
    """
    Analytic (and, when trajectories > 0, empirical) NFE over uniform grids.

    Returns:
        One row per (n, l) with the NFE_COLUMNS columns
    """
    method = SamplerMethod(method)
    rows = []
    for l in lengths:
        for n in steps:
            grid = StepGrid.uniform(n, kernel.schedule.T)
            row = {
                "n": n,
                "l": l,
                "method": method.value,
                "cache": True,
                "enfe_analytic": enfe_analytic(kernel, grid, method, l),
                "nfe_mean": np.nan,
                "nfe_std": np.nan,
                "trajectories": trajectories,
            }
            if trajectories > 0:
                row["nfe_mean"], row["nfe_std"] = empirical_nfe(
                    kernel, grid, method, l, trajectories, seed=seed, threads=threads
                )
            logger.debug(f"E-NFE n={n} l={l}: analytic {row['enfe_analytic']:.4f}, empirical {row['nfe_mean']}")
            rows.append(row)
    return pd.DataFrame(rows, columns=NFE_COLUMNS)


def nfe_stats(report: SampleReport, l: int, kernel: Optional[ForwardKernel] = None) -> pd.DataFrame:
    """One-row NFE summary of a sampling run in the NFE_COLUMNS layout."""
    nfe = np.asarray(report.nfe, dtype=np.float64)
    analytic = np.nan
    if kernel is not None and report.method is not SamplerMethod.AO and report.steps:
        analytic = enfe_analytic(kernel, StepGrid.uniform(report.steps, kernel.schedule.T), report.method, l)
    return pd.DataFrame(
        [{
            "n": report.steps if report.steps is not None else np.nan,
            "l": l,
            "method": report.method.value,
            "cache": report.cache,
            "enfe_analytic": analytic,
            "nfe_mean": float(nfe.mean()),
            "nfe_std": float(nfe.std(ddof=1)) if nfe.size > 1 else 0.0,
            "trajectories": nfe.size,
        }],
        columns=NFE_COLUMNS,
    )
