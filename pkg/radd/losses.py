"""
Training objectives.

Four losses that agree in expectation (up to a closed-form residual when the
horizon is finite):

- DSE: denoising score entropy on the reparameterized score w(t) * c(x)
- t-DCE: denoising cross-entropy integrated over time
- lambda-DCE: the same integral after the change of variables t -> lambda(t)
- AO: expected negative log-likelihood over random factorization orders

Each has a Monte-Carlo estimator (one draw, optional parameter gradient) and
an exact evaluator built on enumerating all 2^d masking subsets of x0.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate
from scipy.special import comb, entr, xlogy

from radd.contracts import LossKind
from radd.diffusion.forward import ForwardKernel, mask_with_probability
from radd.diffusion.space import SequenceState
from radd.errors import DomainError, InfiniteLossError
from radd.models.base_model import ConditionalModel


logger = logging.getLogger(__name__)

# 2^d subsets are enumerated by the exact evaluators
MAX_EXACT_D = 20


@dataclass
class LossSample:
    """One Monte-Carlo loss draw."""

    value: float
    grad: Optional[np.ndarray] = None
    time: Optional[float] = None
    mask_prob: Optional[float] = None
    n_masked: int = 0
    diagnostics: Dict[str, float] = field(default_factory=dict)


# =====================================================================
# CLOSED FORMS
# =====================================================================

def k_entropy(a):
    """K(a) = a log a - a with 0 log 0 = 0."""
    return xlogy(a, a) - a


def binary_entropy(lam):
    """h(lambda) = -(lambda log lambda + (1 - lambda) log(1 - lambda)) in nats."""
    lam = np.asarray(lam, dtype=np.float64)
    out = entr(lam) + entr(1.0 - lam)
    return float(out) if out.ndim == 0 else out


# =====================================================================
# MONTE-CARLO ESTIMATORS
# =====================================================================

def _targets(probs: np.ndarray, x0: SequenceState, positions: np.ndarray) -> np.ndarray:
    targets = probs[positions, x0.tokens[positions]]
    zero = np.flatnonzero(targets <= 0.0)
    if zero.size:
        position = int(positions[zero[0]])
        raise InfiniteLossError(position, int(x0.tokens[position]))
    return targets


def _cross_entropy_evaluator(
    x0: SequenceState,
    positions: np.ndarray,
    weight: float,
    shift: float = 0.0,
) -> Callable[[np.ndarray], Tuple[float, np.ndarray]]:
    """weight * sum_i -(log p[i, x0_i] + shift) over the given positions."""

    def evaluate(probs: np.ndarray) -> Tuple[float, np.ndarray]:
        targets = _targets(probs, x0, positions)
        value = weight * float(np.sum(-(np.log(targets) + shift)))
        dprobs = np.zeros_like(probs)
        dprobs[positions, x0.tokens[positions]] = -weight / targets
        return value, dprobs

    return evaluate


def _score_entropy_evaluator(
    x0: SequenceState,
    positions: np.ndarray,
    rate: float,
    scale: float,
) -> Callable[[np.ndarray], Tuple[float, np.ndarray]]:
    """rate * sum_i [scale * sum_j p_ij - scale log(scale p_target) + K(scale)]."""

    def evaluate(probs: np.ndarray) -> Tuple[float, np.ndarray]:
        targets = _targets(probs, x0, positions)
        rows = probs[positions].sum(axis=1)
        per_row = scale * rows - scale * np.log(scale * targets) + k_entropy(scale)
        value = rate * float(np.sum(per_row))
        dprobs = np.zeros_like(probs)
        dprobs[positions] = rate * scale
        dprobs[positions, x0.tokens[positions]] -= rate * scale / targets
        return value, dprobs

    return evaluate


def _finish(
    model: ConditionalModel,
    x: SequenceState,
    evaluator: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    positions: np.ndarray,
    with_grad: bool,
) -> Tuple[float, Optional[np.ndarray]]:
    if positions.size == 0:
        return 0.0, (np.zeros(model.n_params) if with_grad else None)
    if with_grad:
        return model.loss_gradient(x, evaluator)
    value, _ = evaluator(model.predict(x))
    return value, None


def _draw_time(kernel: ForwardKernel, rng: np.random.Generator) -> float:
    # t = 0 has lambda = 0 and an infinite score scale; it has measure zero
    while True:
        t = kernel.schedule.T * rng.random()
        if t > 0.0:
            return t


def _check_clean(x0: SequenceState) -> None:
    if not x0.is_clean:
        raise DomainError(f"Losses are defined for clean sequences, got {x0}")


def mc_loss_dse(
    model: ConditionalModel,
    x0: SequenceState,
    kernel: ForwardKernel,
    rng: np.random.Generator,
    with_grad: bool = False,
) -> LossSample:
    """
    One draw of the denoising score entropy.

    t ~ U(0, T), x_t ~ p_{t|0}(. | x0); returns
    T * sum over masked i of sigma(t) [w sum_j c_ij - w log(w c_i,x0i) + K(w)]
    with w = score_scale(t).

    Raises:
        InfiniteLossError: If the model puts zero probability on a target token
    """
    _check_clean(x0)
    t = _draw_time(kernel, rng)
    x_t = kernel.sample_forward(x0, t, rng)
    values = kernel.schedule.evaluate(t)
    scale = kernel.score_scale(t)
    positions = x_t.masked_positions
    evaluator = _score_entropy_evaluator(x0, positions, kernel.schedule.T * values.sigma, scale)
    value, grad = _finish(model, x_t, evaluator, positions, with_grad)
    return LossSample(value=value, grad=grad, time=t, mask_prob=values.mask_prob, n_masked=int(positions.size))


def mc_loss_tdce(
    model: ConditionalModel,
    x0: SequenceState,
    kernel: ForwardKernel,
    rng: np.random.Generator,
    with_grad: bool = False,
) -> LossSample:
    """
    One draw of the time-parameterized denoising cross-entropy.

    Returns T * sum over masked i of -sigma(t) w log(w c_i,x0i).
    """
    _check_clean(x0)
    t = _draw_time(kernel, rng)
    x_t = kernel.sample_forward(x0, t, rng)
    values = kernel.schedule.evaluate(t)
    scale = kernel.score_scale(t)
    positions = x_t.masked_positions
    evaluator = _cross_entropy_evaluator(
        x0, positions, weight=kernel.schedule.T * values.sigma * scale, shift=math.log(scale)
    )
    value, grad = _finish(model, x_t, evaluator, positions, with_grad)
    return LossSample(value=value, grad=grad, time=t, mask_prob=values.mask_prob, n_masked=int(positions.size))


def mc_loss_ldce(
    model: ConditionalModel,
    x0: SequenceState,
    rng: np.random.Generator,
    with_grad: bool = False,
) -> LossSample:
    """
    One draw of the lambda-parameterized denoising cross-entropy.

    lambda ~ U(0, 1) (redrawn when exactly 0), each position masked with
    probability lambda; returns (1 / lambda) * sum over masked i of -log c_i,x0i.
    """
    _check_clean(x0)
    lam = 0.0
    while lam == 0.0:
        lam = rng.random()
    x_lam = mask_with_probability(x0, lam, rng)
    positions = x_lam.masked_positions
    evaluator = _cross_entropy_evaluator(x0, positions, weight=1.0 / lam)
    value, grad = _finish(model, x_lam, evaluator, positions, with_grad)
    return LossSample(value=value, grad=grad, mask_prob=lam, n_masked=int(positions.size))


def mc_loss_ao(
    model: ConditionalModel,
    x0: SequenceState,
    rng: np.random.Generator,
    with_grad: bool = False,
) -> LossSample:
    """
    One draw of the any-order autoregressive loss.

    A uniform permutation pi and a step l ~ U{1..d} are drawn; positions
    pi(l..d) are masked and the value is d / (d - l + 1) times their summed
    negative log-likelihood.
    """
    _check_clean(x0)
    d = x0.d
    order = rng.permutation(d)
    step = int(rng.integers(1, d + 1))
    positions = np.sort(order[step - 1:])
    x_masked = x0.mask_positions(positions)
    evaluator = _cross_entropy_evaluator(x0, positions, weight=d / (d - step + 1))
    value, grad = _finish(model, x_masked, evaluator, positions, with_grad)
    return LossSample(
        value=value,
        grad=grad,
        n_masked=int(positions.size),
        diagnostics={"step": float(step)},
    )


def mc_loss(
    kind: LossKind,
    model: ConditionalModel,
    x0: SequenceState,
    kernel: ForwardKernel,
    rng: np.random.Generator,
    with_grad: bool = False,
) -> LossSample:
    """Dispatch to the Monte-Carlo estimator of one loss kind."""
    kind = LossKind(kind)
    if kind is LossKind.DSE:
        return mc_loss_dse(model, x0, kernel, rng, with_grad)
    if kind is LossKind.TDCE:
        return mc_loss_tdce(model, x0, kernel, rng, with_grad)
    if kind is LossKind.LDCE:
        return mc_loss_ldce(model, x0, rng, with_grad)
    return mc_loss_ao(model, x0, rng, with_grad)


# =====================================================================
# EXACT EVALUATORS
# =====================================================================

@dataclass
class SubsetSums:
    """
    Per-size sums over all masking subsets S of x0.

    nll[k] = sum over |S| = k of sum_{i in S} -log c(x0 with S masked)[i, x0_i]
    mass[k] = sum over |S| = k of sum_{i in S} sum_j c(...)[i, j]
    """

    d: int
    nll: np.ndarray
    mass: np.ndarray

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.nll)))


def _subsets(d: int):
    for k in range(1, d + 1):
        for subset in itertools.combinations(range(d), k):
            yield k, np.array(subset, dtype=np.int64)


def _check_enumerable(x0: SequenceState) -> None:
    _check_clean(x0)
    if x0.d > MAX_EXACT_D:
        raise DomainError(f"Exact losses enumerate 2^d subsets; d={x0.d} exceeds {MAX_EXACT_D}")


def subset_sums(model: ConditionalModel, x0: SequenceState) -> SubsetSums:
    """Enumerate every nonempty masking subset of x0 once."""
    _check_enumerable(x0)
    d = x0.d
    nll = np.zeros(d + 1)
    mass = np.zeros(d + 1)
    for k, subset in _subsets(d):
        probs = model.predict(x0.mask_positions(subset))
        targets = probs[subset, x0.tokens[subset]]
        with np.errstate(divide="ignore"):
            nll[k] += float(np.sum(-np.log(targets)))
        mass[k] += float(probs[subset].sum())
    sums = SubsetSums(d=d, nll=nll, mass=mass)
    if not sums.finite:
        logger.warning(f"Model assigns zero probability to a target of {x0}; exact loss is infinite")
    return sums


def _subset_counts(d: int) -> np.ndarray:
    ks = np.arange(1, d + 1)
    return ks * comb(d, ks, exact=False)


def exact_loss_ao(model: ConditionalModel, x0: SequenceState) -> float:
    """
    Exact any-order loss of x0.

    sum_k [1 / (k C(d, k))] sum_{|S| = k} sum_{i in S} -log c(x0 with S masked)[i, x0_i]

    Returns math.inf (with a warning) when a target has probability zero.
    """
    sums = subset_sums(model, x0)
    if not sums.finite:
        return math.inf
    return float(np.sum(sums.nll[1:] / _subset_counts(sums.d)))


def exact_ao_gradient(model: ConditionalModel, x0: SequenceState) -> Tuple[float, np.ndarray]:
    """Exact any-order loss of x0 and its parameter gradient, by enumeration."""
    _check_enumerable(x0)
    d = x0.d
    weights = 1.0 / _subset_counts(d)
    total = 0.0
    grad = np.zeros(model.n_params)
    for k, subset in _subsets(d):
        x_masked = x0.mask_positions(subset)
        evaluator = _cross_entropy_evaluator(x0, subset, weight=float(weights[k - 1]))
        value, g = model.loss_gradient(x_masked, evaluator)
        total += value
        if g.size:
            grad += g
    return total, grad


def _mask_polynomial(coefs: np.ndarray, d: int, lam: np.ndarray) -> np.ndarray:
    """sum_k coefs[k] lambda^(k-1) (1 - lambda)^(d-k) at each lambda."""
    lam = np.asarray(lam, dtype=np.float64)
    ks = np.arange(1, d + 1)
    powers = lam[:, None] ** (ks - 1)[None, :] * (1.0 - lam[:, None]) ** (d - ks)[None, :]
    return powers @ coefs[1:]


def gauss_legendre(fn: Callable[[np.ndarray], np.ndarray], lower: float, upper: float, nodes: int) -> float:
    """Gauss-Legendre rule with the given node count on [lower, upper]."""
    x, w = leggauss(nodes)
    half = 0.5 * (upper - lower)
    return float(half * np.dot(w, fn(half * x + 0.5 * (upper + lower))))


def exact_loss_quadrature(
    model: ConditionalModel,
    x0: SequenceState,
    kernel: ForwardKernel,
    which: LossKind,
    nodes: Optional[int] = None,
    upper: Optional[float] = None,
) -> float:
    """
    Exact loss via quadrature in lambda.

    After the change of variables t -> lambda the masking expectation is a
    polynomial of degree d - 1 in lambda, so ceil(d / 2) Gauss-Legendre
    nodes integrate it to round-off.

    - ldce: integral over [0, upper] (upper = 1 by default)
    - tdce: integral over [0, lambda(T)] minus d h(lambda(T))
    - dse: tdce plus the mass and K(w) terms, which together add d h(lambda(T))
      for a normalized model

    Args:
        model: Conditional model
        x0: Clean sequence
        kernel: Forward kernel; fixes lambda(T) for tdce and dse
        which: ldce, tdce or dse
        nodes: Gauss-Legendre nodes; defaults to ceil(d / 2)
        upper: Upper lambda limit for ldce

    Returns:
        Loss in nats, math.inf when a target has probability zero
    """
    which = LossKind(which)
    if which is LossKind.AO:
        return exact_loss_ao(model, x0)

    sums = subset_sums(model, x0)
    if not sums.finite:
        return math.inf
    d = sums.d
    nodes = nodes or max(1, math.ceil(d / 2))

    if which is LossKind.LDCE:
        top = 1.0 if upper is None else float(upper)
        return gauss_legendre(lambda lam: _mask_polynomial(sums.nll, d, lam), 0.0, top, nodes)

    top = kernel.schedule.final_mask_prob
    cross_entropy = gauss_legendre(lambda lam: _mask_polynomial(sums.nll, d, lam), 0.0, top, nodes)
    tdce = cross_entropy - d * binary_entropy(top)
    if which is LossKind.TDCE:
        return tdce

    mass = gauss_legendre(lambda lam: _mask_polynomial(sums.mass, d, lam), 0.0, top, nodes)
    return tdce + mass + d * (binary_entropy(top) - top)


def tdce_time_integral(model: ConditionalModel, x0: SequenceState, kernel: ForwardKernel) -> float:
    """
    Exact t-DCE by adaptive quadrature directly in t.

    Integrates sigma(t) w(t) E[sum over masked i of -log(w c_i,x0i)] over
    (0, T) with the masking expectation enumerated; cross-checks the
    lambda-domain evaluation.
    """
    sums = subset_sums(model, x0)
    if not sums.finite:
        return math.inf
    d = sums.d
    ks = np.arange(1, d + 1)
    counts = comb(d, ks, exact=False)
    schedule = kernel.schedule

    def integrand(t: float) -> float:
        lam = float(schedule.mask_prob(t))
        if lam <= 0.0:
            return 0.0
        scale = (1.0 - lam) / lam
        weights = lam ** ks * (1.0 - lam) ** (d - ks)
        expected = np.dot(weights, sums.nll[1:] - ks * counts * math.log(scale))
        return float(schedule.sigma(t)) * scale * expected

    value, _ = integrate.quad(integrand, 0.0, schedule.T, epsabs=1e-13, epsrel=1e-12, limit=200)
    return float(value)


def exact_loss(
    kind: LossKind,
    model: ConditionalModel,
    x0: SequenceState,
    kernel: ForwardKernel,
) -> float:
    """Exact evaluator of one loss kind for x0."""
    kind = LossKind(kind)
    if kind is LossKind.AO:
        return exact_loss_ao(model, x0)
    return exact_loss_quadrature(model, x0, kernel, kind)


def finite_horizon_residual(kernel: ForwardKernel, d: int) -> float:
    """d h(lambda(T)): what t-DCE misses relative to lambda-DCE at a finite horizon."""
    return d * binary_entropy(kernel.schedule.final_mask_prob)

