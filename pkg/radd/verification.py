"""
Oracle verification suite.

Each check compares an analytic identity of the absorbing diffusion against
brute-force enumeration on tiny instances and reports the largest error it
measured next to its tolerance. run_verification() runs the registry and
returns a VerificationReport; failures are results, not exceptions.
"""

import itertools
import logging
import math
import time
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from radd.contracts import CheckResult, LossKind, SamplerMethod, VerificationReport
from radd.diffusion.forward import ForwardKernel
from radd.diffusion.schedule import NoiseSchedule
from radd.diffusion.space import ExactJointTable, SequenceState, Vocab, conditional_of
from radd.errors import ConfigError
from radd.losses import (
    binary_entropy,
    exact_loss_ao,
    exact_loss_quadrature,
    mc_loss,
    tdce_time_integral,
)
from radd.models.neural_model import NeuralModel
from radd.models.oracle_model import OracleModel
from radd.models.tabular_model import TabularModel
from radd.sampler import StepGrid, enfe_analytic, sample, step_unmask_probs, unmask_prob


logger = logging.getLogger(__name__)

CheckFn = Callable[["VerifyContext"], Tuple[float, Dict[str, Any]]]


@dataclass(frozen=True)
class PerturbedKernel(ForwardKernel):
    """Forward kernel whose score scale is off by a relative factor; negative control only."""

    perturb: float = 0.0

    def score_scale(self, t: float) -> float:
        return super().score_scale(t) * (1.0 + self.perturb)


@dataclass
class VerifyContext:
    rng: np.random.Generator
    perturb_score_scale: float = 0.0

    def kernel(self, schedule: NoiseSchedule, vocab: Vocab) -> ForwardKernel:
        if self.perturb_score_scale:
            return PerturbedKernel(schedule, vocab, perturb=self.perturb_score_scale)
        return ForwardKernel(schedule, vocab)

    def table(self, n_max: int = 3, d_max: int = 4) -> ExactJointTable:
        vocab = Vocab(int(self.rng.integers(2, n_max + 1)))
        d = int(self.rng.integers(1, d_max + 1))
        return ExactJointTable.random(vocab, d, self.rng, concentration=0.7)

    def schedule(self) -> NoiseSchedule:
        if self.rng.random() < 0.5:
            return NoiseSchedule.loglinear(eps=1e-3)
        return NoiseSchedule.geometric()

    def masked(self, x0: SequenceState, lam: float = 0.5) -> SequenceState:
        hit = self.rng.random(x0.d) < lam
        return SequenceState(np.where(hit, x0.vocab.mask_id, x0.tokens), x0.vocab)


@dataclass(frozen=True)
class Check:
    name: str
    description: str
    tolerance: float
    fn: CheckFn


CHECKS: List[Check] = []


def check(name: str, description: str, tolerance: float) -> Callable[[CheckFn], CheckFn]:
    """Register a check function under a name."""

    def register(fn: CheckFn) -> CheckFn:
        CHECKS.append(Check(name, description, tolerance, fn))
        return fn

    return register


def _all_states(vocab: Vocab, d: int, with_mask: bool = True):
    size = vocab.size_with_mask if with_mask else vocab.n_tokens
    for combo in itertools.product(range(size), repeat=d):
        yield SequenceState(combo, vocab)


def _forward_prob(kernel: ForwardKernel, x_s: SequenceState, x_t: SequenceState, s: float, t: float) -> float:
    prob = 1.0
    for a, b in zip(x_s.key, x_t.key):
        prob *= kernel.transition_prob(a, b, s, t)
        if prob == 0.0:
            break
    return prob


def _random_time(ctx: VerifyContext, schedule: NoiseSchedule) -> float:
    return float(schedule.T * (0.02 + 0.96 * ctx.rng.random()))


# =====================================================================
# SCHEDULE
# =====================================================================

@check("schedule_round_trip", "lambda_inverse(lambda(t)) = t on 1000 uniform times, both schedules", 1e-12)
def _schedule_round_trip(ctx: VerifyContext):
    ts = np.linspace(0.0, 1.0, 1000)
    errors = {}
    for schedule in (NoiseSchedule.loglinear(), NoiseSchedule.geometric()):
        back = schedule.lambda_inverse(schedule.mask_prob(ts))
        errors[schedule.kind.value] = float(np.max(np.abs(back - ts)))
    return max(errors.values()), errors


@check("schedule_rate", "sigma(t) matches a central difference of sigma_bar (relative)", 1e-6)
def _schedule_rate(ctx: VerifyContext):
    h = 1e-6
    ts = np.linspace(0.01, 0.9, 90)
    worst = 0.0
    for schedule in (NoiseSchedule.loglinear(), NoiseSchedule.geometric()):
        fd = (schedule.sigma_bar(ts + h) - schedule.sigma_bar(ts - h)) / (2 * h)
        worst = max(worst, float(np.max(np.abs(fd - schedule.sigma(ts)) / schedule.sigma(ts))))
    return worst, {}


# =====================================================================
# FORWARD PROCESS
# =====================================================================

@check("score_factorization", "joint ratio p_t(x_hat)/p_t(x) = score_scale * p0(token | x^UM) (relative)", 1e-12)
def _score_factorization(ctx: VerifyContext):
    worst, instances = 0.0, 0
    while instances < 200:
        table = ctx.table()
        schedule = ctx.schedule()
        kernel = ctx.kernel(schedule, table.vocab)
        x_t = ctx.masked(table.sequence_at(int(ctx.rng.integers(table.probs.size))), lam=0.6)
        if x_t.n_masked == 0:
            continue
        t = _random_time(ctx, schedule)
        i = int(ctx.rng.choice(x_t.masked_positions))
        token = int(ctx.rng.integers(table.vocab.n_tokens))
        base = kernel.joint_prob(table, x_t, t)
        if base <= 0.0:
            continue
        ratio = kernel.joint_prob(table, x_t.replace([i], [token]), t) / base
        score = kernel.concrete_score(table, x_t, i, token, t)
        worst = max(worst, abs(ratio - score) / max(1.0, abs(ratio)))
        instances += 1
    return worst, {"instances": instances}


@check("joint_law", "analytic p_t(x_t) equals brute-force sum over x0 (N <= 3, d <= 3)", 1e-12)
def _joint_law(ctx: VerifyContext):
    worst = 0.0
    for _ in range(6):
        table = ctx.table(n_max=3, d_max=3)
        schedule = ctx.schedule()
        kernel = ctx.kernel(schedule, table.vocab)
        t = _random_time(ctx, schedule)
        clean = list(table.enumerate_sequences())
        for x_t in _all_states(table.vocab, table.d):
            brute = sum(_forward_prob(kernel, x0, x_t, 0.0, t) * table.prob(x0) for x0 in clean)
            worst = max(worst, abs(kernel.joint_prob(table, x_t, t) - brute))
    return worst, {}


@check("chapman_kolmogorov", "sum_m p(m | x_s) p(x_t | m) = p(x_t | x_s) for s < u < t", 1e-12)
def _chapman_kolmogorov(ctx: VerifyContext):
    vocab = Vocab(3)
    worst = 0.0
    for schedule in (NoiseSchedule.loglinear(), NoiseSchedule.geometric()):
        kernel = ForwardKernel(schedule, vocab)
        grid = np.linspace(0.0, schedule.T, 7)
        for s, u, t in itertools.combinations(grid, 3):
            for a in range(vocab.size_with_mask):
                composed = kernel.transition_row(a, s, u) @ np.array(
                    [kernel.transition_row(m, u, t) for m in range(vocab.size_with_mask)]
                )
                worst = max(worst, float(np.max(np.abs(composed - kernel.transition_row(a, s, t)))))
    return worst, {}


@check("reverse_law", "exact reverse p(x_s | x_t) matches Bayes by enumeration and sums to 1", 1e-10)
def _reverse_law(ctx: VerifyContext):
    worst_bayes, worst_sum = 0.0, 0.0
    for _ in range(8):
        table = ctx.table(n_max=3, d_max=3)
        schedule = ctx.schedule()
        kernel = ctx.kernel(schedule, table.vocab)
        t = _random_time(ctx, schedule)
        s = float(t * ctx.rng.random()) if ctx.rng.random() < 0.8 else 0.0
        x_t = ctx.masked(table.sequence_at(int(ctx.rng.integers(table.probs.size))), lam=0.6)
        p_t = kernel.joint_prob(table, x_t, t)
        total = 0.0
        for x_s in _all_states(table.vocab, table.d):
            exact = kernel.exact_reverse_prob(table, x_s, x_t, s, t)
            bayes = _forward_prob(kernel, x_s, x_t, s, t) * kernel.joint_prob(table, x_s, s) / p_t
            worst_bayes = max(worst_bayes, abs(exact - bayes))
            total += exact
        worst_sum = max(worst_sum, abs(total - 1.0))
    return max(worst_bayes, worst_sum), {"bayes": worst_bayes, "normalization": worst_sum}


@check("chain_rule", "conditional rows sum to 1 and every order reproduces -log p0(x)", 1e-10)
def _chain_rule(ctx: VerifyContext):
    worst = 0.0
    for _ in range(10):
        table = ctx.table()
        x0 = table.sequence_at(int(ctx.rng.integers(table.probs.size)))
        order = ctx.rng.permutation(table.d)
        x = SequenceState.all_masked(table.d, table.vocab)
        nll = 0.0
        for position in order:
            rows = conditional_of(table, x)
            worst = max(worst, float(np.max(np.abs(rows[x.masked_positions].sum(axis=1) - 1.0))))
            nll -= math.log(rows[position, x0.tokens[position]])
            x = x.replace([position], [x0.tokens[position]])
        worst = max(worst, abs(nll + math.log(table.prob(x0))))
    return worst, {}


# =====================================================================
# LOSSES
# =====================================================================

def _random_tabular(ctx: VerifyContext, table: ExactJointTable) -> TabularModel:
    return TabularModel.random(table.vocab, table.d, ctx.rng, scale=1.5)


@check("loss_equivalence_ldce_ao", "Gauss-Legendre lambda-DCE with ceil(d/2) nodes equals exact AO", 1e-10)
def _ldce_ao(ctx: VerifyContext):
    worst = 0.0
    for _ in range(50):
        table = ctx.table()
        model = _random_tabular(ctx, table)
        x0 = table.sequence_at(int(ctx.rng.integers(table.probs.size)))
        kernel = ctx.kernel(NoiseSchedule.loglinear(), table.vocab)
        worst = max(worst, abs(exact_loss_quadrature(model, x0, kernel, LossKind.LDCE) - exact_loss_ao(model, x0)))
    return worst, {"instances": 50}


@check("loss_equivalence_residual", "exact DSE - exact t-DCE = d h(lambda(T)); t-DCE + d h = lambda-DCE on [0, lambda(T)]", 1e-8)
def _residual(ctx: VerifyContext):
    worst_dse, worst_tdce = 0.0, 0.0
    for _ in range(50):
        table = ctx.table()
        model = _random_tabular(ctx, table)
        x0 = table.sequence_at(int(ctx.rng.integers(table.probs.size)))
        kernel = ctx.kernel(ctx.schedule(), table.vocab)
        top = kernel.schedule.final_mask_prob
        residual = table.d * binary_entropy(top)
        tdce = exact_loss_quadrature(model, x0, kernel, LossKind.TDCE)
        dse = exact_loss_quadrature(model, x0, kernel, LossKind.DSE)
        ldce_top = exact_loss_quadrature(model, x0, kernel, LossKind.LDCE, upper=top)
        worst_dse = max(worst_dse, abs(dse - tdce - residual))
        worst_tdce = max(worst_tdce, abs(tdce + residual - ldce_top))
    return max(worst_dse, worst_tdce), {"dse_minus_tdce": worst_dse, "tdce_vs_ldce": worst_tdce}


@check("tdce_time_domain", "t-DCE by adaptive quadrature in t equals the lambda-domain value", 1e-6)
def _tdce_time(ctx: VerifyContext):
    worst = 0.0
    for _ in range(5):
        table = ctx.table(d_max=3)
        model = _random_tabular(ctx, table)
        x0 = table.sequence_at(int(ctx.rng.integers(table.probs.size)))
        kernel = ForwardKernel(ctx.schedule(), table.vocab)
        direct = tdce_time_integral(model, x0, kernel)
        worst = max(worst, abs(direct - exact_loss_quadrature(model, x0, kernel, LossKind.TDCE)))
    return worst, {}


@check("ao_all_orders", "subset-sum AO loss equals the average over all d! orders (d=3, N=2)", 1e-12)
def _ao_orders(ctx: VerifyContext):
    vocab = Vocab(2)
    worst = 0.0
    for _ in range(5):
        model = TabularModel.random(vocab, 3, ctx.rng, scale=1.5)
        x0 = SequenceState(ctx.rng.integers(0, 2, size=3), vocab)
        total = 0.0
        orders = list(itertools.permutations(range(3)))
        for order in orders:
            x = SequenceState.all_masked(3, vocab)
            for position in order:
                total -= math.log(model.predict(x)[position, x0.tokens[position]])
                x = x.replace([position], [x0.tokens[position]])
        worst = max(worst, abs(total / len(orders) - exact_loss_ao(model, x0)))
    return worst, {}


@check("oracle_floor", "E_p0[exact AO loss of the oracle model] = H(p0)", 1e-10)
def _oracle_floor(ctx: VerifyContext):
    worst = 0.0
    for _ in range(5):
        table = ctx.table()
        model = OracleModel(table)
        expected = sum(
            float(table.probs[i]) * exact_loss_ao(model, table.sequence_at(i)) for i in range(table.probs.size)
        )
        worst = max(worst, abs(expected - table.entropy()))
    return worst, {}


@check("gradient_check", "neural model gradients vs central differences, all four losses (relative)", 1e-4)
def _gradient_check(ctx: VerifyContext):
    vocab = Vocab(3)
    model = NeuralModel(vocab, 4, embed_dim=4, hidden=(8, 8), seed=int(ctx.rng.integers(1 << 30)), head_scale=1.0)
    kernel = ForwardKernel(NoiseSchedule.loglinear(), vocab)
    x0 = SequenceState(ctx.rng.integers(0, 3, size=4), vocab)
    params = model.get_params()
    h = 1e-5
    errors = {}
    for kind in LossKind:
        seed = 0
        while mc_loss(kind, model, x0, kernel, np.random.default_rng(seed)).n_masked == 0:
            seed += 1
        analytic = mc_loss(kind, model, x0, kernel, np.random.default_rng(seed), with_grad=True).grad
        numeric = np.zeros_like(params)
        for j in range(params.size):
            for sign in (1.0, -1.0):
                shifted = params.copy()
                shifted[j] += sign * h
                model.set_params(shifted)
                numeric[j] += sign * mc_loss(kind, model, x0, kernel, np.random.default_rng(seed)).value
            numeric[j] /= 2 * h
        model.set_params(params)
        errors[kind.value] = float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), 1e-12))
    return max(errors.values()), errors


# =====================================================================
# SAMPLER
# =====================================================================

@check("sampler_equivalence", "Tweedie and Euler unmask probabilities agree under the log-linear schedule", 1e-12)
def _sampler_equivalence(ctx: VerifyContext):
    kernel = ForwardKernel(NoiseSchedule.loglinear(), Vocab(2))
    ts = np.linspace(1e-3, 1.0, 100)
    worst = 0.0
    for t in ts:
        for frac in np.linspace(0.0, 0.99, 100):
            s = float(t * frac)
            tweedie = unmask_prob(kernel, SamplerMethod.TWEEDIE, s, float(t))
            euler = unmask_prob(kernel, SamplerMethod.EULER, s, float(t))
            worst = max(worst, abs(tweedie - euler), abs(tweedie - (t - s) / t))
    return worst, {"points": 10_000}


@check("cache_soundness", "cached and uncached sampling give identical sequences; cached nfe <= n", 0.0)
def _cache_soundness(ctx: VerifyContext):
    vocab = Vocab(3)
    mismatches, over_budget = 0, 0
    for run in range(100):
        model = TabularModel.random(vocab, 4, ctx.rng, scale=1.0)
        kernel = ForwardKernel(ctx.schedule(), vocab)
        grid = StepGrid.uniform(int(ctx.rng.integers(1, 12)), kernel.schedule.T)
        method = SamplerMethod.TWEEDIE if run % 2 else SamplerMethod.EULER
        cached = sample(model, kernel, grid, method, cache=True, seed=run)
        plain = sample(model, kernel, grid, method, cache=False, seed=run)
        mismatches += int(cached.sequences != plain.sequences)
        over_budget += int(cached.nfe[0] > grid.n)
    return float(mismatches + over_budget), {"mismatches": mismatches, "over_budget": over_budget}


@check("enfe_closed_form", "E-NFE matches n(1 - (1 - 1/n)^l); product-form r_k telescopes", 1e-12)
def _enfe(ctx: VerifyContext):
    kernel = ForwardKernel(NoiseSchedule.loglinear(), Vocab(2))
    worst = 0.0
    for n in (1, 2, 8, 32, 128):
        grid = StepGrid.uniform(n)
        product = step_unmask_probs(kernel, grid, SamplerMethod.TWEEDIE)
        closed = step_unmask_probs(kernel, grid, SamplerMethod.TWEEDIE, closed_form=True)
        worst = max(worst, float(np.max(np.abs(product - closed))))
        for l in (1, 8, 64):
            expected = n * (1.0 - (1.0 - 1.0 / n) ** l)
            for method in (SamplerMethod.TWEEDIE, SamplerMethod.EULER):
                worst = max(worst, abs(enfe_analytic(kernel, grid, method, l) - expected) / expected)
    return worst, {}


# =====================================================================
# RUNNER
# =====================================================================

def run_verification(
    names: Optional[Sequence[str]] = None,
    perturb_score_scale: float = 0.0,
    seed: int = 0,
) -> VerificationReport:
    """
    Run the registered checks.

    Args:
        names: Subset of check names; all when None
        perturb_score_scale: Relative error injected into the concrete-score
            scale (negative control; 0 for a real run)
        seed: Seed of the random tiny instances

    Returns:
        VerificationReport with one CheckResult per check

    Raises:
        ConfigError: If a name matches no registered check
    """
    selected = [c for c in CHECKS if names is None or c.name in names]
    if names is not None:
        unknown = sorted(set(names) - {c.name for c in CHECKS})
        if unknown:
            raise ConfigError(f"Unknown checks: {unknown}", key_path="only")

    start = time.time()
    results = []
    for item in selected:
        ctx = VerifyContext(rng=np.random.default_rng([seed, len(results)]), perturb_score_scale=perturb_score_scale)
        began = time.time()
        try:
            error, details = item.fn(ctx)
        except Exception as e:
            logger.error(f"Check {item.name} raised {type(e).__name__}: {e}", exc_info=True)
            error, details = math.inf, {"exception": f"{type(e).__name__}: {e}"}
        passed = bool(error <= item.tolerance)
        results.append(CheckResult(
            name=item.name,
            description=item.description,
            passed=passed,
            error=float(error),
            tolerance=item.tolerance,
            elapsed_s=time.time() - began,
            details=details,
        ))
        logger.info(f"{'PASS' if passed else 'FAIL'} {item.name}: error {error:.3e} (tol {item.tolerance:.0e})")

    report = VerificationReport(checks=results, elapsed_s=time.time() - start)
    logger.info(f"Verification finished in {report.elapsed_s:.2f}s: {len(report.failed)} failed")
    return report
