"""
The absorbing forward process and its analytic consequences.

The rate matrix Q_t = sigma(t) Q^absorb is never materialized: each token
independently survives until time t with probability exp(-sigma_bar(t)) and
is otherwise absorbed into the mask. Joint law, concrete score and exact
reverse distribution all follow in closed form from that factorization.
"""

from dataclasses import dataclass

import numpy as np

from radd.diffusion.schedule import NoiseSchedule
from radd.diffusion.space import ExactJointTable, SequenceState, Vocab
from radd.errors import DegenerateContextError, DomainError, InvalidTransitionError


@dataclass(frozen=True)
class ForwardKernel:
    """Closed-form transitions of the absorbing process for one schedule and vocabulary."""

    schedule: NoiseSchedule
    vocab: Vocab

    def _check_interval(self, s: float, t: float, strict: bool = False) -> None:
        if s > t or (strict and s == t):
            raise DomainError(f"Need s {'<' if strict else '<='} t, got s={s}, t={t}")

    def _interval_survival(self, s: float, t: float) -> float:
        # exp(-(sigma_bar(t) - sigma_bar(s)))
        return float(self.schedule.survival(t)) / float(self.schedule.survival(s))

    def score_scale(self, t: float) -> float:
        """exp(-sigma_bar(t)) / (1 - exp(-sigma_bar(t)))."""
        return float(self.schedule.score_scale(t))

    # -----------------------------------------------------------------
    # single-token transitions
    # -----------------------------------------------------------------

    def transition_prob(self, x_s: int, x_t: int, s: float, t: float) -> float:
        """
        p(x_t at time t | x_s at time s) for one token.

        Raises:
            DomainError: If s > t
        """
        self._check_interval(s, t)
        mask_id = self.vocab.mask_id
        if x_s == mask_id:
            return 1.0 if x_t == mask_id else 0.0
        keep = self._interval_survival(s, t)
        if x_t == x_s:
            return keep
        if x_t == mask_id:
            return 1.0 - keep
        return 0.0

    def transition_row(self, x_s: int, s: float, t: float) -> np.ndarray:
        """Distribution over [0, N] of the token at t given x_s at s."""
        row = np.zeros(self.vocab.size_with_mask)
        for x_t in (x_s, self.vocab.mask_id):
            row[x_t] = self.transition_prob(x_s, x_t, s, t)
        return row

    # -----------------------------------------------------------------
    # sequence-level forward sampling
    # -----------------------------------------------------------------

    def mask_with_probability(self, x0: SequenceState, lam: float, rng: np.random.Generator) -> SequenceState:
        """Mask each position independently with probability lam."""
        return mask_with_probability(x0, lam, rng)

    def sample_forward(self, x0: SequenceState, t: float, rng: np.random.Generator) -> SequenceState:
        """Draw x_t ~ p_{t|0}(. | x0): independent masking with probability lambda(t)."""
        if not x0.is_clean:
            raise DomainError(f"Forward sampling starts from a clean sequence, got {x0}")
        return self.mask_with_probability(x0, float(self.schedule.mask_prob(t)), rng)

    # -----------------------------------------------------------------
    # analytic laws against an oracle table
    # -----------------------------------------------------------------

    def joint_prob(self, p0: ExactJointTable, x_t: SequenceState, t: float) -> float:
        """
        p_t(x_t) = lambda^d1 (1 - lambda)^d2 p0(x_t^UM).
        """
        lam = float(self.schedule.mask_prob(t))
        return (lam ** x_t.n_masked) * ((1.0 - lam) ** x_t.n_unmasked) * p0.marginal(x_t)

    def concrete_score(
        self,
        p0: ExactJointTable,
        x_t: SequenceState,
        i: int,
        token: int,
        t: float,
    ) -> float:
        """
        p_t(x_t with position i set to token) / p_t(x_t), in factored form.

        Equals score_scale(t) * p0(token | x_t^UM).

        Raises:
            InvalidTransitionError: If position i is not masked or token is the mask
            DomainError: If t <= 0
        """
        if x_t.tokens[i] != self.vocab.mask_id:
            raise InvalidTransitionError(
                f"Concrete score is only defined for masked positions; position {i} holds {x_t.tokens[i]}"
            )
        if token == self.vocab.mask_id or not 0 <= token < self.vocab.n_tokens:
            raise InvalidTransitionError(f"Target token must be a data token, got {token}")
        if t <= 0.0:
            raise DomainError(f"Concrete score needs t > 0, got {t}")

        context_prob = p0.marginal(x_t)
        if context_prob <= 0.0:
            raise DegenerateContextError(f"Context {x_t} has probability zero under p0")
        filled = x_t.replace([i], [token])
        return self.score_scale(t) * p0.marginal(filled) / context_prob

    def exact_reverse_prob(
        self,
        p0: ExactJointTable,
        x_s: SequenceState,
        x_t: SequenceState,
        s: float,
        t: float,
    ) -> float:
        """
        Exact reverse transition p(x_s | x_t) for 0 <= s < t.

        Zero unless every unmasked token of x_t appears unchanged in x_s.
        Otherwise
            (a_s - a_t)^dd (1 - a_s)^(d1 - dd) / (1 - a_t)^d1 * p0(x_s^UM) / p0(x_t^UM)
        with a = exp(-sigma_bar), d1 the masked count of x_t and dd the number
        of positions unmasked between t and s.

        Raises:
            DegenerateContextError: If p0(x_t^UM) = 0
        """
        self._check_interval(s, t, strict=True)
        context_prob = p0.marginal(x_t)
        if context_prob <= 0.0:
            raise DegenerateContextError(f"Context {x_t} has probability zero under p0")
        if not x_t.agrees_on_unmasked(x_s):
            return 0.0

        a_s = float(self.schedule.survival(s))
        a_t = float(self.schedule.survival(t))
        d1 = x_t.n_masked
        dd = d1 - x_s.n_masked
        # power form keeps s = 0 finite (0**0 == 1)
        weight = ((a_s - a_t) ** dd) * ((1.0 - a_s) ** (d1 - dd)) / ((1.0 - a_t) ** d1)
        return weight * p0.marginal(x_s) / context_prob


def mask_with_probability(x0: SequenceState, lam: float, rng: np.random.Generator) -> SequenceState:
    """
    Mask each position of x0 independently with probability lam.

    Consumes exactly d uniforms from rng, one per position left to right.
    """
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"Mask probability must lie in [0, 1], got {lam}")
    hit = rng.random(x0.d) < lam
    tokens = np.where(hit, x0.vocab.mask_id, x0.tokens)
    return SequenceState(tokens, x0.vocab)
