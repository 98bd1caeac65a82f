"""Closed-form safety probability and empirical certification.

If the risk condition holds with (beta, alpha, epsilon) everywhere on the
barrier's sublevel set, the closed loop stays safe for K steps with
probability at least 1 - delta, where

    delta = 1 - (1 - exp(-beta*(alpha*h0 + epsilon)))
                * (1 - exp(-beta*epsilon))^(K-1)

with h0 the barrier value at the initial state.  Note that epsilon = 0
makes the multi-step bound vacuous (delta = 1 exactly for K >= 2) while
the single-step bound remains informative.

``certify_grid`` spot-checks the condition empirically on a finite state
sample with a high-accuracy risk estimate (N samples, N >> the filters'
S), since exhaustive verification over continuous sets is out of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import MasModel
from .errors import ContractViolationError, GuaranteeDomainError
from .filters import FilterConfig, check_condition, draw_risk_samples
from .value import Barrier


def compute_delta(beta: float, alpha: float, epsilon: float, h0: float, k_steps: int) -> float:
    """Exact evaluation of the K-step violation-probability bound."""
    if beta <= 0:
        raise GuaranteeDomainError(f"beta must be > 0, got {beta}")
    if not 0.0 <= alpha <= 1.0:
        raise GuaranteeDomainError(f"alpha must lie in [0, 1], got {alpha}")
    if epsilon < 0:
        raise GuaranteeDomainError(f"epsilon must be >= 0, got {epsilon}")
    if h0 < 0:
        raise GuaranteeDomainError(
            f"initial barrier value must be >= 0, got {h0} (outside guaranteed region)"
        )
    if k_steps < 1:
        raise GuaranteeDomainError(f"k_steps must be >= 1, got {k_steps}")
    # 1 - (1 - a) * b rearranged to 1 - b + a*b: exact for the K = 1
    # (b = 1) and epsilon = 0 (b = 0) corner cases.
    a = math.exp(-beta * (alpha * h0 + epsilon))
    b = (1.0 - math.exp(-beta * epsilon)) ** (k_steps - 1)
    return 1.0 - b + a * b


@dataclass(frozen=True)
class GuaranteeReport:
    """Empirical certification summary over a state sample.

    ``h_min`` is the smallest barrier value among evaluated states (the
    weakest point of the sample); ``delta`` is the K-step bound at that
    value, or None when no state lay in the sublevel set.
    """

    beta: float
    alpha: float
    epsilon: float
    k_steps: int
    h_min: float | None
    delta: float | None
    margins: np.ndarray
    pass_fraction: float
    n_states: int
    n_evaluated: int
    n_skipped: int

    @property
    def vacuous(self) -> bool:
        """True when the multi-step bound carries no information (delta = 1)."""
        return self.delta is not None and self.k_steps >= 2 and self.epsilon == 0.0


def certify_grid(
    model: MasModel,
    barrier: Barrier,
    policy,
    states,
    cfg: FilterConfig,
    seed: int,
    n_oracle_samples: int,
    k_steps: int = 1,
) -> GuaranteeReport:
    """Check the risk condition at policy actions over sampled states.

    States with a negative barrier value are skipped (the guarantee is
    only claimed on the sublevel set).  Each evaluated state gets its own
    derived sample seed, so the report is deterministic given ``seed``.
    """
    if n_oracle_samples < 1:
        raise ContractViolationError(f"n_oracle_samples must be >= 1, got {n_oracle_samples}")
    states = list(states)
    if not states:
        raise ContractViolationError("certify_grid needs at least one state")
    margins = []
    h_min = None
    n_skipped = 0
    for idx, x in enumerate(states):
        h_now = float(barrier.value(model.flatten_state(model.validate_state(x))))
        if h_now < 0:
            n_skipped += 1
            continue
        h_min = h_now if h_min is None else min(h_min, h_now)
        samples = draw_risk_samples(
            model, n_oracle_samples, np.random.SeedSequence([seed, idx])
        )
        _, margin = check_condition(model, barrier, x, policy(x), cfg, samples=samples)
        margins.append(margin)
    margins = np.array(margins)
    n_eval = margins.size
    pass_fraction = float(np.mean(margins >= cfg.tolerance)) if n_eval else 0.0
    delta = (
        compute_delta(cfg.beta, cfg.alpha, cfg.epsilon, h_min, k_steps)
        if h_min is not None
        else None
    )
    return GuaranteeReport(
        beta=cfg.beta,
        alpha=cfg.alpha,
        epsilon=cfg.epsilon,
        k_steps=k_steps,
        h_min=h_min,
        delta=delta,
        margins=margins,
        pass_fraction=pass_fraction,
        n_states=len(states),
        n_evaluated=n_eval,
        n_skipped=n_skipped,
    )
