"""Risk-sensitive safety filters.

All filters enforce the sampled risk condition

    risk_lower([h(x+_s)]_s, beta)  >=  alpha * h(x) + epsilon

where x+_s = f(x, u, omega_s; theta_s) over S uncertainty samples drawn
from a seed.  Within one filter solve the same samples are reused for
every candidate action (common random numbers), so feasibility
comparisons are consistent and the worst-case filter's guarantee is
exact over its grid.

Four variants:

* ``centralized_filter``   - joint minimization over all agents' actions.
* ``pessimistic_filter``   - per-agent; the condition must survive the worst
  grid combination of all other agents' actions.  Infeasibility is an
  expected outcome, not a fault.
* ``proximity_filter``     - per-agent closed-form projection of the nominal
  action onto a ball around the safe policy's action; always feasible.
* ``switching_filter``     - pessimistic when feasible, proximity otherwise;
  well-defined everywhere the barrier is nonnegative.

Continuous minimization is approximated by a distance-ordered grid search
(both benchmark presets have one action dimension per agent), with the
nominal action always tried first, so whenever the nominal action is
feasible it is returned unchanged.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dynamics import MasModel
from .errors import ContractViolationError, GuaranteeDomainError
from .risk import risk_lower
from .value import Barrier


class Branch(str, Enum):
    CENTRALIZED = "centralized"
    PESSIMISTIC = "pessimistic"
    PROXIMITY = "proximity"


@dataclass(frozen=True)
class FilterConfig:
    """Parameters shared by all filters.

    (alpha, epsilon) are the enforced condition parameters; (alpha_bar,
    epsilon_bar) are the margins the safe policy is assumed to satisfy,
    used only by the margin-derived proximity radius.  ``n_samples`` is
    the risk sample count S, ``grid_size`` the per-dimension candidate
    count G, and ``tolerance`` the feasibility slack on the margin.
    """

    alpha: float = 0.1
    epsilon: float = 0.0
    alpha_bar: float = 0.2
    epsilon_bar: float = 0.0
    beta: float = 1.0
    xi: float = 5.0
    n_samples: int = 5
    grid_size: int = 9
    radius_mode: str = "fixed"          # fixed | margin
    radius: float = 0.05
    lipschitz_h: float = 1.0
    lipschitz_fu: float = 1.0
    tolerance: float = 0.0
    clip_to_box: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ContractViolationError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.epsilon < 0:
            raise ContractViolationError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.alpha_bar <= 1.0:
            raise ContractViolationError(f"alpha_bar must lie in [0, 1], got {self.alpha_bar}")
        if self.epsilon_bar < 0:
            raise ContractViolationError(f"epsilon_bar must be >= 0, got {self.epsilon_bar}")
        if self.beta <= 0:
            raise ContractViolationError(f"beta must be > 0, got {self.beta}")
        if self.n_samples < 1:
            raise ContractViolationError(f"n_samples must be >= 1, got {self.n_samples}")
        if self.grid_size < 2:
            raise ContractViolationError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.radius_mode not in ("fixed", "margin"):
            raise ContractViolationError(f"unknown radius mode {self.radius_mode!r}")
        if self.radius < 0:
            raise ContractViolationError(f"radius must be >= 0, got {self.radius}")
        if self.tolerance < 0:
            raise ContractViolationError(f"tolerance must be >= 0, got {self.tolerance}")
        if self.radius_mode == "margin":
            if not (self.alpha < self.alpha_bar and self.epsilon <= self.epsilon_bar):
                raise ContractViolationError(
                    "margin-derived radius requires alpha < alpha_bar and "
                    "epsilon <= epsilon_bar"
                )
            if self.lipschitz_h <= 0 or self.lipschitz_fu <= 0:
                raise ContractViolationError("Lipschitz constants must be > 0")


@dataclass(frozen=True)
class FilterOutcome:
    """Result of one filter solve.

    ``action`` is the solving agent's vector for the per-agent filters
    and the full joint action for the centralized one.  ``feasible``
    records whether the worst-case (pessimistic) branch admitted a
    solution; ``margin`` is the achieved risk margin at the chosen action
    (the worst case over the other agents' grid for per-agent solves).
    """

    action: object
    branch: Branch
    feasible: bool
    margin: float
    agent: int | None = None


def draw_risk_samples(model: MasModel, n_samples: int, seed) -> list:
    """The S uncertainty samples a filter solve shares across its candidates."""
    if n_samples < 1:
        raise ContractViolationError(f"n_samples must be >= 1, got {n_samples}")
    rng = np.random.default_rng(seed)
    return [model.sample_uncertainty(rng) for _ in range(n_samples)]


def check_condition(
    model: MasModel,
    barrier: Barrier,
    x,
    u,
    cfg: FilterConfig,
    seed=None,
    samples: list | None = None,
) -> tuple:
    """Evaluate the sampled risk condition at (x, u).

    Returns (satisfied, margin) with

        margin = risk_lower([h(f(x, u, s))]_s, beta) - alpha * h(x) - epsilon

    and satisfied iff margin >= tolerance.  Samples are drawn from
    ``seed`` unless an explicit shared sample list is supplied.
    """
    if samples is None:
        samples = draw_risk_samples(model, cfg.n_samples, seed)
    x = model.validate_state(x)
    u = model.validate_action(u)
    margin = _margin_fn(model, barrier, x, cfg, samples)(u)
    return margin >= cfg.tolerance, margin


def _margin_fn(model: MasModel, barrier: Barrier, x: np.ndarray, cfg: FilterConfig, samples: list):
    """Margin evaluator for one solve: x validated and h(x) computed once.

    The returned closure trusts its action argument (the filters assemble
    candidates internally).  check_condition funnels through the same
    closure, so every margin in the package comes from one arithmetic
    path and re-evaluations are bitwise reproducible.
    """
    h_now = float(barrier.value(x.reshape(-1)))
    batch = model.transition_batch
    if batch is not None:
        thetas = np.array([s.theta for s in samples])
        noises = np.stack([s.noise for s in samples])

    def margin_of(u) -> float:
        if batch is not None:
            nexts = batch(x, u, thetas, noises).reshape(len(samples), -1)
        else:
            nexts = np.stack([model.transition(x, u, s).reshape(-1) for s in samples])
        values = np.asarray(barrier.value(nexts), dtype=float)
        if not np.all(np.isfinite(values)):
            raise ContractViolationError("barrier produced non-finite values")
        return risk_lower(values, cfg.beta) - cfg.alpha * h_now - cfg.epsilon

    return margin_of


def _ordered_candidates(nominal: np.ndarray, cfg: FilterConfig, low: float, high: float) -> np.ndarray:
    """Nominal action plus the per-dimension grid, in ascending distance to nominal.

    The stable sort keeps the nominal action first among ties, so a
    feasible nominal action is always returned exactly.
    """
    dims = nominal.size
    axis = np.linspace(low, high, cfg.grid_size)
    grid = np.stack([g.ravel() for g in np.meshgrid(*([axis] * dims), indexing="ij")], axis=-1)
    cands = np.vstack([nominal[None, :], grid])
    order = np.argsort(np.sum((cands - nominal[None, :]) ** 2, axis=1), kind="stable")
    return cands[order]


def _other_agent_combos(model: MasModel, agent: int, cfg: FilterConfig) -> list:
    """Grid combinations of all other actuated agents' actions.

    Returns a list of dicts {agent index: action vector}; the single
    empty dict when no other agent is actuated (the worst case then
    degenerates to the plain condition).
    """
    others = [j for j in model.actuated_agents if j != agent]
    axis = np.linspace(model.action_low, model.action_high, cfg.grid_size)
    per_agent = [[np.full(model.action_dims[j], v) for v in axis] for j in others]
    combos = []
    for combo in itertools.product(*per_agent):
        combos.append(dict(zip(others, combo)))
    return combos


def _assemble(model: MasModel, parts: dict) -> list:
    return [parts.get(i, np.zeros(d)) for i, d in enumerate(model.action_dims)]


def centralized_filter(
    model: MasModel,
    barrier: Barrier,
    x,
    pi_nom,
    cfg: FilterConfig,
    seed,
) -> FilterOutcome | None:
    """Joint filter: nearest feasible joint action to the nominal one.

    Candidates are the nominal joint action plus the grid over every
    actuated agent's box, examined in ascending distance to nominal with
    one shared sample draw.  Returns None when no candidate satisfies the
    condition.
    """
    samples = draw_risk_samples(model, cfg.n_samples, seed)
    x = model.validate_state(x)
    margin_of = _margin_fn(model, barrier, x, cfg, samples)
    u_nom = pi_nom(x)
    actuated = model.actuated_agents
    splits = np.cumsum([model.action_dims[i] for i in actuated])[:-1]
    nom_flat = np.concatenate([np.asarray(u_nom[i], dtype=float) for i in actuated])
    for cand in _ordered_candidates(nom_flat, cfg, model.action_low, model.action_high):
        parts = dict(zip(actuated, np.split(cand, splits)))
        u = _assemble(model, parts)
        margin = margin_of(u)
        if margin >= cfg.tolerance:
            return FilterOutcome(action=u, branch=Branch.CENTRALIZED,
                                 feasible=True, margin=margin)
    return None


def pessimistic_filter(
    model: MasModel,
    barrier: Barrier,
    agent: int,
    x,
    pi_nom,
    cfg: FilterConfig,
    seed,
) -> FilterOutcome | None:
    """Per-agent worst-case filter.

    For each candidate u_i (nominal first, then the grid in ascending
    distance to nominal) the margin is minimized over the grid of all
    other actuated agents' actions, with one shared sample draw reused
    across the entire solve.  Returns the nearest candidate whose
    worst-case margin clears the tolerance, or None: infeasibility is an
    expected outcome near the constraint boundary, not a fault.
    """
    if model.action_dims[agent] == 0:
        raise ContractViolationError(f"agent {agent} is unactuated")
    samples = draw_risk_samples(model, cfg.n_samples, seed)
    x = model.validate_state(x)
    margin_of = _margin_fn(model, barrier, x, cfg, samples)
    u_nom = pi_nom(x)
    combos = _other_agent_combos(model, agent, cfg)
    nom_i = np.asarray(u_nom[agent], dtype=float)
    # The combo that defeated the previous candidate is tried first; the
    # scanned set is unchanged, so feasibility and the recorded worst-case
    # margin are unaffected.
    first = 0
    for cand in _ordered_candidates(nom_i, cfg, model.action_low, model.action_high):
        worst = np.inf
        feasible = True
        for j in range(len(combos)):
            idx = first if j == 0 else (j - 1 if j <= first else j)
            margin = margin_of(_assemble(model, {agent: cand, **combos[idx]}))
            worst = min(worst, margin)
            if margin < cfg.tolerance:
                feasible = False
                first = idx
                break
        if feasible:
            return FilterOutcome(action=cand, branch=Branch.PESSIMISTIC,
                                 feasible=True, margin=float(worst), agent=agent)
    return None


def worst_case_margin(
    model: MasModel,
    barrier: Barrier,
    agent: int,
    action: np.ndarray,
    x,
    cfg: FilterConfig,
    samples: list,
) -> float:
    """Exact minimum margin of one agent's action over the others' grid."""
    x = model.validate_state(x)
    margin_of = _margin_fn(model, barrier, x, cfg, samples)
    action = np.asarray(action, dtype=float)
    worst = np.inf
    for combo in _other_agent_combos(model, agent, cfg):
        worst = min(worst, margin_of(_assemble(model, {agent: action, **combo})))
    return float(worst)


def proximity_radius(model: MasModel, cfg: FilterConfig, h_now: float | None = None) -> float:
    """Ball radius around the safe policy's action.

    In fixed mode the configured constant; in margin mode

        ((alpha_bar - alpha) * h(x) + epsilon_bar - epsilon)
            / (M * L_h * L_fu)

    which is negative outside the guaranteed region (h too small) and
    then raises GuaranteeDomainError.
    """
    if cfg.radius_mode == "fixed":
        return cfg.radius
    if h_now is None:
        raise ContractViolationError("margin-derived radius needs the barrier value")
    r = ((cfg.alpha_bar - cfg.alpha) * h_now + cfg.epsilon_bar - cfg.epsilon) / (
        model.n_agents * cfg.lipschitz_h * cfg.lipschitz_fu
    )
    if r < 0:
        raise GuaranteeDomainError(
            f"margin-derived proximity radius is negative (h = {h_now:.6g}); "
            "the state is outside the guaranteed region"
        )
    return float(r)


def _project_ball(v: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    d = float(np.linalg.norm(v - center))
    if d <= radius:
        return v
    return center + radius * (v - center) / d


def proximity_filter(
    model: MasModel,
    agent: int,
    x,
    pi_nom,
    pi_safe,
    cfg: FilterConfig,
    barrier: Barrier | None = None,
) -> np.ndarray:
    """Closed-form projection of the nominal action onto the safety ball.

    Always feasible: returns the nominal action if it already lies within
    the radius of the safe policy's action, otherwise the boundary point
    of the ball nearest to nominal.  ``barrier`` is only needed in
    margin-derived radius mode.
    """
    if model.action_dims[agent] == 0:
        raise ContractViolationError(f"agent {agent} is unactuated")
    h_now = None
    if cfg.radius_mode == "margin":
        if barrier is None:
            raise ContractViolationError("margin-derived radius needs a barrier")
        h_now = float(barrier.value(model.flatten_state(x)))
    r = proximity_radius(model, cfg, h_now)
    u_n = np.asarray(pi_nom(x)[agent], dtype=float)
    u_s = np.asarray(pi_safe(x)[agent], dtype=float)
    u = _project_ball(u_n, u_s, r)
    if cfg.clip_to_box:
        u = _clip_ball_box(u, u_s, r, model.action_low, model.action_high)
    return u


def _clip_ball_box(u, center, radius, low, high, iterations: int = 50, tol: float = 1e-9):
    """Re-project onto the ball/box intersection by alternating projection.

    The ball center is the safe policy's (already box-clipped) action, so
    the intersection is nonempty; on non-convergence the center itself is
    the safe fallback.
    """
    v = u.copy()
    for _ in range(iterations):
        nxt = _project_ball(np.clip(v, low, high), center, radius)
        if float(np.max(np.abs(nxt - v))) < tol:
            in_box = np.all(nxt >= low - tol) and np.all(nxt <= high + tol)
            if in_box:
                return np.clip(nxt, low, high)
        v = nxt
    return center.copy()


def switching_filter(
    model: MasModel,
    barrier: Barrier,
    agent: int,
    x,
    pi_nom,
    pi_safe,
    cfg: FilterConfig,
    seed,
) -> FilterOutcome:
    """Pessimistic action when feasible, proximity action otherwise.

    Well-defined for every state with a nonnegative barrier value; the
    branch flag records which path produced the action.  For the
    proximity branch the recorded margin is the worst-case margin of the
    chosen action under the same shared samples.
    """
    out = pessimistic_filter(model, barrier, agent, x, pi_nom, cfg, seed)
    if out is not None:
        return out
    u = proximity_filter(model, agent, x, pi_nom, pi_safe, cfg, barrier=barrier)
    samples = draw_risk_samples(model, cfg.n_samples, seed)
    margin = worst_case_margin(model, barrier, agent, u, x, cfg, samples)
    return FilterOutcome(action=u, branch=Branch.PROXIMITY,
                         feasible=False, margin=margin, agent=agent)
