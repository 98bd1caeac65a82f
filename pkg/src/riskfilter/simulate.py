"""Seeded closed-loop rollouts and experiment metrics.

Seeding scheme: rollout i of a batch uses seed ``base + i``; within a
rollout the coupling parameter is drawn once (it is resampled per
rollout, not per step) and process noise fresh per step, while each
filter solve derives its own seed from (rollout seed, step, agent).
This reproduces every byte of output from (config, base seed) while
keeping the per-agent solves independent, mirroring the setting where
agents share state but cannot coordinate actions.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .dynamics import JointAction, MasModel, UncertaintySample
from .errors import ContractViolationError, RiskFilterError
from .filters import (
    Branch,
    FilterConfig,
    centralized_filter,
    proximity_filter,
    switching_filter,
)
from .policies import Policy
from .value import Barrier


@dataclass(frozen=True)
class StepDecision:
    """One controller invocation: the joint action plus per-agent filter flags.

    ``branches`` and ``feasible`` are None for unfiltered controllers;
    for filtered ones they hold one entry per agent (empty string / True
    for unactuated agents, which no filter touches).
    """

    action: JointAction
    branches: tuple | None = None
    feasible: tuple | None = None


@dataclass(frozen=True)
class PolicyController:
    """Applies a raw policy; records no filter flags."""

    policy: Policy

    def act(self, model: MasModel, x, rollout_seed: int, step: int) -> StepDecision:
        return StepDecision(action=self.policy(x))


@dataclass(frozen=True)
class SwitchingController:
    """Independent per-agent switching filters around the nominal policy."""

    barrier: Barrier
    nominal: Policy
    safe: Policy
    cfg: FilterConfig

    def act(self, model: MasModel, x, rollout_seed: int, step: int) -> StepDecision:
        parts = {}
        branches = [""] * model.n_agents
        feasible = [True] * model.n_agents
        for agent in model.actuated_agents:
            seed = np.random.SeedSequence([rollout_seed, step, agent])
            out = switching_filter(
                model, self.barrier, agent, x, self.nominal, self.safe, self.cfg, seed
            )
            parts[agent] = np.asarray(out.action, dtype=float)
            branches[agent] = out.branch.value
            feasible[agent] = out.feasible
        action = [parts.get(i, np.zeros(d)) for i, d in enumerate(model.action_dims)]
        return StepDecision(action=action, branches=tuple(branches), feasible=tuple(feasible))


@dataclass(frozen=True)
class CentralizedController:
    """Joint filter solve per step; falls back to per-agent proximity actions
    when the joint problem is infeasible."""

    barrier: Barrier
    nominal: Policy
    safe: Policy
    cfg: FilterConfig

    def act(self, model: MasModel, x, rollout_seed: int, step: int) -> StepDecision:
        seed = np.random.SeedSequence([rollout_seed, step])
        out = centralized_filter(model, self.barrier, x, self.nominal, self.cfg, seed)
        branches = [""] * model.n_agents
        feasible = [True] * model.n_agents
        if out is not None:
            for agent in model.actuated_agents:
                branches[agent] = out.branch.value
            return StepDecision(action=out.action, branches=tuple(branches),
                                feasible=tuple(feasible))
        parts = {}
        for agent in model.actuated_agents:
            parts[agent] = proximity_filter(
                model, agent, x, self.nominal, self.safe, self.cfg, barrier=self.barrier
            )
            branches[agent] = Branch.PROXIMITY.value
            feasible[agent] = False
        action = [parts.get(i, np.zeros(d)) for i, d in enumerate(model.action_dims)]
        return StepDecision(action=action, branches=tuple(branches), feasible=tuple(feasible))


@dataclass(frozen=True)
class RolloutRecord:
    """One seeded trajectory with everything the metrics need.

    ``states`` has T+1 rows; ``safe`` flags every state including the
    initial one, but violation metrics count only the T post-transition
    states.  Branch and feasibility flags are None for unfiltered runs.
    """

    seed: int
    theta: float
    states: np.ndarray            # (T+1, M, d_x)
    actions: list                 # T joint actions
    safe: np.ndarray              # (T+1,) bool
    rewards: np.ndarray           # (T,)
    branches: np.ndarray | None   # (T, M) unicode
    feasible: np.ndarray | None   # (T, M) bool

    @property
    def n_steps(self) -> int:
        return len(self.actions)


def rollout(
    model: MasModel,
    controller,
    x0,
    n_steps: int,
    seed: int,
    theta: float | None = None,
) -> RolloutRecord:
    """Run the closed loop for n_steps from x0; deterministic given seed.

    ``theta`` overrides the per-rollout coupling draw (useful for
    deterministic checks).  Controller errors propagate with the failing
    step index attached as ``step_index``.
    """
    if n_steps < 0:
        raise ContractViolationError(f"n_steps must be >= 0, got {n_steps}")
    x = model.validate_state(x0)
    rng = np.random.default_rng(seed)
    theta_drawn = float(rng.standard_normal())
    th = theta_drawn if theta is None else float(theta)

    states = [x]
    actions = []
    safe = [model.is_safe(x)]
    rewards = []
    filtered = None
    branches = []
    feasible = []
    for k in range(n_steps):
        try:
            decision = controller.act(model, x, seed, k)
        except RiskFilterError as exc:
            exc.step_index = k
            raise
        if filtered is None:
            filtered = decision.branches is not None
        if filtered:
            branches.append(decision.branches)
            feasible.append(decision.feasible)
        rewards.append(model.reward(x, decision.action))
        noise = rng.standard_normal((model.n_agents, model.state_dim)) * model.noise_scale
        x = model.step(x, decision.action, UncertaintySample(th, noise))
        states.append(x)
        safe.append(model.is_safe(x))
        actions.append(decision.action)
    return RolloutRecord(
        seed=int(seed),
        theta=th,
        states=np.stack(states),
        actions=actions,
        safe=np.array(safe, dtype=bool),
        rewards=np.array(rewards),
        branches=np.array(branches) if filtered else None,
        feasible=np.array(feasible, dtype=bool) if filtered else None,
    )


@dataclass(frozen=True)
class Metrics:
    """Aggregate quantities over a set of rollouts.

    Violations count (rollout, step) pairs whose post-transition state
    leaves the safe set; the MSE compares position components against the
    reference, averaged over rollouts, steps, and agents; the feasibility
    rate is the fraction of filtered (step, agent) solves whose
    pessimistic branch was feasible.
    """

    violation_count: int
    violation_rate: float
    mse: float
    cumulative_reward: float
    feasibility_rate: float | None
    per_agent_feasibility: tuple | None
    branch_usage: dict


def compute_metrics(records, model: MasModel) -> Metrics:
    records = list(records)
    if not records:
        raise ContractViolationError("compute_metrics needs at least one rollout")
    violations = sum(int(np.sum(~r.safe[1:])) for r in records)
    total_steps = sum(r.n_steps for r in records)
    sq_err = []
    for r in records:
        if r.n_steps:
            sq_err.append((r.states[1:, :, 0] - model.x_ref[0]) ** 2)
    mse = float(np.mean(np.concatenate([e.ravel() for e in sq_err]))) if sq_err else 0.0
    cum_reward = float(np.mean([r.rewards.sum() for r in records]))

    feas_rate = None
    per_agent = None
    usage: Counter = Counter()
    filtered = [r for r in records if r.branches is not None]
    if filtered:
        actuated = model.actuated_agents
        flags = np.concatenate([r.feasible[:, actuated] for r in filtered], axis=0)
        feas_rate = float(flags.mean()) if flags.size else 1.0
        per_agent = tuple(float(v) for v in flags.mean(axis=0)) if flags.size else ()
        for r in filtered:
            usage.update(r.branches[:, actuated].ravel().tolist())
    return Metrics(
        violation_count=violations,
        violation_rate=violations / total_steps if total_steps else 0.0,
        mse=mse,
        cumulative_reward=cum_reward,
        feasibility_rate=feas_rate,
        per_agent_feasibility=per_agent,
        branch_usage=dict(usage),
    )


@dataclass(frozen=True)
class SweepRow:
    """One parameter setting's aggregate metrics with across-rollout spreads."""

    param_name: str
    param_value: float
    violations_mean: float
    violations_std: float
    mse_mean: float
    mse_std: float
    reward_mean: float
    reward_std: float
    feas_rate_mean: float


def sweep(
    model: MasModel,
    controller_factory,
    param_name: str,
    values,
    n_rollouts: int,
    n_steps: int,
    base_seed: int,
    init_state,
) -> list:
    """Run n_rollouts per parameter value and aggregate per-rollout metrics.

    ``controller_factory(value)`` builds the controller for one setting;
    ``init_state`` is either a fixed joint state or a callable drawing one
    from a generator (each rollout derives its own).  Rollout seeds are
    shared across parameter values, so comparisons use common random
    numbers.
    """
    values = list(values)
    if not values:
        raise ContractViolationError("sweep needs at least one parameter value")
    rows = []
    for v in values:
        controller = controller_factory(v)
        per_rollout = []
        for i in range(n_rollouts):
            seed = base_seed + i
            x0 = (
                init_state(np.random.default_rng(np.random.SeedSequence([seed, 977])))
                if callable(init_state)
                else init_state
            )
            rec = rollout(model, controller, x0, n_steps, seed)
            per_rollout.append(compute_metrics([rec], model))
        viol = np.array([m.violation_count for m in per_rollout], dtype=float)
        mses = np.array([m.mse for m in per_rollout])
        rews = np.array([m.cumulative_reward for m in per_rollout])
        feas = [m.feasibility_rate for m in per_rollout if m.feasibility_rate is not None]
        rows.append(SweepRow(
            param_name=param_name,
            param_value=float(v),
            violations_mean=float(viol.mean()),
            violations_std=float(viol.std()),
            mse_mean=float(mses.mean()),
            mse_std=float(mses.std()),
            reward_mean=float(rews.mean()),
            reward_std=float(rews.std()),
            feas_rate_mean=float(np.mean(feas)) if feas else 1.0,
        ))
    return rows
