"""Shared fixtures: stub models/barriers and session-scoped trained setups."""

from __future__ import annotations

from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from riskfilter import (
    Barrier,
    ApproxConfig,
    MasModel,
    collect_dataset,
    fit_value,
    parse_config,
)


def _identity_transition(x, u, s):
    return x.copy()


def make_static_model(n_agents: int = 2) -> MasModel:
    """Frozen-state test dynamics: f(x, u, w) = x, zero cost, always safe."""
    return MasModel(
        preset="static",
        n_agents=n_agents,
        state_dim=2,
        action_dims=tuple([1] * n_agents),
        noise_scale=0.0,
        gamma=0.9,
        x_ref=np.zeros(2),
        action_weight=0.0,
        state_weights=np.zeros((n_agents, 2)),
        action_low=-1.0,
        action_high=1.0,
        transition=_identity_transition,
        safe_fn=lambda x: True,
        cost_fn=lambda x: 0.0,
    )


class ConstantValue:
    """Value-model stub predicting one constant everywhere."""

    def __init__(self, v: float):
        self.v = float(v)

    def predict(self, x):
        x = np.asarray(x)
        if x.ndim == 2:
            return np.full(x.shape[0], self.v)
        return self.v


class QuadraticValue:
    """Value-model stub V(x) = c * ||x||^2 (state-dependent, deterministic)."""

    def __init__(self, coeff: float = 1.0):
        self.coeff = float(coeff)

    def predict(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            return self.coeff * np.sum(x * x, axis=1)
        return self.coeff * float(x @ x)


class FixedActionPolicy:
    """Policy stub returning preset per-agent actions regardless of the state."""

    def __init__(self, actions):
        self.actions = [np.asarray(a, dtype=float).ravel() for a in actions]

    def __call__(self, x):
        return [a.copy() for a in self.actions]


@pytest.fixture
def static_model():
    return make_static_model()


@pytest.fixture
def unit_barrier():
    """h(x) = 1 everywhere (xi = 1 over a zero value model)."""
    return Barrier(ConstantValue(0.0), 1.0)


@pytest.fixture(scope="session")
def spring_setup():
    """Spring benchmark with policies and a trained desk-scale barrier."""
    cfg = parse_config("value.states = 400\nvalue.horizon = 120")
    model = cfg.build_model()
    safe = cfg.safe_policy(model)
    nominal = cfg.nominal_policy(model)
    dataset = collect_dataset(
        model, safe, cfg.value_states, cfg.value_horizon, cfg.value_samples,
        cfg.seed, cfg.value_sampler(model),
    )
    vm = fit_value(dataset, ApproxConfig(hidden=cfg.hidden_sizes(), epochs=cfg.value_epochs,
                                         learning_rate=cfg.value_lr), cfg.seed)
    return SimpleNamespace(
        cfg=cfg, model=model, nominal=nominal, safe=safe,
        value_model=vm, barrier=Barrier(vm, cfg.xi),
        box_sampler=cfg.value_sampler(model),
    )


@pytest.fixture(scope="session")
def collision_setup():
    """Two-agent collision benchmark with a trained desk-scale barrier."""
    cfg = parse_config(
        "run.preset = collision\nvalue.states = 500\nvalue.horizon = 100\nvalue.samples = 2"
    )
    model = cfg.build_model()
    safe = cfg.safe_policy(model)
    nominal = cfg.nominal_policy(model)
    dataset = collect_dataset(
        model, safe, cfg.value_states, cfg.value_horizon, cfg.value_samples,
        cfg.seed, cfg.value_sampler(model),
    )
    vm = fit_value(dataset, ApproxConfig(hidden=cfg.hidden_sizes(), epochs=cfg.value_epochs,
                                         learning_rate=cfg.value_lr), cfg.seed)
    return SimpleNamespace(
        cfg=cfg, model=model, nominal=nominal, safe=safe,
        value_model=vm, barrier=Barrier(vm, cfg.xi),
        box_sampler=cfg.value_sampler(model),
    )


def constant_cost_model(cost: float, gamma: float) -> MasModel:
    """Deterministic frozen-state model with a constant step cost."""
    return replace(make_static_model(), cost_fn=lambda x: float(cost), gamma=gamma)
