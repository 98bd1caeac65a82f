"""Experiment configuration: parsing, validation, serialization.

The on-disk format is line-based with sections and scalar keys::

    # comment lines and blank lines are ignored
    [filter]
    alpha = 0.1
    beta = 1.0
    run.preset = collision      # dotted keys work at top level too

Inside a ``[section]`` block, bare keys are prefixed with the section
name; outside one, keys must be fully dotted.  Values are scalars (int,
float, ``true``/``false``, or a bare string); list-valued settings such
as sweep axes are comma-separated strings.  Unknown keys are rejected.

Defaults mirror the benchmark setup: alpha = 0.1, epsilon = 0, proximity
radius 0.05, beta = 1, xi = 5, 5 risk samples, gamma = 0.99, and the
preset-specific noise scales, shrunk to desk scale for rollout counts
and value-training sizes.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import MasModel, make_model
from .errors import ConfigError, ContractViolationError
from .filters import FilterConfig
from .policies import Policy, make_proportional

_PRESET = object()  # sentinel: default depends on the preset

_PRESET_DEFAULTS = {
    "spring": {
        "agents": 3,
        "noise_scale": 0.01,
        "value_pos_low": -2.5, "value_pos_high": 2.5,
        "value_vel_low": -4.0, "value_vel_high": 4.0,
        "nominal_kp": 3.0, "nominal_kd": 0.3,
        "safe_kp": 0.3, "safe_kd": 1.5,
        "safe_spread": 0.0,
        "init_mode": "origin",
    },
    "collision": {
        "agents": 2,
        "noise_scale": 0.1,
        "value_pos_low": -1.5, "value_pos_high": 1.5,
        "value_vel_low": -2.0, "value_vel_high": 2.0,
        "nominal_kp": 1.0, "nominal_kd": 0.5,
        "safe_kp": 2.0, "safe_kd": 0.3,
        "safe_spread": 3.0,
        "init_mode": "uniform",
    },
}

# key -> (field name, type tag, default)
_SCHEMA = {
    "run.preset": ("preset", "str", "spring"),
    "run.agents": ("agents", "int", _PRESET),
    "run.steps": ("steps", "int", 200),
    "run.rollouts": ("rollouts", "int", 20),
    "run.seed": ("seed", "int", 0),
    "run.controller": ("controller", "str", "switching"),
    "run.out": ("out", "str", ""),
    "model.noise_scale": ("noise_scale", "float", _PRESET),
    "model.gamma": ("gamma", "float", 0.99),
    "model.u_min": ("u_min", "float", -1.0),
    "model.u_max": ("u_max", "float", 1.0),
    "filter.alpha": ("alpha", "float", 0.1),
    "filter.epsilon": ("epsilon", "float", 0.0),
    "filter.alpha_bar": ("alpha_bar", "float", 0.2),
    "filter.epsilon_bar": ("epsilon_bar", "float", 0.0),
    "filter.beta": ("beta", "float", 1.0),
    "filter.xi": ("xi", "float", 5.0),
    "filter.samples": ("samples", "int", 5),
    "filter.grid": ("grid", "int", 9),
    "filter.radius_mode": ("radius_mode", "str", "fixed"),
    "filter.radius": ("radius", "float", 0.05),
    "filter.lipschitz_h": ("lipschitz_h", "float", 1.0),
    "filter.lipschitz_fu": ("lipschitz_fu", "float", 1.0),
    "filter.tolerance": ("tolerance", "float", 0.0),
    "filter.clip_to_box": ("clip_to_box", "bool", False),
    "value.states": ("value_states", "int", 2000),
    "value.horizon": ("value_horizon", "int", 200),
    "value.samples": ("value_samples", "int", 2),
    "value.hidden": ("value_hidden", "str", "64x64"),
    "value.epochs": ("value_epochs", "int", 1500),
    "value.learning_rate": ("value_lr", "float", 0.01),
    "value.model_path": ("value_model_path", "str", ""),
    "value.pos_low": ("value_pos_low", "float", _PRESET),
    "value.pos_high": ("value_pos_high", "float", _PRESET),
    "value.vel_low": ("value_vel_low", "float", _PRESET),
    "value.vel_high": ("value_vel_high", "float", _PRESET),
    "policy.nominal_kp": ("nominal_kp", "float", _PRESET),
    "policy.nominal_kd": ("nominal_kd", "float", _PRESET),
    "policy.safe_kp": ("safe_kp", "float", _PRESET),
    "policy.safe_kd": ("safe_kd", "float", _PRESET),
    "policy.safe_spread": ("safe_spread", "float", _PRESET),
    "policy.cem_iterations": ("cem_iterations", "int", 0),
    "policy.cem_population": ("cem_population", "int", 16),
    "policy.cem_elite": ("cem_elite", "float", 0.25),
    "policy.path": ("policy_path", "str", ""),
    "init.mode": ("init_mode", "str", _PRESET),
    "init.pos_low": ("init_pos_low", "float", -1.0),
    "init.pos_high": ("init_pos_high", "float", 1.0),
    "init.vel_low": ("init_vel_low", "float", -0.5),
    "init.vel_high": ("init_vel_high", "float", 0.5),
    "sweep.beta": ("sweep_beta", "str", "0.1,1,10"),
    "sweep.xi": ("sweep_xi", "str", "2,5,10"),
    "certify.states": ("certify_states", "int", 50),
    "certify.samples": ("certify_samples", "int", 200),
    "certify.k": ("certify_k", "int", 10),
}

_FIELD_TO_KEY = {field: key for key, (field, _, _) in _SCHEMA.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str
    agents: int
    steps: int
    rollouts: int
    seed: int
    controller: str
    out: str
    noise_scale: float
    gamma: float
    u_min: float
    u_max: float
    alpha: float
    epsilon: float
    alpha_bar: float
    epsilon_bar: float
    beta: float
    xi: float
    samples: int
    grid: int
    radius_mode: str
    radius: float
    lipschitz_h: float
    lipschitz_fu: float
    tolerance: float
    clip_to_box: bool
    value_states: int
    value_horizon: int
    value_samples: int
    value_hidden: str
    value_epochs: int
    value_lr: float
    value_model_path: str
    value_pos_low: float
    value_pos_high: float
    value_vel_low: float
    value_vel_high: float
    nominal_kp: float
    nominal_kd: float
    safe_kp: float
    safe_kd: float
    safe_spread: float
    cem_iterations: int
    cem_population: int
    cem_elite: float
    policy_path: str
    init_mode: str
    init_pos_low: float
    init_pos_high: float
    init_vel_low: float
    init_vel_high: float
    sweep_beta: str
    sweep_xi: str
    certify_states: int
    certify_samples: int
    certify_k: int

    def hidden_sizes(self) -> tuple:
        try:
            sizes = tuple(int(s) for s in self.value_hidden.split("x"))
        except ValueError:
            raise ConfigError("invalid-value", f"bad hidden sizes {self.value_hidden!r}")
        if not sizes or any(s < 1 for s in sizes):
            raise ConfigError("invalid-value", f"bad hidden sizes {self.value_hidden!r}")
        return sizes

    def beta_values(self) -> list:
        return _parse_float_list(self.sweep_beta, "sweep.beta")

    def xi_values(self) -> list:
        return _parse_float_list(self.sweep_xi, "sweep.xi")

    def build_model(self) -> MasModel:
        return make_model(
            self.preset,
            n_agents=self.agents,
            noise_scale=self.noise_scale,
            gamma=self.gamma,
            action_low=self.u_min,
            action_high=self.u_max,
        )

    def filter_config(self, beta: float | None = None, xi: float | None = None) -> FilterConfig:
        return FilterConfig(
            alpha=self.alpha,
            epsilon=self.epsilon,
            alpha_bar=self.alpha_bar,
            epsilon_bar=self.epsilon_bar,
            beta=self.beta if beta is None else beta,
            xi=self.xi if xi is None else xi,
            n_samples=self.samples,
            grid_size=self.grid,
            radius_mode=self.radius_mode,
            radius=self.radius,
            lipschitz_h=self.lipschitz_h,
            lipschitz_fu=self.lipschitz_fu,
            tolerance=self.tolerance,
            clip_to_box=self.clip_to_box,
        )

    def nominal_policy(self, model: MasModel) -> Policy:
        return make_proportional(model, (self.nominal_kp, self.nominal_kd))

    def safe_policy(self, model: MasModel) -> Policy:
        """The safe back-up policy: conservative gains, and for multi-agent
        separation a symmetric fan of per-agent setpoints."""
        setpoints = None
        if self.safe_spread > 0 and model.n_agents > 1:
            setpoints = np.linspace(-self.safe_spread, self.safe_spread, model.n_agents)
        return make_proportional(model, (self.safe_kp, self.safe_kd), setpoints=setpoints)

    def init_sampler(self, model: MasModel):
        """Initial-state draw for rollouts: a fixed origin or a uniform box."""
        if self.init_mode == "origin":
            x0 = np.zeros((model.n_agents, model.state_dim))
            return lambda rng: x0
        lo = np.array([self.init_pos_low, self.init_vel_low])
        hi = np.array([self.init_pos_high, self.init_vel_high])
        return lambda rng: rng.uniform(lo, hi, size=(model.n_agents, model.state_dim))

    def value_sampler(self, model: MasModel):
        """Initial-state draw for value-training rollouts (wider box)."""
        lo = np.array([self.value_pos_low, self.value_vel_low])
        hi = np.array([self.value_pos_high, self.value_vel_high])
        return lambda rng: rng.uniform(lo, hi, size=(model.n_agents, model.state_dim))


def _parse_float_list(text: str, key: str) -> list:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("invalid-value", f"{key} must be a comma-separated float list")
    if not values:
        raise ConfigError("invalid-value", f"{key} must be nonempty")
    return values


def _coerce(key: str, kind: str, raw: str):
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "false"):
                return low == "true"
            raise ValueError(raw)
        return raw
    except ValueError:
        raise ConfigError("invalid-value", f"cannot parse {key} = {raw!r} as {kind}")


def _parse_lines(text: str) -> dict:
    raw = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if not section:
                raise ConfigError("syntax", f"line {lineno}: empty section header")
            continue
        if "=" not in stripped:
            raise ConfigError("syntax", f"line {lineno}: expected 'key = value'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("syntax", f"line {lineno}: missing key")
        if "." not in key:
            if not section:
                raise ConfigError("syntax", f"line {lineno}: bare key outside any section")
            key = f"{section}.{key}"
        if key not in _SCHEMA:
            raise ConfigError("unknown-key", f"line {lineno}: unknown key {key!r}")
        raw[key] = value.strip()
    return raw


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def bad(msg):
        raise ConfigError("invalid-value", msg)

    if cfg.preset not in _PRESET_DEFAULTS:
        bad(f"unknown preset {cfg.preset!r}")
    if cfg.preset == "spring" and cfg.agents != 3:
        bad("spring preset has exactly 3 agents")
    if cfg.preset == "collision" and cfg.agents < 2:
        bad("collision preset needs at least 2 agents")
    if cfg.steps < 0:
        bad("run.steps must be >= 0")
    if cfg.rollouts < 1:
        bad("run.rollouts must be >= 1")
    if cfg.controller not in ("nominal", "safe", "switching", "centralized"):
        bad(f"unknown controller {cfg.controller!r}")
    if cfg.u_max <= cfg.u_min:
        bad("model.u_max must exceed model.u_min")
    if cfg.noise_scale < 0:
        bad("model.noise_scale must be >= 0")
    if not 0 < cfg.gamma < 1:
        bad("model.gamma must lie in (0, 1)")
    if cfg.value_states < 1 or cfg.value_samples < 1 or cfg.value_epochs < 1:
        bad("value sizes must be >= 1")
    if cfg.value_horizon < 0:
        bad("value.horizon must be >= 0")
    if cfg.value_lr <= 0:
        bad("value.learning_rate must be > 0")
    if cfg.init_mode not in ("origin", "uniform"):
        bad(f"unknown init mode {cfg.init_mode!r}")
    if cfg.init_pos_high < cfg.init_pos_low or cfg.init_vel_high < cfg.init_vel_low:
        bad("init box is empty")
    if cfg.value_pos_high < cfg.value_pos_low or cfg.value_vel_high < cfg.value_vel_low:
        bad("value-training box is empty")
    if cfg.cem_iterations < 0 or cfg.cem_population < 2 or not 0 < cfg.cem_elite <= 1:
        bad("bad cross-entropy settings")
    if cfg.certify_states < 1 or cfg.certify_samples < 1 or cfg.certify_k < 1:
        bad("certify sizes must be >= 1")
    cfg.hidden_sizes()
    cfg.beta_values()
    cfg.xi_values()
    try:
        cfg.filter_config()
    except ContractViolationError as exc:
        bad(str(exc))
    return cfg


def parse_config(source) -> ExperimentConfig:
    """Parse a config file path or inline text into a validated config.

    A string containing '=' or a newline is treated as inline text, the
    empty string as an empty config (all defaults); anything else must be
    an existing file path.
    """
    if isinstance(source, Path):
        if not source.exists():
            raise ConfigError("missing-file", f"config file not found: {source}")
        text = source.read_text()
    elif isinstance(source, str):
        if source == "" or "=" in source or "\n" in source:
            text = source
        else:
            path = Path(source)
            if not path.exists():
                raise ConfigError("missing-file", f"config file not found: {source}")
            text = path.read_text()
    else:
        raise ConfigError("syntax", f"unsupported config source {type(source).__name__}")

    raw = _parse_lines(text)
    preset = _coerce("run.preset", "str", raw.get("run.preset", "spring"))
    if preset not in _PRESET_DEFAULTS:
        raise ConfigError("invalid-value", f"unknown preset {preset!r}")
    preset_defaults = _PRESET_DEFAULTS[preset]
    fields = {}
    for key, (field, kind, default) in _SCHEMA.items():
        if key in raw:
            fields[field] = _coerce(key, kind, raw[key])
        elif default is _PRESET:
            fields[field] = preset_defaults[field]
        else:
            fields[field] = default
    return _validate(ExperimentConfig(**fields))


def serialize_config(cfg: ExperimentConfig, exclude: tuple = ()) -> str:
    """Canonical text form; parse(serialize(cfg)) reproduces cfg exactly."""
    lines = []
    for field in sorted(_FIELD_TO_KEY, key=lambda f: _FIELD_TO_KEY[f]):
        key = _FIELD_TO_KEY[field]
        if key in exclude:
            continue
        value = getattr(cfg, field)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"


def config_with(cfg: ExperimentConfig, **updates) -> ExperimentConfig:
    """Validated copy with the given fields replaced."""
    return _validate(dataclasses.replace(cfg, **updates))
