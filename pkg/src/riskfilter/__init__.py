"""Risk-sensitive safety filters for uncertain discrete-time multi-agent systems."""

__version__ = "0.1.0"

from .config import ExperimentConfig, config_with, parse_config, serialize_config
from .dynamics import JointAction, JointState, MasModel, UncertaintySample, make_model
from .errors import (
    ConfigError,
    ContractViolationError,
    GuaranteeDomainError,
    MissingModelError,
    RiskFilterError,
)
from .experiments import run_experiment
from .filters import (
    Branch,
    FilterConfig,
    FilterOutcome,
    centralized_filter,
    check_condition,
    draw_risk_samples,
    pessimistic_filter,
    proximity_filter,
    switching_filter,
    worst_case_margin,
)
from .guarantees import GuaranteeReport, certify_grid, compute_delta
from .persist import load_policy, load_value_model, save_policy, save_value_model
from .policies import (
    CemResult,
    Policy,
    cem_improve,
    eval_policy,
    make_proportional,
    mean_cost_objective,
)
from .risk import entropic_risk, risk_lower
from .simulate import (
    CentralizedController,
    Metrics,
    PolicyController,
    RolloutRecord,
    SweepRow,
    SwitchingController,
    compute_metrics,
    rollout,
    sweep,
)
from .value import (
    ApproxConfig,
    Barrier,
    ValueDataset,
    ValueModel,
    barrier_value,
    collect_dataset,
    eval_value,
    fit_value,
    mc_cost_to_go,
)

__all__ = [
    "__version__",
    "ApproxConfig",
    "Barrier",
    "Branch",
    "CemResult",
    "CentralizedController",
    "ConfigError",
    "ContractViolationError",
    "ExperimentConfig",
    "FilterConfig",
    "FilterOutcome",
    "GuaranteeDomainError",
    "GuaranteeReport",
    "JointAction",
    "JointState",
    "MasModel",
    "Metrics",
    "MissingModelError",
    "Policy",
    "PolicyController",
    "RiskFilterError",
    "RolloutRecord",
    "SweepRow",
    "SwitchingController",
    "UncertaintySample",
    "ValueDataset",
    "ValueModel",
    "barrier_value",
    "cem_improve",
    "centralized_filter",
    "certify_grid",
    "check_condition",
    "collect_dataset",
    "compute_delta",
    "compute_metrics",
    "config_with",
    "draw_risk_samples",
    "entropic_risk",
    "eval_policy",
    "eval_value",
    "fit_value",
    "load_policy",
    "load_value_model",
    "make_model",
    "make_proportional",
    "mc_cost_to_go",
    "mean_cost_objective",
    "parse_config",
    "pessimistic_filter",
    "proximity_filter",
    "risk_lower",
    "rollout",
    "run_experiment",
    "save_policy",
    "save_value_model",
    "serialize_config",
    "sweep",
    "switching_filter",
    "worst_case_margin",
]
