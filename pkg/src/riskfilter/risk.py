"""Entropic risk of a sampled random variable.

The upper (cost-side) operator is

    R_beta[C] = (1 / beta) * log E[exp(beta * C)]

estimated on a finite sample by a max-shifted log-mean-exp; the shift is
mandatory, since naive exponentiation overflows already for beta = 100 on
values of order 10.  ``risk_lower`` is the certainty-equivalent lower
variant -R_beta[-C] used on the barrier side of the safety condition: it
lies between min and mean, whereas the upper operator lies between mean
and max.  beta = 0 is the explicit risk-neutral branch (plain mean);
beta -> infinity approaches the worst case.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolationError


def _as_sample(values) -> np.ndarray:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ContractViolationError("risk of an empty sample set is undefined")
    if not np.all(np.isfinite(v)):
        raise ContractViolationError("sample set contains non-finite values")
    return v


def entropic_risk(values, beta: float) -> float:
    """(1/beta) * log(mean(exp(beta * values))), risk-neutral mean at beta = 0."""
    v = _as_sample(values)
    if beta < 0:
        raise ContractViolationError(f"risk parameter must be >= 0, got {beta}")
    if beta == 0:
        return float(np.mean(v))
    z = beta * v
    m = float(np.max(z))
    return (m + float(np.log(np.mean(np.exp(z - m))))) / beta


def risk_lower(values, beta: float) -> float:
    """Lower certainty equivalent -R_beta[-values]; min <= result <= mean."""
    return -entropic_risk(-_as_sample(values), beta)
