"""Entropic risk operator laws."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskfilter import ContractViolationError, entropic_risk, risk_lower

BETAS = (0.01, 0.1, 1.0, 10.0, 100.0)

finite_values = st.lists(
    st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
    min_size=1,
    max_size=64,
)


class TestExamples:
    def test_constant_for_every_beta(self):
        for beta in (0.0,) + BETAS:
            assert entropic_risk([3.2, 3.2, 3.2], beta) == pytest.approx(3.2, abs=1e-12)
            assert risk_lower([3.2, 3.2, 3.2], beta) == pytest.approx(3.2, abs=1e-12)

    def test_two_point_beta_one(self):
        assert entropic_risk([0.0, 1.0], 1.0) == pytest.approx(
            math.log((1.0 + math.e) / 2.0), abs=1e-9
        )
        assert risk_lower([0.0, 1.0], 1.0) == pytest.approx(
            -math.log((1.0 + math.exp(-1.0)) / 2.0), abs=1e-9
        )

    def test_large_beta_approaches_max(self):
        assert abs(entropic_risk([0.0, 1.0], 100.0) - 1.0) < 0.01

    def test_small_beta_approaches_mean(self):
        assert risk_lower([0.0, 1.0], 1e-8) == pytest.approx(0.5, abs=1e-6)

    def test_beta_zero_is_mean(self):
        v = [1.0, 2.0, 4.0]
        assert entropic_risk(v, 0.0) == pytest.approx(np.mean(v), abs=0)

    def test_empty_rejected(self):
        with pytest.raises(ContractViolationError):
            entropic_risk([], 1.0)

    def test_non_finite_rejected(self):
        with pytest.raises(ContractViolationError):
            entropic_risk([1.0, float("nan")], 1.0)
        with pytest.raises(ContractViolationError):
            risk_lower([float("inf")], 1.0)

    def test_negative_beta_rejected(self):
        with pytest.raises(ContractViolationError):
            entropic_risk([1.0], -0.5)


class TestLaws:
    @settings(deadline=None, max_examples=200)
    @given(finite_values, st.sampled_from(BETAS),
           st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
    def test_translation_equivariance(self, values, beta, shift):
        lhs = entropic_risk(np.asarray(values) + shift, beta)
        rhs = entropic_risk(values, beta) + shift
        assert lhs == pytest.approx(rhs, abs=1e-9)

    @settings(deadline=None, max_examples=200)
    @given(finite_values, st.sampled_from(BETAS))
    def test_bounds(self, values, beta):
        v = np.asarray(values)
        upper = entropic_risk(v, beta)
        lower = risk_lower(v, beta)
        assert v.mean() - 1e-12 <= upper <= v.max() + 1e-12
        assert v.min() - 1e-12 <= lower <= v.mean() + 1e-12

    @settings(deadline=None, max_examples=200)
    @given(finite_values)
    def test_monotone_in_beta(self, values):
        uppers = [entropic_risk(values, b) for b in BETAS]
        lowers = [risk_lower(values, b) for b in BETAS]
        assert all(b >= a - 1e-12 for a, b in zip(uppers, uppers[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(lowers, lowers[1:]))

    @settings(deadline=None, max_examples=200)
    @given(finite_values)
    def test_risk_neutral_limit(self, values):
        assert entropic_risk(values, 1e-8) == pytest.approx(
            float(np.mean(values)), abs=1e-6
        )

    def test_stability_no_overflow(self):
        # beta * max(values) = 700 would overflow naive exponentiation.
        values = np.array([-7.0, 0.0, 7.0])
        out = entropic_risk(values, 100.0)
        assert np.isfinite(out)
        assert out == pytest.approx(7.0, abs=0.05)
        assert np.isfinite(risk_lower(values * 100, 10.0))
