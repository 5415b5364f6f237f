"""Gamma and Mittag-Leffler checks, including the series-oracle comparisons."""

import math

import numpy as np
import pytest

from fracsep.errors import DomainError, PrecisionError
from fracsep.specfun import MLParams, gamma, ml_eval, ml_eval_batch


def series_oracle(a, b, z, n_terms=300, dps=60):
    """Independent high-precision partial-sum oracle for E_{a,b}(z)."""
    import mpmath

    with mpmath.workdps(dps):
        s = sum(mpmath.mpf(z) ** k / mpmath.gamma(a * k + b) for k in range(n_terms))
        return float(s)


class TestGamma:
    def test_factorial_identity(self):
        assert gamma(5.0) == pytest.approx(24.0, rel=1e-14)

    def test_half(self):
        assert gamma(0.5) == pytest.approx(1.7724538509055159, rel=1e-14)

    def test_one(self):
        assert gamma(1.0) == pytest.approx(1.0, rel=1e-14)

    def test_relative_error_on_declared_range(self):
        xs = np.concatenate(
            [
                np.linspace(0.05, 2.0, 80),
                np.linspace(2.0, 30.0, 60),
                np.linspace(30.0, 170.0, 60),
            ]
        )
        for x in xs:
            assert gamma(float(x)) == pytest.approx(math.gamma(float(x)), rel=1e-12)

    def test_reflection_negative_arguments(self):
        for x in [-0.5, -1.5, -2.5, -7.3, -0.01]:
            assert gamma(x) == pytest.approx(math.gamma(x), rel=1e-11)

    def test_pole_raises_and_names_the_pole(self):
        for x in [0.0, -1.0, -6.0]:
            with pytest.raises(DomainError, match="pole"):
                gamma(x)


class TestMittagLeffler:
    def test_exp_reduction(self):
        assert ml_eval(MLParams(1, 1), 1.0) == pytest.approx(2.718281828459045, rel=1e-12)

    def test_k0_term_only(self):
        assert ml_eval(MLParams(0.7, 1), 0.0) == pytest.approx(1.0, abs=1e-15)

    def test_cosh_value_against_oracle(self):
        frozen = 1.5430806348152437  # series_oracle(2, 1, 1)
        assert series_oracle(2, 1, 1.0) == pytest.approx(frozen, rel=1e-15)
        assert ml_eval(MLParams(2, 1), 1.0) == pytest.approx(frozen, rel=1e-10)

    def test_alternating_value_against_oracle(self):
        frozen = 0.13660600739194928  # series_oracle(0.5, 0.5, -1)
        assert series_oracle(0.5, 0.5, -1.0) == pytest.approx(frozen, rel=1e-15)
        assert ml_eval(MLParams(0.5, 0.5), -1.0) == pytest.approx(frozen, rel=1e-10)

    def test_zero_argument_is_reciprocal_gamma(self):
        for a in [0.5, 0.7, 1.0, 1.6, 2.0]:
            for b in [0.5, 1.0, 1.7, 2.0, 3.2]:
                assert ml_eval(MLParams(a, b), 0.0) == pytest.approx(
                    1.0 / math.gamma(b), rel=1e-12
                )

    def test_e11_identity_range(self):
        zs = np.linspace(-20.0, 20.0, 81)
        vals = ml_eval_batch(MLParams(1, 1), zs)
        assert np.max(np.abs(vals - np.exp(zs)) / np.exp(zs)) <= 1e-10
        for z in [-20.0, -13.7, -4.2, 0.3, 11.0, 20.0]:
            assert ml_eval(MLParams(1, 1), z) == pytest.approx(math.exp(z), rel=1e-10)

    def test_e12_identity_range(self):
        zs = np.linspace(-10.0, 10.0, 41)
        zs = zs[zs != 0.0]
        vals = ml_eval_batch(MLParams(1, 2), zs)
        ref = np.expm1(zs) / zs
        assert np.max(np.abs(vals - ref) / np.abs(ref)) <= 1e-10

    def test_term_recurrence_consistency(self):
        # t_k == t_{k-1} * z * Gamma(a(k-1)+b)/Gamma(ak+b), guards Gamma usage
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.uniform(0.4, 2.0)
            b = rng.uniform(0.3, 3.0)
            z = rng.uniform(-30.0, 30.0)
            k = int(rng.integers(1, 60))
            t_prev = z ** (k - 1) / gamma(a * (k - 1) + b)
            t_direct = z**k / gamma(a * k + b)
            t_recur = t_prev * z * gamma(a * (k - 1) + b) / gamma(a * k + b)
            assert t_recur == pytest.approx(t_direct, rel=1e-12, abs=1e-280)

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(3)
        zs = rng.uniform(-9.0, 9.0, 200)
        p = MLParams(0.6, 1.0)
        vals = ml_eval_batch(p, zs)
        for z, v in zip(zs[::17], vals[::17]):
            assert v == pytest.approx(ml_eval(p, float(z)), rel=1e-13, abs=1e-300)

    def test_random_arguments_against_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            a = rng.uniform(0.5, 2.0)
            b = rng.choice([0.7, 1.0, 1.5, 2.0])
            z = rng.uniform(-8.0, 8.0)
            got = ml_eval(MLParams(a, float(b)), float(z))
            ref = series_oracle(a, float(b), float(z), n_terms=600)
            assert got == pytest.approx(ref, rel=1e-10, abs=1e-14)

    def test_out_of_domain_raises_precision_error(self):
        with pytest.raises(PrecisionError):
            ml_eval(MLParams(0.45, 1.0), 150.0)
        with pytest.raises(PrecisionError):
            ml_eval(MLParams(0.41, 1.0), -60.0)  # guard trips before 500 terms

    def test_invalid_params(self):
        with pytest.raises(DomainError):
            MLParams(0.0, 1.0)
        with pytest.raises(DomainError):
            MLParams(1.0, math.inf)
        with pytest.raises(DomainError):
            ml_eval(MLParams(1.0, 1.0), math.nan)
