import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from memcp.expansion import (
    ExpansionFn, check_concavity_conditions, exp_concave, g_d1, g_d1_vs_finite_difference, g_d2,
    g_eval, identity_one, parse_expansion, ratio, scalar_fns, sigmoid,
)

ALL = [ratio(1.0), ratio(0.5), exp_concave(1.0, 1.0), exp_concave(5.0, 0.5), sigmoid(5.0, 4.0), identity_one()]


class TestParsing:
    @pytest.mark.parametrize("text,expected", [
        ("ratio:2", ratio(2.0)),
        ("exp:1:1", exp_concave(1.0, 1.0)),
        ("exp:3", exp_concave(3.0, 1.0)),
        ("sigmoid:5:4", sigmoid(5.0, 4.0)),
        ("one", identity_one()),
    ])
    def test_spellings(self, text, expected):
        assert parse_expansion(text) == expected

    @pytest.mark.parametrize("f", ALL)
    def test_spec_round_trip(self, f):
        assert parse_expansion(f.spec) == f

    @pytest.mark.parametrize("bad", ["", "ratio", "exp:a:b", "sigmoid:1", "cubic:1", "one:2"])
    def test_rejects(self, bad):
        with pytest.raises(ValueError):
            parse_expansion(bad)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ratio(-1.0)
        with pytest.raises(ValueError):
            exp_concave(0.0, 1.0)
        with pytest.raises(ValueError):
            sigmoid(-2.0, 1.0)
        with pytest.raises(ValueError):
            ExpansionFn("quadratic")


class TestValues:
    def test_known_points(self):
        assert g_eval(ratio(1.0), 1.0) == 0.5
        assert g_eval(exp_concave(1.0, 1.0), 0.0) == 0.0
        assert g_eval(sigmoid(5.0, 4.0), 4.0) == 0.5
        assert g_eval(identity_one(), -3.0) == 1.0

    @pytest.mark.parametrize("f", ALL)
    def test_saturates_at_one(self, f):
        assert abs(g_eval(f, 200.0) - 1.0) < 1e-2

    @pytest.mark.parametrize("f", ALL)
    def test_scalar_and_array_paths_agree(self, f):
        ts = np.linspace(0.1, 6.0, 37)
        for fn, scal in zip((g_eval, g_d1, g_d2), scalar_fns(f)):
            arr = fn(f, ts)
            np.testing.assert_allclose(arr, [fn(f, float(t)) for t in ts], rtol=1e-14, atol=1e-300)
            np.testing.assert_allclose(arr, [scal(float(t)) for t in ts], rtol=1e-14, atol=1e-300)

    def test_ratio_pole(self):
        with pytest.raises(ZeroDivisionError):
            g_eval(ratio(2.0), -2.0)
        with pytest.raises(ZeroDivisionError):
            g_d1(ratio(2.0), np.array([0.0, -2.0]))

    def test_sigmoid_extremes_do_not_overflow(self):
        f = sigmoid(50.0, 0.0)
        assert g_eval(f, -100.0) == pytest.approx(0.0, abs=1e-300)
        assert g_eval(f, 100.0) == 1.0


class TestCertificate:
    def test_families(self):
        assert check_concavity_conditions(ratio(0.0))
        assert check_concavity_conditions(ratio(3.0))
        assert check_concavity_conditions(exp_concave(1.0, 1.0))
        assert not check_concavity_conditions(exp_concave(1.0, 0.4))  # (1+1)*0.4 <= 1
        assert check_concavity_conditions(identity_one())
        assert not check_concavity_conditions(sigmoid(1.0, 0.0))


@given(
    which=st.sampled_from(ALL),
    t=st.floats(0.05, 6.0),
)
def test_first_derivative_matches_finite_difference(which, t):
    assert g_d1_vs_finite_difference(which, t) < 1e-6


@given(which=st.sampled_from(ALL), t=st.floats(0.05, 6.0))
def test_second_derivative_matches_finite_difference(which, t):
    h = 1e-5
    fd = (g_d1(which, t + h) - g_d1(which, t - h)) / (2 * h)
    assert abs(fd - g_d2(which, t)) <= 1e-6 * max(1.0, abs(fd))


@given(which=st.sampled_from(ALL), a=st.floats(0.0, 8.0), b=st.floats(0.0, 8.0))
def test_non_decreasing(which, a, b):
    lo, hi = min(a, b), max(a, b)
    assert g_eval(which, lo) <= g_eval(which, hi) + 1e-15
    assert g_d1(which, lo) >= 0.0 and math.isfinite(g_d1(which, lo))
