import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pwa_barrier.scenario import (ScenarioError, ScenarioParams, binomial_tail,
                                  decision_dimension, max_violation_level,
                                  required_samples, sample_curve, tightening_margin)


def exact_tail(N, eps, d):
    e = Fraction(eps)
    return sum(math.comb(N, i) * e ** i * (1 - e) ** (N - i) for i in range(min(d, N + 1)))


def test_tail_examples():
    assert binomial_tail(5, 0.3, 6) == 1.0
    assert binomial_tail(10, 0.1, 1) == pytest.approx(0.9 ** 10, rel=1e-14)
    # three-term sum by hand
    ref = sum(math.comb(20, i) * 0.25 ** i * 0.75 ** (20 - i) for i in range(3))
    assert binomial_tail(20, 0.25, 3) == pytest.approx(ref, rel=1e-13)
    assert binomial_tail(20, 0.25, 3) == pytest.approx(0.09126, abs=5e-6)


@given(st.integers(1, 30), st.floats(1e-4, 0.9999), st.integers(1, 35))
def test_tail_matches_rational_sum(N, eps, d):
    ref = float(exact_tail(N, eps, d))
    got = binomial_tail(N, eps, d)
    assert abs(got - ref) <= 1e-12 * max(ref, 1e-300)


def test_tail_edges():
    assert binomial_tail(10, 0.0, 3) == 1.0
    assert binomial_tail(10, 1.0, 3) == 0.0
    with pytest.raises(ScenarioError):
        binomial_tail(10, 1.5, 3)
    # no overflow for large N
    assert 0.0 <= binomial_tail(10 ** 6, 0.001, 500) <= 1.0


@given(st.integers(2, 400), st.floats(0.01, 0.5), st.integers(1, 20))
def test_tail_decreasing_in_N(N, eps, d):
    # monotone up to the 1e-12 relative accuracy of the log-space sum
    assert binomial_tail(N + 1, eps, d) <= binomial_tail(N, eps, d) * (1 + 1e-12)


def test_required_samples_examples():
    assert required_samples(0.5, 1, 0.5) == 1
    assert required_samples(0.1, 1, 1e-9) == math.ceil(math.log(1e-9) / math.log(0.9)) == 197


@given(st.floats(0.005, 0.3), st.integers(1, 60), st.floats(1e-12, 1e-2))
def test_required_samples_is_minimal(eps, d, beta):
    N = required_samples(eps, d, beta)
    assert binomial_tail(N, eps, d) <= beta
    assert N == 1 or binomial_tail(N - 1, eps, d) > beta


def test_logarithmic_scaling():
    n3 = required_samples(0.1, 1, 1e-3)
    n9 = required_samples(0.1, 1, 1e-9)
    assert n9 / n3 <= 3.5
    # N grows linearly in log(1/beta): least-squares fit with R^2 >= 0.99
    betas = np.logspace(-1, -12, 12)
    N = np.array([required_samples(0.05, 10, b) for b in betas])
    x = np.log(1.0 / betas)
    coef = np.polyfit(x, N, 1)
    resid = N - np.polyval(coef, x)
    r2 = 1 - resid.var() / N.var()
    assert r2 >= 0.99


def test_max_violation_level_inverts_required_samples():
    eps = max_violation_level(197, 1, 1e-9)
    # closed form for d = 1: (1 - eps)^N = beta
    assert eps == pytest.approx(1 - 1e-9 ** (1 / 197), abs=1e-9)
    assert abs(eps - 0.1) < 2e-4
    assert binomial_tail(197, eps, 1) <= 1e-9 < binomial_tail(197, eps * 0.99, 1)
    with pytest.raises(ScenarioError):
        max_violation_level(10, 20, 0.5)


def test_tightening_margin():
    assert tightening_margin(0.5, 1) == 1.0
    assert tightening_margin(1e-12, 1) == pytest.approx(0.0, abs=1e-11)
    assert tightening_margin(0.01, 1) == pytest.approx(0.010101, abs=1e-6)
    with pytest.raises(ScenarioError):
        tightening_margin(0.1, 0.5)


def test_decision_dimension():
    assert decision_dimension(7, 1) == 16
    assert decision_dimension(126, 2) == 380


def test_resolve_requires_exactly_two():
    with pytest.raises(ScenarioError):
        ScenarioParams.resolve(16, eps=0.1)
    with pytest.raises(ScenarioError):
        ScenarioParams.resolve(16, eps=0.1, N=100, beta=1e-3)
    p = ScenarioParams.resolve(16, eps=0.01, beta=1e-9)
    assert p.N == required_samples(0.01, 16, 1e-9)
    assert p.beta <= 1e-9
    assert p.delta == pytest.approx(0.01 / 0.99)
    q = ScenarioParams.resolve(16, N=p.N, beta=1e-9)
    assert q.eps <= 0.01 + 1e-9
    r = ScenarioParams.resolve(16, eps=0.01, N=p.N)
    assert r.beta == p.beta


def test_params_reject_small_delta_and_inconsistent_beta():
    with pytest.raises(ScenarioError):
        ScenarioParams(N=200, eps=0.1, d=1, beta=binomial_tail(200, 0.1, 1), delta=0.05)
    with pytest.raises(ScenarioError):
        ScenarioParams(N=200, eps=0.1, d=1, beta=1e-3)


def test_sample_curve_rows():
    rows = sample_curve(0.1, 1, [1e-3, 1e-9])
    assert rows[1][1] == 197
    assert rows[1][2] / rows[0][2] == pytest.approx(1e6)


@given(st.integers(5, 200), st.floats(0.01, 0.5), st.integers(1, 20))
def test_tail_nondecreasing_in_d(N, eps, d):
    assert binomial_tail(N, eps, d) <= binomial_tail(N, eps, d + 1) * (1 + 1e-12)


@given(st.integers(5, 200), st.floats(0.01, 0.5), st.integers(1, 20))
def test_tail_continuous_in_eps(N, eps, d):
    assert abs(binomial_tail(N, eps, d) - binomial_tail(N, eps + 1e-9, d)) < 1e-6


def test_scaling_at_spec_point():
    assert required_samples(0.05, 23, 1e-9) / required_samples(0.05, 23, 1e-3) <= 3.5
