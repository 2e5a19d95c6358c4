import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from forcedwell.jump_model import (RateProfile, delta_periodic, invert_hazard, mean_jump_time,
                                   mean_jump_time_plus, occupation, sample_jump_times,
                                   survival_function)

N = 128
Y = np.arange(N) / N


def cosine_profile(a, b, eps, c=0.05):
    """r_minus = a + b cos(2 pi y), r_plus = c."""
    return RateProfile.from_rates(a + b * np.cos(2 * np.pi * Y), np.full(N, c), eps)


def test_constant_rate_mean_is_exact():
    p = RateProfile.from_rates(np.full(N, 0.04), np.full(N, 0.02), 0.2)
    assert mean_jump_time(p, 0.37) == pytest.approx(0.2 / 0.04, rel=1e-12)
    assert mean_jump_time_plus(p, 0.1) == pytest.approx(0.2 / 0.02, rel=1e-12)


@pytest.mark.parametrize("eps,y0", [(0.2, 0.0), (0.05, 0.3), (2.0, 0.8)])
def test_mean_time_against_direct_quadrature(eps, y0):
    a, b = 0.06, 0.04
    p = cosine_profile(a, b, eps)
    R = lambda t: a * t + b * (np.sin(2 * np.pi * (y0 + t)) - np.sin(2 * np.pi * y0)) / (2 * np.pi)
    T = 60 * eps / (a - b)
    ref, _ = integrate.quad(lambda t: math.exp(-R(t) / eps), 0, T, limit=4000, epsabs=1e-12)
    assert mean_jump_time(p, y0) == pytest.approx(ref, rel=1e-6)


@settings(max_examples=30, deadline=None)
@given(y0=st.floats(0, 1), t=st.lists(st.floats(0, 40), min_size=2, max_size=8))
def test_survival_starts_at_one_and_decreases(y0, t):
    p = cosine_profile(0.06, 0.04, 0.3)
    assert survival_function(p, y0, 0.0) == pytest.approx(1.0)
    s = survival_function(p, y0, np.sort(t))
    assert np.all(np.diff(s) <= 1e-15)


@settings(max_examples=30, deadline=None)
@given(y0=st.floats(0, 1), e=st.floats(1e-6, 30))
def test_hazard_inversion(y0, e):
    p = cosine_profile(0.06, 0.04, 0.3)
    t = invert_hazard(p.r_minus_fn, y0, p.epsilon, np.array([e]))[0]
    assert p.R_minus(y0 + t, y0) / p.epsilon == pytest.approx(e, rel=1e-9, abs=1e-12)


def test_sampled_times_follow_survival_law():
    p = cosine_profile(0.06, 0.04, 0.3)
    t = sample_jump_times(p, 0.2, seed=5, n_samples=5000)
    cdf = lambda x: 1.0 - survival_function(p, 0.2, x)
    assert stats.kstest(t, cdf).pvalue > 1e-3


def test_constant_coefficients_give_constant_delta():
    p = RateProfile.from_rates(np.full(N, 0.03), np.full(N, 0.01), 0.2)
    sol = delta_periodic(p)
    assert np.allclose(sol.delta, 0.5, atol=1e-12)


def test_occupation_probabilities(tilted_profile):
    sol = delta_periodic(tilted_profile)
    y = np.linspace(0.1, 30.1, 301)
    pm, pp = occupation(tilted_profile, 0.0, 0.1, y, sol)
    assert np.allclose(pm + pp, 1.0)
    assert pp[0] == pytest.approx(0.0, abs=1e-12)
    assert pp[-1] == pytest.approx(0.5 * (1 + float(sol.delta_fn(y[-1]))), abs=1e-3)


def test_superadiabatic_correction_is_second_order(tilted_profile):
    p = tilted_profile
    y = np.arange(512) / 512
    gaps = []
    for eps in (1e-3, 5e-4):
        d = delta_periodic(p.with_epsilon(eps)).delta_fn(y)
        first = p.A_fn(y) - eps * p.A_fn(y, 1) / p.lambda1_fn(y)
        gaps.append(np.max(np.abs(d - first)))
    assert 3.0 < gaps[0] / gaps[1] < 5.0


def test_rates_must_be_positive():
    with pytest.raises(ValueError):
        RateProfile.from_rates(np.zeros(N), np.ones(N), 0.1)
