import mpmath as mp
import numpy as np
import pytest

from forcedwell.capacity import TransitionSets, capacity_bounds, tilde_committors
from forcedwell.errors import QuadratureFailure
from forcedwell.invariant_solver import build_elements, build_expansion
from forcedwell.jump_model import build_rate_profile
from forcedwell.potential import make_tilted_quartic

SIGMA, EPS = 0.45, 0.1


def _static_capacity(sigma, eps, a, b):
    V = lambda x: x**4 / 4 - x**2 / 2
    Z = mp.quad(lambda x: mp.e ** (-2 * V(x) / sigma**2), [-mp.inf, -1, 0, 1, mp.inf])
    N = mp.quad(lambda x: mp.e ** (2 * V(x) / sigma**2), [a, 0, b])
    return float(sigma**2 / (2 * eps * Z * N))


@pytest.fixture(scope="module")
def flat_parts(symmetric):
    prof = build_rate_profile(symmetric, SIGMA, EPS, n_y=32)
    el = build_elements(symmetric, SIGMA, n_y=16, n_max=4)
    return prof, build_expansion(symmetric, prof, el, n_max=4)


@pytest.mark.parametrize("rho", [0.0, 0.5])
def test_static_potential_matches_quadrature(symmetric, flat_parts, rho):
    prof, ex = flat_parts
    est = capacity_bounds(TransitionSets(symmetric, 0.3), prof, ex, rho=rho, n_y=8)
    ref = _static_capacity(SIGMA, EPS, -0.7, 0.7)
    assert est.dirichlet_upper == pytest.approx(ref, rel=1e-8)
    assert est.thomson_lower == pytest.approx(ref, rel=1e-8)
    assert est.defect_upper < 1e-12 * ref and est.defect_lower < 1e-12 * ref
    assert est.bracket_ok


def test_static_ratio_to_leading_order(symmetric, flat_parts):
    prof, ex = flat_parts
    est = capacity_bounds(TransitionSets(symmetric, 0.3), prof, ex, n_y=8)
    assert abs(est.dirichlet_upper / est.C0 - 1) < SIGMA**2


def test_tilde_committor_is_monotone(tilted):
    prof = build_rate_profile(tilted, SIGMA, EPS, n_y=32)
    el = build_elements(tilted, SIGMA, n_y=16, n_max=4)
    ex = build_expansion(tilted, prof, el, n_max=4)
    sets = TransitionSets(tilted, 0.3)
    for y in (0.0, 0.3, 0.7):
        x, h, hs = tilde_committors(sets, ex, y)
        assert x[0] == pytest.approx(sets.a(y)) and x[-1] == pytest.approx(sets.b(y))
        for arr in (h, hs):
            assert arr[0] == 1.0 and abs(arr[-1]) < 1e-15
            assert np.all(np.diff(arr) <= 0)


def test_transition_sets_check(tilted):
    grid = np.arange(32) / 32
    assert TransitionSets(tilted, 0.3).check(grid)
    assert not TransitionSets(tilted, 0.9).check(grid)


def test_tilted_bracket(tilted):
    prof = build_rate_profile(tilted, SIGMA, EPS, n_y=64)
    el = build_elements(tilted, SIGMA, n_y=32, n_max=6)
    ex = build_expansion(tilted, prof, el, n_max=6, rho=0.5)
    est = capacity_bounds(TransitionSets(tilted, 0.3), prof, ex, rho=0.5, n_y=32)
    assert est.bracket_ok
    assert 0.5 < est.thomson_lower / est.C0 < 2
    assert 0.5 < est.dirichlet_upper / est.C0 < 2


def test_expansion_out_of_regime_is_reported():
    # eps / sigma^2 = 1.6: the truncated density turns negative between the sets
    m = make_tilted_quartic(1.0, 0.1)
    sigma, eps = 0.35, 0.2
    prof = build_rate_profile(m, sigma, eps, n_y=64)
    el = build_elements(m, sigma, n_y=64, n_max=8)
    ex = build_expansion(m, prof, el, n_max=8, rho=0.5)
    with pytest.raises(QuadratureFailure):
        capacity_bounds(TransitionSets(m, 0.3), prof, ex, rho=0.5)


@pytest.mark.parametrize("rho_hat", [0.2, 0.4])
def test_static_capacity_follows_the_sets(symmetric, flat_parts, rho_hat):
    # the exact capacity itself moves with rho_hat; the bound tracks it
    prof, ex = flat_parts
    est = capacity_bounds(TransitionSets(symmetric, rho_hat), prof, ex, n_y=8)
    ref = _static_capacity(SIGMA, EPS, -1 + rho_hat, 1 - rho_hat)
    assert est.dirichlet_upper == pytest.approx(ref, rel=1e-8)


def test_symmetric_committors(symmetric, flat_parts):
    _, ex = flat_parts
    x, h, hs = tilde_committors(TransitionSets(symmetric, 0.3), ex, 0.4)
    assert np.interp(0.0, x, h) == pytest.approx(0.5, abs=1e-9)
    assert np.allclose(hs, h, atol=1e-9)


def test_defects_shrink_with_epsilon_when_slow(tilted):
    # delta1 - A ~ eps A' / lambda1 must be small, i.e. eps << min lambda1 / max|A'| ~ 0.007
    el = build_elements(tilted, SIGMA, n_y=32, n_max=6)
    out = []
    for eps in (0.002, 0.001):
        prof = build_rate_profile(tilted, SIGMA, eps, n_y=64)
        ex = build_expansion(tilted, prof, el, n_max=6, rho=0.5)
        out.append(capacity_bounds(TransitionSets(tilted, 0.3), prof, ex, rho=0.5, n_y=32))
    rel = [(e.defect_lower / e.C0, e.defect_upper / e.C0) for e in out]
    assert 1.6 < rel[0][0] / rel[1][0] < 2.4
    assert rel[0][1] / rel[1][1] > 2.0
