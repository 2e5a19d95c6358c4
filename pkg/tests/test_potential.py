import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from forcedwell.errors import BistabilityLost
from forcedwell.potential import (PotentialModel, find_critical_points, make_tilted_quartic,
                                  validate_assumptions)

FOLD_TILT = 2.0 / (3.0 * math.sqrt(3.0))  # largest tilt with three critical points at unit depth


def test_critical_points_match_cubic_roots(tilted):
    roots = sorted(float(mp.re(r)) for r in mp.polyroots([1, 0, -1, -0.1], maxsteps=200, extraprec=60))
    g = find_critical_points(tilted, 0.0)
    assert [g.x_minus, g.x_saddle, g.x_plus] == pytest.approx(roots, abs=1e-12)


def test_barrier_heights_from_potential_values(tilted):
    for y in np.linspace(0, 1, 17):
        g = find_critical_points(tilted, y)
        V = lambda x: float(tilted.V(x, y))
        assert g.h_minus == pytest.approx(V(g.x_saddle) - V(g.x_minus), abs=1e-10)
        assert g.h_plus == pytest.approx(V(g.x_saddle) - V(g.x_plus), abs=1e-10)
        assert g.omega_minus**2 == pytest.approx(3 * g.x_minus**2 - 1, rel=1e-12)
        assert g.omega0**2 == pytest.approx(1 - 3 * g.x_saddle**2, rel=1e-12)


def test_symmetric_quartic_geometry(symmetric):
    g = find_critical_points(symmetric, 0.3)
    assert (g.x_minus, g.x_saddle, g.x_plus) == pytest.approx((-1, 0, 1), abs=1e-13)
    assert g.h_minus == pytest.approx(0.25) and g.h_plus == pytest.approx(0.25)
    assert g.omega_minus == pytest.approx(math.sqrt(2)) and g.omega0 == pytest.approx(1.0)


def test_bistability_lost_past_fold():
    find_critical_points(make_tilted_quartic(1.0, 0.99 * FOLD_TILT), 0.0)
    with pytest.raises(BistabilityLost):
        find_critical_points(make_tilted_quartic(1.0, 1.01 * FOLD_TILT), 0.0)


def test_monostable_fails_validation():
    rep = validate_assumptions(make_tilted_quartic(-1.0, 0.0))
    assert not rep.ok and not rep.bistable
    assert any("bistability" in f for f in rep.failures)


def test_default_family_passes_validation(tilted):
    rep = validate_assumptions(tilted)
    assert rep.ok, rep.failures
    assert rep.to_dict()["ok"]


def test_tilt_sign_deepens_left_well_at_phase_zero(tilted):
    # lambda(0) > 0 pushes the drift to the right, so the right well is deeper
    g = find_critical_points(tilted, 0.0)
    assert g.h_plus > g.h_minus
    assert g.delta_bar(0.45) > 0


def test_dict_round_trip(tilted):
    assert PotentialModel.from_dict(tilted.to_dict()) == tilted


def test_unknown_family_rejected():
    with pytest.raises(ValueError):
        PotentialModel(family="sextic")


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-2.5, 2.5), y=st.floats(-2, 2), tilt=st.floats(0, 0.3),
       mod=st.floats(0, 0.3), phase=st.floats(0, 1))
def test_derivatives_match_finite_differences(x, y, tilt, mod, phase):
    m = make_tilted_quartic(1.0, tilt, phase, mod)
    h = 1e-5
    fd_x = (m.V(x + h, y) - m.V(x - h, y)) / (2 * h)
    fd_y = (m.V(x, y + h) - m.V(x, y - h)) / (2 * h)
    fd_xx = (m.dV_dx(x + h, y) - m.dV_dx(x - h, y)) / (2 * h)
    fd_xy = (m.dV_dx(x, y + h) - m.dV_dx(x, y - h)) / (2 * h)
    fd_yy = (m.dV_dy(x, y + h) - m.dV_dy(x, y - h)) / (2 * h)
    assert m.dV_dx(x, y) == pytest.approx(fd_x, abs=1e-6)
    assert m.dV_dy(x, y) == pytest.approx(fd_y, abs=1e-6)
    assert m.d2V_dx2(x, y) == pytest.approx(fd_xx, abs=1e-6)
    assert m.d2V_dxdy(x, y) == pytest.approx(fd_xy, abs=1e-5)
    assert m.d2V_dy2(x, y) == pytest.approx(fd_yy, abs=1e-5)
    assert m.drift(x, y) == pytest.approx(-m.dV_dx(x, y))


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-3, 3), y=st.floats(0, 1), k=st.integers(-3, 3))
def test_potential_is_one_periodic(x, y, k):
    m = make_tilted_quartic(1.0, 0.1, 0.2, 0.1)
    assert m.V(x, y + k) == pytest.approx(float(m.V(x, y)), abs=1e-11)


def test_offset_shifts_potential_not_geometry(tilted):
    c = lambda y: 0.7 * np.sin(2 * np.pi * np.asarray(y))
    dc = lambda y: 1.4 * np.pi * np.cos(2 * np.pi * np.asarray(y))
    d2c = lambda y: -2.8 * np.pi**2 * np.sin(2 * np.pi * np.asarray(y))
    shifted = tilted.with_offset(c, dc, d2c)
    g0, g1 = find_critical_points(tilted, 0.2), find_critical_points(shifted, 0.2)
    assert g1.h_minus == pytest.approx(g0.h_minus, abs=1e-12)
    assert float(shifted.V(0.3, 0.2)) - float(tilted.V(0.3, 0.2)) == pytest.approx(float(c(0.2)))
