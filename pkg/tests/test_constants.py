import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from layerfluct import constants
from layerfluct.profile import solve_standing_wave
from layerfluct.reaction import constant_amplitudes, make_cubic, make_skewed_balanced

SQ2 = np.sqrt(2.0)


def test_cubic_closed_forms(cubic):
    rep = constants.compute_constants(cubic)
    assert rep.surface_tension == pytest.approx(2 * SQ2 / 3, abs=1e-12)
    # grad part: int U0''^2 / S = 2 sqrt2 / 15 / (2 sqrt2 / 3) = 0.4; flip part = 1
    assert rep.grad_part == pytest.approx(0.4, abs=1e-12)
    assert rep.flip_part == pytest.approx(1.0, abs=1e-12)
    assert rep.c_star == pytest.approx(np.sqrt(1.4), abs=1e-12)
    assert rep.c2 == pytest.approx(0.0, abs=1e-12)
    assert rep.c3 == pytest.approx(-9 * SQ2 / 35, abs=1e-12)
    assert rep.c3_by_parts == pytest.approx(rep.c3, abs=1e-12)
    assert rep.sigma_sq_minus == pytest.approx(1 / (4 * SQ2), abs=1e-12)


def test_c3_direct_oracle(wave):
    # independent route: trapezoid on a long tanh grid
    z = np.linspace(-30, 30, 600001)
    dU = (1 - np.tanh(z / SQ2) ** 2) / SQ2
    S = integrate.trapezoid(dU ** 2, z)
    c3 = integrate.trapezoid(-6 * dU ** 4, z) / (6 * S ** 2)
    assert constants.c3_constant(make_cubic()) == pytest.approx(c3, abs=1e-9)


def test_grid_route_agrees(wave):
    a = constants.compute_constants(make_cubic())
    b = constants.grid_constants(wave)
    for key in ("surface_tension", "c_star", "c2", "c3", "c3_by_parts"):
        assert getattr(a, key) == pytest.approx(getattr(b, key), abs=1e-8)


def test_skewed_balanced():
    r = make_skewed_balanced(0.1)
    a = constants.compute_constants(r)
    b = constants.grid_constants(solve_standing_wave(r))
    assert abs(a.c2) < 1e-8
    assert a.c3 == pytest.approx(b.c3, abs=1e-8)
    assert a.c3_by_parts == pytest.approx(a.c3, abs=1e-8)
    assert a.c_star == pytest.approx(b.c_star, abs=1e-8)


def test_accepts_wave(wave):
    assert constants.surface_tension(wave) == pytest.approx(2 * SQ2 / 3, abs=1e-12)


def test_amplitudes_scale_c_star(cubic):
    a = constants.c_star(cubic, constant_amplitudes(2.0, 0.0))
    assert a ** 2 == pytest.approx(4 * 0.4, abs=1e-12)


def test_interface_variance_rate(cubic):
    assert constants.interface_variance_rate(cubic) == pytest.approx(1.4 / (2 * SQ2 / 3))


@given(c=st.floats(0.01, 100.0), amp=st.floats(0.0, 10.0))
def test_sigma_sq_routes_agree(c, amp):
    q = constants.sigma_sq(c, amp, "quad")
    s = constants.sigma_sq(c, amp, "closed")
    assert q == pytest.approx(s, rel=1e-10, abs=1e-14)


def test_sigma_sq_value():
    assert constants.sigma_sq(2.0, 1.0) == pytest.approx(1 / (4 * SQ2), abs=1e-12)
    with pytest.raises(ValueError):
        constants.sigma_sq(0.0)
