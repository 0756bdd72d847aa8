import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from layerfluct.reaction import (BistableReaction, ReactionError, check_balance,
                                 constant_amplitudes, make_cubic, make_skewed_balanced,
                                 make_tilted_cubic, reaction_from_config)


def test_cubic_zeros_and_balance(cubic):
    assert np.allclose(cubic.zeros, (-1.0, 0.0, 1.0), atol=1e-14)
    assert cubic.is_balanced()
    assert check_balance(cubic) == pytest.approx(0.0, abs=1e-14)
    assert cubic.potential(0.0) == pytest.approx(0.25)


def test_tilted_cubic_imbalance():
    # int_{-1}^{1} (1 - u^2)(u + delta) du = 4 delta / 3
    r = make_tilted_cubic(0.3)
    assert r.zeros == pytest.approx((-1.0, -0.3, 1.0))
    assert r.imbalance() == pytest.approx(0.4, rel=1e-12)
    assert not r.is_balanced()


def test_skewed_is_balanced_but_not_odd():
    r = make_skewed_balanced(0.1)
    assert r.is_balanced()
    assert r.f(0.5) != pytest.approx(-r.f(-0.5))


def test_rejects_non_bistable():
    with pytest.raises(ReactionError):
        BistableReaction([1.0, 1.0])
    with pytest.raises(ReactionError):
        make_tilted_cubic(1.5)
    with pytest.raises(ReactionError):
        reaction_from_config("nonsense")


def test_config_ids():
    assert reaction_from_config("cubic").name == "cubic"
    r = reaction_from_config([0.0, 1.0, 0.0, -1.0])
    assert r.zeros == pytest.approx((-1, 0, 1))


def test_taylor_drift_order_check(cubic):
    with pytest.raises(ReactionError):
        cubic.taylor_drift(0.0, 1.0, n=4)


@given(u=st.floats(-0.9, 0.9), phi=st.floats(-3, 3), N=st.integers(1, 10 ** 4),
       d=st.integers(1, 2))
def test_third_order_expansion_is_exact_for_cubic(u, phi, N, d):
    r = make_cubic()
    s = N ** (-d / 2)
    exact = (r.f(u + s * phi) - r.f(u)) / s
    assert r.taylor_drift(u, phi, n=3, N=N, d=d) == pytest.approx(exact, rel=1e-9, abs=1e-9)


@given(u=st.floats(-1.2, 1.2))
def test_potential_derivative_is_minus_f(u):
    r = make_skewed_balanced(0.1)
    h = 1e-6
    dV = (r.potential(u + h) - r.potential(u - h)) / (2 * h)
    assert dV == pytest.approx(-r.f(u), abs=1e-7)


@given(u=st.floats(-1.0, 1.0))
def test_sqrt_2v_real_between_stable_zeros(u):
    r = make_cubic()
    # V is O(eps) near the stable zeros, so the square root carries O(sqrt eps) error
    assert r.sqrt_2v(u) == pytest.approx(np.sqrt(2 * (1 - u * u) ** 2 / 4), abs=3e-8)


def test_local_potential_is_quadratic_at_zero(cubic):
    lp = cubic.local_potential(1.0)
    assert lp.coef[0] == 0 and lp.coef[1] == 0
    # V(1 + s) = s^2 (2 + s)^2 / 4: leading coefficient -f'(1)/2 = 1
    assert lp.coef[2] == pytest.approx(1.0)


def test_constant_amplitudes_broadcast():
    a = constant_amplitudes(2.0, 3.0)
    assert np.all(a.g1(np.zeros(4)) == 2.0)
    assert a.g2(0.3) == 3.0
