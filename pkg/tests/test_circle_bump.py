import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayembed.bump import PLATEAU_QUARTER, STANDARD, SURGERY, bump_eval, smooth_step, smooth_step_integral
from delayembed.circle import Arc, circular_distance, cyclic_gaps, forward_gap, wrap

reals = st.floats(-50, 50, allow_nan=False)


def test_wrap_and_gaps():
    assert wrap(1.25, 1.0) == pytest.approx(0.25)
    assert wrap(-0.25, 1.0) == pytest.approx(0.75)
    assert forward_gap(0.9, 0.1, 1.0) == pytest.approx(0.2)
    assert circular_distance(0.9, 0.1, 1.0) == pytest.approx(0.2)
    np.testing.assert_allclose(cyclic_gaps(np.array([0.1, 0.2, 0.9]), 1.0), [0.1, 0.7, 0.2])


@given(reals, reals, st.floats(0.1, 10))
def test_circular_distance_symmetric_and_bounded(a, b, T):
    d = circular_distance(a, b, T)
    assert d == pytest.approx(circular_distance(b, a, T), abs=1e-9)
    assert -1e-12 <= d <= 0.5 * T + 1e-12


def test_wrapping_arc():
    arc = Arc.between(0.9, 0.2, 1.0)
    assert arc.wraps
    assert arc.length == pytest.approx(0.3)
    assert arc.contains(0.95) and arc.contains(0.1) and not arc.contains(0.5)
    assert arc.disjoint(Arc.between(0.3, 0.8, 1.0))
    assert not arc.disjoint(Arc.between(0.15, 0.5, 1.0))


def test_standard_bump_examples():
    assert bump_eval(STANDARD, 0.0) == 1.0
    for k in range(5):
        assert bump_eval(STANDARD, 2.0, k) == 0.0
    assert bump_eval(STANDARD, 0.5) == 1.0
    assert bump_eval(STANDARD, 1.0) == 0.0


def test_surgery_bump_support():
    assert bump_eval(SURGERY, 0.5) == 1.0
    assert bump_eval(SURGERY, 0.75) == 0.0
    assert 0 < bump_eval(SURGERY, 0.6) < 1


def _mp_bump(rise, slope, center):
    psi = lambda y: mp.e ** (-1 / y) if y > 0 else mp.mpf(0)

    def S(y):
        if y <= 0:
            return mp.mpf(0)
        if y >= 1:
            return mp.mpf(1)
        return psi(y) / (psi(y) + psi(1 - y))

    return lambda x: S(rise - slope * abs(x - center))


def test_plateau_quarter_integral_against_quadrature():
    # adaptive quadrature of an independent high-precision implementation
    mp.mp.dps = 30
    lam = _mp_bump(3, 8, mp.mpf(1) / 2)
    c = float(mp.quad(lam, [0, 0.125, 0.25, 0.75, 0.875, 1]))
    assert PLATEAU_QUARTER.integral == pytest.approx(c, abs=1e-12)
    assert c == pytest.approx(0.625, abs=1e-12)
    assert 0.5 < c < 1
    assert float(PLATEAU_QUARTER.antiderivative(1.0)) == pytest.approx(c, abs=1e-12)
    assert PLATEAU_QUARTER(np.array([0.25, 0.5, 0.75])).tolist() == [1.0, 1.0, 1.0]
    assert PLATEAU_QUARTER(np.array([0.0, 0.125, 0.875, 1.0])).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_antiderivative_matches_quadrature():
    mp.mp.dps = 25
    lam = _mp_bump(2, 2, 0)
    for x in (-0.9, -0.6, -0.2, 0.3, 0.7, 0.95):
        ref = float(mp.quad(lam, [-1, min(x, -0.5), x] if x > -0.5 else [-1, x]))
        assert float(STANDARD.antiderivative(x)) == pytest.approx(ref, abs=1e-12)


@given(st.floats(-1.2, 1.2), st.integers(0, 5))
def test_bump_range_and_symmetry(x, k):
    v = bump_eval(STANDARD, x)
    assert 0.0 <= v <= 1.0
    assert bump_eval(STANDARD, -x, k) == pytest.approx((-1) ** k * bump_eval(STANDARD, x, k), abs=1e-9)


@given(st.floats(0.02, 0.98))
def test_smooth_step_reflection(y):
    assert smooth_step(y) + smooth_step(1 - y) == pytest.approx(1.0, abs=1e-15)
    assert smooth_step(y, 1) == pytest.approx(smooth_step(1 - y, 1), rel=1e-9, abs=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2, 3, 4, 5])
def test_bump_derivatives_by_finite_differences(k):
    # central differences of order k converge to order k+1 at second order
    x = np.linspace(-0.95, 0.95, 37)
    x = x[np.abs(np.abs(x) - 0.5) > 0.02]
    errs = []
    for h in (1e-4, 5e-5):
        fd = (bump_eval(STANDARD, x + h, k) - bump_eval(STANDARD, x - h, k)) / (2 * h)
        errs.append(np.max(np.abs(fd - bump_eval(STANDARD, x, k + 1))))
    scale = float(np.max(np.abs(bump_eval(STANDARD, x, k + 1))))
    assert errs[1] < 1e-4 * scale
    assert 3.8 < errs[0] / errs[1] < 4.2


def test_smooth_step_integral_endpoints():
    assert float(smooth_step_integral(0.0)) == 0.0
    assert float(smooth_step_integral(1.0)) == pytest.approx(0.5, abs=1e-15)
    mp.mp.dps = 25
    S = _mp_bump(0, -1, 0)  # S(|y|)
    for y in (0.2, 0.5, 0.8):
        assert float(smooth_step_integral(y)) == pytest.approx(float(mp.quad(S, [0, y])), abs=1e-13)
