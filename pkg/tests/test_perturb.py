import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from delayembed.bump import PLATEAU_QUARTER
from delayembed.certify import DelayParameters, certify
from delayembed.circle import Arc
from delayembed.monotonicity import critical_points
from delayembed.perturb import (EpsilonTooLargeError, PulseFamily, RepairError, apply_pulses, regularize, repair,
                                six_indices, slope_interior_bound, slope_signal)
from delayembed.signal import constant_signal, distance_r, norm_r, trig_signal

from test_monotonicity import cubed_sine

seeds = st.integers(0, 2**32 - 1)


# ------------------------------------------------------------ slope signal


def test_slope_signal_example():
    eps = 0.01
    o = slope_signal(1.0, 0.25, 0.75, eps)
    c = PLATEAU_QUARTER.integral
    k = 0.02 / c
    # the interior derivative is eps - k lam((t - alpha)/(beta - alpha)); check at the plateau
    assert o(0.5, 1) == pytest.approx(eps - k, rel=1e-12)
    # periodicity: the derivative integrates to zero over a period (adaptive quadrature)
    total, _ = quad(lambda t: o(t, 1), 0, 1, points=[0.25, 0.3125, 0.375, 0.625, 0.6875, 0.75],
                    epsabs=1e-14, limit=200)
    assert abs(total) < 1e-10
    assert abs(o(1.0) - o(0.0)) < 1e-10
    assert o(0.0) == 0.0


def test_slope_signal_zero():
    o = slope_signal(1.0, 0.25, 0.75, 0.0)
    assert o.is_constant() and o(0.3) == 0.0


@pytest.mark.parametrize("eps", [1e-2, 1e-3, 1e-4])
def test_slope_derivative_outside_arc(eps):
    o = slope_signal(2.0, 1.5, 0.5, eps)  # arc wraps through 0
    t = np.linspace(0.5, 1.5, 1001)
    np.testing.assert_allclose(o(t, 1), eps, atol=1e-12)


@given(st.floats(0.05, 0.9), st.floats(0.05, 0.9), st.floats(-0.1, 0.1))
def test_slope_interior_bound_holds(alpha, length, eps):
    o = slope_signal(1.0, alpha, alpha + length, eps)
    t = alpha + length * np.linspace(0, 1, 2001)
    bound = abs(eps) * slope_interior_bound(1.0, length)
    assert np.max(np.abs(o(t, 1))) <= bound * (1 + 1e-12) + 1e-15


def test_slope_linear_in_epsilon():
    norms = [norm_r(slope_signal(1.0, 0.25, 0.75, e), 1) for e in (0.01, 0.005)]
    assert norms[0] / norms[1] == pytest.approx(2.0, abs=1e-6)


def test_slope_epsilon_too_large():
    with pytest.raises(EpsilonTooLargeError) as info:
        slope_signal(1.0, 0.25, 0.75, 1.0, delta=0.5)
    limit = info.value.max_epsilon
    assert 0 < limit < 0.5
    slope_signal(1.0, 0.25, 0.75, 0.99 * limit, delta=0.5)


# ------------------------------------------------------------- regularize


def test_regularize_regular_unchanged(sine):
    assert regularize(sine, 1e-3) is sine


def test_regularize_constant():
    out = regularize(constant_signal(0.0, 1.0), 1e-3, order=0)
    np.testing.assert_allclose(out.sin[1], 1e-4, rtol=1e-14)
    assert critical_points(out).regular


def test_regularize_tangency():
    o = cubed_sine()
    assert not critical_points(o).regular
    out = regularize(o, 1e-2)
    assert critical_points(out).regular
    assert distance_r(o, out, 2).value <= 1e-2
    assert out.period == o.period


# ------------------------------------------------------------ pulse family


def test_pulse_family_cover():
    fam = PulseFamily(1.0, 0.06)
    assert fam.h == pytest.approx(0.03)
    t = np.linspace(0, 1, 5001, endpoint=False)
    js = fam.index_for(t)
    vals = np.array([fam.basis(j, ti) for j, ti in zip(js, t)])
    np.testing.assert_array_equal(vals, 1.0)


def test_apply_pulses_examples(sine):
    fam = PulseFamily(1.0, 0.1)
    assert apply_pulses(sine, fam) is sine
    c = np.zeros(fam.count)
    j = int(fam.index_for(0.37))
    c[j] = 0.2
    out = apply_pulses(sine, fam.with_coefficients(c))
    assert out(0.37) == pytest.approx(sine(0.37) + 0.2, abs=1e-15)


def test_apply_pulses_distance_linear(sine):
    fam = PulseFamily(1.0, 0.1)
    c = np.random.default_rng(0).uniform(-1, 1, fam.count)
    d = [distance_r(sine, apply_pulses(sine, fam.with_coefficients(s * c)), 2).value for s in (1e-3, 5e-4)]
    assert d[0] / d[1] == pytest.approx(2.0, rel=1e-9)


def test_six_indices_example():
    fam = PulseFamily(1.0, 0.06)
    idx, times = six_indices(fam, 0.0, 0.5, 0.06)
    assert len(set(idx)) == 6
    for j, t in zip(idx, times):
        assert fam.basis(j, t) == 1.0
    # each pulse is 1 at exactly one of the six times
    for j in idx:
        hits = [fam.basis(j, t) == 1.0 for t in times]
        assert sum(hits) == 1


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0.005, 0.08))
def test_lagged_windows_disjoint(t1, t2, tau):
    gap = min(abs(t1 - t2), 1 - abs(t1 - t2))
    if gap <= 3 * tau + 1e-12:
        return
    a = Arc(t1 - 2 * tau, 2 * tau, 1.0)
    b = Arc(t2 - 2 * tau, 2 * tau, 1.0)
    assert a.disjoint(b)


# ----------------------------------------------------------------- repair


def test_repair_noop(sine):
    res = repair(sine, DelayParameters(0.125), 0.05, 10)
    assert res.iterations == 0 and res.signal is sine


def test_repair_folded(folded_sine, folded_repair):
    res = folded_repair
    assert res.certificate.certified
    assert res.certificate.margin > 0
    assert res.iterations <= 200
    assert distance_r(folded_sine, res.signal, 2).value <= 0.05
    assert certify(res.signal, DelayParameters(0.05)).certified


def test_repair_reproducible(folded_sine):
    runs = [repair(folded_sine, DelayParameters(0.08), 0.05, 50, seed=3) for _ in range(2)]
    assert runs[0].certificate.certified
    np.testing.assert_array_equal(runs[0].family.coefficients, runs[1].family.coefficients)
    assert [e["verdict"] for e in runs[0].trace if e["accepted"]][-1] == "certified"


def test_repair_iteration_cap(folded_sine):
    with pytest.raises(RepairError) as info:
        repair(folded_sine, DelayParameters(0.05), 0.05, 1, seed=0)
    assert len(info.value.trace) == 1
