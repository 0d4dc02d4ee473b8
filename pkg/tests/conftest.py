import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from delayembed.certify import DelayParameters
from delayembed.fields import hopf3d, lorenz
from delayembed.orbit import PeriodicOrbit
from delayembed.perturb import repair
from delayembed.shooting import ShootingProblem, find_orbit, find_shortest_orbit
from delayembed.signal import trig_signal

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def circle_orbit(radius=1.0):
    """(r cos t, r sin t, 0) with period 2 pi."""
    return PeriodicOrbit.from_coefficients(2 * np.pi, [[0, radius], [0, 0], [0, 0]],
                                           [[0, 0], [0, radius], [0, 0]])


def random_trig(rng, n_modes, period=1.0, decay=1.0):
    k = np.arange(n_modes + 1)
    w = 1.0 / (1.0 + k) ** decay
    a = rng.normal(size=n_modes + 1) * w
    b = rng.normal(size=n_modes + 1) * w
    return trig_signal(period, a, b)


@pytest.fixture(scope="session")
def folded_sine():
    """sin(4 pi t) declared with period 1: the delay map folds t and t + 1/2 together."""
    return trig_signal(1.0, [0, 0, 0], [0, 0, 1])


@pytest.fixture(scope="session")
def sine():
    return trig_signal(1.0, [0, 0], [0, 1])


@pytest.fixture(scope="session")
def unit_circle():
    return circle_orbit()


@pytest.fixture(scope="session")
def hopf_field():
    return hopf3d()


@pytest.fixture(scope="session")
def hopf_orbit(hopf_field):
    prob = ShootingProblem(hopf_field, np.zeros(3), [0, 1, 0], [1.1, 0.0, 0.05], 6.0)
    return find_orbit(prob)


@pytest.fixture(scope="session")
def lorenz_field():
    return lorenz(10.0, 28.0, 8.0 / 3.0)


@pytest.fixture(scope="session")
def lorenz_orbit(lorenz_field):
    return find_shortest_orbit(lorenz_field)


@pytest.fixture(scope="session")
def folded_repair(folded_sine):
    return repair(folded_sine, DelayParameters(0.05), 0.05, 200, seed=0)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
