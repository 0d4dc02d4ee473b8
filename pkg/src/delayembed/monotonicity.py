"""Critical points of a periodic signal and its minimum interval of monotonicity."""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .circle import cyclic_gaps, forward_gap, wrap
from .signal import norm_r

__all__ = [
    "DegenerateSignalError",
    "IrregularSignalError",
    "MonotonicityProfile",
    "critical_points",
    "min_monotone_interval",
]

REGULARITY_RTOL = 1e-8
# |o'| below this fraction of max|o'| at a non-crossing local minimum is a tangency
TANGENCY_RTOL = 1e-9


class DegenerateSignalError(ValueError):
    """Constant signal: every point is critical."""


class IrregularSignalError(ValueError):
    """0 is not a regular value of o'; see delayembed.perturb.regularize."""


@dataclass(frozen=True)
class MonotonicityProfile:
    period: float
    critical_points: np.ndarray
    second_derivatives: np.ndarray
    mu: float
    regular: bool
    tangencies: tuple = ()
    tolerance: float = 0.0
    grid: int = 0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def count(self):
        return int(self.critical_points.size)

    def interval_index(self, t):
        """Index i of the monotone arc [c_i, c_{i+1}) containing t."""
        c = self.critical_points
        u = forward_gap(c[0], t, self.period)
        offsets = forward_gap(c[0], c, self.period)
        return (np.searchsorted(offsets, u, side="right") - 1) % c.size

    def to_dict(self):
        return {
            "period": self.period,
            "critical_points": self.critical_points.tolist(),
            "second_derivatives": self.second_derivatives.tolist(),
            "mu": self.mu,
            "regular": self.regular,
            "tangencies": list(self.tangencies),
            "tolerance": self.tolerance,
            "grid": self.grid,
        }


def _bracket_grid(o):
    n = 16 * (o.n_modes + 1)
    if o.pieces:
        n = max(n, int(np.ceil(16 * o.period / o.feature_scale)))
    return max(n, 256)


def critical_points(o, n=None):
    """Locate every zero of o' on the circle and classify regularity.

    Sign changes of o' on a dense grid are polished with Brent's method to
    1e-14 in t. Local minima of |o'| without a sign change are refined and,
    when |o'| essentially vanishes there, reported as tangencies (o' = o'' = 0),
    which makes the profile irregular.
    """
    if o.is_constant():
        raise DegenerateSignalError("constant signal: every point is critical")
    T = o.period
    n = n or _bracket_grid(o)
    t, d1 = o.sample(n, 1)
    h = T / n
    scale = float(np.max(np.abs(d1)))
    s = np.sign(d1)
    s_next = np.roll(s, -1)

    roots = [t[j] for j in np.flatnonzero(s == 0)]
    for j in np.flatnonzero(s * s_next < 0):
        a, b = t[j], t[j] + h
        fa, fb = float(o(a, 1)), float(o(b, 1))
        if fa * fb > 0:
            # FFT grid and pointwise evaluation disagree at round-off level
            roots.append(wrap(a if abs(fa) < abs(fb) else b, T))
            continue
        roots.append(wrap(brentq(lambda x: o(x, 1), a, b, xtol=1e-15, rtol=1e-15), T))

    tangencies = []
    mag = np.abs(d1)
    is_min = (mag < np.roll(mag, 1)) & (mag <= np.roll(mag, -1))
    no_cross = (s * s_next > 0) & (np.roll(s, 1) * s > 0)
    for j in np.flatnonzero(is_min & no_cross):
        res = minimize_scalar(lambda x: abs(o(x, 1)), bounds=(t[j] - h, t[j] + h),
                              method="bounded", options={"xatol": 1e-14})
        if res.fun <= TANGENCY_RTOL * scale:
            tangencies.append(wrap(float(res.x), T))
    roots.extend(tangencies)

    roots = np.sort(np.asarray(roots, dtype=float))
    if roots.size > 1:
        # a root sitting on a grid node can be found twice
        keep = np.append(True, np.diff(roots) > 1e-12 * T)
        roots = roots[keep]
        if T - roots[-1] + roots[0] <= 1e-12 * T:
            roots = roots[:-1]
    second = np.asarray(o(roots, 2), dtype=float) if roots.size else np.zeros(0)
    tol = REGULARITY_RTOL * norm_r(o, 2)
    # zeros landing on grid nodes (or bracketed by round-off) can be tangential too
    flat = {float(r) for r, s2 in zip(roots, second) if abs(s2) <= tol}
    tangencies = tuple(sorted(flat.union(tangencies)))
    regular = bool(roots.size >= 2 and not tangencies and np.all(np.abs(second) > tol))
    if regular:
        # maxima and minima must alternate around the circle
        regular = bool(np.all(np.sign(second) != np.sign(np.roll(second, -1))))
    mu = float(np.min(cyclic_gaps(roots, T))) if roots.size else T
    return MonotonicityProfile(T, roots, second, mu, regular, tuple(tangencies), tol, n,
                               {"derivative_scale": scale})


def min_monotone_interval(profile):
    """Minimum width mu of an interval of strict monotonicity."""
    if not profile.regular:
        raise IrregularSignalError(
            "0 is not a regular value of the derivative; regularize the signal first "
            "(delayembed.perturb.regularize)"
        )
    if profile.count < 2:
        raise IrregularSignalError("fewer than two critical points")
    return float(np.min(cyclic_gaps(profile.critical_points, profile.period)))
