"""Arithmetic on the circle [0, T).

Every place in the package that reduces times modulo a period, measures gaps
between times, or asks whether a (possibly wrapping) interval contains a time
goes through this module.
"""

from dataclasses import dataclass

import numpy as np


def wrap(t, period):
    """Reduce `t` (scalar or array) into [0, period)."""
    r = np.mod(t, period)
    # np.mod returns `period` itself for tiny negative inputs
    if np.ndim(r) == 0:
        r = float(r)
        return 0.0 if r >= period else r
    r[r >= period] = 0.0
    return r


def forward_gap(a, b, period):
    """Length of the arc travelled going forward from `a` to `b`."""
    return wrap(np.asarray(b) - np.asarray(a), period)


def circular_distance(a, b, period):
    """Shortest arc length between `a` and `b`."""
    g = forward_gap(a, b, period)
    return np.minimum(g, period - g)


def cyclic_gaps(points, period):
    """Gaps between consecutive sorted circle points, the last gap wrapping to the first."""
    p = np.sort(wrap(np.asarray(points, dtype=float), period))
    if p.size == 0:
        return p
    return np.diff(np.append(p, p[0] + period))


@dataclass(frozen=True)
class Arc:
    """The open arc from `start` going forward a distance `length` (may wrap past 0)."""

    start: float
    length: float
    period: float

    def __post_init__(self):
        if not 0 <= self.length <= self.period:
            raise ValueError(f"arc length {self.length} outside [0, {self.period}]")
        object.__setattr__(self, "start", float(wrap(self.start, self.period)))

    @classmethod
    def between(cls, alpha, beta, period):
        """Arc (alpha, beta) travelled forward; alpha > beta means it wraps."""
        return cls(alpha, float(forward_gap(alpha, beta, period)), period)

    @property
    def end(self):
        return float(wrap(self.start + self.length, self.period))

    @property
    def wraps(self):
        return self.start + self.length > self.period

    def offset(self, t):
        """Forward distance from the arc start to `t`, in [0, period)."""
        return forward_gap(self.start, t, self.period)

    def contains(self, t):
        u = self.offset(t)
        return (u > 0) & (u < self.length)

    def disjoint(self, other):
        """True when the closed arcs share no point."""
        if self.period != other.period:
            raise ValueError("arcs on different circles")
        a = other.offset(self.start)
        b = self.offset(other.start)
        return bool(a > other.length and b > self.length)
