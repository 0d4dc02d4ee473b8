"""Infinitely differentiable bump functions.

All bumps here are built from the transition

    S(y) = psi(y) / (psi(y) + psi(1 - y)),   psi(y) = exp(-1/y) for y > 0, else 0,

which is 0 for y <= 0, 1 for y >= 1 and satisfies S(y) + S(1 - y) = 1. A bump
is S(a - b|x - c|): equal to 1 on |x - c| <= (a - 1)/b and 0 for
|x - c| >= a/b.

Derivatives of every order are exact. psi^(n)(y) = psi(y) P_n(1/y) with
P_0 = 1 and P_{n+1}(z) = z^2 (P_n(z) - P_n'(z)); derivatives of S follow from
Leibniz's rule applied to S * (A + B) = A.
"""

from dataclasses import dataclass
from functools import lru_cache
from math import comb

import numpy as np
from numpy.polynomial import Polynomial
from scipy.special import roots_legendre

__all__ = [
    "smooth_step",
    "smooth_step_integral",
    "BumpFunction",
    "STANDARD",
    "SURGERY",
    "PLATEAU_QUARTER",
    "bump_eval",
]

# exp(-1/y) underflows to 0 well before this
_PSI_FLOOR = 1e-3


@lru_cache(maxsize=None)
def _psi_polys(order):
    polys = [Polynomial([1.0])]
    z2 = Polynomial([0.0, 0.0, 1.0])
    for _ in range(order):
        p = polys[-1]
        polys.append(z2 * (p - p.deriv()))
    return tuple(polys)


def _psi_derivs(y, order):
    """psi^(n)(y) for n = 0..order; rows index n."""
    y = np.asarray(y, dtype=float)
    live = y > _PSI_FLOOR
    z = np.where(live, 1.0 / np.where(live, y, 1.0), 0.0)
    base = np.where(live, np.exp(-z), 0.0)
    return np.array([base * p(z) for p in _psi_polys(order)])


def smooth_step(y, k=0):
    """k-th derivative of the transition S at `y` (scalar or array)."""
    y = np.asarray(y, dtype=float)
    out = np.where(y >= 1.0, 1.0 if k == 0 else 0.0, 0.0)
    inner = (y > 0.0) & (y < 1.0)
    if not np.any(inner):
        return out[()] if out.ndim == 0 else out
    yi = y[inner]
    a = _psi_derivs(yi, k)
    b = _psi_derivs(1.0 - yi, k)
    b *= ((-1.0) ** np.arange(k + 1))[:, None]
    d = a + b
    s = [a[0] / d[0]]
    for n in range(1, k + 1):
        acc = a[n].copy()
        for j in range(1, n + 1):
            acc -= comb(n, j) * d[j] * s[n - j]
        s.append(acc / d[0])
    out = np.array(out, dtype=float)
    out[inner] = s[k]
    return out[()] if out.ndim == 0 else out


_GL_X, _GL_W = roots_legendre(24)
_GL_PANELS = 4


def _step_integral_low(y):
    # composite Gauss-Legendre for y in [0, 1/2]
    y = np.asarray(y, dtype=float)
    total = np.zeros_like(y)
    h = y / _GL_PANELS
    for i in range(_GL_PANELS):
        mid = (i + 0.5) * h
        nodes = mid[..., None] + 0.5 * h[..., None] * _GL_X
        total += 0.5 * h * np.sum(_GL_W * smooth_step(nodes), axis=-1)
    return total


def smooth_step_integral(y):
    """G(y) = integral of S over [0, y], clipped to [0, 1] (G(1) = 1/2)."""
    y = np.clip(np.asarray(y, dtype=float), 0.0, 1.0)
    low = y <= 0.5
    out = np.empty_like(y)
    out[low] = _step_integral_low(y[low])
    hi = ~low
    # S(u) = 1 - S(1 - u)
    out[hi] = y[hi] - 0.5 + _step_integral_low(1.0 - y[hi])
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class BumpFunction:
    """lambda(x) = S(rise - slope * |x - center|).

    The plateau is |x - center| <= (rise - 1)/slope and the support is
    |x - center| < rise/slope.
    """

    name: str
    rise: float
    slope: float
    center: float = 0.0

    @property
    def plateau_halfwidth(self):
        return (self.rise - 1.0) / self.slope

    @property
    def support_halfwidth(self):
        return self.rise / self.slope

    @property
    def integral(self):
        """Integral over the real line; closed form from S(y) + S(1 - y) = 1."""
        return (2.0 * self.rise - 1.0) / self.slope

    def __call__(self, x, k=0):
        return bump_eval(self, x, k)

    def antiderivative(self, x):
        """Integral of the bump from -infinity to `x`."""
        x = np.asarray(x, dtype=float)
        u = x - self.center
        y = self.rise - self.slope * np.abs(u)
        p = self.plateau_halfwidth
        half = 0.5 * self.integral
        left = smooth_step_integral(y) / self.slope
        right = self.integral - left
        mid = half + u
        out = np.where(u <= -p, left, np.where(u >= p, right, mid))
        return out[()] if out.ndim == 0 else out


def bump_eval(bump, x, k=0):
    """k-th derivative of `bump` at `x`."""
    x = np.asarray(x, dtype=float)
    u = x - bump.center
    y = bump.rise - bump.slope * np.abs(u)
    val = smooth_step(y, k)
    if k:
        val = val * (-bump.slope * np.sign(u)) ** k
    return val


# 1 on |x| <= 1/2, 0 on |x| >= 1: the pulses lambda_j
STANDARD = BumpFunction("standard", rise=2.0, slope=2.0)
# 1 on |x| <= 1/2, 0 on |x| >= 3/4: the cut-off for the field correction
SURGERY = BumpFunction("surgery", rise=3.0, slope=4.0)
# on [0, 1]: 0 on [0, 1/8] and [7/8, 1], 1 on [1/4, 3/4]; integral 5/8
PLATEAU_QUARTER = BumpFunction("plateau-quarter", rise=3.0, slope=8.0, center=0.5)

PROFILES = {b.name: b for b in (STANDARD, SURGERY, PLATEAU_QUARTER)}
