"""Periodic scalar signals with exact derivatives.

A :class:`PeriodicSignal` is a finite trigonometric series

    o(t) = a_0 + sum_k a_k cos(2 pi k t / T) + b_k sin(2 pi k t / T)

plus optional analytic pieces (shifted bump pulses and the bump-corrected
ramp of :func:`delayembed.perturb.slope_signal`). Pieces are kept as closures
with exact derivatives rather than being projected back onto Fourier modes.
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .bump import PROFILES, PLATEAU_QUARTER, BumpFunction
from .circle import wrap

__all__ = [
    "UnsupportedOrderError",
    "UnderdeterminedError",
    "AliasingError",
    "Pulse",
    "Slope",
    "PeriodicSignal",
    "SignalDistance",
    "trig_signal",
    "constant_signal",
    "distance_r",
    "norm_r",
    "from_samples",
    "sup_abs",
]

DEFAULT_GRID = 4096
# derivative order up to which piece derivatives are trusted
PIECE_MAX_ORDER = 8


class UnsupportedOrderError(ValueError):
    pass


class UnderdeterminedError(ValueError):
    pass


class AliasingError(ValueError):
    pass


@dataclass(frozen=True)
class Pulse:
    """amplitude * bump((t - center) / halfwidth), read on the circle."""

    period: float
    center: float
    halfwidth: float
    amplitude: float
    profile: BumpFunction = PROFILES["standard"]

    def __post_init__(self):
        object.__setattr__(self, "center", wrap(self.center, self.period))
        if self.profile.support_halfwidth * self.halfwidth >= 0.5 * self.period:
            raise ValueError("pulse support must be shorter than half the period")

    @property
    def key(self):
        return ("pulse", self.center, self.halfwidth, self.profile.name)

    @property
    def feature_scale(self):
        return self.halfwidth / self.profile.slope

    def __call__(self, t, k=0):
        t = np.asarray(t, dtype=float)
        u = wrap(t - self.center + 0.5 * self.period, self.period) - 0.5 * self.period
        val = self.profile(u / self.halfwidth, k)
        return self.amplitude * val / self.halfwidth**k

    def scaled(self, c):
        return Pulse(self.period, self.center, self.halfwidth, c * self.amplitude, self.profile)

    def shifted(self, c):
        return Pulse(self.period, self.center - c, self.halfwidth, self.amplitude, self.profile)

    def to_dict(self):
        return {
            "kind": "pulse",
            "center": self.center,
            "halfwidth": self.halfwidth,
            "amplitude": self.amplitude,
            "profile": self.profile.name,
        }


@dataclass(frozen=True)
class Slope:
    """Periodic signal with derivative epsilon outside an arc, bump-corrected inside.

    On the arc of length `length` starting at `start` the derivative is
    epsilon - K * lam((t - start) / length) with K = epsilon T / (length c) and
    c the integral of the bump, which makes the derivative integrate to zero
    over a period. Normalised so the value at t = 0 is 0.
    """

    period: float
    start: float
    length: float
    epsilon: float
    bump: BumpFunction = PLATEAU_QUARTER

    def __post_init__(self):
        object.__setattr__(self, "start", wrap(self.start, self.period))
        if not 0 < self.length <= self.period:
            raise ValueError("arc length must lie in (0, T]")

    @property
    def key(self):
        return ("slope", self.start, self.length, self.bump.name)

    @property
    def feature_scale(self):
        return self.length / self.bump.slope

    @property
    def k_coef(self):
        return self.epsilon * self.period / (self.length * self.bump.integral)

    def _raw(self, u):
        return self.epsilon * u - self.k_coef * self.length * self.bump.antiderivative(u / self.length)

    def __call__(self, t, k=0):
        t = np.asarray(t, dtype=float)
        u = wrap(t - self.start, self.period)
        if k == 0:
            return self._raw(u) - self._raw(wrap(-self.start, self.period))
        x = u / self.length
        val = -self.k_coef * self.length ** (1 - k) * self.bump(x, k - 1)
        return val + self.epsilon if k == 1 else val

    def scaled(self, c):
        return Slope(self.period, self.start, self.length, c * self.epsilon, self.bump)

    def shifted(self, c):
        # o(t + c) renormalised to vanish at 0 is not a shift of this piece;
        # the constant offset is returned separately by PeriodicSignal.shifted
        return Slope(self.period, self.start - c, self.length, self.epsilon, self.bump)

    def to_dict(self):
        return {
            "kind": "slope",
            "start": self.start,
            "length": self.length,
            "epsilon": self.epsilon,
            "profile": self.bump.name,
        }


def _piece_from_dict(d, period):
    kind = d["kind"]
    profile = PROFILES[d.get("profile", "standard" if kind == "pulse" else PLATEAU_QUARTER.name)]
    if kind == "pulse":
        return Pulse(period, d["center"], d["halfwidth"], d["amplitude"], profile)
    if kind == "slope":
        return Slope(period, d["start"], d["length"], d["epsilon"], profile)
    raise ValueError(f"unknown bump descriptor kind {kind!r}")


def _merge_pieces(pieces):
    merged = {}
    for p in pieces:
        if p.key in merged:
            q = merged[p.key]
            merged[p.key] = _with_amplitude(q, _amplitude(q) + _amplitude(p))
        else:
            merged[p.key] = p
    return tuple(p for p in merged.values() if _amplitude(p) != 0.0)


def _amplitude(p):
    return p.amplitude if isinstance(p, Pulse) else p.epsilon


def _with_amplitude(p, amp):
    if isinstance(p, Pulse):
        return Pulse(p.period, p.center, p.halfwidth, amp, p.profile)
    return Slope(p.period, p.start, p.length, amp, p.bump)


def _same_period(a, b):
    return math.isclose(a, b, rel_tol=1e-13, abs_tol=0.0)


@dataclass(frozen=True, eq=False)
class PeriodicSignal:
    """Scalar periodic signal; evaluation is read modulo the period."""

    period: float
    cos: np.ndarray
    sin: np.ndarray
    pieces: tuple = ()
    smoothness: int | None = None

    def __post_init__(self):
        if not (self.period > 0 and math.isfinite(self.period)):
            raise ValueError(f"period must be positive, got {self.period}")
        a = np.atleast_1d(np.asarray(self.cos, dtype=float)).copy()
        b = np.atleast_1d(np.asarray(self.sin, dtype=float)).copy()
        n = max(a.size, b.size)
        a = np.pad(a, (0, n - a.size))
        b = np.pad(b, (0, n - b.size))
        b[0] = 0.0
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite Fourier coefficients")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "cos", a)
        object.__setattr__(self, "sin", b)
        object.__setattr__(self, "pieces", tuple(self.pieces))
        object.__setattr__(self, "_coef_cache", {})

    # ---------------------------------------------------------------- basics

    @property
    def n_modes(self):
        return self.cos.size - 1

    @property
    def omega(self):
        return 2.0 * np.pi * np.arange(self.cos.size) / self.period

    @property
    def max_order(self):
        """Highest derivative order available, None when unlimited."""
        caps = [c for c in (self.smoothness, PIECE_MAX_ORDER if self.pieces else None) if c is not None]
        return min(caps) if caps else None

    @property
    def feature_scale(self):
        """Shortest time scale on which the signal varies (sets grid densities)."""
        scales = [self.period / (2.0 * max(self.n_modes, 1))]
        scales += [p.feature_scale for p in self.pieces]
        return min(scales)

    def grid_size(self, base=DEFAULT_GRID, per_feature=16, cap=1 << 16):
        n = max(base, int(math.ceil(per_feature * self.period / self.feature_scale)))
        return int(min(n, cap))

    def is_constant(self, atol=0.0):
        return bool(np.all(np.abs(self.cos[1:]) <= atol) and np.all(np.abs(self.sin[1:]) <= atol)
                    and not self.pieces)

    def _check_order(self, k):
        if k < 0:
            raise UnsupportedOrderError("derivative order must be non-negative")
        cap = self.max_order
        if cap is not None and k > cap:
            raise UnsupportedOrderError(f"order {k} exceeds available smoothness {cap}")

    # ------------------------------------------------------------ evaluation

    def _trig_coeffs(self, k):
        c = self.cos - 1j * self.sin
        if k:
            c = c * (1j * self.omega) ** k
        return c

    def _real_coeffs(self, k):
        hit = self._coef_cache.get(k)
        if hit is None:
            c = self._trig_coeffs(k)
            hit = (self.omega, np.ascontiguousarray(c.real), np.ascontiguousarray(c.imag))
            self._coef_cache[k] = hit
        return hit

    def _trig_direct(self, t, k):
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        w, cr, ci = self._real_coeffs(k)
        out = np.empty(flat.size)
        chunk = max(1, 2_000_000 // max(w.size, 1))
        for i in range(0, flat.size, chunk):
            ph = np.mod(flat[i:i + chunk], self.period)[:, None] * w
            out[i:i + chunk] = np.cos(ph) @ cr - np.sin(ph) @ ci
        return out.reshape(t.shape)

    def _piece_sum(self, t, k):
        t = np.asarray(t, dtype=float)
        total = np.zeros(t.shape)
        groups = {}
        for p in self.pieces:
            if isinstance(p, Pulse):
                groups.setdefault((p.halfwidth, p.profile), []).append(p)
            else:
                total = total + p(t, k)
        T = self.period
        for (h, profile), group in groups.items():
            centers = np.array([p.center for p in group])
            amps = np.array([p.amplitude for p in group])
            u = wrap(t[..., None] - centers + 0.5 * T, T) - 0.5 * T
            x = u / h
            near = np.abs(x) < profile.support_halfwidth
            vals = np.zeros(x.shape)
            if np.any(near):
                vals[near] = profile(x[near], k)
            total = total + (vals @ amps) / h**k
        return total

    def __call__(self, t, k=0):
        """o^(k)(t mod T)."""
        self._check_order(k)
        val = self._trig_direct(t, k)
        if self.pieces:
            val = val + self._piece_sum(t, k)
        return val[()] if np.ndim(val) == 0 else val

    eval = __call__

    def sample(self, n, k=0):
        """(t_j, o^(k)(t_j)) on the uniform grid t_j = j T / n."""
        self._check_order(k)
        t = np.arange(n) * (self.period / n)
        if self.n_modes < n // 2:
            c = self._trig_coeffs(k)
            spec = np.zeros(n // 2 + 1, dtype=complex)
            spec[0] = n * c[0]
            spec[1:c.size] = 0.5 * n * c[1:]
            vals = np.fft.irfft(spec, n)
        else:
            vals = self._trig_direct(t, k)
        if self.pieces:
            vals = vals + self._piece_sum(t, k)
        return t, vals

    # ------------------------------------------------------------ algebra

    def _combine(self, other, sign):
        if isinstance(other, (int, float, np.floating)):
            a = self.cos.copy()
            a[0] += sign * float(other)
            return PeriodicSignal(self.period, a, self.sin, self.pieces, self.smoothness)
        if not _same_period(self.period, other.period):
            raise ValueError("signals with different periods cannot be added")
        n = max(self.cos.size, other.cos.size)
        a = np.pad(self.cos, (0, n - self.cos.size)) + sign * np.pad(other.cos, (0, n - other.cos.size))
        b = np.pad(self.sin, (0, n - self.sin.size)) + sign * np.pad(other.sin, (0, n - other.sin.size))
        pieces = _merge_pieces(self.pieces + tuple(p.scaled(sign) for p in other.pieces))
        sm = [s for s in (self.smoothness, other.smoothness) if s is not None]
        return PeriodicSignal(self.period, a, b, pieces, min(sm) if sm else None)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __mul__(self, c):
        c = float(c)
        return PeriodicSignal(self.period, c * self.cos, c * self.sin,
                              _merge_pieces(tuple(p.scaled(c) for p in self.pieces)), self.smoothness)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def shifted(self, c):
        """The signal t -> o(t + c)."""
        w = self.omega * c
        cw, sw = np.cos(w), np.sin(w)
        a = self.cos * cw + self.sin * sw
        b = self.sin * cw - self.cos * sw
        pieces = tuple(p.shifted(c) for p in self.pieces)
        # Slope pieces are normalised to vanish at t = 0; restore o(c) there
        offset = sum(float(p(c)) for p in self.pieces if isinstance(p, Slope))
        a[0] += offset
        return PeriodicSignal(self.period, a, b, pieces, self.smoothness)

    def with_period(self, period):
        """Same coefficients read on a different period (o''(t) = o(t T / T'))."""
        if self.pieces:
            raise ValueError("re-periodising bump pieces is not supported")
        return PeriodicSignal(period, self.cos, self.sin, (), self.smoothness)

    # --------------------------------------------------------- serialisation

    def to_dict(self):
        return {
            "period": float(self.period),
            "modes": [[float(a), float(b)] for a, b in zip(self.cos, self.sin)],
            "bumps": [p.to_dict() for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, d):
        period = float(d["period"])
        modes = np.asarray(d.get("modes", [[0.0, 0.0]]), dtype=float).reshape(-1, 2)
        pieces = tuple(_piece_from_dict(b, period) for b in d.get("bumps", ()))
        return cls(period, modes[:, 0], modes[:, 1], pieces)

    def __repr__(self):
        return (f"PeriodicSignal(period={self.period!r}, n_modes={self.n_modes}, "
                f"pieces={len(self.pieces)})")


def trig_signal(period, cos=(0.0,), sin=(0.0,)):
    return PeriodicSignal(float(period), np.asarray(cos, dtype=float), np.asarray(sin, dtype=float))


def constant_signal(value, period):
    return PeriodicSignal(float(period), [float(value)], [0.0])


# ---------------------------------------------------------------- sup norms


def _local_maxima(vals, count):
    """Indices of up to `count` largest cyclic local maxima of `vals`."""
    left = np.roll(vals, 1)
    right = np.roll(vals, -1)
    idx = np.flatnonzero((vals >= left) & (vals >= right))
    if idx.size == 0:
        idx = np.array([int(np.argmax(vals))])
    order = np.argsort(-vals[idx], kind="stable")
    return idx[order[:count]]


def sup_abs(grid_fn, point_fn, n, refine=4):
    """Sup over s in [0, 1) of |g(s)|.

    grid_fn(n) returns g at s_j = j / n; point_fn(s) evaluates g at a scalar.
    The best grid maxima are refined by bounded Brent search on the adjacent
    cells. Returns (value, argmax s).
    """
    vals = np.abs(grid_fn(n))
    best_val, best_s = -1.0, 0.0
    for j in _local_maxima(vals, refine):
        s0 = j / n
        res = minimize_scalar(lambda s: -abs(point_fn(s)), bounds=(s0 - 1.0 / n, s0 + 1.0 / n),
                              method="bounded", options={"xatol": 1e-13})
        cand = [(vals[j], s0), (-res.fun, float(res.x))]
        for v, s in cand:
            if v > best_val:
                best_val, best_s = float(v), s % 1.0
    return best_val, best_s


@dataclass(frozen=True)
class SignalDistance:
    """d_r between two signals, as a grid-refined lower bound."""

    r: int
    value: float
    resolution: float
    order: int = 0
    location: float = 0.0
    period_gap: float = 0.0

    def __float__(self):
        return self.value


def distance_r(o, o2, r, n=None):
    """sup over k <= r and s of |o^(k)(sT) - o2^(k)(sT')| + |T - T'|."""
    o._check_order(r)
    o2._check_order(r)
    if n is None:
        n = max(o.grid_size(), o2.grid_size())
    gap = abs(o.period - o2.period)
    best = None
    for k in range(r + 1):
        def on_grid(m, k=k):
            return o.sample(m, k)[1] - o2.sample(m, k)[1]

        def at(s, k=k):
            return float(o(s * o.period, k) - o2(s * o2.period, k))

        v, s = sup_abs(on_grid, at, n)
        if best is None or v + gap > best.value:
            best = SignalDistance(r, v + gap, 1.0 / n, k, s, gap)
    return best


def norm_r(o, r, n=None):
    """sup over k <= r and t of |o^(k)(t)|."""
    o._check_order(r)
    n = n or o.grid_size()
    best = 0.0
    for k in range(r + 1):
        v, _ = sup_abs(lambda m, k=k: o.sample(m, k)[1], lambda s, k=k: float(o(s * o.period, k)), n)
        best = max(best, v)
    return best


# ---------------------------------------------------------------- ingestion


def from_samples(samples, period, n_modes, rtol=1e-10):
    """Trigonometric interpolant with `n_modes` modes through uniform samples.

    Samples are taken at t_j = j T / n over one period. Raises
    UnderdeterminedError when n < 2N + 1 and AliasingError when the samples
    carry content above mode N (the round trip would not reproduce them).
    """
    x = np.asarray(samples, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    n = x.size
    if n < 2 * n_modes + 1:
        raise UnderdeterminedError(f"{n} samples cannot determine {n_modes} modes (need {2 * n_modes + 1})")
    spec = np.fft.rfft(x) / n
    a = np.empty(n_modes + 1)
    b = np.zeros(n_modes + 1)
    a[0] = spec[0].real
    a[1:] = 2.0 * spec[1:n_modes + 1].real
    b[1:] = -2.0 * spec[1:n_modes + 1].imag
    sig = PeriodicSignal(float(period), a, b)
    _, back = sig.sample(n)
    scale = max(np.max(np.abs(x)), np.finfo(float).tiny)
    err = np.max(np.abs(back - x))
    if err > rtol * scale:
        tail = np.abs(spec[n_modes + 1:])
        worst = n_modes + 1 + int(np.argmax(tail)) if tail.size else n_modes
        raise AliasingError(
            f"samples are not band-limited to {n_modes} modes: round-trip error {err:.3g}, "
            f"largest discarded content at mode {worst}"
        )
    return sig
