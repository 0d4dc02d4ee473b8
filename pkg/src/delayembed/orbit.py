"""Periodic orbits in R^d, their uniform tube, and closest-point projection onto them."""

from dataclasses import dataclass, field, replace
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .circle import circular_distance, wrap
from .signal import PeriodicSignal, sup_abs, trig_signal

__all__ = [
    "InvalidOrbitError",
    "OutOfTubeError",
    "ClosestPointError",
    "PeriodicOrbit",
    "TubeGeometry",
    "ClosestPointResult",
    "orbit_distance_r",
    "tube_constants",
    "uniform_tube",
    "chord_minimum",
    "foot_newton",
    "closest_point",
    "closest_points",
]

GRID = 4096
COARSE_SCAN = 1024
DELTA_FACTOR = 0.9


class InvalidOrbitError(ValueError):
    pass


class OutOfTubeError(ValueError):
    pass


class ClosestPointError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """p: [0, T) -> R^d with one periodic signal per coordinate."""

    components: tuple
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 2:
            raise InvalidOrbitError("orbit dimension must be at least 2")
        T = comps[0].period
        if any(not math.isclose(c.period, T, rel_tol=1e-13) for c in comps):
            raise InvalidOrbitError("components have different periods")
        object.__setattr__(self, "components", comps)

    @classmethod
    def from_coefficients(cls, period, cos, sin):
        cos = np.atleast_2d(cos)
        sin = np.atleast_2d(sin)
        return cls(tuple(trig_signal(period, a, b) for a, b in zip(cos, sin)))

    @property
    def period(self):
        return self.components[0].period

    @property
    def dim(self):
        return len(self.components)

    @property
    def n_modes(self):
        return max(c.n_modes for c in self.components)

    def grid_size(self, base=GRID):
        return max(c.grid_size(base) for c in self.components)

    def __call__(self, t, k=0):
        """p^(k)(t), shape (..., d)."""
        return np.stack([c(t, k) for c in self.components], axis=-1)

    def sample(self, n, k=0):
        t = np.arange(n) * (self.period / n)
        return t, np.stack([c.sample(n, k)[1] for c in self.components], axis=-1)

    def velocity(self, t):
        return self(t, 1)

    def acceleration(self, t):
        return self(t, 2)

    def tangent(self, t):
        v = self(t, 1)
        return v / np.linalg.norm(v, axis=-1, keepdims=True)

    def tangent_derivative(self, t):
        """ds/dt = p''/|p'| - p' (p''.p') / |p'|^3."""
        return _tangent_derivative(self(t, 1), self(t, 2))

    def project(self, a):
        """The scalar signal a . p."""
        a = np.asarray(a, dtype=float)
        if a.shape != (self.dim,):
            raise ValueError(f"observation vector must have length {self.dim}")
        out = None
        for ai, c in zip(a, self.components):
            if ai == 0.0:
                continue
            out = ai * c if out is None else out + ai * c
        return out if out is not None else PeriodicSignal(self.period, [0.0], [0.0])

    def scaled(self, c):
        return PeriodicOrbit(tuple(c * comp for comp in self.components))

    def to_dict(self):
        return {
            "period": float(self.period),
            "dim": self.dim,
            "components": [c.to_dict() for c in self.components],
        }

    @classmethod
    def from_dict(cls, d):
        comps = []
        for c in d["components"]:
            if isinstance(c, dict):
                c = dict(c)
                c.setdefault("period", d["period"])
                comps.append(PeriodicSignal.from_dict(c))
            else:
                modes = np.asarray(c, dtype=float).reshape(-1, 2)
                comps.append(trig_signal(d["period"], modes[:, 0], modes[:, 1]))
        orbit = cls(tuple(comps))
        if "dim" in d and int(d["dim"]) != orbit.dim:
            raise ValueError("dim does not match the number of components")
        return orbit

    def __repr__(self):
        return f"PeriodicOrbit(period={self.period!r}, dim={self.dim}, n_modes={self.n_modes})"


def _tangent_derivative(v, a):
    vv = np.sum(v * v, axis=-1, keepdims=True)
    va = np.sum(v * a, axis=-1, keepdims=True)
    return a / np.sqrt(vv) - v * va / vv**1.5


def orbit_distance_r(p, q, r, n=None):
    """sup over k <= r and s of |p^(k)(sT) - q^(k)(sT')| + |T - T'|."""
    if p.dim != q.dim:
        raise ValueError("orbits live in different dimensions")
    n = n or max(p.grid_size(), q.grid_size())
    gap = abs(p.period - q.period)
    best = 0.0
    for k in range(r + 1):
        v, _ = sup_abs(
            lambda m, k=k: np.linalg.norm(p.sample(m, k)[1] - q.sample(m, k)[1], axis=-1),
            lambda s, k=k: float(np.linalg.norm(p(s * p.period, k) - q(s * q.period, k))),
            n,
        )
        best = max(best, v)
    return best + gap


# ----------------------------------------------------------------- tube


@dataclass(frozen=True)
class TubeGeometry:
    """Tube constants: 2m = min|p'|, m_star = max|p''|, M = sqrt(d) max|p''|_inf,
    r_frak = m/M, M_star = sqrt(d) max|s'|_inf, Delta = min chord over gaps >= r_frak.
    """

    period: float
    dim: int
    m: float
    m_star: float
    M: float
    r_frak: float
    M_star: float
    Delta: float
    Delta_lower: float
    delta: float
    uniform_epsilon: float | None = None
    speed_margin: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def bounds(self):
        return tube_radius_bounds(self.m, self.m_star, self.M_star, self.Delta)

    def to_dict(self):
        return {
            "period": self.period,
            "dim": self.dim,
            "m": self.m,
            "m_star": self.m_star,
            "M": self.M,
            "r_frak": self.r_frak,
            "M_star": self.M_star,
            "Delta": self.Delta,
            "Delta_lower": self.Delta_lower,
            "delta": self.delta,
            "uniform_epsilon": self.uniform_epsilon,
            "speed_margin": self.speed_margin,
        }


def tube_radius_bounds(m, m_star, M_star, Delta):
    return (4.0 * m * m / (1.0 + m_star), m / (2.0 * M_star), 0.5 * Delta)


def _sup(grid_fn, point_fn, n, T):
    v, s = sup_abs(grid_fn, point_fn, n)
    return v, s * T


def _inf(grid_fn, point_fn, n, T):
    vals = grid_fn(n)
    j = int(np.argmin(vals))
    h = T / n
    res = minimize_scalar(point_fn, bounds=(j * h - h, j * h + h), method="bounded",
                          options={"xatol": 1e-14 * T})
    return min(float(vals[j]), float(res.fun))


def chord_minimum(p, min_gap, n=512, refine=8):
    """min |p(t + s) - p(t)| over min_gap <= s <= T/2, with a Lipschitz lower bound.

    Returns (value, lower_bound, (t, s)).
    """
    T = p.period
    min_gap = min(min_gap, 0.5 * T)
    ns = max(32, n // 2)
    t = np.arange(n) * (T / n)
    s = np.linspace(min_gap, 0.5 * T, ns)
    base = p(t)
    G = np.empty((n, ns))
    for j, sj in enumerate(s):
        G[:, j] = np.linalg.norm(p(t + sj) - base, axis=-1)
    vmax = float(np.max(np.linalg.norm(p.sample(max(n, 1024), 1)[1], axis=-1)))
    ht = T / n
    hs = s[1] - s[0] if ns > 1 else 0.0
    lower = max(0.0, float(G.min()) - (vmax * ht + 0.5 * vmax * hs))

    def chord(x):
        ss = min(max(x[1], min_gap), 0.5 * T)
        return float(np.linalg.norm(p(x[0] + ss) - p(x[0])))

    order = np.argsort(G.ravel(), kind="stable")
    best = (float(G.min()), (0.0, float(s[0])))
    seen = []
    for flat in order:
        i, j = divmod(int(flat), ns)
        if any(abs(i - a) <= 2 and abs(j - b) <= 2 for a, b in seen):
            continue
        seen.append((i, j))
        res = minimize(chord, np.array([t[i], s[j]]), method="L-BFGS-B",
                       bounds=[(t[i] - ht, t[i] + ht), (min_gap, 0.5 * T)])
        val = chord(res.x)
        if val < best[0]:
            best = (val, (wrap(float(res.x[0]), T), float(min(max(res.x[1], min_gap), 0.5 * T))))
        if len(seen) >= refine:
            break
    return best[0], min(lower, best[0]), best[1]


def tube_constants(p, n=None, factor=DELTA_FACTOR):
    """Tube constants by dense-grid extremization with local refinement.

    delta = factor * min(4 m^2 / (1 + m_star), m / (2 M_star), Delta / 2).
    """
    T, d = p.period, p.dim
    n = n or p.grid_size()
    sqd = math.sqrt(d)

    speed_grid = lambda m: np.linalg.norm(p.sample(m, 1)[1], axis=-1)
    speed_at = lambda t: float(np.linalg.norm(p(t, 1)))
    vmin = _inf(speed_grid, speed_at, n, T)
    vmax, _ = _sup(speed_grid, speed_at, n, T)
    if vmin <= 1e-10 * max(vmax, 1e-300):
        raise InvalidOrbitError(f"orbit velocity nearly vanishes (min |p'| = {vmin:.3g})")
    m = 0.5 * vmin
    m_star, _ = _sup(lambda k: np.linalg.norm(p.sample(k, 2)[1], axis=-1),
                     lambda t: float(np.linalg.norm(p(t, 2))), n, T)
    acc_inf = max(_sup(lambda k, c=c: c.sample(k, 2)[1], lambda t, c=c: float(c(t, 2)), n, T)[0]
                  for c in p.components)
    M = sqd * acc_inf

    def sdot(t):
        return _tangent_derivative(p(t, 1), p(t, 2))

    sd_inf = max(_sup(lambda k, i=i: sdot(np.arange(k) * (T / k))[:, i],
                      lambda t, i=i: float(sdot(np.array([t]))[0, i]), n, T)[0] for i in range(d))
    M_star = sqd * sd_inf
    r_frak = m / M
    Delta, Delta_lower, where = chord_minimum(p, r_frak)
    if Delta <= 0:
        raise InvalidOrbitError("orbit self-intersects")
    delta = factor * min(tube_radius_bounds(m, m_star, M_star, Delta))
    _, V = p.sample(n, 1)
    _, A = p.sample(n, 2)
    margin = float(np.min(np.sum(V * V, axis=1) - delta * np.linalg.norm(A, axis=1) - delta))
    return TubeGeometry(T, d, m, m_star, M, r_frak, M_star, Delta, Delta_lower, delta, None, margin,
                        {"grid": n, "chord_at": where, "speed_max": vmax})


def uniform_tube(p, epsilon_search=1e-6, tube=None, factor=DELTA_FACTOR):
    """Tube radius valid for every orbit of the same period within d_2 distance eps of p.

    Uses the degraded constants m/2, 2 m_star, 2 M, 2 M_star, with Delta taken
    at the degraded gap r_frak/4 and halved. eps is the largest value (found
    by bisection to relative accuracy `epsilon_search`) for which sufficient
    conditions guarantee that every such orbit has constants at least as good
    as the degraded ones.
    """
    base = tube or tube_constants(p)
    d = base.dim
    sqd = math.sqrt(d)
    m, ms, M, Ms = base.m, base.m_star, base.M, base.M_star
    r_deg = (0.5 * m) / (2.0 * M)
    Delta_q, Delta_q_lower, _ = chord_minimum(p, r_deg)
    Delta_deg = 0.5 * Delta_q
    delta = factor * min(tube_radius_bounds(0.5 * m, 2.0 * ms, 2.0 * Ms, Delta_deg))

    def covers(eps):
        # speeds stay >= 2m - eps >= m, |p''| <= 2 m_star
        if eps > m or eps > ms or eps > M / sqd:
            return False
        # |s'_new - s'| <= eps (2/v_lo + 6 A/v_lo^2) with v_lo = m, A = 2 m_star
        if eps * (2.0 / m + 12.0 * ms / m**2) > Ms / sqd:
            return False
        # chords move by at most 2 eps
        return 2.0 * eps <= 0.5 * Delta_q

    lo, hi = 0.0, max(m, ms, M, Delta_q)
    while hi - lo > epsilon_search * max(lo, 1e-300) and hi - lo > 1e-300:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if covers(mid) else (lo, mid)
    meta = dict(base.meta)
    meta.update({"degraded": {"m": 0.5 * m, "m_star": 2 * ms, "M": 2 * M, "M_star": 2 * Ms,
                              "r_frak": r_deg, "Delta": Delta_deg, "Delta_lower": 0.5 * Delta_q_lower},
                 "base_delta": base.delta})
    return replace(base, delta=delta, uniform_epsilon=lo, meta=meta)


# -------------------------------------------------------- closest point


@dataclass(frozen=True)
class ClosestPointResult:
    t0: float
    w0: np.ndarray
    distance: float
    x0: np.ndarray
    dfdt: float = 0.0
    iterations: int = 0

    def to_dict(self):
        return {"t0": self.t0, "w0": self.w0.tolist(), "distance": self.distance,
                "x0": self.x0.tolist(), "dfdt": self.dfdt}


def _coarse(p, X, n=COARSE_SCAN):
    t, P = p.sample(n)
    best_t = np.empty(len(X))
    best_d = np.empty(len(X))
    chunk = max(1, 4_000_000 // (n * p.dim))
    for i in range(0, len(X), chunk):
        diff = X[i:i + chunk, None, :] - P[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        j = np.argmin(dist, axis=1)
        best_t[i:i + chunk] = t[j]
        best_d[i:i + chunk] = dist[np.arange(j.size), j]
    return best_t, best_d


def foot_newton(p, X, t, max_step=None, tol=1e-13, max_iter=60):
    """Newton on f(t) = (x - p(t)) . p'(t) for each row of X from seeds t.

    df/dt = p''(t) . (x - p(t)) - p'(t) . p'(t). Steps are capped at
    `max_step`. Returns (t, f_t, iterations, converged) as arrays.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.array(np.broadcast_to(np.asarray(t, dtype=float), (len(X),)))
    T = p.period
    max_step = max_step or T / 64.0
    active = np.ones(len(X), dtype=bool)
    iters = np.zeros(len(X), dtype=int)
    ft = np.zeros(len(X))
    for _ in range(max_iter):
        if not np.any(active):
            break
        ta = t[active]
        w = X[active] - p(ta)
        v = p(ta, 1)
        a = p(ta, 2)
        f = np.sum(w * v, axis=1)
        fp = np.sum(a * w, axis=1) - np.sum(v * v, axis=1)
        step = np.clip(-f / fp, -max_step, max_step)
        t[active] = ta + step
        ft[active] = fp
        iters[active] += 1
        done = np.abs(step) <= tol * T
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    t = wrap(t, T)
    w = X - p(t)
    v = p(t, 1)
    ft = np.sum(p(t, 2) * w, axis=1) - np.sum(v * v, axis=1)
    return t, ft, iters, ~active


def closest_points(p, tube, X, strict=True):
    """Closest-point projection for many points.

    Returns (t0, W, inside) where W = X - p(t0). Points farther than
    tube.delta are flagged outside (or raise when `strict`).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    T = p.period
    n = COARSE_SCAN
    t_c, d_c = _coarse(p, X, n)
    vmax = tube.meta.get("speed_max") or float(np.max(np.linalg.norm(p.sample(n, 1)[1], axis=1)))
    # the coarse minimum exceeds the true distance by less than half a cell of arc
    slack = 0.5 * (T / n) * vmax
    candidate = d_c <= tube.delta + slack
    if strict and not np.all(candidate):
        raise OutOfTubeError(f"point at distance >= {d_c[~candidate].min() - slack:.6g} "
                             f"is outside the tube of radius {tube.delta:.6g}")
    t0 = np.full(len(X), np.nan)
    W = np.full(X.shape, np.nan)
    inside = np.zeros(len(X), dtype=bool)
    if np.any(candidate):
        tc, ft, _, conv = foot_newton(p, X[candidate], t_c[candidate], max_step=T / n)
        if not np.all(conv):
            raise ClosestPointError("Newton did not converge inside the tube")
        w = X[candidate] - p(tc)
        dist = np.linalg.norm(w, axis=1)
        ok = dist <= tube.delta
        if strict and not np.all(ok):
            raise OutOfTubeError(f"point at distance {dist[~ok].max():.6g} is outside the tube "
                                 f"of radius {tube.delta:.6g}")
        idx = np.flatnonzero(candidate)
        t0[idx] = tc
        W[idx] = w
        inside[idx] = ok
    return t0, W, inside


def closest_point(p, tube, x0):
    """Unique closest point on p to x0, for x0 within tube.delta of the orbit."""
    x0 = np.asarray(x0, dtype=float)
    T = p.period
    t_c, d_c = _coarse(p, x0[None, :])
    vmax = tube.meta.get("speed_max") or float(np.max(np.linalg.norm(p.sample(COARSE_SCAN, 1)[1], axis=1)))
    if d_c[0] > tube.delta + 0.5 * (T / COARSE_SCAN) * vmax:
        raise OutOfTubeError(f"point is outside the tube of radius {tube.delta:.6g}")
    t, ft, iters, conv = foot_newton(p, x0[None, :], t_c, max_step=T / COARSE_SCAN)
    if not conv[0]:
        raise ClosestPointError(f"Newton did not converge from t={t_c[0]:.6g}")
    t0 = float(t[0])
    w0 = x0 - p(t0)
    dist = float(np.linalg.norm(w0))
    if dist > tube.delta:
        raise OutOfTubeError(f"point at distance {dist:.6g} is outside the tube of radius {tube.delta:.6g}")
    return ClosestPointResult(t0, w0, dist, x0, float(ft[0]), int(iters[0]))
