"""Certify or refute that t -> (o(t), o(t - tau), o(t - 2 tau)) embeds the circle in R^3."""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .circle import circular_distance, forward_gap, wrap
from .monotonicity import DegenerateSignalError, critical_points
from .signal import norm_r

__all__ = [
    "DelayParameters",
    "EmbeddingCertificate",
    "NotCertifiedError",
    "TauInterval",
    "delay_vector",
    "delay_derivative",
    "separating_lag",
    "certify",
    "tau_robustness",
]

logger = logging.getLogger(__name__)

CERTIFIED = "certified"
REFUTED = "refuted"
INCONCLUSIVE = "inconclusive"

TORUS_GRID = 512
TORUS_GRID_CAP = 2048
N_REFINE = 32
CERT_RTOL = 1e-7
REFUTE_RTOL = 1e-10


class NotCertifiedError(ValueError):
    pass


@dataclass(frozen=True)
class DelayParameters:
    tau: float
    n: int = 3

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"delay must be positive, got {self.tau}")
        if self.n != 3:
            raise ValueError("only embedding dimension 3 is supported")


@dataclass(frozen=True)
class EmbeddingCertificate:
    verdict: str
    injectivity_margin: float
    immersion_margin: float
    witness: tuple | None
    search_resolution: dict
    tau: float
    period: float
    mu: float | None = None
    failure: str | None = None
    near_diagonal: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    warnings: tuple = ()
    reason: str | None = None

    @property
    def certified(self):
        return self.verdict == CERTIFIED

    @property
    def margin(self):
        return min(self.injectivity_margin, self.immersion_margin)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "tau": self.tau,
            "period": self.period,
            "mu": self.mu,
            "injectivity_margin": self.injectivity_margin,
            "immersion_margin": self.immersion_margin,
            "witness": list(self.witness) if self.witness is not None else None,
            "failure": self.failure,
            "near_diagonal": dict(self.near_diagonal),
            "search_resolution": dict(self.search_resolution),
            "tolerances": dict(self.tolerances),
            "warnings": list(self.warnings),
            "reason": self.reason,
        }


def _lags(tau):
    return np.array([0.0, tau, 2.0 * tau])


def delay_vector(o, t, params):
    """o(t; tau) = (o(t), o(t - tau), o(t - 2 tau)); shape (..., 3)."""
    t = np.asarray(t, dtype=float)
    return np.stack([o(t - lag) for lag in _lags(params.tau)], axis=-1)


def delay_derivative(o, t, params):
    """d/dt o(t; tau) = (o'(t), o'(t - tau), o'(t - 2 tau))."""
    t = np.asarray(t, dtype=float)
    return np.stack([o(t - lag, 1) for lag in _lags(params.tau)], axis=-1)


def separating_lag(o, profile, t1, t2, tau):
    """Coordinate of the delay vector that separates a close pair.

    For 0 < |t1 - t2| <= mu/3 and tau <= mu/3: if both times share a monotone
    arc, o(t1) != o(t2) (coordinate 0). Otherwise they sit in neighbouring
    arcs; either o(t1) != o(t2) or, when the values tie, the lagged values
    o(t1 - tau), o(t2 - tau) differ (coordinate 1).
    """
    T = profile.period
    if forward_gap(t2, t1, T) < forward_gap(t1, t2, T):
        t1, t2 = t2, t1
    if profile.interval_index(t1) == profile.interval_index(t2):
        return 0
    d0 = abs(float(o(t1) - o(t2)))
    d1 = abs(float(o(t1 - tau) - o(t2 - tau)))
    return 0 if d0 >= d1 else 1


# ------------------------------------------------------------- separation


def _pair_terms(o, lags, t, s):
    """Residual, Jacobian and per-component Hessians of (t, s) -> o(t+s; tau) - o(t; tau)."""
    a = t + s - lags
    b = t - lags
    pts = np.concatenate([a, b])
    v0, v1, v2 = (np.asarray(o(pts, k)) for k in range(3))
    res = v0[:3] - v0[3:]
    jac = np.column_stack([v1[:3] - v1[3:], v1[:3]])
    hes = np.empty((3, 2, 2))
    hes[:, 0, 0] = v2[:3] - v2[3:]
    hes[:, 0, 1] = hes[:, 1, 0] = v2[:3]
    hes[:, 1, 1] = v2[:3]
    return res, jac, hes


def _polish_pair(o, lags, t, s, lo, hi, iters=40):
    """Newton on F = |residual|^2 / 2 with exact Hessian, s kept in [lo, hi]."""
    res, jac, hes = _pair_terms(o, lags, t, s)
    f = 0.5 * res @ res
    T = o.period
    for _ in range(iters):
        g = jac.T @ res
        H = jac.T @ jac + np.einsum("i,ijk->jk", res, hes)
        free = np.array([True, True])
        if (s <= lo and g[1] > 0) or (s >= hi and g[1] < 0):
            free[1] = False
        Hf = H[np.ix_(free, free)]
        gf = g[free]
        try:
            ev = np.linalg.eigvalsh(Hf)
            if ev[0] <= 1e-14 * max(abs(ev[-1]), 1e-300):
                raise np.linalg.LinAlgError
            step_f = -np.linalg.solve(Hf, gf)
        except np.linalg.LinAlgError:
            Jf = jac[:, free]
            step_f = -np.linalg.lstsq(Jf, res, rcond=1e-13)[0]
        step = np.zeros(2)
        step[free] = step_f
        improved = False
        lam = 1.0
        for _ in range(30):
            nt = t + lam * step[0]
            ns = min(max(s + lam * step[1], lo), hi)
            nres, njac, nhes = _pair_terms(o, lags, nt, ns)
            nf = 0.5 * nres @ nres
            if nf < f or (nf == f == 0.0):
                improved = True
                break
            lam *= 0.5
        if not improved:
            break
        moved = abs(nt - t) + abs(ns - s)
        t, s, res, jac, hes, f = nt, ns, nres, njac, nhes, nf
        if moved <= 1e-15 * T or f == 0.0:
            break
    return t, s, math.sqrt(2.0 * f)


def _refine_pair(o, lags, t0, s0, lo, hi, h):
    def obj(x):
        s = min(max(x[1], lo), hi)
        d = np.asarray(o(np.concatenate([x[0] + s - lags, x[0] - lags]))).reshape(2, 3)
        r = d[0] - d[1]
        return float(r @ r)

    simplex = np.array([[t0, s0], [t0 + 0.5 * h, s0], [t0, s0 + 0.5 * h]])
    res = minimize(obj, np.array([t0, s0]), method="Nelder-Mead",
                   options={"initial_simplex": simplex, "xatol": 1e-2 * h, "fatol": 0.0, "maxiter": 80})
    t, s = float(res.x[0]), min(max(float(res.x[1]), lo), hi)
    return _polish_pair(o, lags, t, s, lo, hi)


def _local_minima_2d(D, count):
    """Flat indices of up to `count` smallest cyclic 8-neighbour local minima."""
    ok = np.isfinite(D)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di or dj:
                ok &= D <= np.roll(np.roll(D, di, axis=0), dj, axis=1)
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        idx = np.array([int(np.argmin(D))])
    order = np.argsort(D.ravel()[idx], kind="stable")
    return idx[order[:count]]


def _far_pairs(o, tau, band, n, n_refine):
    """Min of |o(t1; tau) - o(t2; tau)| over circular |t1 - t2| >= band."""
    T = o.period
    lags = _lags(tau)
    t = np.arange(n) * (T / n)
    V = np.stack([o.shifted(-lag).sample(n)[1] for lag in lags], axis=-1)
    sq = np.sum(V * V, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * V @ V.T
    np.maximum(D, 0.0, out=D)
    gap = circular_distance(t[:, None], t[None, :], T)
    ii, jj = np.indices(D.shape)
    D[(gap < band) | (jj <= ii)] = np.inf
    lo, hi = band, T - band
    if not np.any(np.isfinite(D)):
        return math.inf, None
    h = T / n
    best = None
    for flat in _local_minima_2d(D, n_refine):
        i, j = divmod(int(flat), n)
        s0 = min(max(float(forward_gap(t[i], t[j], T)), lo), hi)
        tt, ss, val = _refine_pair(o, lags, t[i], s0, lo, hi, h)
        t1, t2 = wrap(tt, T), wrap(tt + ss, T)
        key = (val, min(t1, t2), max(t1, t2))
        if best is None or key < best:
            best = key
    return best[0], (best[1], best[2])


def _immersion(o, tau, n, count=8):
    T = o.period
    lags = _lags(tau)
    t = np.arange(n) * (T / n)
    W = np.stack([o.shifted(-lag).sample(n, 1)[1] for lag in lags], axis=-1)
    g = np.sqrt(np.sum(W * W, axis=1))
    left, right = np.roll(g, 1), np.roll(g, -1)
    idx = np.flatnonzero((g <= left) & (g <= right))
    idx = idx[np.argsort(g[idx], kind="stable")[:count]]
    h = T / n

    def speed(x):
        return float(np.linalg.norm(o(x - lags, 1)))

    best = (float(g[idx[0]]), float(t[idx[0]]))
    for j in idx:
        res = minimize_scalar(speed, bounds=(t[j] - h, t[j] + h), method="bounded",
                              options={"xatol": 1e-14 * T})
        cand = (float(res.fun), wrap(float(res.x), T))
        if cand < best:
            best = cand
    return best


def _chord_scan(o, tau, band, n, m=48):
    """Min over a (t, s) grid with 0 < s <= band of |o(t+s; tau) - o(t; tau)| / s."""
    T = o.period
    lags = _lags(tau)
    t = np.arange(n) * (T / n)
    s = band * np.arange(1, m + 1) / m
    base = np.stack([o.shifted(-lag).sample(n)[1] for lag in lags], axis=-1)
    best_ratio, best_sep, where = math.inf, math.inf, None
    for sk in s:
        shifted = np.stack([o.shifted(sk - lag).sample(n)[1] for lag in lags], axis=-1)
        sep = np.linalg.norm(shifted - base, axis=1)
        j = int(np.argmin(sep))
        if sep[j] / sk < best_ratio:
            best_ratio, best_sep, where = float(sep[j] / sk), float(sep[j]), (float(t[j]), float(sk))
    return best_ratio, best_sep, where


def _torus_grid(o, base):
    n = base
    if o.pieces:
        n = max(n, int(math.ceil(8 * o.period / o.feature_scale)))
    n = max(n, 8 * (o.n_modes + 1))
    return int(min(n, TORUS_GRID_CAP))


def certify(o, params, grid=TORUS_GRID, n_refine=N_REFINE, cert_rtol=CERT_RTOL, refute_rtol=REFUTE_RTOL):
    """Certify, refute, or leave undecided that the delay map of `o` embeds the circle.

    Close pairs with 0 < |t1 - t2| <= mu/3 are handled by the monotone-arc
    argument (see :func:`separating_lag`) when 0 is a regular value of o'
    and tau <= mu/3; otherwise a chord-ratio scan covers |t1 - t2| <= 3 tau.
    The remaining pairs are searched globally on a torus grid with local
    refinement, and immersion by minimising |d o(t; tau)/dt| over the circle.
    """
    tau = float(params.tau)
    T = o.period
    scale = norm_r(o, 0)
    tol_c = cert_rtol * scale
    tol_r = refute_rtol * scale
    tolerances = {"certify": tol_c, "refute": tol_r}
    warnings = []
    n = _torus_grid(o, grid)
    n_imm = max(8 * n, 4096)
    resolution = {"torus_grid": n, "immersion_grid": n_imm, "refined_cells": n_refine}

    if o.is_constant():
        return EmbeddingCertificate(REFUTED, 0.0, 0.0, (0.0, 0.0), resolution, tau, T, None,
                                    "immersion", {"method": "none"}, tolerances, (),
                                    "constant signal: the delay map is a single point")

    profile = None
    reason = None
    try:
        profile = critical_points(o)
    except DegenerateSignalError:
        reason = "degenerate signal"
    mu = profile.mu if profile is not None else None
    regular = profile is not None and profile.regular
    if not regular:
        reason = reason or "0 is not a regular value of o'"

    analytic = regular and tau <= mu / 3.0
    if regular and tau > mu / 3.0:
        warnings.append(f"tau={tau:.6g} exceeds mu/3={mu / 3:.6g}: close pairs checked numerically")
    elif regular and tau >= mu / 12.0:
        warnings.append(f"tau={tau:.6g} is not below mu/12={mu / 12:.6g}")

    near_band = mu / 3.0 if analytic else 3.0 * tau
    far_band = min(3.0 * tau, near_band) if analytic else 3.0 * tau
    far_band = min(far_band, 0.5 * T)
    near_band = min(near_band, 0.5 * T)

    inj, witness = _far_pairs(o, tau, far_band, n, n_refine)
    imm, t_imm = _immersion(o, tau, n_imm)
    ratio, chord_sep, chord_at = _chord_scan(o, tau, near_band, min(n, 1024))
    violations = int(chord_sep <= tol_r and chord_at is not None and chord_at[1] > 0)
    near = {
        "method": "analytic" if analytic else "numerical",
        "band": near_band,
        "far_band": far_band,
        "chord_ratio": ratio,
        "violations": violations,
    }

    failure = None
    if inj < tol_r:
        failure = "injectivity"
    elif imm < tol_r:
        failure = "immersion"
        witness = (t_imm, t_imm)
    elif not analytic and violations:
        failure = "injectivity"
        witness = (wrap(chord_at[0], T), wrap(chord_at[0] + chord_at[1], T))

    near_ok = analytic or ratio * near_band > tol_c
    if not regular:
        verdict = INCONCLUSIVE
        if failure:
            reason = f"{reason}; {failure} witness found"
    elif failure:
        verdict = REFUTED
    elif inj > tol_c and imm > tol_c and near_ok:
        verdict = CERTIFIED
    else:
        verdict = INCONCLUSIVE
        reason = "margins fall between the refutation and certification tolerances"
    if verdict != REFUTED and failure is None and verdict != CERTIFIED and inj <= tol_c:
        failure = "injectivity"
    elif verdict == INCONCLUSIVE and failure is None and imm <= tol_c:
        failure = "immersion"
        witness = (t_imm, t_imm)
    return EmbeddingCertificate(verdict, float(inj), float(imm), witness, resolution, tau, T, mu,
                                failure, near, tolerances, tuple(warnings), reason)


# ------------------------------------------------------------ delay range


@dataclass(frozen=True)
class TauInterval:
    lo: float
    hi: float
    tau: float
    evaluations: int

    @property
    def width(self):
        return self.hi - self.lo

    def __contains__(self, x):
        return self.lo <= x <= self.hi


def tau_robustness(o, params, certificate=None, bisections=8, **certify_kw):
    """Delays around params.tau at which the embedding is re-certified.

    Steps outward from tau, doubling the step until certification fails or
    the bounds (0, mu/3) are reached, then bisects toward the failing delay.
    Both returned endpoints are certified delays.
    """
    if certificate is None:
        certificate = certify(o, params, **certify_kw)
    if not certificate.certified:
        raise NotCertifiedError(f"delay map is {certificate.verdict} at tau={params.tau}")
    tau = float(params.tau)
    cap_hi = max(certificate.mu / 3.0, tau)
    cap_lo = tau / 64.0
    count = 0

    def ok(x):
        nonlocal count
        count += 1
        return certify(o, DelayParameters(x), **certify_kw).certified

    def search(direction, cap):
        good, bad = tau, None
        step = 0.05 * tau
        while True:
            cand = good + direction * step
            cand = min(cand, cap) if direction > 0 else max(cand, cap)
            if (cand - good) * direction <= 0:
                return good
            if ok(cand):
                good = cand
                if cand == cap:
                    return good
                step *= 2.0
            else:
                bad = cand
                break
        for _ in range(bisections):
            mid = 0.5 * (good + bad)
            if ok(mid):
                good = mid
            else:
                bad = mid
        return good

    hi = search(+1.0, cap_hi)
    lo = search(-1.0, cap_lo)
    return TauInterval(lo, hi, tau, count)
