"""Constructive perturbations of periodic signals.

Three constructions live here:

* :func:`slope_signal`, a periodic signal whose derivative is a constant
  epsilon outside an arc and is pulled down by a bump inside it so that the
  derivative integrates to zero;
* :func:`regularize`, which uses it to make 0 a regular value of o';
* the pulse family and :func:`repair`, a draw-and-verify loop that adds small
  pulses at the six delay times of a colliding pair until the delay map
  certifies.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from .bump import PLATEAU_QUARTER, STANDARD, bump_eval
from .certify import DelayParameters, certify
from .circle import Arc, forward_gap, wrap
from .monotonicity import DegenerateSignalError, IrregularSignalError, critical_points
from .signal import PeriodicSignal, Pulse, Slope, constant_signal, distance_r, norm_r, trig_signal

__all__ = [
    "EpsilonTooLargeError",
    "RegularizationError",
    "RepairError",
    "bump_eval",
    "slope_signal",
    "slope_interior_bound",
    "regularize",
    "PulseFamily",
    "apply_pulses",
    "six_indices",
    "RepairResult",
    "repair",
]

logger = logging.getLogger(__name__)


class EpsilonTooLargeError(ValueError):
    def __init__(self, msg, max_epsilon):
        super().__init__(msg)
        self.max_epsilon = max_epsilon


class RegularizationError(RuntimeError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


class RepairError(RuntimeError):
    def __init__(self, msg, trace=None, best=None):
        super().__init__(msg)
        self.trace = trace or []
        self.best = best


# ------------------------------------------------------------- slope signal


def slope_interior_bound(period, length, bump=PLATEAU_QUARTER):
    """max |o'| / |epsilon| over the arc for :func:`slope_signal`.

    Inside the arc o' = epsilon (1 - T lam / (L c)) with lam in [0, 1].
    """
    return max(1.0, abs(1.0 - period / (length * bump.integral)))


def slope_signal(period, alpha, beta, epsilon, delta=None, bump=PLATEAU_QUARTER):
    """Periodic o with o' = epsilon off the arc (alpha, beta) and o(0) = 0.

    On the arc o'(t) = epsilon - k lam((t - alpha)/(beta - alpha)) with
    k = epsilon T / ((beta - alpha) c), c the integral of the bump. When
    `delta` is given, |o'| must stay below it on the arc.
    """
    arc = Arc.between(alpha, beta, period)
    if arc.length <= 0:
        raise ValueError("empty arc")
    if delta is not None:
        limit = delta / slope_interior_bound(period, arc.length, bump)
        if abs(epsilon) >= limit:
            raise EpsilonTooLargeError(
                f"|epsilon|={abs(epsilon):.6g} gives interior slopes above {delta:.6g}; "
                f"largest admissible epsilon is {limit:.6g}", limit)
    if epsilon == 0:
        return constant_signal(0.0, period)
    piece = Slope(period, arc.start, arc.length, float(epsilon), bump)
    return PeriodicSignal(float(period), [0.0], [0.0], (piece,))


# -------------------------------------------------------------- regularize


def _strong_arc(o, profile, n=8192):
    """Arc where |o'| > delta0, inside the longest monotone interval of o."""
    T = o.period
    c = profile.critical_points
    gaps = forward_gap(c, np.roll(c, -1), T)
    gaps[gaps == 0] = T  # single critical point: the whole circle
    i = int(np.argmax(gaps))
    start, length = float(c[i]), float(gaps[i])
    t = start + length * (np.arange(1, n) / n)
    d = np.abs(o(t, 1))
    j = int(np.argmax(d))
    delta0 = 0.5 * float(d[j])
    lo = j
    while lo > 0 and d[lo - 1] > delta0:
        lo -= 1
    hi = j
    while hi < d.size - 1 and d[hi + 1] > delta0:
        hi += 1
    # pull the ends in by one cell so |o'| > delta0 on the closed arc
    lo, hi = min(lo + 1, j), max(hi - 1, j)
    if hi <= lo:
        lo, hi = max(j - 1, 0), min(j + 1, d.size - 1)
    return float(t[lo]), float(t[hi]), delta0


def regularize(o, budget, order=2, max_tries=40, shrink=0.5):
    """Perturb `o` within distance_order <= budget so that 0 is a regular value of o'.

    Returns `o` itself when it is already regular. A constant signal is
    replaced by a small sine. Otherwise a candidate slope epsilon is taken
    from a geometric sequence of alternating sign and the slope signal on an
    arc where |o'| > delta0 is subtracted; the first candidate whose result
    passes :func:`critical_points` and the budget check is returned.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    T = o.period
    if o.is_constant():
        unit = trig_signal(T, [0.0, 0.0], [0.0, 1.0])
        amp = budget / (10.0 * norm_r(unit, order))
        return o + amp * unit
    profile = critical_points(o)
    if profile.regular:
        return o
    if profile.count == 0:
        raise RegularizationError("no critical points found on a nonconstant signal")

    alpha, beta, delta0 = _strong_arc(o, profile)
    length = float(forward_gap(alpha, beta, T))
    unit = slope_signal(T, alpha, beta, 1.0)
    eps_delta = 0.9 * delta0 / slope_interior_bound(T, length)
    eps_budget = 0.5 * budget / norm_r(unit, order)
    eps0 = min(eps_delta, eps_budget)
    tried = []
    for i in range(max_tries):
        eps = eps0 * shrink ** (i // 2) * (1.0 if i % 2 == 0 else -1.0)
        cand = o - slope_signal(T, alpha, beta, eps, delta=delta0)
        try:
            prof = critical_points(cand)
        except DegenerateSignalError:
            tried.append((eps, "degenerate"))
            continue
        dist = distance_r(o, cand, order).value
        tried.append((eps, prof.regular, dist))
        if prof.regular and dist <= budget:
            logger.debug("regularized with epsilon=%g on arc (%g, %g)", eps, alpha, beta)
            return cand
    raise RegularizationError(
        f"no regular candidate within budget {budget} after {max_tries} tries",
        {"arc": (alpha, beta), "delta0": delta0, "tried": tried})


# ------------------------------------------------------------ pulse family


@dataclass(frozen=True)
class PulseFamily:
    """Pulses lam_j(t) = lam((t - j h)/h), h = tau/2, j = 0..n with n = floor(T/h).

    When n h coincides with T the last pulse is the first one again and the
    family has n distinct members; otherwise n + 1.
    """

    period: float
    tau: float
    coefficients: np.ndarray = None
    profile: object = STANDARD

    def __post_init__(self):
        if not 0 < self.tau < self.period:
            raise ValueError("tau must lie in (0, T)")
        c = np.zeros(self.count) if self.coefficients is None else np.asarray(self.coefficients, dtype=float)
        if c.shape != (self.count,):
            raise ValueError(f"expected {self.count} coefficients, got {c.shape}")
        c = c.copy()
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def h(self):
        return 0.5 * self.tau

    @property
    def n(self):
        return int(math.floor(self.period / self.h + 1e-9))

    @property
    def count(self):
        n = self.n
        return n if abs(n * self.h - self.period) <= 1e-9 * self.period else n + 1

    @property
    def centers(self):
        return np.arange(self.count) * self.h

    def index_for(self, t):
        """Index j with lam_j(t) = 1."""
        u = wrap(np.asarray(t, dtype=float), self.period)
        j = np.rint(u / self.h).astype(int)
        j = np.where(j >= self.count, 0, j)
        return j[()] if j.ndim == 0 else j

    def pulse(self, j, amplitude=1.0):
        return Pulse(self.period, float(self.centers[j]), self.h, float(amplitude), self.profile)

    def basis(self, j, t, k=0):
        return self.pulse(j)(t, k)

    def with_coefficients(self, coefficients):
        return PulseFamily(self.period, self.tau, coefficients, self.profile)

    def pieces(self):
        return tuple(self.pulse(j, e) for j, e in enumerate(self.coefficients) if e != 0.0)

    def to_dict(self):
        return {"period": self.period, "tau": self.tau, "h": self.h, "n": self.n,
                "profile": self.profile.name, "coefficients": self.coefficients.tolist()}


def apply_pulses(o, family):
    """o_eps = o + sum_j eps_j lam_j as a bump-augmented signal."""
    if not math.isclose(o.period, family.period, rel_tol=1e-13):
        raise ValueError("pulse family built for a different period")
    pieces = family.pieces()
    if not pieces:
        return o
    return o + PeriodicSignal(o.period, [0.0], [0.0], pieces)


def six_indices(family, t1, t2, tau=None):
    """Pulse indices covering t1, t1 - tau, t1 - 2 tau, t2, t2 - tau, t2 - 2 tau."""
    tau = family.tau if tau is None else tau
    times = np.array([t1, t1 - tau, t1 - 2 * tau, t2, t2 - tau, t2 - 2 * tau], dtype=float)
    return [int(j) for j in family.index_for(times)], wrap(times, family.period)


# ------------------------------------------------------------------ repair


@dataclass
class RepairResult:
    signal: PeriodicSignal
    certificate: object
    iterations: int
    family: PulseFamily | None = None
    distance: float = 0.0
    trace: list = field(default_factory=list)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "distance": self.distance,
            "family": self.family.to_dict() if self.family is not None else None,
            "trace": self.trace,
        }


def repair(o, params, budget, max_iters=200, seed=0, order=2, amplitude_fraction=0.95, rng=None,
           **certify_kw):
    """Draw pulse coefficients at witness times until the delay map certifies.

    Each step certifies the current signal; the witness pair (t1, t2) fixes six
    pulse indices, whose coefficients are redrawn uniformly in [-a, a] with
    a = amplitude_fraction * budget / norm_order(lam_j). A draw is rejected
    (and counts toward `max_iters`) when the result leaves the budget, loses
    regularity, or changes the number of critical points.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    rng = np.random.default_rng(seed) if rng is None else rng
    cert = certify(o, params, **certify_kw)
    if cert.certified:
        return RepairResult(o, cert, 0, None, 0.0, [])
    profile0 = critical_points(o)
    if not profile0.regular:
        raise IrregularSignalError("repair needs a regular signal; call regularize first")
    if params.tau >= profile0.mu / 12.0:
        logger.warning("tau=%g is not below mu/12=%g", params.tau, profile0.mu / 12.0)

    family = PulseFamily(o.period, params.tau)
    unit = norm_r(PeriodicSignal(o.period, [0.0], [0.0], (family.pulse(0),)), order)
    a = amplitude_fraction * budget / unit
    trace = []
    current, best = o, (cert.margin, o, cert, family, 0.0)
    for it in range(1, max_iters + 1):
        if cert.witness is None:
            raise RepairError("uncertified signal without a witness", trace)
        t1, t2 = cert.witness
        idx, _ = six_indices(family, t1, t2, params.tau)
        coeffs = family.coefficients.copy()
        for j in sorted(set(idx)):
            coeffs[j] = rng.uniform(-a, a)
        trial_family = family.with_coefficients(coeffs)
        trial = apply_pulses(o, trial_family)
        dist = distance_r(o, trial, order).value
        entry = {"iteration": it, "witness": [float(t1), float(t2)], "indices": idx, "distance": dist}
        reason = None
        if dist > budget:
            reason = "budget"
        else:
            prof = critical_points(trial)
            if not prof.regular:
                reason = "irregular"
            elif prof.count != profile0.count:
                reason = "critical-point count"
        if reason:
            entry.update(accepted=False, reason=reason)
            trace.append(entry)
            continue
        family, current = trial_family, trial
        cert = certify(current, params, **certify_kw)
        entry.update(accepted=True, verdict=cert.verdict, margin=cert.margin)
        trace.append(entry)
        if cert.margin > best[0]:
            best = (cert.margin, current, cert, family, dist)
        if cert.certified:
            return RepairResult(current, cert, it, family, dist, trace)
    raise RepairError(f"no certified embedding within {max_iters} iterations (best margin {best[0]:.3g})",
                      trace, best)
