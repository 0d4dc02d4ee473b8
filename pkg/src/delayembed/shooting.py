"""Periodic orbits of autonomous ODEs by Newton shooting, and their Floquet multipliers."""

from dataclasses import dataclass, field
import logging
import math

import numpy as np
from scipy.integrate import solve_ivp

from .orbit import PeriodicOrbit
from .signal import PeriodicSignal, from_samples

__all__ = [
    "OrbitNotFoundError",
    "SectionTangencyError",
    "ResidualError",
    "ShootingProblem",
    "FloquetReport",
    "integrate",
    "flow_map",
    "monodromy",
    "find_orbit",
    "fit_orbit",
    "solution_residual",
    "recurrence_seeds",
    "find_shortest_orbit",
    "floquet",
]

logger = logging.getLogger(__name__)

RTOL = 1e-12
ATOL = 1e-12
RETURN_TOL = 1e-9
FIT_TOL = 1e-8
TRIVIAL_TOL = 1e-4
HYPERBOLIC_TOL = 1e-3


class OrbitNotFoundError(RuntimeError):
    def __init__(self, msg, residual=None):
        super().__init__(msg)
        self.residual = residual


class SectionTangencyError(OrbitNotFoundError):
    pass


class ResidualError(ValueError):
    pass


@dataclass
class ShootingProblem:
    """Find x0 on the hyperplane n.(x - c) = 0 and T with phi_T(x0) = x0."""

    field: object
    section_point: np.ndarray
    section_normal: np.ndarray
    x0: np.ndarray
    period: float
    rtol: float = RTOL
    atol: float = ATOL
    tol: float = RETURN_TOL
    max_iter: int = 40
    meta_level: int = 0

    def __post_init__(self):
        self.section_point = np.asarray(self.section_point, dtype=float)
        n = np.asarray(self.section_normal, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("section normal must be nonzero")
        self.section_normal = n / norm
        self.x0 = np.asarray(self.x0, dtype=float)
        if not self.period > 0:
            raise ValueError("period guess must be positive")


def integrate(field, x0, T, rtol=RTOL, atol=ATOL, t_eval=None, dense=False, events=None):
    sol = solve_ivp(field.rhs, (0.0, T), np.asarray(x0, dtype=float), method="DOP853",
                    rtol=rtol, atol=atol, t_eval=t_eval, dense_output=dense, events=events)
    if sol.status < 0:
        raise OrbitNotFoundError(f"integration failed: {sol.message}")
    return sol


def _variational_rhs(field):
    d = field.dim

    def rhs(t, y):
        x = y[:d]
        Phi = y[d:].reshape(d, d)
        return np.concatenate([field(x), (field.jacobian(x) @ Phi).ravel()])

    return rhs


def flow_map(field, x0, T, rtol=RTOL, atol=ATOL):
    """(phi_T(x0), D phi_T(x0)) from the state and variational equations integrated together."""
    d = field.dim
    y0 = np.concatenate([np.asarray(x0, dtype=float), np.eye(d).ravel()])
    sol = solve_ivp(_variational_rhs(field), (0.0, T), y0, method="DOP853", rtol=rtol, atol=atol)
    if sol.status < 0 or not np.all(np.isfinite(sol.y[:, -1])):
        raise OrbitNotFoundError(f"variational integration failed: {sol.message}")
    y = sol.y[:, -1]
    return y[:d], y[d:].reshape(d, d)


def monodromy(field, x0, T, segments=16, rtol=RTOL, atol=ATOL):
    """Monodromy matrix as a product of segment matrices, and the product of their determinants.

    Restarting the variational equations from the identity on each segment
    keeps every factor well conditioned, so the determinant is accurate even
    when the multipliers span many orders of magnitude.
    """
    d = field.dim
    x = np.asarray(x0, dtype=float)
    M = np.eye(d)
    log_det = 0.0
    sign = 1.0
    h = T / segments
    for _ in range(segments):
        x, Mk = flow_map(field, x, h, rtol, atol)
        M = Mk @ M
        s, ld = np.linalg.slogdet(Mk)
        sign *= s
        log_det += ld
    return M, sign * math.exp(log_det), x


def _shoot(problem):
    f = problem.field
    c, n = problem.section_point, problem.section_normal
    x, T = problem.x0.copy(), float(problem.period)
    # start on the section
    x = x - (n @ (x - c)) * n
    T_min = 1e-3 * T
    res_norm = math.inf
    for it in range(problem.max_iter):
        fx = f(x)
        speed = float(np.linalg.norm(fx))
        if speed < 1e-10 * max(1.0, float(np.linalg.norm(x))):
            raise OrbitNotFoundError("shooting converged toward an equilibrium", res_norm)
        if abs(n @ fx) < 1e-8 * speed:
            raise SectionTangencyError("flow is tangent to the section at the current iterate", res_norm)
        xT, D = flow_map(f, x, T, problem.rtol, problem.atol)
        r = xT - x
        res_norm = float(np.linalg.norm(r))
        if not math.isfinite(res_norm):
            raise OrbitNotFoundError("trajectory diverged", res_norm)
        if res_norm < problem.tol:
            return x, T, res_norm, it
        d = f.dim
        J = np.zeros((d + 1, d + 1))
        J[:d, :d] = D - np.eye(d)
        J[:d, d] = f(xT)
        J[d, :d] = n
        rhs = -np.append(r, n @ (x - c))
        step = np.linalg.lstsq(J, rhs, rcond=None)[0]
        lam = 1.0
        for _ in range(12):
            xn, Tn = x + lam * step[:d], T + lam * step[d]
            if Tn > T_min:
                try:
                    rn = float(np.linalg.norm(integrate(f, xn, Tn, problem.rtol, problem.atol).y[:, -1] - xn))
                except OrbitNotFoundError:
                    rn = math.inf
                if math.isfinite(rn) and rn < res_norm * (1.0 - 1e-4 * lam) or rn < problem.tol:
                    break
            lam *= 0.5
        else:
            raise OrbitNotFoundError(f"Newton iteration stalled at return residual {res_norm:.3g}", res_norm)
        x, T = xn, Tn
        if T <= T_min or not np.all(np.isfinite(x)):
            raise OrbitNotFoundError("Newton iteration diverged", res_norm)
    raise OrbitNotFoundError(f"no convergence in {problem.max_iter} Newton steps "
                             f"(return residual {res_norm:.3g})", res_norm)


def fit_orbit(field, x0, T, tol=FIT_TOL, rtol=RTOL, atol=ATOL, n_min=64, n_max=1 << 14):
    """Trigonometric interpolant of the trajectory from x0 over one period.

    The number of samples doubles until, at the cell midpoints, both the
    interpolant's deviation from the integrator's dense output and its
    solution residual |p' - f(p)| fall below `tol` relative to max |p|.
    """
    sol = integrate(field, x0, T, rtol, atol, dense=True)
    n = n_min
    while True:
        t = np.arange(n) * (T / n)
        Y = sol.sol(t)
        comps = [from_samples(Y[i], T, n // 2 - 1, rtol=math.inf) for i in range(field.dim)]
        mid = t + 0.5 * T / n
        Ym = sol.sol(mid)
        scale = max(1.0, float(np.max(np.abs(Y))))
        err = max(float(np.max(np.abs(c(mid) - Ym[i]))) for i, c in enumerate(comps)) / scale
        vel = np.stack([c(mid, 1) for c in comps], axis=-1)
        res = float(np.max(np.linalg.norm(vel - field(Ym.T), axis=1))) / scale
        if max(err, res) < tol or n >= n_max:
            break
        n *= 2
    comps = [_trim(c, 1e-15 * scale) for c in comps]
    return PeriodicOrbit(tuple(comps)), err


def _trim(sig, atol):
    amp = np.hypot(sig.cos, sig.sin)
    keep = np.flatnonzero(amp > atol)
    last = int(keep[-1]) + 1 if keep.size else 1
    return PeriodicSignal(sig.period, sig.cos[:last], sig.sin[:last])


def solution_residual(field, orbit, n=4096):
    """max over a uniform grid of |p'(t) - f(p(t))|."""
    _, P = orbit.sample(n)
    _, V = orbit.sample(n, 1)
    return float(np.max(np.linalg.norm(V - field(P), axis=1)))


def find_orbit(problem, fit_tol=FIT_TOL):
    """Newton shooting on (x0, T) with a section phase condition, then a trigonometric fit.

    Returns a PeriodicOrbit starting at the converged x0; shooting diagnostics
    are in orbit.meta.
    """
    x0, T, res, iters = _shoot(problem)
    orbit, fit_err = fit_orbit(problem.field, x0, T, fit_tol, problem.rtol, problem.atol)
    orbit.meta.update({
        "x0": x0.tolist(),
        "period": T,
        "return_residual": res,
        "newton_iterations": iters,
        "fit_error": fit_err,
        "n_modes": orbit.n_modes,
        "section_point": problem.section_point.tolist(),
        "section_normal": problem.section_normal.tolist(),
    })
    return orbit


# ------------------------------------------------------------- seeding


def _section_crossings(field, x_start, section, t_transient, t_total, rtol):
    c, n = np.asarray(section[0], dtype=float), np.asarray(section[1], dtype=float)

    def event(t, x):
        return n @ (x - c)

    event.direction = 1.0
    x = integrate(field, x_start, t_transient, rtol, rtol).y[:, -1]
    sol = integrate(field, x, t_total, rtol, rtol, events=event)
    return sol.t_events[0], sol.y_events[0]


def recurrence_seeds(field, section=None, x_start=None, t_transient=50.0, t_total=600.0,
                     threshold=1e-2, fallback=10.0, max_return=6, per_return=4, rtol=1e-10):
    """Near-returns to a section along a long trajectory, grouped by return count.

    A return count with no return closer than `threshold` falls back to its
    nearest returns within `fallback * threshold`. Problems are ordered by
    return count, then by return distance.
    """
    section = section or field.section
    if section is None:
        raise ValueError("field has no default section; pass one")
    x_start = np.ones(field.dim) if x_start is None else np.asarray(x_start, dtype=float)
    times, pts = _section_crossings(field, x_start, section, t_transient, t_total, rtol)
    seeds = []
    for k in range(1, max_return + 1):
        if len(pts) <= k:
            break
        gaps = np.linalg.norm(pts[k:] - pts[:-k], axis=1)
        order = np.argsort(gaps, kind="stable")
        limit = threshold if gaps[order[0]] < threshold else fallback * threshold
        chosen = []
        for i in order:
            if gaps[i] >= limit or len(chosen) >= per_return:
                break
            # skip near-duplicates of an already chosen seed
            if any(np.linalg.norm(pts[i] - pts[j]) < 10 * threshold for j in chosen):
                continue
            chosen.append(int(i))
            seeds.append(ShootingProblem(field, section[0], section[1], pts[i], times[i + k] - times[i],
                                         meta_level=k))
    return seeds


def find_shortest_orbit(field, section=None, **seed_kw):
    """Shortest-period orbit among the seeds of the lowest return count that converges."""
    seeds = recurrence_seeds(field, section, **seed_kw)
    if not seeds:
        raise OrbitNotFoundError("no near-returns to the section found")
    best = None
    level = None
    for prob in seeds:
        if best is not None and prob.meta_level != level:
            break
        try:
            x0, T, _, _ = _shoot(prob)
        except OrbitNotFoundError as err:
            logger.debug("seed failed: %s", err)
            continue
        if best is None or T < best[1] - 1e-8:
            best = (prob, T, x0)
        level = prob.meta_level
    if best is None:
        raise OrbitNotFoundError(f"none of {len(seeds)} recurrence seeds converged")
    prob, T, x0 = best
    return find_orbit(ShootingProblem(field, prob.section_point, prob.section_normal, x0, T,
                                      prob.rtol, prob.atol, prob.tol, prob.max_iter))


# ------------------------------------------------------------- floquet


@dataclass(frozen=True)
class FloquetReport:
    multipliers: np.ndarray
    trivial_index: int
    hyperbolic: bool
    n_near_one: int
    determinant: float
    liouville: float
    monodromy: np.ndarray = field(repr=False, default=None)

    @property
    def liouville_error(self):
        return abs(self.determinant - self.liouville) / abs(self.liouville)

    def to_dict(self):
        return {
            "multipliers": [[float(z.real), float(z.imag)] for z in self.multipliers],
            "moduli": [float(abs(z)) for z in self.multipliers],
            "trivial_index": self.trivial_index,
            "hyperbolic": self.hyperbolic,
            "n_near_one": self.n_near_one,
            "determinant": self.determinant,
            "liouville": self.liouville,
            "liouville_error": self.liouville_error,
        }


def _divergence_integral(field, orbit, n=2048):
    # periodic trapezoid rule is spectrally accurate for smooth periodic integrands
    _, P = orbit.sample(n)
    divs = np.array([field.divergence(x) for x in P])
    return float(np.mean(divs) * orbit.period)


def floquet(field, orbit, segments=16, residual_tol=1e-6, rtol=RTOL, atol=ATOL):
    """Floquet multipliers of a periodic orbit from its monodromy matrix."""
    res = solution_residual(field, orbit)
    if res > residual_tol:
        raise ResidualError(f"orbit residual {res:.3g} exceeds {residual_tol:g}")
    T = orbit.period
    x0 = np.asarray(orbit.meta.get("x0", orbit(0.0)), dtype=float)
    M, det, _ = monodromy(field, x0, T, segments, rtol, atol)
    mult = np.linalg.eigvals(M)
    order = np.argsort(-np.abs(mult), kind="stable")
    mult = mult[order]
    trivial = int(np.argmin(np.abs(mult - 1.0)))
    near = int(np.sum(np.abs(mult - 1.0) < TRIVIAL_TOL))
    others = np.delete(np.abs(mult), trivial)
    hyperbolic = bool(near == 1 and np.all(np.abs(others - 1.0) > HYPERBOLIC_TOL))
    liouville = math.exp(_divergence_integral(field, orbit))
    return FloquetReport(mult, trivial, hyperbolic, near, det, liouville, M)
