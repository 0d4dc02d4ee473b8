"""Vector-field surgery: make a shifted orbit an exact solution of a nearby field.

Given an orbit p of f and a repaired observation o' of the old observation
o = a . p, the lifted orbit p' = p + (o' - o) a / |a|^2 solves

    dx/dt = f(x) + df(x),  df(x) = (e1(t0) + e2(t0)) lam(|w0|^2 / delta^2),

where x = p'(t0) + w0 is the closest-point decomposition in the tube of
radius delta, e1 = dp'/dt - dp/dt, e2 = f(p) - f(p') and lam is 1 on
[0, 1/2] and 0 beyond 3/4. On p' itself w0 = 0, so f'(p') = f(p') + e1 + e2
= f(p) + dp'/dt - dp/dt = dp'/dt.
"""

from dataclasses import dataclass, fields, replace
import logging
import math

import numpy as np
from scipy.spatial import cKDTree

from .bump import SURGERY
from .orbit import PeriodicOrbit, TubeGeometry, closest_points, orbit_distance_r, uniform_tube
from .shooting import OrbitNotFoundError, ResidualError, ShootingProblem, find_orbit, floquet, integrate
from .signal import distance_r
from .fields import VectorField, field_from_spec

__all__ = [
    "SurgeryError",
    "ContinuationError",
    "lift_signal",
    "EpsilonTerms",
    "epsilon_terms",
    "PerturbedField",
    "build_perturbed_field",
    "surgery",
    "perturbed_field_from_manifest",
    "exterior_samples",
    "verify_surgery",
    "continue_orbit",
]

logger = logging.getLogger(__name__)

OBSERVATION_TOL = 1e-9


class SurgeryError(RuntimeError):
    pass


class ContinuationError(OrbitNotFoundError):
    pass


def lift_signal(p, o_old, o_new, a, tol=OBSERVATION_TOL):
    """p' = p + (o_new - o_old) a / |a|^2, so that a . p' = o_new.

    For a = e1 this shifts the first coordinate only. For general a it is the
    shift along e1 conjugated by any orthogonal map sending a/|a| to e1.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (p.dim,):
        raise ValueError(f"observation vector must have length {p.dim}")
    na2 = float(a @ a)
    if na2 == 0.0:
        raise ValueError("observation vector must be nonzero")
    for o in (o_old, o_new):
        if not math.isclose(o.period, p.period, rel_tol=1e-12):
            raise ValueError(f"signal period {o.period} differs from orbit period {p.period}")
    proj = p.project(a)
    mismatch = distance_r(proj, o_old, 0).value
    if mismatch > tol * max(1.0, float(np.linalg.norm(a)) * float(np.max(np.abs(p.sample(256)[1])))):
        raise ValueError(f"o_old is not a . p (sup mismatch {mismatch:.3g})")
    shift = o_new - o_old
    if shift.is_constant() and shift.cos[0] == 0.0:
        return p
    comps = tuple(c + (ai / na2) * shift if ai != 0.0 else c for c, ai in zip(p.components, a))
    return PeriodicOrbit(comps, dict(p.meta))


@dataclass(frozen=True, eq=False)
class EpsilonTerms:
    """e1(t) = p_new'(t) - p'(t) and e2(t) = f(p(t)) - f(p_new(t))."""

    field: VectorField
    base: PeriodicOrbit
    orbit: PeriodicOrbit

    @property
    def period(self):
        return self.orbit.period

    def eps1(self, t):
        return self.orbit(t, 1) - self.base(t, 1)

    def eps2(self, t):
        return self.field(self.base(t)) - self.field(self.orbit(t))

    def total(self, t):
        return self.eps1(t) + self.eps2(t)

    def norms(self, n=4096):
        t = np.arange(n) * (self.period / n)
        return {
            "eps1": float(np.max(np.linalg.norm(self.eps1(t), axis=-1))),
            "eps2": float(np.max(np.linalg.norm(self.eps2(t), axis=-1))),
            "total": float(np.max(np.linalg.norm(self.total(t), axis=-1))),
            "grid": n,
        }


def epsilon_terms(f, p, p_new):
    if not math.isclose(p.period, p_new.period, rel_tol=1e-12):
        raise ValueError("orbits must share the period")
    return EpsilonTerms(f, p, p_new)


@dataclass(frozen=True, eq=False)
class PerturbedField:
    """f' = f + df with df supported within distance delta*sqrt(3)/2 of the orbit."""

    base: VectorField
    orbit: PeriodicOrbit
    tube: object
    eps: EpsilonTerms
    bump: object = SURGERY

    @property
    def dim(self):
        return self.base.dim

    def delta_f(self, X):
        X = np.asarray(X, dtype=float)
        flat = np.atleast_2d(X).reshape(-1, self.dim)
        out = np.zeros(flat.shape)
        t0, W, inside = closest_points(self.orbit, self.tube, flat, strict=False)
        if np.any(inside):
            q = np.sum(W[inside] ** 2, axis=1) / self.tube.delta**2
            lam = self.bump(q)
            live = lam != 0.0
            if np.any(live):
                idx = np.flatnonzero(inside)[live]
                out[idx] = lam[live, None] * self.eps.total(t0[idx])
        return out.reshape(X.shape)

    def __call__(self, X):
        return self.base(X) + self.delta_f(X)

    def rhs(self, t, x):
        return self(x)

    def as_field(self):
        return VectorField(self.dim, self.__call__, None, f"{self.base.name}+surgery", dict(self.base.params),
                           None, self.base.section)

    def on_orbit_residual(self, n=4096):
        t = np.arange(n) * (self.orbit.period / n)
        P = self.orbit(t)
        return float(np.max(np.linalg.norm(self.orbit(t, 1) - self(P), axis=1)))

    def manifest(self):
        return {
            "base_field": self.base.to_dict(),
            "base_orbit": self.eps.base.to_dict(),
            "orbit": self.orbit.to_dict(),
            "tube": self.tube.to_dict(),
            "bump": {"name": self.bump.name, "rise": self.bump.rise, "slope": self.bump.slope},
            "support_radius": self.tube.delta * math.sqrt(0.75),
            "eps_norms": self.eps.norms(),
        }


def build_perturbed_field(f, p_new, eps, tube, check_ball=True):
    """f' for the orbit p_new, using a tube valid around the base orbit (see uniform_tube)."""
    if check_ball and tube.uniform_epsilon is not None:
        dist = orbit_distance_r(eps.base, p_new, 2)
        if dist > tube.uniform_epsilon:
            raise SurgeryError(f"shifted orbit is {dist:.3g} from the base orbit in d_2, "
                               f"beyond the uniform tube radius {tube.uniform_epsilon:.3g}")
    vmax = float(np.max(np.linalg.norm(p_new.sample(1024, 1)[1], axis=1)))
    tube = replace(tube, meta={**tube.meta, "speed_max": vmax})
    return PerturbedField(f, p_new, tube, eps)


def perturbed_field_from_manifest(d):
    """Rebuild f' from the dictionary written by PerturbedField.manifest."""
    base = field_from_spec(d["base_field"])
    p = PeriodicOrbit.from_dict(d["base_orbit"])
    p_new = PeriodicOrbit.from_dict(d["orbit"])
    names = [f.name for f in fields(TubeGeometry) if f.name != "meta"]
    tube = TubeGeometry(**{k: d["tube"][k] for k in names})
    return build_perturbed_field(base, p_new, epsilon_terms(base, p, p_new), tube, check_ball=False)


def surgery(f, p, o_old, o_new, a, tube=None, check_ball=True):
    """Lift, compute the epsilon terms and build f' in one call."""
    tube = tube or uniform_tube(p)
    p_new = lift_signal(p, o_old, o_new, a)
    return build_perturbed_field(f, p_new, epsilon_terms(f, p, p_new), tube, check_ball)


def _tube_samples(pf, count, rng, radius_fraction=1.0):
    T, d = pf.orbit.period, pf.dim
    t = rng.uniform(0.0, T, count)
    u = rng.normal(size=(count, d))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = pf.tube.delta * radius_fraction * rng.uniform(0.0, 1.0, count) ** (1.0 / d)
    return pf.orbit(t) + r[:, None] * u


def exterior_samples(pf, count, rng, max_radius=3.0, n=8192):
    """Random points certified to lie farther than tube.delta from the orbit.

    Every orbit point is within h |p'|_max / 2 of a grid point, so the grid
    distance minus that slack is a lower bound on the true distance.
    """
    T, d = pf.orbit.period, pf.dim
    delta = pf.tube.delta
    vmax = float(np.max(np.linalg.norm(pf.orbit.sample(4096, 1)[1], axis=1)))
    n = max(n, int(math.ceil(4.0 * T * vmax / delta)))
    slack = 0.5 * (T / n) * vmax
    tree = cKDTree(pf.orbit.sample(n)[1])
    out, have = [], 0
    while have < count:
        m = 2 * count
        t = rng.uniform(0.0, T, m)
        u = rng.normal(size=(m, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        X = pf.orbit(t) + delta * rng.uniform(1.0, max_radius, m)[:, None] * u
        dist, _ = tree.query(X)
        keep = X[dist - slack > delta * (1.0 + 1e-3)]
        out.append(keep)
        have += len(keep)
    return np.concatenate(out)[:count]


def _jacobian_sup(pf, X, h):
    d = pf.dim
    worst = 0.0
    for x in X:
        E = np.eye(d) * h
        F = pf.delta_f(np.concatenate([x + E, x - E]))
        J = (F[:d] - F[d:]).T / (2 * h)
        worst = max(worst, float(np.linalg.norm(J, 2)))
    return worst


def _second_sup(pf, X, h, rng):
    worst = 0.0
    for x in X:
        v = rng.normal(size=pf.dim)
        v /= np.linalg.norm(v)
        F = pf.delta_f(np.stack([x + h * v, x, x - h * v]))
        worst = max(worst, float(np.linalg.norm(F[0] - 2 * F[1] + F[2]) / h**2))
    return worst


def verify_surgery(pf, samples=1000, seed=0, shifts=(1.0, 0.5, 0.25), derivative_samples=64,
                   integrate_period=True, grid=4096, check_floquet=True):
    """Residual, size, smoothness and linear-decay report for a perturbed field.

    With `check_floquet`, the multipliers of the new orbit under f' are
    reported (finite-difference Jacobians of f'); hyperbolicity is observed,
    not enforced.
    """
    rng = np.random.default_rng(seed)
    report = {"samples": samples, "seed": seed, "grid": grid}
    report["on_orbit_residual"] = pf.on_orbit_residual(grid)
    X = _tube_samples(pf, samples, rng)
    D = pf.delta_f(X)
    c0 = float(np.max(np.linalg.norm(D, axis=1))) if len(D) else 0.0
    t = np.arange(grid) * (pf.orbit.period / grid)
    on = float(np.max(np.linalg.norm(pf.delta_f(pf.orbit(t)), axis=1)))
    report["sup_delta_f"] = max(c0, on)
    h1 = 1e-5 * pf.tube.delta
    Xd = X[:derivative_samples]
    report["c1_delta_f"] = _jacobian_sup(pf, Xd, h1)
    report["c2_delta_f"] = _second_sup(pf, Xd, 1e-3 * pf.tube.delta, rng)
    report["eps_norms"] = pf.eps.norms(grid)

    base, new = pf.eps.base, pf.orbit
    diff = [cn - cb for cn, cb in zip(new.components, base.components)]
    rows = []
    for s in shifts:
        comps = tuple(cb + s * dc for cb, dc in zip(base.components, diff))
        ps = PeriodicOrbit(comps)
        pfs = build_perturbed_field(pf.base, ps, epsilon_terms(pf.base, base, ps), pf.tube, check_ball=False)
        on_s = float(np.max(np.linalg.norm(pfs.delta_f(ps(t[::4])), axis=1)))
        rows.append({"shift": s, "orbit_distance_2": s * orbit_distance_r(base, new, 2), "sup_delta_f": on_s})
    for prev, row in zip(rows, rows[1:]):
        row["ratio"] = row["sup_delta_f"] / prev["sup_delta_f"] if prev["sup_delta_f"] > 0 else None
    report["scaling"] = rows

    if integrate_period:
        x0 = new(0.0)
        sol = integrate(pf, x0, new.period, rtol=1e-11, atol=1e-12)
        report["closure_error"] = float(np.linalg.norm(sol.y[:, -1] - x0))
    if check_floquet:
        try:
            rep = floquet(pf.as_field(), new, segments=8, rtol=1e-10, atol=1e-10)
            report["floquet"] = {"moduli": [float(abs(z)) for z in rep.multipliers],
                                 "hyperbolic": rep.hyperbolic, "liouville_error": rep.liouville_error}
        except (OrbitNotFoundError, ResidualError) as err:
            report["floquet"] = {"error": str(err), "hyperbolic": None}
    return report


def continue_orbit(f, g, p, check_hyperbolic=True):
    """Newton continuation of a hyperbolic orbit p of f to the field g.

    Returns (p', T'/T); the delay should be rescaled by the same factor.
    """
    if check_hyperbolic:
        rep = floquet(f, p)
        if not rep.hyperbolic:
            raise ContinuationError("orbit is not hyperbolic; continuation is not guaranteed")
    x0 = np.asarray(p.meta.get("x0", p(0.0)), dtype=float)
    normal = f(x0)
    prob = ShootingProblem(g, x0, normal, x0, p.period)
    try:
        q = find_orbit(prob)
    except OrbitNotFoundError as err:
        raise ContinuationError(f"continuation diverged: {err}", err.residual) from err
    return q, q.period / p.period
