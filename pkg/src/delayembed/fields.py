"""Vector fields f: R^d -> R^d with Jacobians, and the built-in systems."""

from dataclasses import dataclass, field
import math

import numpy as np

__all__ = [
    "VectorField",
    "fd_jacobian",
    "lorenz",
    "hopf3d",
    "linear",
    "with_drift",
    "field_from_spec",
    "BUILTIN_FIELDS",
]


def fd_jacobian(func, x, h=None):
    """Central-difference Jacobian of func at x (one column per coordinate)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    h = h if h is not None else 1e-6 * max(1.0, float(np.max(np.abs(x))))
    E = np.eye(d) * h
    X = np.concatenate([x + E, x - E])
    F = np.asarray(func(X))
    return (F[:d] - F[d:]).T / (2.0 * h)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Autonomous field dx/dt = f(x).

    `func` maps an array of shape (..., d) to (..., d). `jac` maps a single
    point to its (d, d) Jacobian; without it central differences are used.
    """

    dim: int
    func: object
    jac: object = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    smoothness: int | None = None
    section: tuple | None = None

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        if self.jac is not None:
            return np.asarray(self.jac(x), dtype=float)
        return fd_jacobian(self.func, x)

    def divergence(self, x):
        return float(np.trace(self.jacobian(x)))

    def rhs(self, t, x):
        """Right-hand side in the (t, x) convention of scipy's integrators."""
        return self(x)

    def to_dict(self):
        return {"name": self.name, **{k: v for k, v in self.params.items()}}


def lorenz(sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    def f(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        return np.stack([sigma * (Y - X), X * (rho - Z) - Y, X * Y - beta * Z], axis=-1)

    def jac(x):
        X, Y, Z = x
        return np.array([[-sigma, sigma, 0.0], [rho - Z, -1.0, -X], [Y, X, -beta]])

    # downward crossings of the plane through the two nontrivial equilibria
    section = (np.array([0.0, 0.0, rho - 1.0]), np.array([0.0, 0.0, -1.0]))
    return VectorField(3, f, jac, "lorenz", {"sigma": sigma, "rho": rho, "beta": beta}, None, section)


def hopf3d():
    """r' = r (1 - r^2), theta' = 1 in the (x, y) plane; z' = -z."""

    def f(x):
        X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
        q = 1.0 - X * X - Y * Y
        return np.stack([X * q - Y, Y * q + X, -Z], axis=-1)

    def jac(x):
        X, Y, _ = x
        return np.array([
            [1.0 - 3 * X * X - Y * Y, -2 * X * Y - 1.0, 0.0],
            [-2 * X * Y + 1.0, 1.0 - X * X - 3 * Y * Y, 0.0],
            [0.0, 0.0, -1.0],
        ])

    section = (np.zeros(3), np.array([0.0, 1.0, 0.0]))
    return VectorField(3, f, jac, "hopf3d", {}, None, section)


def linear(matrix):
    A = np.array(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("linear field needs a square matrix")
    d = A.shape[0]
    normal = np.zeros(d)
    normal[0] = 1.0
    return VectorField(d, lambda x: x @ A.T, lambda x: A.copy(), "linear",
                       {"matrix": A.tolist()}, None, (np.zeros(d), normal))


def with_drift(base, drift):
    """f + c for a constant vector c."""
    c = np.asarray(drift, dtype=float)
    if c.shape != (base.dim,):
        raise ValueError("drift has the wrong dimension")
    params = dict(base.params)
    params["drift"] = c.tolist()
    return VectorField(base.dim, lambda x: base(x) + c,
                       (lambda x: base.jacobian(x)), base.name, params,
                       base.smoothness, base.section)


BUILTIN_FIELDS = {"lorenz": lorenz, "hopf3d": hopf3d, "linear": linear}


def field_from_spec(spec):
    """Build a field from a name or a dict {"name": ..., parameters...}."""
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    drift = spec.pop("drift", None)
    if name not in BUILTIN_FIELDS:
        raise ValueError(f"unknown field {name!r}; choose from {sorted(BUILTIN_FIELDS)}")
    base = BUILTIN_FIELDS[name](**spec)
    if drift is not None and any(v != 0 for v in drift):
        base = with_drift(base, drift)
    for k, v in base.params.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"parameter {k} is not finite")
    return base
