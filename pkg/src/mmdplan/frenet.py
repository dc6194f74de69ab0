"""Frenet-frame trajectory generation from behavioral set-points.

Trajectories are discrete waypoints; derivatives come from second-order
finite-difference matrices (central inside, one-sided at the ends). The
planner minimizes, summed over the horizon,

    xdd^2 + ydd^2
    + (ydd - kp (y - y_d) - kv yd)^2
    + (xdd - kp (xd - v_d))^2

subject to boundary equalities. The minimizer is affine in ``(y_d, v_d)``, so
:class:`FrenetPlanner` factors the KKT system once and plans whole batches
with two matrix-vector products per axis.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np

from mmdplan.exceptions import NumericalFailure

__all__ = [
    "Trajectory",
    "BehavioralInput",
    "BoundaryConditions",
    "FrenetGains",
    "FrenetPlanner",
    "diff_matrices",
    "solve_eq_qp",
    "frenet_plan",
    "sample_behaviors",
]

MIN_HORIZON = 5


@lru_cache(maxsize=64)
def _diff_matrices(H, dt):
    if H < MIN_HORIZON:
        raise ValueError(f"horizon must be >= {MIN_HORIZON}, got {H}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    D1 = np.zeros((H, H))
    D2 = np.zeros((H, H))
    k = np.arange(1, H - 1)
    D1[k, k - 1] = -0.5
    D1[k, k + 1] = 0.5
    D1[0, :3] = [-1.5, 2.0, -0.5]
    D1[-1, -3:] = [0.5, -2.0, 1.5]
    D2[k, k - 1] = 1.0
    D2[k, k] = -2.0
    D2[k, k + 1] = 1.0
    D2[0, :4] = [2.0, -5.0, 4.0, -1.0]
    D2[-1, -4:] = [-1.0, 4.0, -5.0, 2.0]
    D1 /= dt
    D2 /= dt**2
    D1.setflags(write=False)
    D2.setflags(write=False)
    return D1, D2


def diff_matrices(H, dt):
    """First- and second-derivative operators ``(D1, D2)`` for ``H`` waypoints."""
    return _diff_matrices(int(H), float(dt))


@dataclass(frozen=True)
class Trajectory:
    x: np.ndarray
    y: np.ndarray
    dt: float

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise ValueError(f"x and y must be 1-D of equal length, got {x.shape}, {y.shape}")
        if x.size < MIN_HORIZON:
            raise ValueError(f"horizon must be >= {MIN_HORIZON}, got {x.size}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("trajectory contains non-finite waypoints")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def horizon(self):
        return self.x.size

    def _ops(self):
        return diff_matrices(self.horizon, self.dt)

    @property
    def xdot(self):
        return self._ops()[0] @ self.x

    @property
    def ydot(self):
        return self._ops()[0] @ self.y

    @property
    def xddot(self):
        return self._ops()[1] @ self.x

    @property
    def yddot(self):
        return self._ops()[1] @ self.y

    def stacked(self):
        """``x || y`` as one vector of length ``2H``."""
        return np.concatenate([self.x, self.y])

    def translated(self, dx=0.0, dy=0.0):
        return Trajectory(self.x + dx, self.y + dy, self.dt)

    def to_dict(self):
        return {"dt": self.dt, "x": self.x.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(np.asarray(data["x"], dtype=float), np.asarray(data["y"], dtype=float), float(data["dt"]))


class BehavioralInput(NamedTuple):
    y_d: float
    v_d: float


Triple = Tuple[Optional[float], Optional[float], Optional[float]]


@dataclass(frozen=True)
class BoundaryConditions:
    """Position/velocity/acceleration at the first and last waypoint.

    ``None`` marks an entry as free. Initial position, velocity and
    acceleration must all be given.
    """

    x0: Triple
    y0: Triple
    xf: Triple = (None, None, None)
    yf: Triple = (None, None, None)

    def __post_init__(self):
        for name in ("x0", "y0", "xf", "yf"):
            val = tuple(getattr(self, name))
            if len(val) != 3:
                raise ValueError(f"{name} needs (position, velocity, acceleration), got {val}")
            val = tuple(None if v is None else float(v) for v in val)
            if any(v is not None and not np.isfinite(v) for v in val):
                raise ValueError(f"{name} has non-finite entries: {val}")
            object.__setattr__(self, name, val)
        if any(v is None for v in self.x0 + self.y0):
            raise ValueError("initial position, velocity and acceleration must be specified")

    @classmethod
    def initial(cls, x=0.0, y=0.0, vx=0.0, vy=0.0, ax=0.0, ay=0.0):
        return cls((x, vx, ax), (y, vy, ay))

    def constraint_rows(self, H, dt, axis):
        """``(A, b)`` such that ``A @ z == b`` encodes this axis' boundary values."""
        D1, D2 = diff_matrices(H, dt)
        I = np.eye(H)
        start, end = (self.x0, self.xf) if axis == "x" else (self.y0, self.yf)
        rows, rhs = [], []
        for ops, vals, k in (((I, D1, D2), start, 0), ((I, D1, D2), end, H - 1)):
            for op, v in zip(ops, vals):
                if v is not None:
                    rows.append(op[k])
                    rhs.append(v)
        return np.array(rows), np.array(rhs)

    def to_dict(self):
        return {"x0": list(self.x0), "y0": list(self.y0), "xf": list(self.xf), "yf": list(self.yf)}

    @classmethod
    def from_dict(cls, data):
        return cls(
            tuple(data["x0"]),
            tuple(data["y0"]),
            tuple(data.get("xf", (None, None, None))),
            tuple(data.get("yf", (None, None, None))),
        )


@dataclass(frozen=True)
class FrenetGains:
    kappa_p: float = 1.0
    kappa_v: Optional[float] = None

    def __post_init__(self):
        if not self.kappa_p > 0:
            raise ValueError(f"kappa_p must be positive, got {self.kappa_p}")
        if self.kappa_v is None:
            # critically damped
            object.__setattr__(self, "kappa_v", 2.0 * np.sqrt(self.kappa_p))
        if not (self.kappa_p > 0 and self.kappa_v > 0):
            raise ValueError(f"gains must be positive, got {self.kappa_p}, {self.kappa_v}")


def solve_eq_qp(P, q, A, b):
    """Minimize ``0.5 z'Pz + q'z`` s.t. ``Az = b``; ``q`` and ``b`` may carry extra columns.

    Returns the primal block only. Raises :class:`NumericalFailure` when the
    KKT matrix is singular.
    """
    n, p = P.shape[0], A.shape[0]
    kkt = np.zeros((n + p, n + p))
    kkt[:n, :n] = P
    kkt[:n, n:] = A.T
    kkt[n:, :n] = A
    if np.linalg.cond(kkt) > 1e13:
        raise NumericalFailure(f"singular KKT system (n={n}, constraints={p})")
    rhs = np.concatenate([-np.asarray(q, dtype=float), np.asarray(b, dtype=float)], axis=0)
    return np.linalg.solve(kkt, rhs)[:n]


class FrenetPlanner:
    """Batch Frenet planner for fixed boundary conditions, gains and horizon."""

    def __init__(self, boundary, gains=None, horizon=100, dt=0.1):
        self.boundary = boundary
        self.gains = gains if gains is not None else FrenetGains()
        self.horizon = int(horizon)
        self.dt = float(dt)
        H, kp, kv = self.horizon, self.gains.kappa_p, self.gains.kappa_v
        D1, D2 = diff_matrices(H, self.dt)
        ones = np.ones(H)

        # x: |D2 x|^2 + |E x + kp v_d|^2
        E = D2 - kp * D1
        Ax, bx = boundary.constraint_rows(H, self.dt, "x")
        Px = 2.0 * (D2.T @ D2 + E.T @ E)
        qx = np.column_stack([np.zeros(H), 2.0 * kp * (E.T @ ones)])
        bx2 = np.column_stack([bx, np.zeros_like(bx)])
        sol = solve_eq_qp(Px, qx, Ax, bx2)
        self._x_const, self._x_per_vd = sol[:, 0], sol[:, 1]

        # y: |D2 y|^2 + |F y + kp y_d|^2
        F = D2 - kp * np.eye(H) - kv * D1
        Ay, by = boundary.constraint_rows(H, self.dt, "y")
        Py = 2.0 * (D2.T @ D2 + F.T @ F)
        qy = np.column_stack([np.zeros(H), 2.0 * kp * (F.T @ ones)])
        by2 = np.column_stack([by, np.zeros_like(by)])
        sol = solve_eq_qp(Py, qy, Ay, by2)
        self._y_const, self._y_per_yd = sol[:, 0], sol[:, 1]

    def plan_batch(self, d):
        """Plan for an ``(N, 2)`` array of ``(y_d, v_d)`` rows; returns ``(X, Y)`` of shape ``(N, H)``."""
        d = np.atleast_2d(np.asarray(d, dtype=float))
        if d.shape[-1] != 2:
            raise ValueError(f"behavioral inputs must have 2 columns (y_d, v_d), got {d.shape}")
        X = self._x_const + d[:, 1:2] * self._x_per_vd
        Y = self._y_const + d[:, 0:1] * self._y_per_yd
        return X, Y

    def plan(self, d):
        X, Y = self.plan_batch(np.asarray(d, dtype=float).reshape(1, 2))
        return Trajectory(X[0], Y[0], self.dt)


def frenet_plan(d, b, gains=None, H=100, dt=0.1):
    """Single-trajectory convenience wrapper around :class:`FrenetPlanner`."""
    return FrenetPlanner(b, gains, H, dt).plan(d)


def sample_behaviors(mean, covariance, count, seed):
    """``count`` Gaussian draws of ``(y_d, v_d)`` as an ``(count, 2)`` array."""
    mean = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(covariance, dtype=float))
    if cov.shape != (mean.size, mean.size):
        raise ValueError(f"covariance shape {cov.shape} does not match mean of size {mean.size}")
    if not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be symmetric")
    eig = np.linalg.eigvalsh(cov)
    if eig.min() < -1e-10 * max(1.0, eig.max()):
        raise ValueError(f"covariance is not positive semi-definite (min eigenvalue {eig.min():.3g})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.multivariate_normal(mean, cov, size=int(count), method="eigh")
