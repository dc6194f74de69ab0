"""Projection of sampled trajectories onto boundary and bound constraints.

Each axis is projected independently:

    min 0.5 |z - z0|^2   s.t.  A z = b  (boundary values),  l <= G z <= u

with ``G`` stacking lane (y only), velocity (x only) and acceleration rows.
The solver alternates an equality-constrained KKT solve with clamping of
``G z`` and a dual update (ADMM). The KKT factorization depends only on the
horizon, time step and boundary mask, so it is computed once and shared by
every trajectory in a batch. ``exact=True`` instead solves each QP with an
interior-point method and finishes with a KKT solve on the identified active
set; slower, but exact, and used for final trajectories.
"""

from dataclasses import dataclass

import clarabel
import numpy as np
import scipy.sparse as sp

from mmdplan.exceptions import NumericalFailure
from mmdplan.frenet import Trajectory, diff_matrices

__all__ = ["ConstraintSpec", "ResidualVector", "Projector", "project", "residuals"]


@dataclass(frozen=True)
class ConstraintSpec:
    """Lane, longitudinal speed and acceleration bounds."""

    y_min: float = -1.75
    y_max: float = 5.25
    v_min: float = 0.0
    v_max: float = 25.0
    a_max: float = 6.0

    def __post_init__(self):
        if not self.y_min < self.y_max:
            raise ValueError("need y_min < y_max")
        if not 0 <= self.v_min < self.v_max:
            raise ValueError("need 0 <= v_min < v_max")
        if not self.a_max > 0:
            raise ValueError("need a_max > 0")

    def to_dict(self):
        return {k: getattr(self, k) for k in ("y_min", "y_max", "v_min", "v_max", "a_max")}

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class ResidualVector:
    """Equality residuals ``|violation|`` and inequality residuals ``max(0, violation)``."""

    equality: np.ndarray
    inequality: np.ndarray

    @property
    def entries(self):
        return np.concatenate([self.equality, self.inequality])

    @property
    def norm(self):
        return float(np.linalg.norm(self.entries))

    @property
    def max_equality(self):
        return float(self.equality.max(initial=0.0))

    @property
    def max_inequality(self):
        return float(self.inequality.max(initial=0.0))


def _bound_rows(axis, H, dt, g):
    """Scaled inequality rows ``l <= G z <= u`` for one axis (rows are O(1)).

    Also returns the per-row scale: physical value = scaled value / scale.
    """
    D1, D2 = diff_matrices(H, dt)
    if axis == "x":
        G = np.vstack([D1 * dt, D2 * dt**2])
        lo = np.concatenate([np.full(H, g.v_min * dt), np.full(H, -g.a_max * dt**2)])
        hi = np.concatenate([np.full(H, g.v_max * dt), np.full(H, g.a_max * dt**2)])
        scale = np.concatenate([np.full(H, dt), np.full(H, dt**2)])
    else:
        G = np.vstack([np.eye(H), D2 * dt**2])
        lo = np.concatenate([np.full(H, g.y_min), np.full(H, -g.a_max * dt**2)])
        hi = np.concatenate([np.full(H, g.y_max), np.full(H, g.a_max * dt**2)])
        scale = np.concatenate([np.ones(H), np.full(H, dt**2)])
    return G, lo, hi, scale


def _violations(axis, Z, H, dt, g):
    """Unscaled per-row bound violations for a batch ``Z`` of shape ``(B, H)``."""
    D1, D2 = diff_matrices(H, dt)
    acc = Z @ D2.T
    parts = []
    if axis == "x":
        vel = Z @ D1.T
        parts += [g.v_min - vel, vel - g.v_max]
    else:
        parts += [g.y_min - Z, Z - g.y_max]
    parts += [-g.a_max - acc, acc - g.a_max]
    return np.maximum(np.concatenate(parts, axis=1), 0.0)


class _AxisProjector:
    """ADMM state shared by all trajectories of one axis.

    The equality-constrained KKT inverse is cached per penalty ``rho``.
    """

    relax = 1.6

    def __init__(self, A, b, G, lo, hi, rho, scale=None):
        self.A, self.b, self.G, self.lo, self.hi = A, b, G, lo, hi
        # factor from scaled rows back to physical units
        self.scale = np.ones(G.shape[0]) if scale is None else scale
        self.rho0 = float(rho)
        self._factors = {}
        self.factor(self.rho0)
        settings = clarabel.DefaultSettings()
        settings.verbose = False
        settings.tol_gap_abs = settings.tol_gap_rel = settings.tol_feas = 1e-10
        nq, p = G.shape[0], A.shape[0]
        self._ip = (
            sp.identity(G.shape[1], format="csc"),
            sp.csc_matrix(np.vstack([A, G, -G]) if p else np.vstack([G, -G])),
            np.concatenate([b, hi, -lo]),
            ([clarabel.ZeroConeT(p)] if p else []) + [clarabel.NonnegativeConeT(2 * nq)],
            settings,
        )

    def factor(self, rho):
        cached = self._factors.get(rho)
        if cached is not None:
            return cached
        A, G = self.A, self.G
        H, p = G.shape[1], A.shape[0]
        kkt = np.zeros((H + p, H + p))
        kkt[:H, :H] = np.eye(H) + rho * G.T @ G
        kkt[:H, H:] = A.T
        kkt[H:, :H] = A
        if np.linalg.cond(kkt) > 1e12:
            raise NumericalFailure("projection KKT system is singular")
        inv = np.linalg.inv(kkt)
        # z = r @ M.T + c solves the equality-constrained step for linear term r
        MT = inv[:H, :H].T.copy()
        cached = (MT, inv[:H, H:] @ self.b, G @ MT)
        self._factors[rho] = cached
        return cached

    def run(self, Z0, iters, adapt_every=25):
        """``iters`` ADMM rounds on the batch ``Z0``.

        Every iterate meets the equalities; for each row the iterate with the
        smallest bound violation so far is returned, so the violation never
        grows with ``iters``.
        """
        if iters < 1:
            raise ValueError("iters must be >= 1")
        G, lo, hi, a = self.G, self.lo, self.hi, self.relax
        s = np.clip(Z0 @ G.T, lo, hi)
        lam = np.zeros_like(s)
        rho = self.rho0
        MT, c, GMT = self.factor(rho)
        base = Z0 @ MT + c
        best = np.array(Z0, dtype=float)
        best_viol = np.full(Z0.shape[0], np.inf)
        for it in range(1, iters + 1):
            Z = base + (rho * s - lam) @ GMT
            GZ = Z @ G.T
            viol = (np.maximum(np.maximum(lo - GZ, GZ - hi), 0.0) / self.scale).max(axis=1, initial=0.0)
            better = viol < best_viol
            best[better] = Z[better]
            best_viol[better] = viol[better]
            v = a * GZ + (1.0 - a) * s
            s_prev = s
            s = np.clip(v + lam / rho, lo, hi)
            lam = lam + rho * (v - s)
            if adapt_every and it % adapt_every == 0 and it < iters:
                prim = np.abs(GZ - s).max() / max(np.abs(GZ).max(), np.abs(s).max(), 1e-12)
                dual_vec = rho * (s - s_prev) @ G
                dual = np.abs(dual_vec).max() / max(np.abs(lam @ G).max(), np.abs(Z - Z0).max(), 1e-12)
                if prim > 0 and dual > 0:
                    ratio = np.sqrt(prim / dual)
                    if ratio > 5.0 or ratio < 0.2:
                        # quantize so the factor cache stays small
                        new = float(np.clip(2.0 ** np.round(np.log2(rho * ratio)), 1e-3, 1e4))
                        if new != rho:
                            rho = new
                            MT, c, GMT = self.factor(rho)
                            base = Z0 @ MT + c
        return best

    def exact(self, z0):
        """Exact projection of one waypoint vector.

        An interior-point solve identifies the active bounds; the KKT system
        of that active set then gives the projection to machine precision.
        """
        P, M, r, cones, settings = self._ip
        sol = clarabel.DefaultSolver(P, -z0, M, r, cones, settings).solve()
        if str(sol.status) not in ("Solved", "AlmostSolved"):
            raise NumericalFailure(f"projection QP failed: {sol.status}")
        z = np.asarray(sol.x)
        nq, p = self.G.shape[0], self.A.shape[0]
        dual = np.asarray(sol.z)
        mu_up, mu_lo = dual[p : p + nq], dual[p + nq :]
        Gz = self.G @ z
        up = mu_up > self.hi - Gz
        low = (mu_lo > Gz - self.lo) & ~up
        zp = self._active_set_solve(z0, low, up)
        return z if zp is None else zp

    def _active_set_solve(self, z0, low, up, tol=1e-9, max_rounds=50):
        """KKT solve on a guessed active set, corrected until the KKT conditions hold.

        Violated bounds are added and the worst wrong-sign multiplier is
        dropped each round; ``None`` if that does not settle.
        """
        A, G, lo, hi = self.A, self.G, self.lo, self.hi
        H, p_eq = z0.size, A.shape[0]
        low, up = low.copy(), up.copy()
        for _ in range(max_rounds):
            act = low | up
            rows = np.vstack([A, G[act]])
            rhs = np.concatenate([self.b, np.where(low, lo, hi)[act]])
            n = rows.shape[0]
            kkt = np.zeros((H + n, H + n))
            kkt[:H, :H] = np.eye(H)
            kkt[:H, H:] = rows.T
            kkt[H:, :H] = rows
            full = np.concatenate([z0, rhs])
            sol = np.linalg.lstsq(kkt, full, rcond=None)[0]
            if not np.allclose(kkt @ sol, full, atol=1e-9, rtol=0):
                return None
            zp, nu = sol[:H], sol[H + p_eq :]
            Gz = G @ zp
            below, above = Gz < lo - tol, Gz > hi + tol
            # z - z0 + rows' nu = 0: upper-active rows need nu >= 0, lower-active nu <= 0
            signed = np.where(low[act], -nu, nu)
            bad = signed < -1e-9 * max(1.0, np.abs(nu).max(initial=0.0))
            if not (below.any() or above.any() or bad.any()):
                return zp
            low |= below
            up |= above
            if bad.any():
                worst = np.flatnonzero(act)[np.argmin(signed)]
                low[worst] = up[worst] = False
        return None

    def project(self, Z0, iters, exact):
        if exact:
            return np.array([self.exact(z) for z in Z0]).reshape(Z0.shape)
        return self.run(Z0, iters)


class Projector:
    """Reusable projector for fixed boundary conditions, bounds and horizon."""

    def __init__(self, boundary, bounds, horizon, dt, rho=4.0):
        self.boundary = boundary
        self.bounds = bounds
        self.horizon = int(horizon)
        self.dt = float(dt)
        self._axes = {}
        for axis in ("x", "y"):
            A, b = boundary.constraint_rows(self.horizon, self.dt, axis)
            G, lo, hi, scale = _bound_rows(axis, self.horizon, self.dt, bounds)
            self._axes[axis] = _AxisProjector(A, b, G, lo, hi, rho, scale)

    def project_batch(self, X, Y, iters=10, exact=False):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        if X.shape[1] != self.horizon or Y.shape != X.shape:
            raise ValueError(f"expected batches of horizon {self.horizon}, got {X.shape}, {Y.shape}")
        return (
            self._axes["x"].project(X, iters, exact),
            self._axes["y"].project(Y, iters, exact),
        )

    def residuals_batch(self, X, Y):
        """Residual norm per row (same entries as :func:`residuals`)."""
        sq = np.zeros(np.atleast_2d(X).shape[0])
        for axis, Z in (("x", np.atleast_2d(X)), ("y", np.atleast_2d(Y))):
            proj = self._axes[axis]
            eq = Z @ proj.A.T - proj.b
            viol = _violations(axis, Z, self.horizon, self.dt, self.bounds)
            sq += np.sum(eq**2, axis=1) + np.sum(viol**2, axis=1)
        return np.sqrt(sq)

    def project(self, traj, iters=10, exact=True):
        X, Y = self.project_batch(traj.x[None], traj.y[None], iters, exact)
        out = Trajectory(X[0], Y[0], traj.dt)
        return out, residuals(out, self.boundary, self.bounds)


def residuals(traj, b, g):
    """Constraint residuals of ``traj`` against boundary values ``b`` and bounds ``g``."""
    H, dt = traj.horizon, traj.dt
    eq, ineq = [], []
    for axis, z in (("x", traj.x), ("y", traj.y)):
        A, rhs = b.constraint_rows(H, dt, axis)
        if A.size:
            eq.append(np.abs(A @ z - rhs))
        ineq.append(_violations(axis, z[None], H, dt, g)[0])
    eq = np.concatenate(eq) if eq else np.zeros(0)
    return ResidualVector(eq, np.concatenate(ineq))


def project(traj, b, g, iters=10, exact=True):
    """Nearest trajectory (squared waypoint distance) meeting ``b`` and ``g``.

    With ``exact=False`` only ``iters`` ADMM rounds are run, so the bounds
    hold approximately (the fixed-cost mode used inside the optimizer).
    Returns ``(projected, residuals)``.
    """
    if not (np.all(np.isfinite(traj.x)) and np.all(np.isfinite(traj.y))):
        raise ValueError("trajectory must be finite")
    return Projector(b, g, traj.horizon, traj.dt).project(traj, iters, exact)
