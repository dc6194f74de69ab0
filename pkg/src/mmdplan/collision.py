"""Ellipse collision constraint and the MMD collision-risk surrogate.

For every time step the hinged constraint values ``max(0, f)`` between the ego
waypoint and each weighted reduced-set sample (and each covering circle) form
a weighted point set on the real line. Its kernel embedding is compared with
the embedding of an equally sized set of zeros, which is what a collision-free
trajectory produces. The per-step squared distances are summed over the
horizon.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from mmdplan.frenet import Trajectory, diff_matrices
from mmdplan.kernels import KernelSpec

__all__ = [
    "F_BAR_BANDWIDTH",
    "CollisionGeometry",
    "SurrogateConfig",
    "f_constraint",
    "f_bar",
    "circle_constraints",
    "l_dist",
    "l_dist_batch",
    "l_dist_floor",
    "smoothness_cost_batch",
    "c_aug",
    "c_aug_batch",
]


@dataclass(frozen=True)
class CollisionGeometry:
    """Combined ego+obstacle ellipse semi-axes and longitudinal circle offsets.

    Each offset places one ellipse along the obstacle's x axis; a single
    ``(0.0,)`` offset is the plain one-ellipse model.
    """

    a: float = 3.6
    b_axis: float = 1.8
    circle_offsets: Sequence[float] = (0.0,)

    def __post_init__(self):
        if not (self.a > 0 and self.b_axis > 0):
            raise ValueError(f"ellipse axes must be positive, got a={self.a}, b={self.b_axis}")
        offsets = tuple(float(o) for o in self.circle_offsets)
        if not offsets:
            raise ValueError("need at least one circle offset")
        object.__setattr__(self, "circle_offsets", offsets)

    @classmethod
    def multi_circle(cls, length=4.8, width=1.8, ego_length=None, ego_width=None):
        """Three circles at ``-l/4, 0, +l/4`` covering an ``length x width`` footprint.

        Each circle's ellipse is the Minkowski-style sum of the circle's share
        of the obstacle (``l/4`` long, ``width/2`` wide) and the ego half-size.
        """
        ego_length = length if ego_length is None else ego_length
        ego_width = width if ego_width is None else ego_width
        q = length / 4.0
        return cls(a=q + ego_length / 2.0, b_axis=width / 2.0 + ego_width / 2.0, circle_offsets=(-q, 0.0, q))

    @property
    def n_circles(self):
        return len(self.circle_offsets)

    def to_dict(self):
        return {"a": self.a, "b_axis": self.b_axis, "circle_offsets": list(self.circle_offsets)}

    @classmethod
    def from_dict(cls, data):
        return cls(float(data["a"]), float(data["b_axis"]), tuple(data.get("circle_offsets", (0.0,))))


# f_bar lies in [0, 1]; a wide kernel turns the surrogate into squared
# penetration depth, a narrow one into a weighted count of contacts
F_BAR_BANDWIDTH = 0.1


@dataclass(frozen=True)
class SurrogateConfig:
    w: float = 1e8
    v_des: float = 12.0
    bandwidth: KernelSpec = KernelSpec(F_BAR_BANDWIDTH)

    def __post_init__(self):
        if self.w < 0:
            raise ValueError("w must be >= 0")


def f_constraint(ego_xy, obs_xy, geom):
    """``1 - dx^2/a^2 - dy^2/b^2`` about the obstacle centre; positive means collision."""
    ego_xy = np.asarray(ego_xy, dtype=float)
    obs_xy = np.asarray(obs_xy, dtype=float)
    dx = ego_xy[..., 0] - obs_xy[..., 0]
    dy = ego_xy[..., 1] - obs_xy[..., 1]
    out = 1.0 - dx**2 / geom.a**2 - dy**2 / geom.b_axis**2
    return float(out) if np.ndim(out) == 0 else out


def f_bar(f):
    out = np.maximum(0.0, f)
    return float(out) if np.ndim(out) == 0 else out


def circle_constraints(ego_x, ego_y, obs_x, obs_y, geom):
    """Constraint values for every circle; a trailing axis of length ``n_circles`` is appended.

    All inputs broadcast against each other (e.g. ego ``(B, 1, H)`` against
    obstacles ``(m, H)``).
    """
    offsets = np.asarray(geom.circle_offsets)
    dx = (np.asarray(ego_x)[..., None] - np.asarray(obs_x)[..., None]) - offsets
    dy = np.asarray(ego_y)[..., None] - np.asarray(obs_y)[..., None]
    return 1.0 - dx**2 / geom.a**2 - dy**2 / geom.b_axis**2


def _stack_obstacles(rsets):
    """Concatenate one or several reduced sets into ``(x, y, weights)`` blocks."""
    if not isinstance(rsets, (list, tuple)):
        rsets = [rsets]
    ox = np.vstack([r.samples.x for r in rsets])
    oy = np.vstack([r.samples.y for r in rsets])
    w = np.concatenate([r.weights for r in rsets])
    return ox, oy, w, rsets[0].samples.dt


def l_dist_floor(weights, horizon, n_circles):
    """Value of :func:`l_dist` when no sample is ever in collision."""
    w = np.asarray(weights, dtype=float)
    return horizon * (n_circles * w.sum() - n_circles * w.size) ** 2


def l_dist_batch(ego_x, ego_y, obs_x, obs_y, weights, geom, spec=None, chunk_elems=4_000_000):
    """:func:`l_dist` for ``B`` ego trajectories at once; returns shape ``(B,)``."""
    spec = spec or KernelSpec(F_BAR_BANDWIDTH)
    ego_x = np.atleast_2d(np.asarray(ego_x, dtype=float))
    ego_y = np.atleast_2d(np.asarray(ego_y, dtype=float))
    obs_x = np.atleast_2d(np.asarray(obs_x, dtype=float))
    obs_y = np.atleast_2d(np.asarray(obs_y, dtype=float))
    if ego_x.shape[1] != obs_x.shape[1]:
        raise ValueError(f"horizon mismatch: ego {ego_x.shape[1]} vs obstacles {obs_x.shape[1]}")
    B, H = ego_x.shape
    C = geom.n_circles
    A = np.repeat(np.asarray(weights, dtype=float), C)  # weight per stacked (sample, circle)
    N = A.size
    g = spec.gamma
    f = circle_constraints(ego_x[:, None, :], ego_y[:, None, :], obs_x, obs_y, geom)  # (B, m, H, C)
    fb = np.maximum(f, 0.0).transpose(0, 2, 1, 3).reshape(B, H, N)
    # a step with every f_bar = 0 contributes the constant (sum A - N)^2;
    # only steps with some contact need the pairwise kernel sums
    mmd_k = np.full((B, H), (A.sum() - N) ** 2)
    active = fb.max(axis=-1) > 0.0
    rows = fb[active]  # (P, N)
    vals = np.empty(rows.shape[0])
    step = max(1, int(chunk_elems) // max(1, N * N))
    for s in range(0, rows.shape[0], step):
        r = rows[s : s + step]
        k_ff = np.exp(-g * (r[:, :, None] - r[:, None, :]) ** 2)
        term_ff = np.einsum("pij,i,j->p", k_ff, A, A)
        term_f0 = np.exp(-g * r**2) @ A  # sum_j A_j k(f_j, 0)
        vals[s : s + step] = term_ff - 2.0 * N * term_f0 + N**2
    mmd_k[active] = vals
    return np.maximum(mmd_k, 0.0).sum(axis=1)


def l_dist(ego, rset, geom, spec=None):
    """Summed per-step MMD between hinged constraint values and the all-zero set.

    ``rset`` may be a single :class:`~mmdplan.reduced_set.ReducedSet` or a list
    of them (one per obstacle); their samples are stacked.
    """
    ox, oy, w, dt = _stack_obstacles(rset)
    if ox.shape[1] != ego.horizon:
        raise ValueError(f"horizon mismatch: ego {ego.horizon} vs obstacles {ox.shape[1]}")
    if not np.isclose(dt, ego.dt):
        raise ValueError(f"time-step mismatch: ego {ego.dt} vs obstacles {dt}")
    return float(l_dist_batch(ego.x[None], ego.y[None], ox, oy, w, geom, spec)[0])


def smoothness_cost_batch(X, Y, dt, v_des):
    """Sum over steps of ``xdd^2 + ydd^2 + (xd - v_des)^2`` for each row."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    D1, D2 = diff_matrices(X.shape[1], dt)
    xd = X @ D1.T
    xdd = X @ D2.T
    ydd = Y @ D2.T
    return np.sum(xdd**2 + ydd**2 + (xd - v_des) ** 2, axis=1)


def c_aug_batch(X, Y, dt, obs_x, obs_y, weights, geom, cfg):
    cost = smoothness_cost_batch(X, Y, dt, cfg.v_des)
    if cfg.w:
        cost = cost + cfg.w * l_dist_batch(X, Y, obs_x, obs_y, weights, geom, cfg.bandwidth)
    return cost


def c_aug(ego, rset, geom, cfg):
    """Smoothness and speed-tracking cost plus ``w`` times the collision surrogate."""
    cost = float(smoothness_cost_batch(ego.x[None], ego.y[None], ego.dt, cfg.v_des)[0])
    if cfg.w:
        cost += cfg.w * l_dist(ego, rset, geom, cfg.bandwidth)
    return cost
