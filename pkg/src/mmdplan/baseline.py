"""Scenario-reduction baseline: keep the samples closest to the collision boundary.

For an initial-guess ego trajectory each obstacle sample gets one score, the
aggregated collision constraint value over the horizon. Samples whose score is
nearest zero sit on the boundary of the feasible set and are kept; the rest
are discarded. Planning then uses a deterministic hinge penalty against the
kept samples.
"""

from dataclasses import dataclass

import numpy as np

from mmdplan.collision import circle_constraints, smoothness_cost_batch, _stack_obstacles
from mmdplan.reduced_set import ReducedSet

__all__ = ["BaselineConfig", "boundary_scores", "select_boundary_set", "deterministic_collision_cost", "ScenarioCost"]

_AGGREGATIONS = ("max", "sum")


@dataclass(frozen=True)
class BaselineConfig:
    """``aggregation`` folds per-step constraint values into one score per sample."""

    m: int = 10
    aggregation: str = "max"
    collision_weight: float = 1e3

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.aggregation not in _AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {_AGGREGATIONS}, got {self.aggregation!r}")
        if self.collision_weight < 0:
            raise ValueError("collision_weight must be >= 0")


def boundary_scores(O, guess, geom, aggregation="max"):
    """Per-sample score: the most-conflicting circle at each step, folded over steps."""
    if O.horizon != guess.horizon:
        raise ValueError(f"horizon mismatch: guess {guess.horizon} vs samples {O.horizon}")
    f = circle_constraints(guess.x[None, :], guess.y[None, :], O.x, O.y, geom).max(axis=-1)
    return f.max(axis=1) if aggregation == "max" else f.sum(axis=1)


def select_boundary_set(O, guess, geom, cfg=None):
    """The ``m`` samples with ``|score|`` smallest, uniformly weighted."""
    cfg = cfg or BaselineConfig()
    if cfg.m > O.n:
        raise ValueError(f"reduced-set size m={cfg.m} exceeds n={O.n}")
    score = boundary_scores(O, guess, geom, cfg.aggregation)
    idx = np.sort(np.argsort(np.abs(score), kind="stable")[: cfg.m])
    return ReducedSet.from_parent(O, idx, np.full(cfg.m, 1.0 / cfg.m))


def collision_cost_batch(X, Y, obs_x, obs_y, geom):
    """``sum_k sum_j sum_c max(0, f)`` for each ego row of ``X, Y``."""
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    out = np.empty(X.shape[0])
    step = max(1, 2_000_000 // max(1, obs_x.size * geom.n_circles))
    for s in range(0, X.shape[0], step):
        f = circle_constraints(X[s : s + step, None, :], Y[s : s + step, None, :], obs_x, obs_y, geom)
        out[s : s + step] = np.maximum(f, 0.0).sum(axis=(1, 2, 3))
    return out


def deterministic_collision_cost(ego, rset, geom):
    """Hinge penalty of ``ego`` against every reduced-set sample; zero iff it avoids them all."""
    ox, oy, _, _ = _stack_obstacles(rset)
    if ox.shape[1] != ego.horizon:
        raise ValueError(f"horizon mismatch: ego {ego.horizon} vs obstacles {ox.shape[1]}")
    return float(collision_cost_batch(ego.x[None], ego.y[None], ox, oy, geom)[0])


class ScenarioCost:
    """Optimizer cost: smoothness and speed tracking plus the weighted hinge penalty."""

    def __init__(self, rset, geom, dt, v_des, weight=1e3):
        self.obs_x, self.obs_y, _, _ = _stack_obstacles(rset)
        self.geom, self.dt, self.v_des, self.weight = geom, float(dt), float(v_des), float(weight)

    def __call__(self, D, X, Y):
        cost = smoothness_cost_batch(X, Y, self.dt, self.v_des)
        if self.weight:
            cost = cost + self.weight * collision_cost_batch(X, Y, self.obs_x, self.obs_y, self.geom)
        return cost
