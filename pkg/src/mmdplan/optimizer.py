"""Sampling-based trajectory optimizer over Frenet behavioral inputs.

Each iteration draws behavioral inputs ``d = (y_d, v_d)`` from a Gaussian,
maps them to trajectories with the Frenet planner, projects those onto the
boundary/bound constraints, keeps the ``n_cem`` with the smallest residual,
scores them with a pluggable cost, keeps the ``n_e`` cheapest and moves the
Gaussian towards them with exponentially cost-weighted (MPPI-style) averages.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from mmdplan.collision import SurrogateConfig, _stack_obstacles, l_dist_batch, smoothness_cost_batch
from mmdplan.frenet import FrenetPlanner, Trajectory, sample_behaviors
from mmdplan.projection import Projector

__all__ = [
    "OptimizerConfig",
    "CemState",
    "IterationRecord",
    "OptimizeResult",
    "MMDCost",
    "distribution_update",
    "optimize",
]

logger = logging.getLogger(__name__)

CostFn = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class OptimizerConfig:
    """Batch sizes, MPPI temperature/learning rate and the initial search Gaussian.

    ``include_residual`` adds the constraint-residual norm to the cost of
    every candidate.
    """

    n_bar_cem: int = 1000
    n_cem: int = 150
    n_e: int = 50
    gamma: float = 0.9
    eta_lr: float = 0.6
    iters: int = 10
    seed: int = 0
    init_cov: Tuple[float, float] = (2.0, 4.0)
    cov_floor: float = 1e-6
    project_iters: int = 10
    include_residual: bool = True

    def __post_init__(self):
        if not 1 <= self.n_e <= self.n_cem <= self.n_bar_cem:
            raise ValueError(f"need 1 <= n_e <= n_cem <= n_bar_cem, got {self.n_e}, {self.n_cem}, {self.n_bar_cem}")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.eta_lr <= 1:
            raise ValueError("eta_lr must lie in (0, 1]")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.cov_floor < 0:
            raise ValueError("cov_floor must be >= 0")

    def to_dict(self):
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["init_cov"] = list(self.init_cov)
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "init_cov" in data:
            data["init_cov"] = tuple(data["init_cov"])
        return cls(**data)


@dataclass
class CemState:
    mu_d: np.ndarray
    sigma_d: np.ndarray
    iteration: int = 0
    best_cost: float = np.inf
    best_d: Optional[np.ndarray] = None
    best_xy: Optional[Tuple[np.ndarray, np.ndarray]] = None


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    best_cost: float
    elite_min_cost: float
    mean: Tuple[float, ...]
    cov_diag: Tuple[float, ...]

    def to_dict(self):
        return {
            "iteration": self.iteration,
            "best_cost": self.best_cost,
            "elite_min_cost": self.elite_min_cost,
            "mean": list(self.mean),
            "cov_diag": list(self.cov_diag),
        }


@dataclass(frozen=True)
class OptimizeResult:
    trajectory: Trajectory
    behavior: np.ndarray
    best_cost: float
    trace: List[IterationRecord] = field(default_factory=list)


def _floor_cov(cov, floor):
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * np.maximum(vals, floor)) @ vecs.T


def distribution_update(state, elites, costs, cfg):
    """New ``(mean, covariance)`` from elite inputs ``(n_e, 2)`` and their costs.

    Costs are shifted by their minimum before exponentiation; the normalized
    weights are unchanged by the shift.
    """
    elites = np.atleast_2d(np.asarray(elites, dtype=float))
    costs = np.asarray(costs, dtype=float)
    if elites.shape[0] < 1 or costs.shape != (elites.shape[0],):
        raise ValueError("need at least one elite and one cost per elite")
    s = np.exp(-(costs - costs.min()) / cfg.gamma)
    s = s / s.sum()
    eta = cfg.eta_lr
    mean = (1.0 - eta) * state.mu_d + eta * (s @ elites)
    dev = elites - mean
    cov = (1.0 - eta) * state.sigma_d + eta * (dev.T * s) @ dev
    return CemState(
        mean,
        _floor_cov(cov, cfg.cov_floor),
        state.iteration + 1,
        state.best_cost,
        state.best_d,
        state.best_xy,
    )


class MMDCost:
    """Augmented cost: smoothness and speed tracking plus ``w`` times the MMD risk surrogate."""

    def __init__(self, rset, geom, dt, cfg=None):
        self.obs_x, self.obs_y, self.weights, _ = _stack_obstacles(rset)
        self.geom, self.dt, self.cfg = geom, float(dt), cfg or SurrogateConfig()

    def __call__(self, D, X, Y):
        cost = smoothness_cost_batch(X, Y, self.dt, self.cfg.v_des)
        if self.cfg.w:
            risk = l_dist_batch(X, Y, self.obs_x, self.obs_y, self.weights, self.geom, self.cfg.bandwidth)
            cost = cost + self.cfg.w * risk
        return cost


def optimize(scene, rset=None, cfg=None, cost_fn=None, planner=None, projector=None):
    """Run the sampling optimizer on ``scene``; returns an :class:`OptimizeResult`.

    ``cost_fn(D, X, Y)`` scores a batch of behavioral inputs with their
    projected trajectories. When omitted, :class:`MMDCost` on ``rset`` is used.
    The returned trajectory is the cheapest candidate seen in any iteration,
    projected exactly onto the constraints.
    """
    cfg = cfg or OptimizerConfig()
    H, dt = scene.horizon, scene.dt
    if rset is not None:
        ox, _, _, rdt = _stack_obstacles(rset)
        if ox.shape[1] != H or not np.isclose(rdt, dt):
            raise ValueError(f"reduced set (H={ox.shape[1]}, dt={rdt}) does not match scene (H={H}, dt={dt})")
    if cost_fn is None:
        if rset is None:
            raise ValueError("need a reduced set or an explicit cost_fn")
        cost_fn = MMDCost(rset, scene.geometry, dt, SurrogateConfig(v_des=scene.v_des))
    boundary = scene.ego_boundary()
    planner = planner or FrenetPlanner(boundary, scene.ego_gains(), H, dt)
    projector = projector or Projector(boundary, scene.bounds, H, dt)

    rng = np.random.default_rng(cfg.seed)
    state = CemState(np.array([scene.ego_y0, scene.v_des], dtype=float), np.diag(np.asarray(cfg.init_cov, dtype=float)))
    trace = []
    for it in range(cfg.iters):
        D = sample_behaviors(state.mu_d, state.sigma_d, cfg.n_bar_cem, rng)
        X, Y = planner.plan_batch(D)
        Xp, Yp = projector.project_batch(X, Y, iters=cfg.project_iters)
        resid = projector.residuals_batch(Xp, Yp)
        ce = np.argsort(resid, kind="stable")[: cfg.n_cem]
        cost = np.asarray(cost_fn(D[ce], Xp[ce], Yp[ce]), dtype=float)
        if cfg.include_residual:
            cost = cost + resid[ce]
        if not np.all(np.isfinite(cost)):
            raise FloatingPointError("cost function returned non-finite values")
        order = np.argsort(cost, kind="stable")[: cfg.n_e]
        elites = ce[order]
        if cost[order[0]] < state.best_cost:
            r = elites[0]
            state.best_cost = float(cost[order[0]])
            state.best_d = D[r].copy()
            state.best_xy = (Xp[r].copy(), Yp[r].copy())
        state = distribution_update(state, D[elites], cost[order], cfg)
        trace.append(
            IterationRecord(
                it,
                state.best_cost,
                float(cost[order[0]]),
                tuple(state.mu_d.tolist()),
                tuple(np.diag(state.sigma_d).tolist()),
            )
        )
        if it and trace[-1].best_cost > trace[-2].best_cost:
            raise RuntimeError(f"best-so-far cost increased at iteration {it}")
        logger.debug("iter %d best %.6g", it, state.best_cost)

    best = Trajectory(state.best_xy[0], state.best_xy[1], dt)
    final, _ = projector.project(best, exact=True)
    return OptimizeResult(final, state.best_d, state.best_cost, trace)
