import numpy as np
import pytest

from mmdplan.frenet import BoundaryConditions, FrenetPlanner
from mmdplan.reduced_set import ObstacleSampleSet
from mmdplan.scenes import SceneConfig


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_scene():
    """Short-horizon version of the default two-lane scene."""
    return SceneConfig(horizon=30, n_draw=40, n_validation=200, m=5)


def straight_set(n, H=20, dt=0.1, y=0.0, v=10.0, noise=0.0, seed=0):
    """``n`` constant-speed lane-keeping trajectories with optional lateral noise."""
    r = np.random.default_rng(seed)
    t = np.arange(H) * dt
    x = np.tile(v * t, (n, 1))
    ys = y + noise * r.standard_normal((n, 1)) + np.zeros((n, H))
    return ObstacleSampleSet(x, ys, dt)


def bimodal_set(n_a, n_b, H=20, dt=0.1, sep=20.0, seed=0):
    """Two well-separated clusters; labels are 0 for the first, 1 for the second."""
    r = np.random.default_rng(seed)
    P = FrenetPlanner(BoundaryConditions.initial(vx=10.0), None, H, dt)
    d = np.vstack(
        [
            np.column_stack([r.normal(0.0, 0.3, n_a), r.normal(10.0, 0.5, n_a)]),
            np.column_stack([r.normal(sep, 0.3, n_b), r.normal(10.0, 0.5, n_b)]),
        ]
    )
    X, Y = P.plan_batch(d)
    return ObstacleSampleSet(X, Y, dt, labels=np.repeat([0, 1], [n_a, n_b]))
