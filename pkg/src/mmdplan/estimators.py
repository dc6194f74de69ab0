"""Scikit-learn style wrappers around reduced-set selection and planning.

Samples are passed either as an :class:`ObstacleSampleSet` or as an
``(n, 2H)`` array whose rows stack the x and y waypoints.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from mmdplan.baseline import BaselineConfig, select_boundary_set
from mmdplan.bench import BenchConfig, _guess, collision_free_mask, plan_with_reduced_set, select_for_method
from mmdplan.kernels import KernelSpec
from mmdplan.reduced_set import ReducedSetOptConfig, reduced_set_mmd, refine_weights, select_reduced_set
from mmdplan.scenes import SceneConfig
from mmdplan.validation import check_choice, check_positive, check_sample_set

__all__ = ["ReducedSetSelector", "BoundarySetSelector", "MMDTrajectoryPlanner", "ScenarioTrajectoryPlanner"]


class _SelectorMixin(TransformerMixin):
    def transform(self, X):
        """Stacked ``x || y`` rows of the selected samples of ``X``."""
        check_is_fitted(self, "indices_")
        O = check_sample_set(X, self.dt, self.n_steps_)
        if O.n != self.n_samples_:
            raise ValueError(f"X has {O.n} samples, selector was fit on {self.n_samples_}")
        return O.vectors[self.indices_]


class ReducedSetSelector(_SelectorMixin, BaseEstimator):
    """Pick ``m`` samples whose weighted kernel embedding is close to the full set's.

    Parameters
    ----------
    m : int
        Reduced-set size.
    bandwidth : float
        Gaussian kernel bandwidth.
    beta : float or None
        Sparsity weight; ``None`` scales it to the first batch's MMD.
    refine : bool
        Refit the weights in closed form on the chosen support.
    ridge : float
        Diagonal regularization of the closed-form fit.
    dt : float
        Time step, needed when ``X`` is a plain array.

    Attributes
    ----------
    reduced_set_, indices_, weights_, mmd_, n_samples_, n_steps_
    """

    def __init__(
        self,
        m=10,
        bandwidth=30.0,
        beta=None,
        cem_batch=500,
        cem_elites=50,
        cem_iters=50,
        refine=True,
        ridge=1e-2,
        dt=0.1,
        random_state=0,
    ):
        self.m = m
        self.bandwidth = bandwidth
        self.beta = beta
        self.cem_batch = cem_batch
        self.cem_elites = cem_elites
        self.cem_iters = cem_iters
        self.refine = refine
        self.ridge = ridge
        self.dt = dt
        self.random_state = random_state

    def _config(self):
        return ReducedSetOptConfig(
            beta=self.beta,
            cem_batch=self.cem_batch,
            cem_elites=self.cem_elites,
            cem_iters=self.cem_iters,
            seed=self.random_state,
            bandwidth=KernelSpec(check_positive("bandwidth", self.bandwidth)),
        )

    def fit(self, X, y=None):
        O = check_sample_set(X, self.dt)
        cfg = self._config()
        rset = select_reduced_set(O, int(self.m), cfg)
        if self.refine:
            rset = refine_weights(O, rset.indices, cfg.bandwidth, ridge=check_positive("ridge", self.ridge, strict=False))
        self.reduced_set_ = rset
        self.indices_ = rset.indices
        self.weights_ = rset.weights
        self.mmd_ = reduced_set_mmd(O, rset, cfg.bandwidth)
        self.n_samples_, self.n_steps_ = O.n, O.horizon
        return self

    def score(self, X, y=None):
        """Negative MMD between ``X`` and the fitted reduced set (higher is better)."""
        check_is_fitted(self, "reduced_set_")
        O = check_sample_set(X, self.dt, self.n_steps_)
        return -reduced_set_mmd(O, self.reduced_set_, KernelSpec(self.bandwidth))


class BoundarySetSelector(_SelectorMixin, BaseEstimator):
    """Keep the ``m`` samples whose constraint value along a guess trajectory is closest to zero.

    The guess is the scene's constant-lane, desired-speed Frenet plan.
    """

    def __init__(self, scene=None, m=10, aggregation="max"):
        self.scene = scene
        self.m = m
        self.aggregation = aggregation

    @property
    def dt(self):
        return (self.scene or SceneConfig()).dt

    def fit(self, X, y=None):
        scene = self.scene or SceneConfig()
        check_choice("aggregation", self.aggregation, ("max", "sum"))
        O = check_sample_set(X, scene.dt, scene.horizon)
        rset = select_boundary_set(O, _guess(scene), scene.geometry, BaselineConfig(int(self.m), self.aggregation))
        self.reduced_set_ = rset
        self.indices_ = rset.indices
        self.weights_ = rset.weights
        self.n_samples_, self.n_steps_ = O.n, O.horizon
        return self


class _PlannerBase(BaseEstimator):
    method = None

    def __init__(self, scene=None, config=None):
        self.scene = scene
        self.config = config

    def fit(self, X, y=None):
        """Select a reduced set from the draw samples ``X`` and optimize the ego trajectory."""
        scene = self.scene or SceneConfig()
        cfg = self.config or BenchConfig()
        O = check_sample_set(X, scene.dt, scene.horizon)
        if O.n < scene.m:
            raise ValueError(f"need at least m={scene.m} samples, got {O.n}")
        self.reduced_set_ = select_for_method(scene, O, self.method, cfg)
        res = plan_with_reduced_set(scene, self.reduced_set_, self.method, cfg)
        self.trajectory_ = res.trajectory
        self.behavior_ = np.asarray(res.behavior, dtype=float)
        self.best_cost_ = res.best_cost
        self.trace_ = res.trace
        return self

    def predict(self, X):
        """Boolean per sample of ``X``: True when the planned trajectory avoids it."""
        check_is_fitted(self, "trajectory_")
        scene = self.scene or SceneConfig()
        O = check_sample_set(X, scene.dt, scene.horizon)
        return collision_free_mask(self.trajectory_, O, scene.geometry)

    def score(self, X, y=None):
        """Fraction of samples in ``X`` the planned trajectory avoids."""
        return float(np.mean(self.predict(X)))


class MMDTrajectoryPlanner(_PlannerBase):
    """Plan against an MMD-optimal reduced set with the kernel risk surrogate."""

    method = "mmd"


class ScenarioTrajectoryPlanner(_PlannerBase):
    """Plan against the boundary reduced set with a hinge collision penalty."""

    method = "scenario"
