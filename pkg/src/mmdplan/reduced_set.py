"""Reduced-set selection over sampled obstacle trajectories.

Selection minimizes, over a re-weighting ``alpha`` of all ``n`` samples,

    MMD(uniform, alpha) - beta * sum|top-m alpha| / sum|bottom alpha|

with a diagonal-Gaussian cross-entropy search (the second term has no
gradient). The ``m`` largest-magnitude entries of the best ``alpha`` form the
reduced set, whose weights are then re-fitted in closed form.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg

from mmdplan.exceptions import NumericalFailure
from mmdplan.kernels import KernelSpec, cross_gram, gram, gram_cached, mmd_weighted

__all__ = [
    "ObstacleSampleSet",
    "ReducedSet",
    "ReducedSetOptConfig",
    "reduced_set_objective",
    "select_reduced_set",
    "refine_weights",
    "reduced_set_mmd",
    "RATIO_FLOOR",
]

logger = logging.getLogger(__name__)

RATIO_FLOOR = 1e-8


@dataclass(frozen=True)
class ObstacleSampleSet:
    """``n`` obstacle trajectories sharing horizon ``H`` and time step ``dt``.

    ``labels`` optionally records the generating intent of each sample.
    """

    x: np.ndarray
    y: np.ndarray
    dt: float
    labels: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if x.shape != y.shape:
            raise ValueError(f"x and y sample blocks differ in shape: {x.shape} vs {y.shape}")
        if x.shape[0] < 1:
            raise ValueError("need at least one sample")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dt", float(self.dt))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (x.shape[0],):
                raise ValueError(f"labels must have shape ({x.shape[0]},), got {labels.shape}")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def horizon(self):
        return self.x.shape[1]

    @property
    def vectors(self):
        """Each sample stacked as ``x || y`` (shape ``(n, 2H)``)."""
        return np.hstack([self.x, self.y])

    def __len__(self):
        return self.n

    def subset(self, indices):
        idx = np.asarray(indices, dtype=int)
        labels = None if self.labels is None else self.labels[idx]
        return ObstacleSampleSet(self.x[idx], self.y[idx], self.dt, labels)

    def translated(self, dx=0.0, dy=0.0):
        return ObstacleSampleSet(self.x + dx, self.y + dy, self.dt, self.labels)

    @classmethod
    def from_vectors(cls, vectors, dt):
        v = np.atleast_2d(np.asarray(vectors, dtype=float))
        if v.shape[1] % 2:
            raise ValueError("stacked vectors must have even length 2H")
        H = v.shape[1] // 2
        return cls(v[:, :H], v[:, H:], dt)


@dataclass(frozen=True)
class ReducedSet:
    """``m`` samples picked from a parent set of ``parent_n``, with weights."""

    indices: np.ndarray
    weights: np.ndarray
    parent_n: int
    samples: ObstacleSampleSet

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        w = np.asarray(self.weights, dtype=float)
        if idx.ndim != 1 or idx.size < 1 or idx.size > self.parent_n:
            raise ValueError(f"need 1 <= m <= n indices, got {idx.size} for n={self.parent_n}")
        if np.unique(idx).size != idx.size:
            raise ValueError("reduced-set indices must be distinct")
        if idx.min() < 0 or idx.max() >= self.parent_n:
            raise ValueError("reduced-set index out of range")
        if w.shape != idx.shape or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and match the indices")
        if self.samples.n != idx.size:
            raise ValueError("samples must hold exactly the selected trajectories")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "weights", w)

    @property
    def m(self):
        return self.indices.size

    @classmethod
    def from_parent(cls, parent, indices, weights):
        return cls(np.asarray(indices, dtype=int), weights, parent.n, parent.subset(indices))

    def with_weights(self, weights):
        return ReducedSet(self.indices, weights, self.parent_n, self.samples)


@dataclass(frozen=True)
class ReducedSetOptConfig:
    """Cross-entropy search settings. ``beta=None`` auto-scales from the first batch."""

    beta: Optional[float] = None
    cem_batch: int = 500
    cem_elites: int = 50
    cem_iters: int = 50
    seed: int = 0
    bandwidth: KernelSpec = KernelSpec(30.0)
    init_std: Optional[float] = None
    cov_floor: float = 1e-6
    beta_scale: float = 0.01

    def __post_init__(self):
        if self.cem_elites > self.cem_batch or self.cem_elites < 1:
            raise ValueError("need 1 <= cem_elites <= cem_batch")
        if self.beta is not None and self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.cem_iters < 1:
            raise ValueError("cem_iters must be >= 1")


def _ratio_term(alpha, m):
    """``sum|top-m| / sum|rest|`` per row; ties go to the lower index."""
    mag = np.abs(alpha)
    order = np.argsort(-mag, axis=-1, kind="stable")
    sorted_mag = np.take_along_axis(mag, order, axis=-1)
    top = sorted_mag[..., :m].sum(axis=-1)
    bottom = sorted_mag[..., m:].sum(axis=-1)
    return np.where(bottom < RATIO_FLOOR, top / RATIO_FLOOR, top / np.maximum(bottom, RATIO_FLOOR))


def _check_m(m, n):
    if not 1 <= m <= n:
        raise ValueError(f"reduced-set size m={m} must satisfy 1 <= m <= n={n}")


def reduced_set_objective(alpha, K, m, beta):
    """Selection objective for one ``alpha`` (1-D) or a batch of them (2-D)."""
    K = np.asarray(K, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    n = K.shape[0]
    if K.shape != (n, n) or alpha.shape[-1] != n:
        raise ValueError(f"alpha of length {alpha.shape[-1]} does not match Gram matrix {K.shape}")
    _check_m(m, n)
    uniform = np.full(n, 1.0 / n)
    if alpha.ndim == 2:
        uniform = np.broadcast_to(uniform, alpha.shape)
    mmd = mmd_weighted(K, K, K, uniform, alpha)
    out = mmd - beta * _ratio_term(alpha, m)
    return float(out) if np.ndim(out) == 0 else out


def _top_m(alpha, m):
    return np.sort(np.argsort(-np.abs(alpha), kind="stable")[:m])


def select_reduced_set(O, m, cfg=None, return_alpha=False):
    """Cross-entropy minimization of the selection objective.

    Returns a :class:`ReducedSet` whose weights are the raw ``alpha`` values of
    the chosen samples (call :func:`refine_weights` afterwards).
    """
    cfg = cfg or ReducedSetOptConfig()
    n = O.n
    _check_m(m, n)
    K = gram_cached(O.vectors, cfg.bandwidth)
    rng = np.random.default_rng(cfg.seed)

    mean = np.full(n, 1.0 / n)
    std0 = cfg.init_std if cfg.init_std is not None else 1.0 / n
    var = np.full(n, std0**2)
    beta = cfg.beta
    best_alpha, best_cost = mean.copy(), np.inf

    for it in range(cfg.cem_iters):
        batch = mean + np.sqrt(var) * rng.standard_normal((cfg.cem_batch, n))
        if beta is None:
            uniform = np.broadcast_to(np.full(n, 1.0 / n), batch.shape)
            beta = cfg.beta_scale * float(np.median(mmd_weighted(K, K, K, uniform, batch)))
            logger.debug("auto-scaled beta = %.3g", beta)
        cost = reduced_set_objective(batch, K, m, beta)
        elite_idx = np.argsort(cost, kind="stable")[: cfg.cem_elites]
        if cost[elite_idx[0]] < best_cost:
            best_cost = float(cost[elite_idx[0]])
            best_alpha = batch[elite_idx[0]].copy()
        elites = batch[elite_idx]
        mean = elites.mean(axis=0)
        var = elites.var(axis=0) + cfg.cov_floor

    idx = _top_m(best_alpha, m)
    rset = ReducedSet.from_parent(O, idx, best_alpha[idx])
    if return_alpha:
        return rset, best_alpha, beta
    return rset


def refine_weights(O, indices, spec=None, ridge=1e-8):
    """Closed-form weights for the chosen samples that best match the full embedding."""
    spec = spec if isinstance(spec, KernelSpec) else KernelSpec(30.0 if spec is None else float(spec))
    idx = np.asarray(indices, dtype=int)
    if np.unique(idx).size != idx.size:
        raise ValueError("indices must be distinct")
    if idx.size < 1 or idx.min() < 0 or idx.max() >= O.n:
        raise ValueError(f"indices out of range for n={O.n}")
    V = O.vectors
    K_bar = gram(V[idx], spec)
    K_cross = cross_gram(V[idx], V, spec)
    rhs = K_cross.sum(axis=1) / O.n
    lhs = K_bar + ridge * np.eye(idx.size)
    try:
        w = scipy.linalg.solve(lhs, rhs, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        w = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    if not np.all(np.isfinite(w)):
        raise NumericalFailure("reduced-set weight system is singular")
    return ReducedSet.from_parent(O, idx, w)


def reduced_set_mmd(O, rset, spec=None):
    """MMD between the uniform embedding of ``O`` and the weighted reduced set."""
    spec = spec if isinstance(spec, KernelSpec) else KernelSpec(30.0 if spec is None else float(spec))
    V = O.vectors
    K_aa = gram_cached(V, spec)
    K_ab = cross_gram(V, V[rset.indices], spec)
    K_bb = gram(V[rset.indices], spec)
    return mmd_weighted(K_aa, K_ab, K_bb, np.full(O.n, 1.0 / O.n), rset.weights)
