"""Input coercion shared by the estimator classes and the CLI."""

import numpy as np
from sklearn.utils.validation import check_array

from mmdplan.reduced_set import ObstacleSampleSet

__all__ = ["check_sample_set", "check_positive", "check_choice"]


def check_sample_set(X, dt=None, horizon=None):
    """Accept an :class:`ObstacleSampleSet` or an ``(n, 2H)`` array of stacked ``x || y`` rows."""
    if isinstance(X, ObstacleSampleSet):
        O = X
        if dt is not None and not np.isclose(O.dt, dt):
            raise ValueError(f"sample dt {O.dt} does not match {dt}")
    else:
        if dt is None:
            raise ValueError("dt is required when samples are given as an array")
        arr = check_array(X, dtype=float, ensure_min_samples=1)
        O = ObstacleSampleSet.from_vectors(arr, dt)
    if horizon is not None and O.horizon != horizon:
        raise ValueError(f"sample horizon {O.horizon} does not match {horizon}")
    return O


def check_positive(name, value, strict=True):
    value = float(value)
    if not np.isfinite(value) or value < 0 or (strict and value == 0):
        raise ValueError(f"{name} must be {'positive' if strict else 'non-negative'}, got {value}")
    return value


def check_choice(name, value, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {tuple(choices)}, got {value!r}")
    return value
