"""Gaussian kernel, Gram matrices and weighted MMD via the kernel trick."""

import hashlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["KernelSpec", "kernel_eval", "gram", "cross_gram", "gram_cached", "mmd_weighted"]


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel ``exp(-|z - z'|^2 / (2 h^2))``."""

    bandwidth_h: float = 30.0

    def __post_init__(self):
        if not np.isfinite(self.bandwidth_h) or self.bandwidth_h <= 0:
            raise ValueError(f"bandwidth_h must be positive, got {self.bandwidth_h}")

    @property
    def gamma(self):
        return 1.0 / (2.0 * self.bandwidth_h**2)


def _as_spec(spec):
    if spec is None:
        return KernelSpec()
    if isinstance(spec, KernelSpec):
        return spec
    return KernelSpec(float(spec))


def kernel_eval(z, z_prime, spec=None):
    spec = _as_spec(spec)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    z_prime = np.atleast_1d(np.asarray(z_prime, dtype=float))
    if z.shape != z_prime.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {z_prime.shape}")
    return float(np.exp(-spec.gamma * np.sum((z - z_prime) ** 2)))


def _as_samples(samples):
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise ValueError("expected a non-empty list of equal-length vectors")
    return arr


def cross_gram(samples_a, samples_b, spec=None):
    """Kernel block ``K[j, l] = k(a_j, b_l)``."""
    spec = _as_spec(spec)
    a = _as_samples(samples_a)
    b = _as_samples(samples_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    return np.exp(-spec.gamma * cdist(a, b, "sqeuclidean"))


def gram(samples, spec=None):
    """Symmetric Gram matrix of ``samples`` (rows are vectors)."""
    a = _as_samples(samples)
    K = cross_gram(a, a, spec)
    # cdist can leave ~1e-16 asymmetry / off-unit diagonal
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


_GRAM_CACHE = OrderedDict()
_GRAM_CACHE_SIZE = 32


def gram_cached(samples, spec=None):
    """``gram`` memoized on (sample bytes, bandwidth). Returned arrays are read-only."""
    spec = _as_spec(spec)
    a = np.ascontiguousarray(_as_samples(samples))
    key = (hashlib.sha1(a.tobytes()).hexdigest(), a.shape, spec.bandwidth_h)
    K = _GRAM_CACHE.get(key)
    if K is None:
        K = gram(a, spec)
        K.setflags(write=False)
        _GRAM_CACHE[key] = K
        if len(_GRAM_CACHE) > _GRAM_CACHE_SIZE:
            _GRAM_CACHE.popitem(last=False)
    else:
        _GRAM_CACHE.move_to_end(key)
    return K


def mmd_weighted(K_aa, K_ab, K_bb, w_a, w_b):
    """Squared RKHS distance between ``sum w_a phi(a)`` and ``sum w_b phi(b)``.

    ``w_a`` / ``w_b`` may be 2-D (one weight vector per row), in which case a
    vector of distances is returned.
    """
    K_aa = np.asarray(K_aa, dtype=float)
    K_ab = np.asarray(K_ab, dtype=float)
    K_bb = np.asarray(K_bb, dtype=float)
    w_a = np.asarray(w_a, dtype=float)
    w_b = np.asarray(w_b, dtype=float)
    na, nb = w_a.shape[-1], w_b.shape[-1]
    if K_aa.shape != (na, na) or K_bb.shape != (nb, nb) or K_ab.shape != (na, nb):
        raise ValueError(
            f"dimension mismatch: K_aa {K_aa.shape}, K_ab {K_ab.shape}, K_bb {K_bb.shape}, "
            f"w_a {w_a.shape}, w_b {w_b.shape}"
        )
    aa = np.sum((w_a @ K_aa) * w_a, axis=-1)
    ab = np.sum((w_a @ K_ab) * w_b, axis=-1)
    bb = np.sum((w_b @ K_bb) * w_b, axis=-1)
    out = np.maximum(aa - 2.0 * ab + bb, 0.0)
    return float(out) if np.ndim(out) == 0 else out
