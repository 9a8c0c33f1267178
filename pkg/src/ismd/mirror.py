"""Mirror maps and Bregman divergences.

A mirror map pairs a constraint set with a strongly convex potential whose
conjugate gradient maps the unconstrained mirror space onto the constraint
set.  Two maps are supported:

* ``euclidean``: quadratic potential, identity conjugate gradient,
  squared-distance Bregman divergence (the unconstrained / projected case).
* ``entropy``: negative entropy on the probability simplex, softmax
  conjugate gradient, KL Bregman divergence.

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EUCLIDEAN = "euclidean"
ENTROPY = "entropy"
_KINDS = (EUCLIDEAN, ENTROPY)


class MirrorDomainError(ValueError):
    """Input outside the domain of the requested mirror-map operation."""


@dataclass(frozen=True)
class MirrorMap:
    """A mirror map: kind, dimension and strong-convexity constant.

    ``mu`` is the strong-convexity constant of the potential (w.r.t. the
    L2 norm for ``euclidean``, the L1 norm on the simplex for ``entropy``);
    both standard maps have ``mu = 1``, and a scaled potential ``c * phi``
    has ``mu = c``.
    """

    kind: str
    d: int
    mu: float = 1.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown mirror map kind {self.kind!r}; expected one of {_KINDS}")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.mu <= 0:
            raise ValueError("mu must be positive")


def euclidean_map(d: int) -> MirrorMap:
    return MirrorMap(EUCLIDEAN, d)


def entropy_map(d: int) -> MirrorMap:
    return MirrorMap(ENTROPY, d)


def softmax(z: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for overflow safety."""
    z = np.asarray(z, dtype=float)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def grad_conjugate(mmap: MirrorMap, z: np.ndarray) -> np.ndarray:
    """Gradient of the conjugate potential: the mirror-to-primal map.

    Identity for the euclidean map; softmax (scaled by 1/mu inside the
    exponent for scaled potentials) for the entropy map.  Accepts a single
    vector or a stack of row vectors.
    """
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise MirrorDomainError("grad_conjugate requires finite input")
    if mmap.kind == EUCLIDEAN:
        return z / mmap.mu
    return softmax(z / mmap.mu)


def conjugate_value(mmap: MirrorMap, z: np.ndarray) -> float:
    """Value of the conjugate potential at ``z`` (a single vector)."""
    z = np.asarray(z, dtype=float)
    if mmap.kind == EUCLIDEAN:
        return float(z @ z) / (2.0 * mmap.mu)
    s = z / mmap.mu
    m = s.max()
    return mmap.mu * (m + np.log(np.exp(s - m).sum()))


def grad_map(mmap: MirrorMap, x: np.ndarray) -> np.ndarray:
    """Primal-to-mirror map, the inverse of :func:`grad_conjugate`.

    For the entropy map the inverse is only defined up to an additive
    multiple of the all-ones vector (the simplex gauge direction); the
    representative ``mu * log(x)`` is returned.
    """
    x = np.asarray(x, dtype=float)
    if mmap.kind == EUCLIDEAN:
        return mmap.mu * x
    if np.any(x <= 0):
        raise MirrorDomainError("entropy grad_map requires strictly positive coordinates")
    return mmap.mu * np.log(x)


def bregman(mmap: MirrorMap, x: np.ndarray, y: np.ndarray) -> float:
    """Bregman divergence of the map's potential between primal points.

    Squared euclidean distance (halved) for the euclidean map; the KL
    divergence ``sum x_i log(x_i / y_i)`` for the entropy map, where
    ``0 log 0 = 0`` but a zero coordinate in ``y`` facing a nonzero one in
    ``x`` is a hard domain error.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {y.shape}")
    if mmap.kind == EUCLIDEAN:
        diff = x - y
        return 0.5 * mmap.mu * float(diff @ diff)
    if np.any(x < 0) or np.any(y < 0):
        raise MirrorDomainError("entropy bregman requires non-negative coordinates")
    support = x > 0
    if np.any(y[support] == 0):
        raise MirrorDomainError("entropy bregman undefined: zero coordinate in second argument")
    xs = x[support]
    return mmap.mu * float(np.sum(xs * np.log(xs / y[support])))


def lipschitz_of_conjugate(mmap: MirrorMap) -> float:
    """Lipschitz constant of the conjugate gradient: 1/mu."""
    return 1.0 / mmap.mu


def phi_diameter(mmap: MirrorMap) -> float:
    """Bregman diameter of the simplex under this map.

    Entropy map: sup over the simplex of sqrt(2 * KL(x || barycenter)) is
    sqrt(2 log d), attained at the vertices.  Euclidean map: the euclidean
    diameter of the simplex, sqrt(2).
    """
    if mmap.kind == ENTROPY:
        return float(np.sqrt(2.0 * mmap.mu * np.log(mmap.d)))
    return float(np.sqrt(2.0 * mmap.mu))


def conjugate_laplacian_bound(mmap: MirrorMap) -> float:
    """Upper bound on the trace of the conjugate potential's Hessian.

    Euclidean: the Hessian is I/mu, trace d/mu.  Entropy: the Hessian of
    log-sum-exp is (diag(s) - s s^T)/mu with s the softmax, whose trace
    sum s_i (1 - s_i) = 1 - ||s||^2 is below 1/mu everywhere (the tight
    bound, not d/mu).
    """
    if mmap.kind == ENTROPY:
        return 1.0 / mmap.mu
    return mmap.d / mmap.mu


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort-based).

    Used only by the projected-gradient-descent baseline; mirror maps
    themselves never need projections.  Accepts a vector or a stack of
    row vectors.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 1:
        return _project_simplex_1d(v)
    return np.vstack([_project_simplex_1d(row) for row in v])


def _project_simplex_1d(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u * idx > css)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)
