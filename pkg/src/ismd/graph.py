"""Doubly-stochastic interaction graphs and their Laplacians.

The interaction matrix A couples the particles; double stochasticity makes
the coupling cancel exactly in the particle average, which is the mechanism
behind the ensemble-mean dynamics.  The Laplacian L = Diag(A 1) - A and its
smallest nonzero eigenvalue control consensus speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

ROWSUM_TOL = 1e-9
SINKHORN_TOL = 1e-10
_SINKHORN_MAX_ITERS = 100_000
_ER_RETRY_CAP = 200


class GraphValidationError(ValueError):
    """Interaction matrix violates a structural invariant."""


class GraphGenerationError(RuntimeError):
    """Random graph generation failed (retry cap exceeded)."""


class SingletonGraphError(ValueError):
    """Spectral quantity undefined for a single-particle graph."""


@dataclass(frozen=True)
class InteractionGraph:
    """Immutable interaction graph: weights, Laplacian and connectivity.

    ``lambda_min_nonzero`` is the second-smallest eigenvalue of the
    unscaled Laplacian; the interaction strength ``theta`` scales the
    coupling (and hence the spectrum) at use time.  ``interacting`` is
    False only for the A = 0 baseline of independent particles, which is
    exempt from the doubly-stochastic invariants.
    """

    n: int
    A: np.ndarray
    theta: float = 1.0
    interacting: bool = True
    laplacian: np.ndarray = field(init=False, repr=False)
    lambda_min_nonzero: float = field(init=False)
    retries: int = 0

    def __post_init__(self):
        if self.theta <= 0:
            raise GraphValidationError("theta must be positive")
        A = np.asarray(self.A, dtype=float)
        if A.shape != (self.n, self.n):
            raise GraphValidationError(f"A must be {self.n}x{self.n}, got {A.shape}")
        if self.interacting:
            validate_interaction_matrix(A)
        L = np.diag(A.sum(axis=1)) - A
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "laplacian", L)
        if self.n == 1 or not self.interacting:
            lam = 0.0
        else:
            lam = float(np.linalg.eigvalsh(L)[1])
        object.__setattr__(self, "lambda_min_nonzero", max(lam, 0.0))

    @property
    def singleton(self) -> bool:
        return self.n == 1

    @property
    def connected(self) -> bool:
        return self.n == 1 or self.lambda_min_nonzero > ROWSUM_TOL

    def offdiag_nonzeros(self) -> int:
        """Directed message count per round: off-diagonal nonzeros of A."""
        mask = self.A != 0.0
        return int(mask.sum() - np.diag(mask).sum())


def validate_interaction_matrix(A: np.ndarray) -> None:
    """Check symmetry, non-negativity and double stochasticity; raise naming the offender."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphValidationError(f"A must be square, got shape {A.shape}")
    if np.any(A < 0):
        i, j = np.argwhere(A < 0)[0]
        raise GraphValidationError(f"A has negative entry at ({i}, {j})")
    if not np.allclose(A, A.T, atol=1e-12, rtol=0):
        raise GraphValidationError("A is not symmetric")
    rows = A.sum(axis=1)
    cols = A.sum(axis=0)
    bad_row = np.argmax(np.abs(rows - 1.0))
    if abs(rows[bad_row] - 1.0) > ROWSUM_TOL:
        raise GraphValidationError(
            f"row {bad_row} of A sums to {rows[bad_row]:.12g}, expected 1 within {ROWSUM_TOL}"
        )
    bad_col = np.argmax(np.abs(cols - 1.0))
    if abs(cols[bad_col] - 1.0) > ROWSUM_TOL:
        raise GraphValidationError(
            f"column {bad_col} of A sums to {cols[bad_col]:.12g}, expected 1 within {ROWSUM_TOL}"
        )


def mean_field(n: int, theta: float = 1.0) -> InteractionGraph:
    """All-to-all interaction A_ij = 1/n (Laplacian spectrum {0, 1})."""
    if n < 1:
        raise GraphValidationError("n must be >= 1")
    A = np.full((n, n), 1.0 / n)
    return InteractionGraph(n=n, A=A, theta=theta)


def disconnected(n: int) -> InteractionGraph:
    """A = 0: independent particles, the non-interacting baseline."""
    if n < 1:
        raise GraphValidationError("n must be >= 1")
    return InteractionGraph(n=n, A=np.zeros((n, n)), interacting=False)


def erdos_renyi(n: int, p: float, seed: int, theta: float = 1.0) -> InteractionGraph:
    """Doubly-stochastic weights on a connected Erdos-Renyi graph.

    Each undirected edge is present with probability p; self-loops are
    forced on so Sinkhorn scaling has a positive diagonal.  Disconnected
    samples are resampled (the analysis assumes connectivity) up to a
    retry cap, and the retry count is recorded on the graph.
    """
    if n < 1:
        raise GraphValidationError("n must be >= 1")
    if not 0.0 < p <= 1.0:
        raise GraphValidationError(f"edge probability must be in (0, 1], got {p}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=[0x6772, seed]))
    if n == 1:
        return InteractionGraph(n=1, A=np.ones((1, 1)), theta=theta)
    for attempt in range(_ER_RETRY_CAP):
        upper = rng.random((n, n)) < p
        adj = np.triu(upper, k=1)
        adj = (adj | adj.T).astype(float)
        if _is_connected(adj):
            A = sinkhorn_doubly_stochastic(adj + np.eye(n))
            return InteractionGraph(n=n, A=A, theta=theta, retries=attempt)
    raise GraphGenerationError(
        f"graph generation failed: no connected sample in {_ER_RETRY_CAP} tries (n={n}, p={p}, seed={seed})"
    )


def _is_connected(adj: np.ndarray) -> bool:
    ncomp, _ = connected_components(csr_matrix(adj), directed=False)
    return ncomp == 1


def sinkhorn_doubly_stochastic(M: np.ndarray, tol: float = SINKHORN_TOL) -> np.ndarray:
    """Symmetric Sinkhorn scaling: find d > 0 with Diag(d) M Diag(d) doubly stochastic.

    Uses the damped fixed-point d <- sqrt(d / (M d)), which converges for
    symmetric non-negative M with positive diagonal and preserves both the
    sparsity pattern and symmetry exactly.
    """
    M = np.asarray(M, dtype=float)
    if np.any(np.diag(M) <= 0):
        raise GraphValidationError("sinkhorn scaling requires a positive diagonal")
    d = np.ones(M.shape[0])
    for _ in range(_SINKHORN_MAX_ITERS):
        Md = M @ d
        if np.max(np.abs(d * Md - 1.0)) < tol:
            break
        d = np.sqrt(d / Md)
    else:
        raise GraphGenerationError(f"sinkhorn scaling did not reach tol={tol}")
    return M * np.outer(d, d)


def from_csv(path, theta: float = 1.0) -> InteractionGraph:
    """Load a custom interaction matrix from a CSV file and validate it.

    The matrix must pass every structural invariant (symmetric, doubly
    stochastic) and be connected; disconnected custom graphs are rejected
    for the same reason disconnected random samples are resampled.
    """
    A = np.loadtxt(path, delimiter=",", ndmin=2)
    g = InteractionGraph(n=A.shape[0], A=A, theta=theta)
    if not g.connected:
        raise GraphValidationError(f"custom graph in {path} is disconnected")
    return g


def algebraic_connectivity(g: InteractionGraph) -> float:
    """Second-smallest eigenvalue of the scaled Laplacian theta * L."""
    if g.singleton:
        raise SingletonGraphError("algebraic connectivity undefined for a single particle")
    return float(np.linalg.eigvalsh(g.theta * g.laplacian)[1])


def laplacian_spectral_norm(g: InteractionGraph) -> float:
    """Largest eigenvalue of theta * L (spectral norm of the stacked coupling)."""
    return float(np.linalg.eigvalsh(g.theta * g.laplacian)[-1])


def interaction_drift(g: InteractionGraph, Z: np.ndarray) -> np.ndarray:
    """Coupling drift theta * sum_j A_ij (Z_j - Z_i) = -theta * (L Z)_i per row.

    The column sums of the output vanish (double stochasticity), so the
    coupling never moves the particle average.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim != 2 or Z.shape[0] != g.n:
        raise ValueError(f"Z must have {g.n} rows, got shape {Z.shape}")
    if not g.interacting:
        return np.zeros_like(Z)
    return g.theta * (g.A @ Z - g.A.sum(axis=1)[:, None] * Z)
