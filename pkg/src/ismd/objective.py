"""Benchmark objectives: simplex-constrained least squares and traffic routing.

Both objectives expose exact gradients, a stochastic gradient oracle
(mini-batch row subsampling for least squares, per-edge cost noise for
traffic), and generator functions that build random instances
deterministically from a seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_BATCH_TAG = 0x6261


class GenerationError(RuntimeError):
    """Problem generation failed."""


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=list(entropy)))


@dataclass
class LeastSquaresProblem:
    """min over the simplex of (1/m) ||W x - b||^2.

    The 1/m normalization makes the objective an average over the m rows,
    so mini-batch gradients are unbiased estimates of the full gradient.
    """

    W: np.ndarray
    b: np.ndarray
    cond: float
    seed: int
    batch_size: int | None = None
    sampling_seed: int = 0
    kind: str = field(default="least-squares", init=False)

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.m, self.d = self.W.shape
        if self.b.shape != (self.m,):
            raise ValueError("b must have one entry per row of W")
        if self.batch_size is not None and not 1 <= self.batch_size <= self.m:
            raise ValueError(f"batch size must be in [1, {self.m}], got {self.batch_size}")
        # cached for fast full gradients: grad f(x) = Q x - c
        self._Q = 2.0 * (self.W.T @ self.W) / self.m
        self._c = 2.0 * (self.W.T @ self.b) / self.m
        svals = np.linalg.svd(self.W, compute_uv=False)
        self._s_max = float(svals[0])
        self._s_min = float(svals[-1])

    # -- oracle interface -------------------------------------------------
    def value(self, x: np.ndarray) -> float:
        r = self.W @ x - self.b
        return float(r @ r) / self.m

    def value_many(self, X: np.ndarray) -> np.ndarray:
        R = X @ self.W.T - self.b
        return np.einsum("ij,ij->i", R, R) / self.m

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self._Q @ x - self._c

    def grad_many(self, X: np.ndarray) -> np.ndarray:
        return X @ self._Q - self._c

    def batch_grad(self, x: np.ndarray, step: int, particle: int) -> np.ndarray:
        """Gradient over a uniform without-replacement row subset.

        The subset is drawn from a counter-based stream keyed by
        (sampling_seed, step, particle), so runs are reproducible and the
        particles' batches are mutually independent.  A full batch
        reproduces the exact gradient bitwise.
        """
        S = self.batch_size if self.batch_size is not None else self.m
        if S == self.m:
            return self.grad(x)
        idx = self.batch_indices(step, particle)
        Ws = self.W[idx]
        r = Ws @ x - self.b[idx]
        return 2.0 * (Ws.T @ r) / S

    def batch_grad_many(self, X: np.ndarray, step: int) -> np.ndarray:
        S = self.batch_size if self.batch_size is not None else self.m
        if S == self.m:
            return self.grad_many(X)
        return np.vstack([self.batch_grad(X[i], step, i) for i in range(X.shape[0])])

    def batch_indices(self, step: int, particle: int) -> np.ndarray:
        S = self.batch_size if self.batch_size is not None else self.m
        rng = _rng(_BATCH_TAG, self.sampling_seed, step, particle)
        return rng.choice(self.m, size=S, replace=False)

    # -- constants used by the bound calculators --------------------------
    @property
    def lipschitz(self) -> float:
        """Over-estimate of sup ||grad f|| on the simplex: 2 s_max (s_max + ||b||) / m."""
        return 2.0 * self._s_max * (self._s_max + float(np.linalg.norm(self.b))) / self.m

    @property
    def strong_convexity(self) -> float:
        """Smallest eigenvalue of the Hessian 2 W^T W / m (0 when rank-deficient)."""
        if self.m < self.d:
            return 0.0
        return 2.0 * self._s_min**2 / self.m

    @property
    def hessian(self) -> np.ndarray:
        return self._Q

    @property
    def linear_term(self) -> np.ndarray:
        """c in grad f(x) = Q x - c."""
        return self._c

    def save_csv(self, w_path, b_path) -> None:
        np.savetxt(w_path, self.W, delimiter=",")
        np.savetxt(b_path, self.b, delimiter=",")


def gen_least_squares(
    m: int,
    d: int,
    cond: float,
    seed: int,
    batch_size: int | None = None,
    sampling_seed: int = 0,
) -> LeastSquaresProblem:
    """Random instance with prescribed condition number.

    W = U S V^T with U, V drawn as Q factors of Gaussian matrices and
    singular values geometrically spaced from 1 down to 1/cond; b is
    standard normal.
    """
    if m < 1 or d < 1:
        raise GenerationError("m and d must be >= 1")
    if cond < 1.0:
        raise GenerationError(f"condition number must be >= 1, got {cond}")
    rng = _rng(0x6c73, seed)
    k = min(m, d)
    U = np.linalg.qr(rng.standard_normal((m, k)))[0]
    V = np.linalg.qr(rng.standard_normal((d, k)))[0]
    svals = np.geomspace(1.0, 1.0 / cond, k) if k > 1 else np.ones(1)
    W = (U * svals) @ V.T
    b = rng.standard_normal(m)
    return LeastSquaresProblem(W=W, b=b, cond=cond, seed=seed,
                               batch_size=batch_size, sampling_seed=sampling_seed)


def load_least_squares(w_path, b_path, cond: float = np.nan, seed: int = -1,
                       batch_size: int | None = None) -> LeastSquaresProblem:
    W = np.loadtxt(w_path, delimiter=",", ndmin=2)
    b = np.loadtxt(b_path, delimiter=",")
    return LeastSquaresProblem(W=W, b=np.atleast_1d(b), cond=cond, seed=seed,
                               batch_size=batch_size)


@dataclass
class TrafficProblem:
    """Routing flow over enumerated origin-destination paths.

    Decision variable x is the flow split over the d simple paths; the
    edge load is u = P x with P the edge-by-path incidence matrix, and the
    cost is sum_e [a_e u_e + (1/2) b_e u_e^2] with affine edge latency
    a_e + b_e u_e (a_e the euclidean edge length).  Convex quadratic in x,
    typically with a sparse solution on the simplex boundary.
    """

    path_incidence: np.ndarray  # (E, d) binary
    edge_base_cost: np.ndarray  # (E,) lengths a_e
    edge_congestion: np.ndarray  # (E,) weights b_e
    sigma_g: float
    r_max: int
    seed: int
    n_nodes: int
    radius: float
    origin: int
    destination: int
    kind: str = field(default="traffic", init=False)

    def __post_init__(self):
        self.path_incidence = np.asarray(self.path_incidence, dtype=float)
        self.edge_base_cost = np.asarray(self.edge_base_cost, dtype=float)
        self.edge_congestion = np.asarray(self.edge_congestion, dtype=float)
        self.n_edges, self.d = self.path_incidence.shape
        if self.sigma_g < 0:
            raise ValueError("sigma_g must be non-negative")
        self._noise_rng = _rng(0x7472, self.seed)

    def value(self, x: np.ndarray) -> float:
        u = self.path_incidence @ x
        return float(self.edge_base_cost @ u + 0.5 * self.edge_congestion @ u**2)

    def value_many(self, X: np.ndarray) -> np.ndarray:
        U = X @ self.path_incidence.T
        return U @ self.edge_base_cost + 0.5 * (U**2) @ self.edge_congestion

    def grad(self, x: np.ndarray) -> np.ndarray:
        u = self.path_incidence @ x
        return self.path_incidence.T @ (self.edge_base_cost + self.edge_congestion * u)

    def grad_many(self, X: np.ndarray) -> np.ndarray:
        U = X @ self.path_incidence.T
        return (self.edge_base_cost + self.edge_congestion * U) @ self.path_incidence

    def noisy_grad(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Gradient with i.i.d. N(0, sigma_g^2) noise on each edge cost, fresh per call."""
        if self.sigma_g == 0.0:
            return self.grad(x)
        if rng is None:
            rng = self._noise_rng
        xi = rng.standard_normal(self.n_edges) * self.sigma_g
        return self.grad(x) + self.path_incidence.T @ xi

    @property
    def lipschitz(self) -> float:
        """Over-estimate of sup ||grad f|| on the simplex."""
        s = float(np.linalg.svd(self.path_incidence, compute_uv=False)[0])
        return s * (float(np.linalg.norm(self.edge_base_cost)) + float(self.edge_congestion.max()) * s)

    @property
    def strong_convexity(self) -> float:
        H = self.path_incidence.T @ (self.edge_congestion[:, None] * self.path_incidence)
        return max(float(np.linalg.eigvalsh(H)[0]), 0.0)

    @property
    def hessian(self) -> np.ndarray:
        return self.path_incidence.T @ (self.edge_congestion[:, None] * self.path_incidence)

    def save_csv(self, incidence_path, costs_path) -> None:
        np.savetxt(incidence_path, self.path_incidence, delimiter=",", fmt="%d")
        np.savetxt(costs_path, np.column_stack([self.edge_base_cost, self.edge_congestion]),
                   delimiter=",")


def gen_traffic(n: int, r: float, r_max: int, seed: int, sigma_g: float = 0.0,
                congestion: float = 1.0, max_resamples: int = 200) -> TrafficProblem:
    """Random geometric routing instance.

    Places n points uniformly in the unit square, connects pairs within
    distance r, picks a random origin-destination pair, and resamples
    until the pair is connected.  All simple origin-destination paths with
    at most r_max edges are enumerated by bounded depth-first search; the
    path count is the problem dimension.
    """
    if n < 2:
        raise GenerationError("need at least two nodes")
    rng = _rng(0x7467, seed)
    for _ in range(max_resamples):
        pts = rng.random((n, 2))
        dists = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        adj = (dists <= r) & ~np.eye(n, dtype=bool)
        origin, destination = rng.choice(n, size=2, replace=False)
        neighbors = [np.nonzero(adj[i])[0] for i in range(n)]
        if not _reachable(neighbors, origin, destination):
            continue
        paths = _bounded_simple_paths(neighbors, origin, destination, r_max)
        if not paths:
            raise GenerationError(
                f"zero origin-destination paths of length <= r_max={r_max}; increase r_max or r"
            )
        edges = sorted({(min(a, b), max(a, b)) for p in paths for a, b in zip(p[:-1], p[1:])})
        eidx = {e: i for i, e in enumerate(edges)}
        P = np.zeros((len(edges), len(paths)))
        for j, p in enumerate(paths):
            for a, b in zip(p[:-1], p[1:]):
                P[eidx[(min(a, b), max(a, b))], j] = 1.0
        lengths = np.array([dists[a, b] for a, b in edges])
        return TrafficProblem(
            path_incidence=P,
            edge_base_cost=lengths,
            edge_congestion=np.full(len(edges), congestion),
            sigma_g=sigma_g,
            r_max=r_max,
            seed=seed,
            n_nodes=n,
            radius=r,
            origin=int(origin),
            destination=int(destination),
        )
    raise GenerationError(
        f"no connected origin-destination pair in {max_resamples} samples (n={n}, r={r}, seed={seed})"
    )


def _reachable(neighbors, src: int, dst: int) -> bool:
    seen = {src}
    stack = [src]
    while stack:
        v = stack.pop()
        if v == dst:
            return True
        for w in neighbors[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return False


def _bounded_simple_paths(neighbors, src: int, dst: int, max_edges: int) -> list[list[int]]:
    paths: list[list[int]] = []
    path = [src]
    on_path = {src}

    def extend(v: int):
        if v == dst:
            paths.append(list(path))
            return
        if len(path) > max_edges:
            return
        for w in neighbors[v]:
            if w not in on_path:
                path.append(w)
                on_path.add(w)
                extend(w)
                path.pop()
                on_path.remove(w)

    extend(src)
    return paths


def find_radius_for_dim(n: int, r_max: int, d_lo: int, d_hi: int, seed: int,
                        candidates=None) -> tuple[float, int]:
    """Scan connection radii until the enumerated path count lands in [d_lo, d_hi]."""
    if candidates is None:
        candidates = np.arange(0.16, 0.62, 0.02)
    for r in candidates:
        try:
            prob = gen_traffic(n, float(r), r_max, seed)
        except GenerationError:
            continue
        if d_lo <= prob.d <= d_hi:
            return float(r), prob.d
    raise GenerationError(
        f"no radius in the scan yields a path count in [{d_lo}, {d_hi}] (n={n}, r_max={r_max}, seed={seed})"
    )


def load_traffic(incidence_path, costs_path, sigma_g: float = 0.0, r_max: int = 0,
                 seed: int = -1) -> TrafficProblem:
    P = np.loadtxt(incidence_path, delimiter=",", ndmin=2)
    costs = np.loadtxt(costs_path, delimiter=",", ndmin=2)
    return TrafficProblem(
        path_incidence=P,
        edge_base_cost=costs[:, 0],
        edge_congestion=costs[:, 1],
        sigma_g=sigma_g,
        r_max=r_max,
        seed=seed,
        n_nodes=-1,
        radius=np.nan,
        origin=-1,
        destination=-1,
    )
