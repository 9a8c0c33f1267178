"""Euler-Maruyama integration of coupled noisy mirror descent.

One step with time step ``eps`` updates every particle synchronously:

    z_i <- z_i - eta(k) * eps * grad(x_i) + eps * drift_i + sigma(k) * sqrt(eps) * xi_i
    x_i <- grad_conjugate(z_i)

where ``drift`` is the graph coupling computed from the pre-update states,
``xi_i ~ N(0, I_d)`` independent across particles and steps, and the
gradient may come from the exact, mini-batch or edge-noise oracle.  Note
the learning rate multiplies only the gradient, not the coupling term;
this is deliberate and easy to get wrong.

Every random draw is tied to a (seed, particle index) stream so runs are
bitwise reproducible and an uncoupled ensemble is bitwise identical to the
matching independent single-particle runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import metrics, mirror
from .graph import InteractionGraph

_NOISE_BLOCK = 256
_MIRROR_STREAM = 0
_GRAD_STREAM = 1
_INIT_TAG = 0x696e
_SOFT_LIMIT = 1e8

GRAD_FULL = "full"
GRAD_STOCHASTIC = "stochastic"

PROJECT_NONE = "none"
PROJECT_SIMPLEX = "simplex"


class DivergenceError(RuntimeError):
    """State became non-finite (time step too large for the drift)."""

    def __init__(self, step: int, particle: int, max_abs: float, trace=None):
        super().__init__(
            f"divergence at step {step}, particle {particle}: max |z| = {max_abs:.3e} "
            f"(reduce epsilon or eta)"
        )
        self.step = step
        self.particle = particle
        self.max_abs = max_abs
        self.trace = trace


@dataclass(frozen=True)
class Schedule:
    """Step-indexed rate: constant, base/sqrt(k+1), or base/(k+1)^exponent."""

    kind: str
    base: float
    exponent: float = 0.0

    KINDS = ("constant", "inverse_sqrt", "power_decay")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {self.KINDS}")
        if self.kind == "constant":
            if self.base < 0:
                raise ValueError("constant schedule requires base >= 0")
        elif self.base <= 0:
            raise ValueError(f"{self.kind} schedule requires base > 0")
        if self.kind == "power_decay" and self.exponent <= 0:
            raise ValueError("power_decay schedule requires exponent > 0")

    def value(self, k: int) -> float:
        if self.kind == "constant":
            return self.base
        if self.kind == "inverse_sqrt":
            return self.base / np.sqrt(k + 1.0)
        return self.base / (k + 1.0) ** self.exponent

    def values(self, n: int) -> np.ndarray:
        k = np.arange(n, dtype=float)
        if self.kind == "constant":
            return np.full(n, self.base)
        if self.kind == "inverse_sqrt":
            return self.base / np.sqrt(k + 1.0)
        return self.base / (k + 1.0) ** self.exponent

    @property
    def is_zero(self) -> bool:
        return self.kind == "constant" and self.base == 0.0

    @staticmethod
    def parse(token: str) -> "Schedule":
        parts = str(token).split(":")
        kind = parts[0].replace("-", "_")
        if kind == "constant" and len(parts) == 2:
            return Schedule("constant", float(parts[1]))
        if kind == "inverse_sqrt" and len(parts) == 2:
            return Schedule("inverse_sqrt", float(parts[1]))
        if kind == "power_decay" and len(parts) == 3:
            return Schedule("power_decay", float(parts[1]), float(parts[2]))
        raise ValueError(
            f"bad schedule token {token!r}; expected constant:BASE, inverse_sqrt:BASE "
            f"or power_decay:BASE:EXPONENT"
        )

    def token(self) -> str:
        if self.kind == "power_decay":
            return f"power_decay:{self.base:g}:{self.exponent:g}"
        return f"{self.kind}:{self.base:g}"


def constant(v: float) -> Schedule:
    return Schedule("constant", v)


@dataclass(frozen=True)
class IntegratorConfig:
    epsilon: float
    eta: Schedule
    sigma: Schedule
    n_steps: int
    rng_seed: int = 0
    gradient: str = GRAD_FULL
    project: str = PROJECT_NONE

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.gradient not in (GRAD_FULL, GRAD_STOCHASTIC):
            raise ValueError(f"gradient must be 'full' or 'stochastic', got {self.gradient!r}")
        if self.project not in (PROJECT_NONE, PROJECT_SIMPLEX):
            raise ValueError(f"project must be 'none' or 'simplex', got {self.project!r}")


class _NoiseStreams:
    """Per-particle RNG streams keyed by (seed, global particle index).

    The mirror-space noise stream is consumed one (block) row per step in
    fixed blocks so long runs stay cheap; the gradient stream feeds the
    stochastic oracles.  Stream identity depends only on the seed and the
    particle's global index, never on the ensemble size.
    """

    def __init__(self, seed: int, indices, d: int):
        self.indices = list(indices)
        self.d = d
        self._mirror = [
            np.random.default_rng(np.random.SeedSequence(entropy=[seed, int(i), _MIRROR_STREAM]))
            for i in self.indices
        ]
        self._grad = [
            np.random.default_rng(np.random.SeedSequence(entropy=[seed, int(i), _GRAD_STREAM]))
            for i in self.indices
        ]
        self._block: np.ndarray | None = None
        self._cursor = 0

    def normal_rows(self) -> np.ndarray:
        """Next (n, d) standard-normal slab, one row per particle."""
        if self._block is None or self._cursor == _NOISE_BLOCK:
            self._block = np.stack(
                [g.standard_normal((_NOISE_BLOCK, self.d)) for g in self._mirror], axis=1
            )  # (block, n, d)
            self._cursor = 0
        rows = self._block[self._cursor]
        self._cursor += 1
        return rows

    def grad_rng(self, slot: int) -> np.random.Generator:
        return self._grad[slot]


@dataclass
class ParticleEnsemble:
    """Mirror states, their primal images, and the step clock."""

    Z: np.ndarray
    X: np.ndarray
    k: int = 0
    t: float = 0.0
    particle_indices: tuple = ()
    _streams: _NoiseStreams | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]

    @property
    def z_mean(self) -> np.ndarray:
        return self.Z.mean(axis=0)

    @property
    def fluctuations(self) -> np.ndarray:
        return self.Z - self.Z.mean(axis=0, keepdims=True)


def initialize(mmap: mirror.MirrorMap, n: int, d: int, mode: str = "zeros",
               seed: int = 0) -> np.ndarray:
    """Initial mirror states: 'zeros' (primal barycenter under the entropy
    map) or 'gaussian:SCALE' i.i.d. entries, deterministic in the seed."""
    if mode == "zeros":
        return np.zeros((n, d))
    if mode.startswith("gaussian"):
        scale = float(mode.split(":")[1]) if ":" in mode else 1.0
        rng = np.random.default_rng(np.random.SeedSequence(entropy=[_INIT_TAG, seed]))
        return scale * rng.standard_normal((n, d))
    raise ValueError(f"unknown init mode {mode!r}; expected 'zeros' or 'gaussian:SCALE'")


def make_ensemble(Z0: np.ndarray, mmap: mirror.MirrorMap, cfg: IntegratorConfig,
                  particle_indices=None) -> ParticleEnsemble:
    Z0 = np.array(Z0, dtype=float)
    n, d = Z0.shape
    if particle_indices is None:
        particle_indices = range(n)
    particle_indices = tuple(int(i) for i in particle_indices)
    if len(particle_indices) != n:
        raise ValueError("particle_indices must have one entry per particle")
    if cfg.project == PROJECT_SIMPLEX:
        if mmap.kind != mirror.EUCLIDEAN:
            raise ValueError("simplex projection is a euclidean-map baseline only")
        Z0 = mirror.project_simplex(Z0)
        X0 = Z0.copy()
    else:
        X0 = mirror.grad_conjugate(mmap, Z0)
    streams = _NoiseStreams(cfg.rng_seed, particle_indices, d)
    return ParticleEnsemble(Z=Z0, X=X0, k=0, t=0.0,
                            particle_indices=particle_indices, _streams=streams)


class _StepKernel:
    """Per-run constants and the inner update, shared by :func:`step` and :func:`run`."""

    def __init__(self, g: InteractionGraph, obj, mmap: mirror.MirrorMap,
                 cfg: IntegratorConfig, streams: _NoiseStreams, indices):
        self.g = g
        self.obj = obj
        self.mmap = mmap
        self.cfg = cfg
        self.streams = streams
        self.indices = indices
        self.eps = cfg.epsilon
        self.sqrt_eps = float(np.sqrt(cfg.epsilon))
        self.interacting = g.interacting
        if self.interacting:
            self.A = g.A
            self.eps_theta = cfg.epsilon * g.theta
            self.rowsums = g.A.sum(axis=1)[:, None]
        self.noisy = not cfg.sigma.is_zero
        self.softmax = mmap.kind == mirror.ENTROPY
        self.scale = 1.0 / mmap.mu
        self.projecting = cfg.project == PROJECT_SIMPLEX
        self.stochastic = cfg.gradient == GRAD_STOCHASTIC
        self.batch = self.stochastic and obj.kind == "least-squares"

    def gradients(self, X: np.ndarray, k: int) -> np.ndarray:
        if not self.stochastic:
            return self.obj.grad_many(X)
        if self.batch:
            return np.vstack([
                self.obj.batch_grad(X[j], k, self.indices[j]) for j in range(X.shape[0])
            ])
        return np.vstack([
            self.obj.noisy_grad(X[j], self.streams.grad_rng(j)) for j in range(X.shape[0])
        ])

    def advance(self, Z: np.ndarray, X: np.ndarray, k: int):
        cfg = self.cfg
        G = self.gradients(X, k)
        Znew = Z - (cfg.eta.value(k) * self.eps) * G
        if self.interacting:
            Znew += self.eps_theta * (self.A @ Z - self.rowsums * Z)
        if self.noisy:
            Znew += (cfg.sigma.value(k) * self.sqrt_eps) * self.streams.normal_rows()
        if self.projecting:
            Znew = mirror.project_simplex(Znew)
            Xnew = Znew
        elif self.softmax:
            Xnew = mirror.softmax(Znew * self.scale)
        elif self.scale == 1.0:
            Xnew = Znew
        else:
            Xnew = Znew * self.scale
        total = float(Znew.sum())
        if not math.isfinite(total):
            finite_rows = np.isfinite(Znew).all(axis=1)
            bad = int(np.nonzero(~finite_rows)[0][0]) if not finite_rows.all() else 0
            finite = Znew[np.isfinite(Znew)]
            max_abs = float(np.max(np.abs(finite))) if finite.size else np.inf
            raise DivergenceError(k + 1, bad, max_abs)
        return Znew, Xnew


def _advance(ens: ParticleEnsemble, g: InteractionGraph, obj, mmap: mirror.MirrorMap,
             cfg: IntegratorConfig) -> ParticleEnsemble:
    kernel = _StepKernel(g, obj, mmap, cfg, ens._streams, ens.particle_indices)
    Z, X = kernel.advance(ens.Z, ens.X, ens.k)
    return ParticleEnsemble(Z=Z, X=X, k=ens.k + 1, t=(ens.k + 1) * cfg.epsilon,
                            particle_indices=ens.particle_indices,
                            _streams=ens._streams)


def step(ens: ParticleEnsemble, g: InteractionGraph, obj, mmap: mirror.MirrorMap,
         cfg: IntegratorConfig) -> ParticleEnsemble:
    """One synchronous update of the whole ensemble (coupling uses pre-update states)."""
    if ens.k >= cfg.n_steps:
        raise ValueError(f"ensemble already at step {ens.k} >= n_steps={cfg.n_steps}")
    if ens.Z.shape[0] != g.n:
        raise ValueError(f"ensemble has {ens.Z.shape[0]} particles but graph has {g.n}")
    return _advance(ens, g, obj, mmap, cfg)


def run(initial: np.ndarray, g: InteractionGraph, obj, mmap: mirror.MirrorMap,
        cfg: IntegratorConfig, f_star: float | None = None, record_stride: int = 1,
        record_state: bool = False, particle_indices=None) -> metrics.RunTrace:
    """Integrate ``cfg.n_steps`` steps, recording metrics every ``record_stride`` steps.

    The initial state and the final step are always recorded.  Bitwise
    deterministic given the seed; on divergence the partial trace is
    attached to the raised error.
    """
    if initial.shape[0] != g.n:
        raise ValueError(f"initial state has {initial.shape[0]} rows but graph has {g.n}")
    ens = make_ensemble(initial, mmap, cfg, particle_indices)
    T = cfg.n_steps
    record_ks = [k for k in range(0, T + 1) if k % record_stride == 0]
    if record_ks[-1] != T:
        record_ks.append(T)
    rows = len(record_ks)
    n, d = ens.n, ens.d

    rec = {
        "k": np.zeros(rows, dtype=int), "t": np.zeros(rows), "eta": np.zeros(rows),
        "sigma": np.zeros(rows), "loss": np.zeros((rows, n)),
        "fluct_mean_sq": np.zeros(rows), "fluct_mean": np.zeros(rows),
        "fluct_max": np.zeros(rows), "consensus_mean": np.zeros(rows),
        "loss_at_mean_abs": np.zeros(rows),
    }
    snaps = np.zeros((rows, n, d)) if record_state else None

    def record(row: int, e: ParticleEnsemble):
        rec["k"][row] = e.k
        rec["t"][row] = e.t
        rec["eta"][row] = cfg.eta.value(e.k)
        rec["sigma"][row] = cfg.sigma.value(e.k)
        rec["loss"][row] = obj.value_many(e.X)
        fl = metrics.fluctuation_stats(e.Z)
        rec["fluct_mean_sq"][row] = fl["mean_sq"]
        rec["fluct_mean"][row] = fl["mean"]
        rec["fluct_max"][row] = fl["max"]
        xc = e.X - e.X.mean(axis=0, keepdims=True)
        rec["consensus_mean"][row] = float(np.mean(np.linalg.norm(xc, axis=1)))
        if cfg.project == PROJECT_SIMPLEX:
            y = e.z_mean
        else:
            y = mirror.grad_conjugate(mmap, e.z_mean)
        rec["loss_at_mean_abs"][row] = obj.value(y)
        if snaps is not None:
            snaps[row] = e.Z

    def build_trace(filled_rows: int) -> metrics.RunTrace:
        return metrics.RunTrace(
            k=rec["k"][:filled_rows], t=rec["t"][:filled_rows],
            eta=rec["eta"][:filled_rows], sigma=rec["sigma"][:filled_rows],
            loss=rec["loss"][:filled_rows],
            fluct_mean_sq=rec["fluct_mean_sq"][:filled_rows],
            fluct_mean=rec["fluct_mean"][:filled_rows],
            fluct_max=rec["fluct_max"][:filled_rows],
            consensus_mean=rec["consensus_mean"][:filled_rows],
            loss_at_mean_abs=rec["loss_at_mean_abs"][:filled_rows],
            f_star=f_star, epsilon=cfg.epsilon,
            Z_snapshots=None if snaps is None else snaps[:filled_rows],
        )

    record(0, ens)
    next_row = 1
    warned_soft = False
    kernel = _StepKernel(g, obj, mmap, cfg, ens._streams, ens.particle_indices)
    Z, X = ens.Z, ens.X
    for k in range(T):
        try:
            Z, X = kernel.advance(Z, X, k)
        except DivergenceError as err:
            err.trace = build_trace(next_row)
            raise
        if next_row < rows and k + 1 == record_ks[next_row]:
            ens = ParticleEnsemble(Z=Z, X=X, k=k + 1, t=(k + 1) * cfg.epsilon,
                                   particle_indices=ens.particle_indices,
                                   _streams=ens._streams)
            record(next_row, ens)
            next_row += 1
            if not warned_soft and np.max(np.abs(Z)) > _SOFT_LIMIT:
                warnings.warn(
                    f"mirror state magnitude exceeded {_SOFT_LIMIT:g} at step {k + 1}; "
                    f"run may be close to divergence", RuntimeWarning)
                warned_soft = True
    return build_trace(next_row)


def bregman_consensus_step_check(ens: ParticleEnsemble, g: InteractionGraph, obj,
                                 mmap: mirror.MirrorMap) -> float:
    """Cross-check the mirror-space step against its primal proximal form.

    With no noise, unit time step and unit rate, one coupled update equals
    the proximal step  argmin_x { grad f(x_i) . x + sum_j A_ij D(x, x_j) },
    whose entropy-map solution is the A-weighted geometric mean of the
    current primal states reweighted by exp(-grad).  Returns the largest
    max-norm discrepancy over particles between the two routes.
    """
    if mmap.kind != mirror.ENTROPY:
        raise ValueError("closed-form proximal step available for the entropy map only")
    if g.theta != 1.0:
        raise ValueError("the proximal equivalence holds for unit interaction strength")
    G = np.vstack([obj.grad(x) for x in ens.X])
    Z_next = g.A @ ens.Z - G
    X_mirror = mirror.grad_conjugate(mmap, Z_next)
    logs = g.A @ np.log(ens.X) - G
    X_prox = mirror.softmax(logs)
    return float(np.max(np.abs(X_mirror - X_prox)))
