"""Closed-form theoretical quantities for plotting predicted envelopes.

Each calculator evaluates the right-hand side of a convergence or
fluctuation statement so experiments can overlay measured curves on the
predicted ones.  Only the fully explicit bounds are evaluated numerically
(time-average gap, fluctuation envelope, log-Sobolev constants, mean-mode
gap); statements with unspecified generic constants are exercised
qualitatively by the tests instead.

Conventions: ``kappa`` is the strong-convexity constant of the effective
mirror-space drift potential actually integrated (so it includes a
constant learning rate when one is used), ``mu_phi`` and ``mu_f`` keep the
potential's and the objective's constants separate, and the graph
connectivity enters scaled by the interaction strength theta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mirror
from .graph import InteractionGraph


class VacuousBoundError(ValueError):
    """The requested bound degenerates (zero curvature and no interaction)."""


@dataclass(frozen=True)
class BoundInputs:
    """Constants feeding the bound calculators; zeros mean "convex only"."""

    lipschitz: float = 0.0       # objective gradient bound L on the constraint set
    mu_phi: float = 1.0          # strong convexity of the mirror potential
    mu_f: float = 0.0            # strong convexity of f relative to the potential
    kappa: float = 0.0           # strong convexity of the effective drift potential
    lambda_min: float = 0.0      # smallest nonzero Laplacian eigenvalue (unscaled)
    theta: float = 1.0           # interaction strength
    n_particles: int = 1
    d: int = 1
    sigma: float = 0.0
    horizon: float = 0.0         # T
    diameter: float = 0.0        # Bregman diameter of the constraint set
    laplacian_norm: float = 0.0  # largest eigenvalue of theta * L
    conjugate_laplacian: float = 0.0  # bound on the conjugate Hessian trace

    @staticmethod
    def for_run(obj, mmap: mirror.MirrorMap, g: InteractionGraph, sigma: float,
                horizon: float, eta: float = 1.0, kappa: float | None = None) -> "BoundInputs":
        """Assemble inputs from a problem, map and graph.

        ``kappa`` defaults to the euclidean-map value eta * lambda_min(Hessian);
        for the entropy map it is not analytically available and must be
        supplied (or left zero for the convex-only calculators).
        """
        if kappa is None:
            if mmap.kind == mirror.EUCLIDEAN:
                kappa = eta * float(np.linalg.eigvalsh(obj.hessian)[0])
            else:
                kappa = 0.0
        lam_max = float(np.linalg.eigvalsh(g.theta * g.laplacian)[-1]) if g.n > 1 else 0.0
        return BoundInputs(
            lipschitz=obj.lipschitz, mu_phi=mmap.mu, mu_f=getattr(obj, "strong_convexity", 0.0),
            kappa=kappa, lambda_min=g.lambda_min_nonzero, theta=g.theta,
            n_particles=g.n, d=mmap.d, sigma=sigma, horizon=horizon,
            diameter=mirror.phi_diameter(mmap), laplacian_norm=lam_max,
            conjugate_laplacian=mirror.conjugate_laplacian_bound(mmap),
        )


def smd_convex_bound(inputs: BoundInputs, laplacian_bound: float | None = None) -> float:
    """Time-average suboptimality bound D^2/(2T) + sigma^2 B / 2.

    ``B`` bounds the trace of the conjugate potential's Hessian: d for the
    euclidean map and 1 for the entropy map (the softmax Hessian trace
    sum s_i (1 - s_i) never exceeds 1), unless overridden.
    """
    if inputs.horizon <= 0:
        raise ValueError("horizon T must be positive")
    if laplacian_bound is None:
        laplacian_bound = inputs.conjugate_laplacian if inputs.conjugate_laplacian > 0 else float(inputs.d)
    return inputs.diameter**2 / (2.0 * inputs.horizon) + 0.5 * inputs.sigma**2 * laplacian_bound


def fluctuation_bound(inputs: BoundInputs, t: float, initial_fluct_sq: float = 0.0) -> float:
    """Envelope for the mean squared deviation from the ensemble average.

    Evaluates, with unit norm-equivalence constant,

        (1/N) e^{-(kappa + theta lambda) t} * sum_i ||ztilde_0^i||^2
        + d sigma^2 (N-1) / (N (kappa + theta lambda)) * (1 - e^{-(kappa + theta lambda) t}).
    """
    rate = inputs.kappa + inputs.theta * inputs.lambda_min
    if rate <= 0:
        raise VacuousBoundError(
            "fluctuation bound vacuous: kappa + theta * lambda_min must be positive"
        )
    n = inputs.n_particles
    decay = np.exp(-rate * t)
    transient = decay * initial_fluct_sq / n
    stationary = inputs.d * inputs.sigma**2 * (n - 1) / (n * rate) * (1.0 - decay)
    return float(transient + stationary)


def stacked_potential(obj, mmap: mirror.MirrorMap, g: InteractionGraph,
                      Z: np.ndarray) -> dict:
    """Value and gradient of the coupled mirror-space energy.

    The energy is sum_i V(z_i) + (theta/2) z . (L kron I) z with V the
    effective per-particle potential; its gradient rows are
    grad f(grad_conjugate(z_i)) + theta (L Z)_i, which vanish at consensus
    on a minimizer.  Under the entropy map V has no elementary closed
    form, so only the gradient is returned (value None).
    """
    Z = np.asarray(Z, dtype=float)
    X = mirror.grad_conjugate(mmap, Z)
    LZ = g.laplacian @ Z
    gradient = obj.grad_many(X) + g.theta * LZ
    coupling = 0.5 * g.theta * float(np.sum(Z * LZ))
    if mmap.kind == mirror.EUCLIDEAN:
        value = float(np.sum(obj.value_many(Z))) + coupling
    else:
        value = None
    return {"value": value, "gradient": gradient, "coupling": coupling}


def log_sobolev_constants(inputs: BoundInputs, t: float, c0: float = 0.0) -> dict:
    """Curvature rho = sigma^2 kappa / 2 and the constant
    C_t = (2/rho)(1 - e^{-rho t}) + C_0 e^{-rho t}, with the rho -> 0 limit
    C_t = 2t + C_0 taken analytically."""
    if inputs.kappa < 0:
        raise ValueError("kappa must be non-negative")
    rho = 0.5 * inputs.sigma**2 * inputs.kappa
    if rho == 0.0:
        return {"rho": 0.0, "c_t": 2.0 * t + c0}
    decay = np.exp(-rho * t)
    return {"rho": float(rho), "c_t": float(2.0 / rho * (1.0 - decay) + c0 * decay)}


def mean_mode_gap_bound(inputs: BoundInputs) -> float:
    """Stationary gap between mean energy and minimum energy:

        (sigma^2 / 2) * (2 d N / rho - (1/2) log(sigma^2 / (2 L_N)))

    with L_N = L / mu_phi + ||theta L|| the smoothness of the stacked drift.
    """
    rho = 0.5 * inputs.sigma**2 * inputs.kappa
    if rho <= 0:
        raise VacuousBoundError("mean-mode bound vacuous: rho = sigma^2 kappa / 2 must be positive")
    l_n = inputs.lipschitz / inputs.mu_phi + inputs.laplacian_norm
    if l_n <= 0:
        raise ValueError("L_N must be positive")
    dn = inputs.d * inputs.n_particles
    return float(0.5 * inputs.sigma**2 * (2.0 * dn / rho - 0.5 * np.log(inputs.sigma**2 / (2.0 * l_n))))
