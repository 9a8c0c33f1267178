"""Independent ground truth: minimizer certificates and exact OU statistics.

These oracles are deliberately simple and self-contained so the main
integrator can be tested against them rather than against itself:

* :func:`certify_minimizer` brackets the optimal value over the simplex
  via the Frank-Wolfe gap, which upper-bounds suboptimality for any convex
  objective regardless of how the candidate point was found.
* :func:`ou_stationary` solves the stationary Lyapunov equation of the
  linear-Gaussian (quadratic objective, euclidean map) particle system in
  closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .graph import InteractionGraph


class CertificationError(RuntimeError):
    """Could not reach the requested Frank-Wolfe gap."""


@dataclass(frozen=True)
class MinimizerCertificate:
    """A simplex point together with a certified bracket of the optimum.

    ``f_star`` is the lower end of the bracket f(x_star) - fw_gap, so
    f_star <= f(x*) <= f(x_star) and every reported loss gap against
    ``f_star`` is non-negative.
    """

    x_star: np.ndarray
    f_star: float
    fw_gap: float
    tolerance: float
    iterations: int

    def to_json(self, path) -> None:
        payload = asdict(self)
        payload["x_star"] = [float(v) for v in self.x_star]
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=1)

    @staticmethod
    def from_json(path) -> "MinimizerCertificate":
        with open(path) as fh:
            payload = json.load(fh)
        payload["x_star"] = np.asarray(payload["x_star"], dtype=float)
        return MinimizerCertificate(**payload)


def frank_wolfe_gap(grad: np.ndarray, x: np.ndarray) -> float:
    """grad . x - min_i grad_i: suboptimality upper bound on the simplex."""
    return float(grad @ x - grad.min())


def certify_minimizer(obj, tol: float = 1e-10, step: float | None = None,
                      max_iters: int = 2_000_000) -> MinimizerCertificate:
    """Certify the simplex minimum of a convex objective by bracketing.

    Runs deterministic entropy-map mirror descent (multiplicative weights)
    with a small constant step from the barycenter until the Frank-Wolfe
    gap drops below ``tol``.  The certificate is sound independently of
    the descent path: for convex f over the simplex,
    f(x) - f(x*) <= grad f(x) . x - min_i grad f(x)_i.
    """
    d = obj.d
    if step is None:
        h = np.linalg.eigvalsh(obj.hessian)[-1]
        step = 1.0 if h <= 0 else min(2.0 / h, 1e4)
    log_x = np.full(d, -np.log(d))
    x = np.exp(log_x)
    gap = np.inf
    for it in range(max_iters):
        g = obj.grad(x)
        gap = frank_wolfe_gap(g, x)
        if gap <= tol:
            return MinimizerCertificate(
                x_star=x, f_star=obj.value(x) - gap, fw_gap=gap, tolerance=tol,
                iterations=it,
            )
        log_x = log_x - step * g
        log_x -= log_x.max()
        e = np.exp(log_x)
        x = e / e.sum()
    raise CertificationError(
        f"frank-wolfe gap {gap:.3e} still above tol={tol:.1e} after {max_iters} iterations"
    )


def revalidate_certificate(obj, cert: MinimizerCertificate,
                           tol: float) -> MinimizerCertificate | None:
    """Re-check a stored certificate against a problem instance.

    The Frank-Wolfe gap is recomputed from scratch at ``cert.x_star``; the
    certificate is sound for this instance iff that gap is within ``tol``,
    regardless of which instance originally produced it.  Returns a fresh
    certificate built from the recomputed numbers, or None.
    """
    if cert.x_star.size != obj.d:
        return None
    gap = frank_wolfe_gap(obj.grad(cert.x_star), cert.x_star)
    if not np.isfinite(gap) or gap > tol:
        return None
    return MinimizerCertificate(
        x_star=cert.x_star, f_star=obj.value(cert.x_star) - gap, fw_gap=gap,
        tolerance=tol, iterations=cert.iterations,
    )


@dataclass(frozen=True)
class OUStationary:
    """Stationary mean and covariance of the stacked linear-Gaussian system."""

    mean: np.ndarray         # (n*d,)
    covariance: np.ndarray   # (n*d, n*d)
    drift_matrix: np.ndarray
    sigma: float
    n_particles: int

    @property
    def lyapunov_residual(self) -> float:
        M, S = self.drift_matrix, self.covariance
        defect = M @ S + S @ M - self.sigma**2 * np.eye(S.shape[0])
        return float(np.linalg.norm(defect, ord="fro"))

    def fluctuation_mean_sq(self) -> float:
        """Exact stationary E[(1/n) sum_i ||z_i - zbar||^2]."""
        nd = self.covariance.shape[0]
        n = self.n_particles
        d = nd // n
        P = np.eye(nd) - np.kron(np.full((n, n), 1.0 / n), np.eye(d))
        return float(np.trace(P @ self.covariance @ P)) / n


def ou_stationary(obj, g: InteractionGraph, sigma: float, eta: float = 1.0) -> OUStationary:
    """Closed-form stationary law of the coupled linear-Gaussian dynamics.

    For a quadratic objective with Hessian Q > 0 under the euclidean map,
    the mirror states follow a linear SDE with drift matrix
    M = eta * blockdiag(Q) + theta * (L kron I).  The stationary mean
    solves M mean = eta * (stacked linear term) and the covariance solves
    the Lyapunov identity M S + S M = sigma^2 I, which diagonalizes in the
    eigenbasis of the symmetric M as S = U diag(sigma^2 / (2 lambda)) U^T.
    """
    Q = obj.hessian
    d = Q.shape[0]
    n = g.n
    lam_q = np.linalg.eigvalsh(Q)
    if lam_q[0] <= 0:
        raise ValueError(f"quadratic objective must be positive definite; min eigenvalue {lam_q[0]:.3e}")
    M = eta * np.kron(np.eye(n), Q) + g.theta * np.kron(g.laplacian, np.eye(d))
    lam, U = np.linalg.eigh(M)
    if lam[0] <= 0:
        raise ValueError(f"drift matrix singular: smallest eigenvalue {lam[0]:.3e}")
    mean = U @ ((U.T @ (eta * np.tile(obj.linear_term, n))) / lam)
    S = (U * (sigma**2 / (2.0 * lam))) @ U.T
    S = 0.5 * (S + S.T)
    out = OUStationary(mean=mean, covariance=S, drift_matrix=M, sigma=sigma, n_particles=n)
    resid = out.lyapunov_residual
    if resid > 1e-10 * max(1.0, sigma**2):
        raise RuntimeError(f"lyapunov residual {resid:.3e} above 1e-10")
    return out
