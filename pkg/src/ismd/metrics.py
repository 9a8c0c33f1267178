"""Empirical run metrics: loss gaps, fluctuations, consensus, communication.

A :class:`RunTrace` is the time-indexed record a run produces; everything
here is a pure function over immutable arrays.  The CSV column order is
fixed so identical runs produce byte-identical files:

    k, t, eta, sigma, loss_gap_mean, [loss_gap_p00..], fluct_mean_sq,
    consensus_mean, loss_at_mean [, fluct_bound, avg_gap_bound]
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import mirror
from .graph import InteractionGraph

_FMT = "%.17g"  # round-trips float64 exactly


@dataclass
class RunTrace:
    """Recorded per-step metrics of one run.

    ``loss`` holds the absolute per-particle objective values f(x_i);
    gap columns are relative to the certified ``f_star`` and are NaN when
    no certificate was supplied.  ``Z_snapshots`` is populated only when
    state recording was requested.
    """

    k: np.ndarray
    t: np.ndarray
    eta: np.ndarray
    sigma: np.ndarray
    loss: np.ndarray            # (rows, n) absolute per-particle losses
    fluct_mean_sq: np.ndarray
    fluct_mean: np.ndarray
    fluct_max: np.ndarray
    consensus_mean: np.ndarray
    loss_at_mean_abs: np.ndarray
    f_star: float | None = None
    epsilon: float = np.nan
    Z_snapshots: np.ndarray | None = None
    extra_columns: dict = field(default_factory=dict)

    @property
    def n_particles(self) -> int:
        return self.loss.shape[1]

    @property
    def n_rows(self) -> int:
        return self.k.size

    @property
    def loss_mean(self) -> np.ndarray:
        return self.loss.mean(axis=1)

    @property
    def loss_gap(self) -> np.ndarray:
        if self.f_star is None:
            return np.full_like(self.loss, np.nan)
        return self.loss - self.f_star

    @property
    def loss_gap_mean(self) -> np.ndarray:
        if self.f_star is None:
            return np.full(self.n_rows, np.nan)
        return self.loss_mean - self.f_star

    @property
    def loss_at_mean(self) -> np.ndarray:
        if self.f_star is None:
            return np.full(self.n_rows, np.nan)
        return self.loss_at_mean_abs - self.f_star

    def rows_after(self, burn_in_k: int) -> np.ndarray:
        """Boolean mask of recorded rows with step index >= burn_in_k."""
        return self.k >= burn_in_k

    def to_csv(self, path, wide: bool = False) -> None:
        cols = [("k", "%d", self.k), ("t", _FMT, self.t), ("eta", _FMT, self.eta),
                ("sigma", _FMT, self.sigma), ("loss_gap_mean", _FMT, self.loss_gap_mean)]
        if wide:
            gaps = self.loss_gap
            for i in range(self.n_particles):
                cols.append((f"loss_gap_p{i:02d}", _FMT, gaps[:, i]))
        cols += [("fluct_mean_sq", _FMT, self.fluct_mean_sq),
                 ("consensus_mean", _FMT, self.consensus_mean),
                 ("loss_at_mean", _FMT, self.loss_at_mean)]
        for name, values in self.extra_columns.items():
            cols.append((name, _FMT, np.asarray(values)))
        header = ",".join(name for name, _, _ in cols)
        lines = [header]
        for r in range(self.n_rows):
            lines.append(",".join(fmt % col[r] for _, fmt, col in cols))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    def summary(self, burn_in_k: int = 0, threshold: float | None = None,
                graph: InteractionGraph | None = None) -> dict:
        mask = self.rows_after(burn_in_k)
        tail = mask if mask.any() else np.ones_like(mask)
        out = {
            "n_particles": self.n_particles,
            "rows": int(self.n_rows),
            "final_k": int(self.k[-1]),
            "f_star": self.f_star,
            "final_loss_mean": float(self.loss_mean[-1]),
            "stationary_loss_mean": float(np.mean(self.loss_mean[tail])),
            "stationary_loss_variance": float(np.var(self.loss[tail])),
            "stationary_consensus_mean": float(np.mean(self.consensus_mean[tail])),
            "stationary_fluct_mean_sq": float(np.mean(self.fluct_mean_sq[tail])),
        }
        if self.f_star is not None:
            out["final_loss_gap_mean"] = float(self.loss_gap_mean[-1])
            out["stationary_loss_gap_mean"] = float(np.mean(self.loss_gap_mean[tail]))
        if threshold is not None:
            hit = time_to_threshold(self, threshold)
            out["time_to_threshold"] = hit
            out["threshold"] = threshold
            if graph is not None:
                out["communication_cost"] = None if hit is None else communication_cost(graph, hit)
        return out

    def save_summary(self, path, **kwargs) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(**kwargs), fh, indent=1, sort_keys=True)


def loss_gap(obj, mmap: mirror.MirrorMap, Z: np.ndarray, f_star: float) -> np.ndarray:
    """Per-particle suboptimality f(grad_conjugate(z_i)) - f_star."""
    X = mirror.grad_conjugate(mmap, Z)
    return obj.value_many(X) - f_star


def fluctuation_stats(Z: np.ndarray) -> dict:
    """Mean squared / mean / max L2 deviation of rows from their average."""
    Z = np.asarray(Z, dtype=float)
    centered = Z - Z.mean(axis=0, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    return {"mean_sq": float(np.mean(norms**2)), "mean": float(np.mean(norms)),
            "max": float(np.max(norms))}


def variance_reduction_ratio(trace_iid: RunTrace, trace_int: RunTrace,
                             burn_in: int) -> float:
    """Relative reduction of pooled post-burn-in loss variance vs the i.i.d. run."""
    mask_a = trace_iid.rows_after(burn_in)
    mask_b = trace_int.rows_after(burn_in)
    if not mask_a.any() or not mask_b.any():
        raise ValueError(f"burn_in={burn_in} leaves no recorded rows")
    var_iid = float(np.var(trace_iid.loss[mask_a]))
    var_int = float(np.var(trace_int.loss[mask_b]))
    return (var_iid - var_int) / var_iid


def time_to_threshold(trace: RunTrace, level: float) -> int | None:
    """Smallest recorded step index whose mean loss is below ``level``."""
    below = np.nonzero(trace.loss_mean < level)[0]
    if below.size == 0:
        return None
    return int(trace.k[below[0]])


def communication_cost(g: InteractionGraph, k: int) -> int:
    """Total directed messages over k rounds: k times the off-diagonal nonzeros of A."""
    return int(k) * g.offdiag_nonzeros()
