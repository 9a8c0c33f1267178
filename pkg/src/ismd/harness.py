"""Experiment runner: builds problems, graphs and integrators from a
resolved configuration, executes (cell, seed) grids, and writes trace
CSVs plus summary JSONs with atomic file replacement."""

from __future__ import annotations

import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import bounds, dynamics, graph as graphs, metrics, mirror, objective, oracle
from .config import ExperimentConfig, ConfigError

_GRAPH_SEED_STRIDE = 10_007  # keeps per-run graph seeds disjoint from run seeds


def build_problem(resolved: dict, run_seed: int):
    prob = resolved["problem"]
    seed = prob["seed"] + run_seed if prob["seed_mode"] == "per_run" else prob["seed"]
    if prob["kind"] == "least_squares":
        return objective.gen_least_squares(
            m=prob["m"], d=prob["d"], cond=prob["cond"], seed=seed,
            batch_size=prob.get("batch_size"), sampling_seed=run_seed,
        )
    return objective.gen_traffic(
        n=prob["n"], r=prob["r"], r_max=prob["r_max"], seed=seed,
        sigma_g=prob["sigma_g"], congestion=prob["congestion"],
    )


def build_graph(resolved: dict, n_particles: int, run_seed: int) -> graphs.InteractionGraph:
    g = resolved["graph"]
    if g["kind"] == "none":
        return graphs.disconnected(n_particles)
    if g["kind"] == "mean_field":
        return graphs.mean_field(n_particles, theta=g["theta"])
    if g["kind"] == "custom":
        loaded = graphs.from_csv(g["path"], theta=g["theta"])
        if loaded.n != n_particles:
            raise ConfigError(
                f"custom graph has {loaded.n} nodes but run.n_particles={n_particles}")
        return loaded
    seed = g["seed"] + _GRAPH_SEED_STRIDE * run_seed if g["seed_mode"] == "per_run" else g["seed"]
    return graphs.erdos_renyi(n_particles, p=g["p"], seed=seed, theta=g["theta"])


def build_map(resolved: dict, d: int) -> mirror.MirrorMap:
    return mirror.MirrorMap(resolved["map"]["kind"], d)


def build_integrator(resolved: dict, run_seed: int) -> dynamics.IntegratorConfig:
    integ = resolved["integrator"]
    return dynamics.IntegratorConfig(
        epsilon=integ["epsilon"],
        eta=dynamics.Schedule.parse(integ["eta"]),
        sigma=dynamics.Schedule.parse(integ["sigma"]),
        n_steps=integ["n_steps"],
        rng_seed=run_seed,
        gradient=integ["gradient"],
        project=resolved["map"]["projection"],
    )


def certificate_for(resolved: dict, problem, cache_dir: Path | None = None) -> oracle.MinimizerCertificate:
    """Certify (or load a cached certificate for) the cell's problem."""
    opts = resolved["oracle"]
    if cache_dir is not None:
        path = cache_dir / "certificate.json"
        if path.exists():
            stored = oracle.MinimizerCertificate.from_json(path)
            cert = oracle.revalidate_certificate(problem, stored, opts["tolerance"])
            if cert is not None:
                return cert
    cert = oracle.certify_minimizer(
        problem, tol=opts["tolerance"], step=opts.get("step"), max_iters=opts["max_iters"])
    if cache_dir is not None:
        _atomic(cache_dir / "certificate.json", lambda p: cert.to_json(p))
    return cert


def _atomic(path: Path, writer) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        writer(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _bound_columns(resolved: dict, trace: metrics.RunTrace, problem,
                   mmap: mirror.MirrorMap, g: graphs.InteractionGraph) -> dict:
    """Envelope columns aligned with the trace rows (NaN where inapplicable)."""
    integ = resolved["integrator"]
    eta = dynamics.Schedule.parse(integ["eta"])
    sigma = dynamics.Schedule.parse(integ["sigma"])
    rows = trace.n_rows
    fluct = np.full(rows, np.nan)
    avg_gap = np.full(rows, np.nan)
    if eta.kind == "constant" and sigma.kind == "constant":
        inputs = bounds.BoundInputs.for_run(problem, mmap, g, sigma=sigma.base,
                                            horizon=max(trace.t[-1], 1e-12), eta=eta.base)
        init_fluct_sq = float(trace.fluct_mean_sq[0] * g.n)
        try:
            fluct = np.array([
                bounds.fluctuation_bound(inputs, t, initial_fluct_sq=init_fluct_sq)
                for t in trace.t
            ])
        except bounds.VacuousBoundError:
            pass
        noise_floor = 0.5 * sigma.base**2 * (
            inputs.conjugate_laplacian if inputs.conjugate_laplacian > 0 else inputs.d)
        with np.errstate(divide="ignore"):
            avg_gap = np.where(trace.t > 0,
                               inputs.diameter**2 / (2.0 * trace.t) + noise_floor, np.nan)
    return {"fluct_bound": fluct, "avg_gap_bound": avg_gap}


def run_cell(cfg: ExperimentConfig, overrides: dict, run_seed: int, out_dir: Path,
             wide_csv: bool | None = None, with_bounds: bool = False) -> dict:
    """Execute one (cell, seed) and write its artifacts; returns the summary dict."""
    resolved = cfg.resolve(overrides)
    n_particles = resolved["run"]["n_particles"]
    problem = build_problem(resolved, run_seed)
    g = build_graph(resolved, n_particles, run_seed)
    mmap = build_map(resolved, problem.d)
    integ = build_integrator(resolved, run_seed)
    cert = certificate_for(resolved, problem, cache_dir=out_dir.parent)
    Z0 = dynamics.initialize(mmap, n_particles, problem.d, resolved["run"]["init"], seed=run_seed)
    mets = resolved["metrics"]
    try:
        trace = dynamics.run(Z0, g, problem, mmap, integ, f_star=cert.f_star,
                             record_stride=mets["stride"])
    except dynamics.DivergenceError as err:
        if err.trace is not None:
            _write_trace(err.trace, out_dir, resolved, problem, mmap, g,
                         wide_csv, with_bounds, mets)
        raise
    summary = _write_trace(trace, out_dir, resolved, problem, mmap, g,
                           wide_csv, with_bounds, mets)
    return summary


def _write_trace(trace, out_dir: Path, resolved, problem, mmap, g,
                 wide_csv, with_bounds, mets) -> dict:
    if with_bounds or mets["bounds"]:
        trace.extra_columns.update(_bound_columns(resolved, trace, problem, mmap, g))
    wide = mets["wide_csv"] if wide_csv is None else wide_csv
    _atomic(out_dir / "trace.csv", lambda p: trace.to_csv(p, wide=wide))
    summary = trace.summary(burn_in_k=mets["burn_in"], threshold=mets.get("threshold"), graph=g)
    summary["graph"] = {
        "kind": resolved["graph"]["kind"],
        "lambda_min_nonzero": g.lambda_min_nonzero,
        "theta": g.theta,
        "offdiag_nonzeros": g.offdiag_nonzeros(),
        "retries": g.retries,
    }
    _atomic(out_dir / "summary.json",
            lambda p: Path(p).write_text(json.dumps(summary, indent=1, sort_keys=True)))
    return summary


def _cell_worker(args) -> tuple:
    config_path, overrides, run_seed, out_dir, wide_csv, with_bounds = args
    from .config import load_config  # re-load in the worker process

    cfg = load_config(config_path)
    summary = run_cell(cfg, overrides, run_seed, Path(out_dir),
                       wide_csv=wide_csv, with_bounds=with_bounds)
    return (str(out_dir), summary)


def execute(cfg: ExperimentConfig, out_root: Path, seeds=None, jobs: int = 1,
            wide_csv: bool | None = None, with_bounds: bool = False,
            cells=None) -> dict:
    """Run every (cell, seed) of the config; returns {cell_label: {seed: summary}}."""
    out_root = Path(out_root)
    exp_dir = out_root / cfg.name
    exp_dir.mkdir(parents=True, exist_ok=True)
    if cells is None:
        cells = cfg.cells()
    if seeds is None:
        seeds = cfg.get("run", "seeds")
    _atomic(exp_dir / "resolved_config.json", lambda p: Path(p).write_text(json.dumps({
        "source": cfg.source,
        "base": cfg.resolve({}),
        "cells": [{"label": c["label"], "axes": c["axes"]} for c in cells],
        "seeds": list(seeds),
    }, indent=1, sort_keys=True, default=str)))

    tasks = []
    for cell in cells:
        for seed in seeds:
            cell_dir = exp_dir / cell["label"] / f"seed{seed}"
            tasks.append((cell, seed, cell_dir))

    results: dict = {c["label"]: {} for c in cells}
    if jobs <= 1 or cfg.source == "<memory>":
        for cell, seed, cell_dir in tasks:
            results[cell["label"]][seed] = run_cell(
                cfg, cell["overrides"], seed, cell_dir,
                wide_csv=wide_csv, with_bounds=with_bounds)
    else:
        payloads = [
            (cfg.source, cell["overrides"], seed, str(cell_dir), wide_csv, with_bounds)
            for cell, seed, cell_dir in tasks
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (cell, seed, _), (_, summary) in zip(tasks, pool.map(_cell_worker, payloads)):
                results[cell["label"]][seed] = summary
    _write_sweep_tables(cfg, cells, results, exp_dir)
    return results


_SWEEP_STATS = (
    "stationary_loss_variance", "stationary_loss_gap_mean", "stationary_loss_mean",
    "stationary_consensus_mean", "stationary_fluct_mean_sq", "final_loss_mean",
    "time_to_threshold", "communication_cost",
)


def _write_sweep_tables(cfg, cells, results, exp_dir: Path) -> None:
    axis_names = sorted({name for c in cells for name in c["axes"]})
    long_lines = ["cell," + ",".join(axis_names) + ",seed,stat,value"]
    summary_lines = ["cell," + ",".join(axis_names) + ",stat,n_seeds,median,q25,q75"]
    for cell in cells:
        label = cell["label"]
        axis_vals = ",".join(str(cell["axes"].get(a, "")) for a in axis_names)
        per_seed = results[label]
        for stat in _SWEEP_STATS:
            values = []
            for seed, summary in sorted(per_seed.items()):
                if stat not in summary or summary[stat] is None:
                    continue
                long_lines.append(f"{label},{axis_vals},{seed},{stat},{summary[stat]:.17g}")
                values.append(summary[stat])
            if values:
                arr = np.asarray(values, dtype=float)
                summary_lines.append(
                    f"{label},{axis_vals},{stat},{arr.size},"
                    f"{np.median(arr):.17g},{np.percentile(arr, 25):.17g},"
                    f"{np.percentile(arr, 75):.17g}")
    _atomic(exp_dir / "cells.csv", lambda p: Path(p).write_text("\n".join(long_lines) + "\n"))
    _atomic(exp_dir / "summary.csv", lambda p: Path(p).write_text("\n".join(summary_lines) + "\n"))
