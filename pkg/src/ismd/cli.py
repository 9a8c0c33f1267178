"""Command-line entry point.

Subcommands:

* ``run CONFIG``     - execute a single-cell experiment over its seed list
* ``sweep CONFIG``   - execute the full sweep grid a config declares
* ``oracle CONFIG``  - build and store the minimizer certificate (and, for
  euclidean quadratic setups, the exact stationary law)
* ``verify``         - run the invariant/property suite and report pass/fail
* ``graph-info CONFIG`` - print spectral and communication facts of the graph

Exit codes: 0 success, 1 validation/configuration error, 2 divergence,
3 certification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, bounds, dynamics, graph as graphs, metrics, mirror, objective, oracle
from .config import ConfigError, load_config
from .harness import build_graph, build_integrator, build_map, build_problem, execute

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_DIVERGENCE = 2
EXIT_CERTIFICATION = 3


def _shipped_configs() -> dict:
    out = {}
    base = resources.files("ismd") / "configs"
    for entry in sorted(base.iterdir()):
        if entry.name.endswith(".ini"):
            out[entry.name.removesuffix(".ini")] = entry
    return out


def _resolve_config_arg(token: str) -> Path:
    path = Path(token)
    if path.exists():
        return path
    shipped = _shipped_configs()
    if token in shipped:
        with resources.as_file(shipped[token]) as p:
            return Path(p)
    raise ConfigError(f"no such config file or shipped config name: {token}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="config file path or shipped config name")
    p.add_argument("--seed", type=int, default=None, help="run a single seed instead of the list")
    p.add_argument("--out", default=None, help="output directory (default: config's run.out)")
    p.add_argument("--bounds", action="store_true", help="append bound-envelope CSV columns")
    p.add_argument("--wide-csv", action="store_true", help="per-particle loss-gap columns")
    p.add_argument("--jobs", type=int, default=1, help="parallel (cell, seed) processes")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="ismd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment over its seed list")
    p_run.add_argument("config", nargs="?", help="config file path or shipped config name")
    p_run.add_argument("--list", action="store_true", help="enumerate shipped experiment configs")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--bounds", action="store_true")
    p_run.add_argument("--wide-csv", action="store_true")
    p_run.add_argument("--jobs", type=int, default=1)

    p_sweep = sub.add_parser("sweep", help="execute the declared sweep grid")
    _add_common(p_sweep)

    p_oracle = sub.add_parser("oracle", help="build and store ground-truth certificates")
    p_oracle.add_argument("config")
    p_oracle.add_argument("--seed", type=int, default=None,
                          help="run seed used when problem.seed_mode=per_run")
    p_oracle.add_argument("--out", default=None)

    p_verify = sub.add_parser("verify", help="run the invariant suite and report pass/fail")
    p_verify.add_argument("--fast", action="store_true", help="skip the long-run checks")

    p_info = sub.add_parser("graph-info", help="print graph spectral/communication facts")
    p_info.add_argument("config")
    p_info.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (graphs.GraphValidationError, graphs.GraphGenerationError,
            objective.GenerationError, ValueError) as err:
        print(f"validation error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except dynamics.DivergenceError as err:
        print(f"divergence: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except oracle.CertificationError as err:
        print(f"certification failure: {err}", file=sys.stderr)
        return EXIT_CERTIFICATION


def _dispatch(args) -> int:
    if args.command == "run":
        if args.list:
            for name, entry in _shipped_configs().items():
                first = entry.read_text().splitlines()[0].lstrip("# ").strip()
                print(f"{name:24s} {first}")
            return EXIT_OK
        if args.config is None:
            raise ConfigError("run requires a config (or --list)")
        cfg = load_config(_resolve_config_arg(args.config))
        if cfg.has_sweep():
            raise ConfigError(
                f"config {cfg.name!r} declares sweep axes; use 'ismd sweep'")
        return _execute(cfg, args)
    if args.command == "sweep":
        cfg = load_config(_resolve_config_arg(args.config))
        return _execute(cfg, args)
    if args.command == "oracle":
        return _oracle(args)
    if args.command == "verify":
        return _verify(fast=args.fast)
    if args.command == "graph-info":
        return _graph_info(args)
    raise ConfigError(f"unknown command {args.command}")


def _execute(cfg, args) -> int:
    out_root = Path(args.out) if args.out else Path(cfg.get("run", "out"))
    seeds = [args.seed] if args.seed is not None else None
    results = execute(cfg, out_root, seeds=seeds, jobs=args.jobs,
                      wide_csv=True if args.wide_csv else None,
                      with_bounds=args.bounds)
    n_runs = sum(len(v) for v in results.values())
    print(f"{cfg.name}: {len(results)} cell(s) x seeds -> {n_runs} run(s) under {out_root / cfg.name}")
    return EXIT_OK


def _oracle(args) -> int:
    cfg = load_config(_resolve_config_arg(args.config))
    resolved = cfg.resolve({})
    seed = args.seed if args.seed is not None else resolved["run"]["seeds"][0]
    problem = build_problem(resolved, seed)
    out_root = Path(args.out) if args.out else Path(cfg.get("run", "out"))
    out_dir = out_root / cfg.name
    out_dir.mkdir(parents=True, exist_ok=True)
    cert = oracle.certify_minimizer(
        problem, tol=resolved["oracle"]["tolerance"],
        step=resolved["oracle"].get("step"), max_iters=resolved["oracle"]["max_iters"])
    cert.to_json(out_dir / "certificate.json")
    print(f"certificate: f_star={cert.f_star:.12g} gap={cert.fw_gap:.3e} "
          f"iters={cert.iterations} -> {out_dir / 'certificate.json'}")
    if resolved["map"]["kind"] == "euclidean":
        eta = dynamics.Schedule.parse(resolved["integrator"]["eta"])
        sigma = dynamics.Schedule.parse(resolved["integrator"]["sigma"])
        if eta.kind == "constant" and sigma.kind == "constant" and sigma.base > 0:
            g = build_graph(resolved, resolved["run"]["n_particles"], seed)
            st = oracle.ou_stationary(problem, g, sigma=sigma.base, eta=eta.base)
            np.savez(out_dir / "ou_stationary.npz", mean=st.mean, covariance=st.covariance)
            print(f"ou stationary: trace(cov)={np.trace(st.covariance):.6g} "
                  f"-> {out_dir / 'ou_stationary.npz'}")
    return EXIT_OK


def _graph_info(args) -> int:
    cfg = load_config(_resolve_config_arg(args.config))
    resolved = cfg.resolve({})
    g = build_graph(resolved, resolved["run"]["n_particles"], args.seed)
    rows = g.A.sum(axis=1)
    cols = g.A.sum(axis=0)
    print(f"kind={resolved['graph']['kind']} n={g.n} theta={g.theta}")
    print(f"row-sum max error:    {np.max(np.abs(rows - 1)):.3e}")
    print(f"col-sum max error:    {np.max(np.abs(cols - 1)):.3e}")
    print(f"laplacian null check: {np.max(np.abs(g.laplacian.sum(axis=1))):.3e}")
    print(f"lambda_min_nonzero:   {g.lambda_min_nonzero:.12g}")
    if not g.singleton:
        print(f"algebraic connectivity (theta-scaled): {graphs.algebraic_connectivity(g):.12g}")
    print(f"messages per round (offdiag nnz): {g.offdiag_nonzeros()}")
    if g.retries:
        print(f"connectivity resamples: {g.retries}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify: the invariant/property suite
# ---------------------------------------------------------------------------

def _check(name: str, fn, failures: list) -> None:
    try:
        detail = fn()
        print(f"PASS  {name}" + (f"  [{detail}]" if detail else ""))
    except AssertionError as err:
        failures.append(name)
        print(f"FAIL  {name}: {err}")


def _verify(fast: bool = False) -> int:
    failures: list = []
    rng = np.random.default_rng(20240)

    def mirror_identities():
        for d in (2, 10, 100):
            mm = mirror.entropy_map(d)
            Z = rng.uniform(-50, 50, size=(2000, d))
            S = mirror.grad_conjugate(mm, Z)
            assert np.all(S > 0), "softmax produced a non-positive coordinate"
            assert np.max(np.abs(S.sum(axis=1) - 1)) < 1e-12, "softmax rows do not sum to 1"
            za, zb = Z[:1000], Z[1000:]
            lhs = np.abs(mirror.grad_conjugate(mm, za) - mirror.grad_conjugate(mm, zb)).sum(axis=1)
            rhs = np.max(np.abs(za - zb), axis=1) / mm.mu
            assert np.all(lhs <= rhs + 1e-12), "conjugate-gradient Lipschitz inequality violated"
            x = mirror.grad_conjugate(mm, rng.standard_normal(d))
            assert mirror.bregman(mm, x, x) == 0.0, "bregman(x, x) != 0"
        return "d in {2,10,100}, 2000 draws each"

    def graph_invariants():
        for g in [graphs.mean_field(10)] + [graphs.erdos_renyi(10, p, seed=s)
                                            for p in (0.3, 0.5, 1.0) for s in range(5)]:
            graphs.validate_interaction_matrix(g.A)
            assert np.max(np.abs(g.laplacian.sum(axis=1))) < 1e-12, "L 1 != 0"
            Z = rng.standard_normal((10, 4))
            drift = graphs.interaction_drift(g, Z)
            assert np.max(np.abs(drift.sum(axis=0))) < 1e-10, "drift columns do not cancel"
        assert abs(graphs.algebraic_connectivity(graphs.mean_field(10)) - 1.0) < 1e-10
        return "mean-field + 15 erdos-renyi graphs"

    def bregman_equivalence():
        p = objective.gen_least_squares(8, 5, 10.0, seed=2)
        mm = mirror.entropy_map(5)
        cfg = dynamics.IntegratorConfig(epsilon=1.0, eta=dynamics.constant(1.0),
                                        sigma=dynamics.constant(0.0), n_steps=1)
        worst = 0.0
        for trial in range(100):
            Z0 = rng.standard_normal((3, 5))
            ens = dynamics.make_ensemble(Z0, mm, cfg)
            worst = max(worst, dynamics.bregman_consensus_step_check(
                ens, graphs.mean_field(3), p, mm))
        assert worst < 1e-8, f"mirror vs proximal-step discrepancy {worst:.2e}"
        return f"max discrepancy {worst:.2e} over 100 trials"

    def ou_match():
        steps = 150_000 if fast else 400_000
        q = objective.gen_least_squares(2, 2, 2.0, seed=11)
        em = mirror.euclidean_map(2)
        g = graphs.mean_field(4)
        cfg = dynamics.IntegratorConfig(epsilon=1e-3, eta=dynamics.constant(30.0),
                                        sigma=dynamics.constant(0.5), n_steps=steps, rng_seed=5)
        tr = dynamics.run(dynamics.initialize(em, 4, 2), g, q, em, cfg,
                          record_stride=20, record_state=True)
        st = oracle.ou_stationary(q, g, sigma=0.5, eta=30.0)
        burn = tr.k >= steps // 4
        emp = float(np.trace(np.cov(tr.Z_snapshots[burn].reshape(burn.sum(), -1).T)))
        exact = float(np.trace(st.covariance))
        rel = abs(emp - exact) / exact
        assert rel < 0.05, f"stationary covariance trace off by {100 * rel:.1f}% (emp {emp:.4g} vs {exact:.4g})"
        return f"covariance trace within {100 * rel:.2f}%"

    _check("mirror identities (simplex, lipschitz, bregman)", mirror_identities, failures)
    _check("graph invariants (doubly stochastic, drift cancellation)", graph_invariants, failures)
    _check("bregman-interaction equivalence", bregman_equivalence, failures)
    _check("ou stationary match (integrator end-to-end)", ou_match, failures)

    if failures:
        print(f"\n{len(failures)} check(s) failed")
        return EXIT_VALIDATION
    print("\nall checks passed")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
