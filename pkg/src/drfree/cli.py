"""Batch experiment driver: episodes, radius sweeps, heatmaps, verification.

All outputs are deterministic given (config, seeds): CSVs carry a header
row and get a JSON sidecar with the config hash and package version;
summaries are printed to stdout as JSON.  Exit codes: 0 success, 1 runtime
or verification failure, 2 configuration/usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ambiguity import Branch, InnerProblem, cost_of_ambiguity, oracle_inner_max_with_error
from .belief import Demonstrations, FeatureBasis, FitConfig, fit_cost, reconstruction_csv
from .densities import DiscreteDensity
from .errors import DrfreeError, GridMismatch, ProbeOutsideWorkspace
from .navsim import EnvConfig, blocked_starts, build_engine, run_batch, run_episode, trained_model
from .policy import (
    ActionGrid,
    drfree_policy,
    policy_heatmap_csv,
    policy_kl,
    unaware_policy,
)
from .rng import Rng


def _apply_thread_cap() -> None:
    cap = os.environ.get("DRFREE_THREADS")
    if not cap:
        return
    try:
        import numba

        numba.set_num_threads(max(1, int(cap)))
    except Exception:
        pass


def _load_config(path: str | None) -> EnvConfig:
    if path is None:
        return EnvConfig()
    return EnvConfig.from_json(Path(path).read_text())


def _sidecar(path: Path, config: EnvConfig, command: str) -> None:
    doc = {"config_hash": config.config_hash(), "version": __version__, "command": command}
    path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(doc, sort_keys=True) + "\n")


def _parse_seeds(text: str) -> list[int]:
    seeds = [int(s) for s in text.split(",") if s.strip() != ""]
    if not seeds:
        raise ValueError("seed list is empty")
    return seeds


def cmd_run(args) -> int:
    try:
        config = _load_config(args.config)
        seeds = _parse_seeds(args.seeds)
    except (ValueError, KeyError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        logs = run_batch(config, config.starts, seeds, kind=args.engine, radius_scale=args.radius_scale)
        reasons: dict[str, int] = {}
        successes = 0
        for si, seed, log in logs:
            path = out_dir / f"episode_s{si:02d}_seed{seed}.csv"
            path.write_text(log.to_csv())
            _sidecar(path, config, "run")
            reasons[log.reason] = reasons.get(log.reason, 0) + 1
            successes += log.success
        summary = {
            "engine": args.engine,
            "radius_scale": args.radius_scale,
            "episodes": len(logs),
            "success_rate": successes / len(logs),
            "failure_reasons": {k: v for k, v in sorted(reasons.items()) if k != "success"},
            "blocked_starts": blocked_starts(config),
            "config_hash": config.config_hash(),
        }
        print(json.dumps(summary, sort_keys=True))
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


def cmd_sweep_radius(args) -> int:
    try:
        config = _load_config(args.config)
        seeds = _parse_seeds(args.seeds)
        scales = [float(s) for s in args.scales.split(",")]
        if not scales:
            raise ValueError("empty scale list")
    except (ValueError, KeyError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    probes = [np.asarray(s) for s in config.starts[: args.probes]]
    rows = []
    for scale in scales:
        engine = build_engine(config, radius_scale=scale)
        base_engine = build_engine(config, radius_scale=scale)
        kls = []
        for i, probe in enumerate(probes):
            rng = Rng(seeds[0]).child(900, i)
            pol = drfree_policy(engine, probe, rng)
            base = unaware_policy(base_engine, probe, Rng(seeds[0]).child(900, i))
            kls.append(policy_kl(pol, base))
        logs = run_batch(config, config.starts, seeds, kind="drfree", radius_scale=scale)
        rate = float(np.mean([log.success for _, _, log in logs]))
        rows.append((scale, float(np.mean(kls)), rate))
    csv_path = out_dir / "radius_sweep.csv"
    lines = ["scale,mean_kl,success_rate"]
    for scale, kl, rate in rows:
        lines.append(f"{scale:.17g},{kl:.17g},{rate:.17g}")
    csv_path.write_text("\n".join(lines) + "\n")
    _sidecar(csv_path, config, "sweep-radius")
    print(json.dumps({"rows": rows, "config_hash": config.config_hash()}, sort_keys=True))
    return 0


def cmd_heatmap(args) -> int:
    try:
        config = _load_config(args.config)
        probe = np.array([float(v) for v in args.probe.split(",")])
        if probe.shape != (2,):
            raise ValueError("probe must be 'x,y'")
    except (ValueError, KeyError, json.JSONDecodeError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if not config.workspace.contains(probe):
        print(f"probe {probe.tolist()} outside the workspace", file=sys.stderr)
        return 2
    config.action_counts = (50, 50)
    engine = build_engine(config, radius_scale=args.radius_scale)
    rng = Rng(args.seed).child(1234)
    if args.engine == "drfree":
        pol = drfree_policy(engine, probe, rng)
    else:
        pol = unaware_policy(engine, probe, rng)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"heatmap_{args.engine}.csv"
    path.write_text(policy_heatmap_csv(pol))
    _sidecar(path, config, "heatmap")
    print(
        json.dumps(
            {
                "cells": len(pol.probs),
                "prob_sum": float(pol.probs.sum()),
                "argmax": pol.grid.actions[pol.argmax()].tolist(),
                "config_hash": config.config_hash(),
            },
            sort_keys=True,
        )
    )
    return 0


def _interior_instance(gen):
    while True:
        n = int(gen.integers(2, 5))
        sup = np.arange(float(n)).reshape(-1, 1)
        hat = DiscreteDensity(sup, gen.dirichlet(np.ones(n)))
        q = DiscreteDensity(sup, gen.dirichlet(np.ones(n)))
        cost = gen.uniform(0.0, 3.0, n)
        eta = float(gen.uniform(0.01, 1.0))
        prob = InnerProblem(
            hat, q, lambda pts, c=cost: c[pts[:, 0].astype(int)], eta=eta
        )
        ac = cost_of_ambiguity(prob)
        if ac.branch is Branch.INTERIOR:
            return hat, q, cost, eta, ac


def verify_dual(n_instances: int, seed: int, perturb=None) -> dict:
    """Oracle-vs-dual suite; `perturb` injects a fault for detector tests."""
    gen = np.random.default_rng(seed)
    worst = {"gap": -1.0}
    failures = []
    for k in range(n_instances):
        hat, q, cost, eta, ac = _interior_instance(gen)
        v = ac.v if perturb is None else perturb(ac.v)
        n = len(q.probs)
        resolution = 200 if n <= 3 else 120
        oracle, err = oracle_inner_max_with_error(hat, q, cost, eta, resolution, refine=3)
        gap = abs(oracle - (eta + v))
        tol = 2e-3 + err
        record = {
            "instance": k,
            "support": n,
            "eta": eta,
            "gap": gap,
            "tolerance": tol,
            "hat_p": hat.probs.tolist(),
            "q_x": q.probs.tolist(),
            "cost": cost.tolist(),
        }
        if gap > worst["gap"]:
            worst = record
        if gap > tol:
            failures.append(record)
    return {"instances": n_instances, "worst": worst, "failures": failures}


def cmd_verify_dual(args) -> int:
    if args.instances <= 0:
        print("instances must be positive", file=sys.stderr)
        return 2
    report = verify_dual(args.instances, args.seed)
    print(
        json.dumps(
            {
                "instances": report["instances"],
                "max_gap": report["worst"]["gap"],
                "violations": len(report["failures"]),
            },
            sort_keys=True,
        )
    )
    if report["failures"]:
        print(json.dumps(report["failures"][0], sort_keys=True), file=sys.stderr)
        return 1
    return 0


def cmd_reconstruct(args) -> int:
    try:
        config = _load_config(args.config)
        demo_path = Path(args.demos)
        if demo_path.is_dir():
            texts = [p.read_text() for p in sorted(demo_path.glob("episode_*.csv"))]
        else:
            texts = [demo_path.read_text()]
        grid = config.action_grid()
        all_pairs = []
        for text in texts:
            try:
                demos = Demonstrations.from_episode_csv(text, grid)
            except ValueError:
                continue
            all_pairs.extend(zip(demos.states, grid.actions[demos.action_idx]))
        if not all_pairs:
            print("no demonstrations found", file=sys.stderr)
            return 2
        demos = Demonstrations.from_pairs(all_pairs, grid)
    except (OSError, ValueError, GridMismatch, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    ws = config.workspace
    spec = config.trained_spec()
    basis = FeatureBasis.bump_lattice(
        (ws.x_min, ws.x_max),
        (ws.y_min, ws.y_max),
        (args.basis_counts, args.basis_counts),
        lambda x, u: trained_model(x, u, spec, ws),
    )
    result = fit_cost(demos, basis, None, grid, FitConfig())
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "weights.json").write_text(result.weights.to_json() + "\n")
    xs = np.linspace(ws.x_min, ws.x_max, 31)
    ys = np.linspace(ws.y_min, ws.y_max, 21)
    lattice_path = out_dir / "reconstructed_cost.csv"
    lattice_path.write_text(reconstruction_csv(result.weights, basis, xs, ys))
    _sidecar(lattice_path, config, "reconstruct")
    print(
        json.dumps(
            {
                "demos": len(demos),
                "final_nll": result.final_nll,
                "grad_norm": result.grad_norm,
                "iterations": result.iterations,
                "converged": result.converged,
                "config_hash": config.config_hash(),
            },
            sort_keys=True,
        )
    )
    return 1 if result.non_convergence else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="drfree", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run all (start, seed) episodes")
    run.add_argument("--config", default=None)
    run.add_argument("--engine", choices=("drfree", "unaware"), default="drfree")
    run.add_argument("--radius-scale", type=float, default=1.0)
    run.add_argument("--seeds", default="101,202,303")
    run.add_argument("--out", default="out")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep-radius", help="policy agreement vs radius scale")
    sweep.add_argument("--config", default=None)
    sweep.add_argument("--scales", default="1.0,0.5,0.3,0.1,0.01,0")
    sweep.add_argument("--seeds", default="101")
    sweep.add_argument("--probes", type=int, default=4)
    sweep.add_argument("--out", default="out")
    sweep.set_defaults(func=cmd_sweep_radius)

    heat = sub.add_parser("heatmap", help="50x50 action-grid policy at a probe state")
    heat.add_argument("--config", default=None)
    heat.add_argument("--engine", choices=("drfree", "unaware"), default="drfree")
    heat.add_argument("--radius-scale", type=float, default=1.0)
    heat.add_argument("--probe", default="-0.5,-0.5")
    heat.add_argument("--seed", type=int, default=7)
    heat.add_argument("--out", default="out")
    heat.set_defaults(func=cmd_heatmap)

    ver = sub.add_parser("verify-dual", help="oracle vs scalar-dual equivalence suite")
    ver.add_argument("--instances", type=int, default=200)
    ver.add_argument("--seed", type=int, default=7)
    ver.set_defaults(func=cmd_verify_dual)

    rec = sub.add_parser("reconstruct", help="fit the policy exponent from demonstrations")
    rec.add_argument("--demos", required=True, help="episode CSV file or directory")
    rec.add_argument("--config", default=None)
    rec.add_argument("--basis-counts", type=int, default=4)
    rec.add_argument("--out", default="out")
    rec.set_defaults(func=cmd_reconstruct)
    return p


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DrfreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
