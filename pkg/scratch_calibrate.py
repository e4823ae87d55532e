"""Scratch calibration for the navsim benchmark defaults (not shipped)."""

import sys
import time

import numpy as np

from drfree.navsim import EnvConfig, blocked_starts, build_engine, run_episode
from drfree.rng import Rng


def episode_quick(config, x0, seed, kind, scale=1.0, max_steps=None):
    engine = build_engine(config, scale)
    rng = Rng(seed)
    return run_episode(engine, config, np.asarray(x0), max_steps or config.max_steps, rng, kind)


def probe(config, label, starts_idx=None, seeds=(101, 202, 303), kind="drfree", scale=1.0):
    t0 = time.time()
    rows = []
    idx = starts_idx if starts_idx is not None else range(len(config.starts))
    for si in idx:
        outcomes = []
        for seed in seeds:
            engine = build_engine(config, scale)
            rng = Rng(seed).child(si)
            log = run_episode(engine, config, np.asarray(config.starts[si]), config.max_steps, rng, kind)
            outcomes.append((log.reason, log.steps, bool(np.all(log.kl_true <= log.etas + 1e-12)) if log.steps else True))
        rows.append((si, outcomes))
    dt = time.time() - t0
    print(f"== {label} kind={kind} scale={scale}  ({dt:.1f}s)")
    for si, outcomes in rows:
        print(f"  start {si} {config.starts[si]}: " + " | ".join(f"{r}@{s}{'' if c else ' UNCONTAINED'}" for r, s, c in outcomes))
    return rows


if __name__ == "__main__":
    cfg = EnvConfig()
    print("blocked starts (<=0.1m):", blocked_starts(cfg))
    print("blocked starts (<=0.16m):", blocked_starts(cfg, 0.16))
    which = sys.argv[1] if len(sys.argv) > 1 else "smoke"

    if which == "smoke":
        # single episode timing and behavior
        t0 = time.time()
        log = episode_quick(cfg, cfg.starts[0], 101, "drfree", max_steps=200)
        print(f"drfree: {log.reason} steps={log.steps} time={time.time()-t0:.1f}s "
              f"({(time.time()-t0)/max(log.steps,1)*1e3:.1f} ms/step)")
        print("  path sample:", log.states[:: max(1, log.steps // 8)].round(3).tolist())
        print("  eta range:", log.etas.min().round(2), log.etas.max().round(2),
              "kl range:", log.kl_true.min().round(2), log.kl_true.max().round(2))
        t0 = time.time()
        log = episode_quick(cfg, cfg.starts[0], 101, "unaware", max_steps=200)
        print(f"unaware: {log.reason} steps={log.steps} time={time.time()-t0:.1f}s")
        print("  path sample:", log.states[:: max(1, log.steps // 8)].round(3).tolist())
    elif which == "grid":
        # sweep gen_state_cov and stage sigma
        for gcov in (5e-4, 1e-3, 2e-3, 4e-3):
            for sh in (0.01, 0.03, 0.06):
                cfg = EnvConfig()
                cfg.gen_state_cov = gcov
                cfg.stages[3]["sigma_hat_scale"] = sh
                label = f"gcov={gcov} sigma_hat={sh}"
                bl = blocked_starts(cfg)
                probe(cfg, label + " [blocked]", starts_idx=bl[:2], kind="unaware")
                probe(cfg, label + " [blocked]", starts_idx=bl[:2], kind="drfree")
    else:
        print("unknown mode")
