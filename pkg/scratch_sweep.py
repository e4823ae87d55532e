"""Parameter sweep for benchmark defaults: measure standoffs and outcomes."""

import sys
import time

import numpy as np

from drfree.navsim import EnvConfig, build_engine, run_episode
from drfree.rng import Rng


def run_cell(gcov, shat, starts_idx, seeds, kinds=("drfree", "unaware"), max_steps=700):
    cfg = EnvConfig()
    cfg.gen_state_cov = gcov
    cfg.stages[3]["sigma_hat_scale"] = shat
    out = {}
    for kind in kinds:
        engine = build_engine(cfg)
        recs = []
        for si in starts_idx:
            for seed in seeds:
                log = run_episode(engine, cfg, np.array(cfg.starts[si]), max_steps, Rng(seed).child(si), kind)
                if log.steps:
                    dmin = float(
                        np.min(np.linalg.norm(log.states[:, None, :] - cfg.cost.obstacles[None], axis=2))
                    )
                    cont = bool(np.all(log.kl_true <= log.etas + 1e-12))
                else:
                    dmin, cont = np.nan, True
                recs.append((si, seed, log.reason, log.steps, round(dmin, 3), cont))
        out[kind] = recs
    return out


if __name__ == "__main__":
    seeds = (101, 202)
    starts_idx = [2, 10, 0]  # two blocked + one clear
    t0 = time.time()
    for gcov in (0.02, 0.05, 0.1):
        for shat in (0.01, 0.0225, 0.04):
            res = run_cell(gcov, shat, starts_idx, seeds)
            print(f"--- gcov={gcov} shat={shat} ({time.time()-t0:.0f}s)")
            for kind, recs in res.items():
                s = "  ".join(f"s{si}/{sd}:{r}@{st}(d={d}{'' if c else ',UNCONT'})" for si, sd, r, st, d, c in recs)
                print(f"  {kind:8s} {s}")
