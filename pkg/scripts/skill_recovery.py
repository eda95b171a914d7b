#!/usr/bin/env python3
"""Synthetic skill recovery: does TrueSkill rank Combat bots by aggressiveness?

Twenty submissions play a PvP tournament. Submission k is ``combat:a_k``;
``--grid gap`` (the default) spaces 19 of them over [0.05, 0.65] and adds one
clearly dominant bot at 1.0, ``--grid linear`` spaces all 20 over [0.05, 1].
Prints Spearman correlation between final mu and aggressiveness, the top-mu
submission, and the leaderboard.
"""

from __future__ import annotations

import argparse
import json
import os
import time

import numpy as np
from scipy.stats import spearmanr

from mmo_arena.config import ArenaConfig, desk_config
from mmo_arena.orchestrator.tournament import new_tournament, run_tournament


def grid(kind: str) -> np.ndarray:
    if kind == "linear":
        return np.linspace(0.05, 1.0, 20)
    return np.append(np.linspace(0.05, 0.65, 19), 1.0)


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scale", choices=("full", "desk"), default="full")
    p.add_argument("--grid", choices=("gap", "linear"), default="gap")
    p.add_argument("--target", type=int, default=100, help="matches per submission")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--parallelism", type=int, default=min(8, os.cpu_count() or 1))
    p.add_argument("--json", help="also write the summary here")
    args = p.parse_args()

    cfg = ArenaConfig() if args.scale == "full" else desk_config()
    aggr = grid(args.grid)
    specs = {f"sub{i:02d}": f"combat:{a:.2f}" for i, a in enumerate(aggr)}
    state = new_tournament(specs)
    t0 = time.perf_counter()
    rows = run_tournament(state, args.target, args.parallelism, args.seed, cfg)
    elapsed = time.perf_counter() - t0

    mus = [state.ratings[k].mu for k in sorted(specs)]
    rho = float(spearmanr(mus, aggr).statistic)
    top = max(state.ratings, key=lambda k: state.ratings[k].mu)
    print(f"{state.cursor} matches in {elapsed:.0f} s; Spearman {rho:.3f}; top mu {top} ({specs[top]})")
    for r in rows:
        print(f"{r.rank:>3} {r.id} {specs[r.id]:<12} mu {r.mu:6.2f} sigma {r.sigma:5.2f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"spearman": rho, "top": top, "matches": state.cursor, "seconds": elapsed,
                       "mu": dict(zip(sorted(specs), mus)), "specs": specs}, fh, indent=1)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
