#!/usr/bin/env python3
"""Policy ecology sanity: Top1Ratio of a policy against a built-in field, at desk or full scale.

    policy_ecology.py combat --field random
    policy_ecology.py stage3 --field stage1 --scale desk
"""

from __future__ import annotations

import argparse
import os

import numpy as np

from mmo_arena.config import ArenaConfig, desk_config
from mmo_arena.orchestrator.pool import MatchDescriptor, worker_pool
from mmo_arena.orchestrator.pve import stage_opponents
from mmo_arena.sim.mapgen import derive_seed


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("policy")
    p.add_argument("--field", default="random", help="a policy spec, or stage1/stage2/stage3 for a PvE field")
    p.add_argument("--matches", type=int, default=10)
    p.add_argument("--scale", choices=("full", "desk"), default="full")
    p.add_argument("--seed", type=int, default=8)
    p.add_argument("--parallelism", type=int, default=min(8, os.cpu_count() or 1))
    args = p.parse_args()

    cfg = ArenaConfig() if args.scale == "full" else desk_config()
    if args.field.startswith("stage"):
        field = stage_opponents(int(args.field[-1]), cfg.team_count)
    else:
        field = [args.field] * (cfg.team_count - 1)
    descs, slots = [], []
    for k in range(args.matches):
        seed = derive_seed(args.seed, k)
        slot = int(np.random.default_rng(seed).integers(cfg.team_count))
        specs = list(field)
        specs.insert(slot, args.policy)
        descs.append(MatchDescriptor(k, seed, tuple(f"builtin:{s}#{i}" for i, s in enumerate(specs)),
                                     tuple(specs), cfg.to_dict()))
        slots.append(slot)
    outs = sorted(worker_pool(descs, args.parallelism), key=lambda o: o.seq)
    mine = [o.result.achievements[s] for o, s in zip(outs, slots)]
    best = [max(o.result.achievements) for o in outs]
    top1 = np.mean([m >= b for m, b in zip(mine, best)])
    print(f"{args.policy} vs {args.field} ({args.scale}): Top1Ratio {top1:.2f}")
    print("own achievement :", mine)
    print("best achievement:", best)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
