#!/usr/bin/env python3
"""Where do built-in policies spend their time? Visitation heatmaps over stage-1 matches.

Plays ``--episodes`` matches of the stage-1 field (5 Combat, 5 Forage,
6 Random teams), keeps the replays, and writes one long-format CSV heatmap
per policy. Prints each policy's share of visits within the edge band.
"""

from __future__ import annotations

import argparse
import os
from pathlib import Path

from mmo_arena.analytics import edge_mass_fraction, visitation_heatmap
from mmo_arena.config import ArenaConfig, desk_config
from mmo_arena.orchestrator.pool import MatchDescriptor, worker_pool

FIELD = ("combat",) * 5 + ("forage",) * 5 + ("random",) * 6


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--episodes", type=int, default=50)
    p.add_argument("--scale", choices=("full", "desk"), default="full")
    p.add_argument("--seed", type=int, default=9000)
    p.add_argument("--band", type=int, default=24, help="edge band width in tiles")
    p.add_argument("--out", default="heatmaps")
    p.add_argument("--parallelism", type=int, default=min(8, os.cpu_count() or 1))
    args = p.parse_args()

    out = Path(args.out)
    (out / "replays").mkdir(parents=True, exist_ok=True)
    cfg = (ArenaConfig() if args.scale == "full" else desk_config()).to_dict()
    entrants = tuple(f"builtin:{s}#{i}" for i, s in enumerate(FIELD))
    descs = [MatchDescriptor(k, args.seed + k, entrants, FIELD, cfg, str(out / "replays" / f"m{k:03d}.jsonl"))
             for k in range(args.episodes)]
    paths = sorted(o.replay_path for o in worker_pool(descs, args.parallelism))

    for policy in ("random", "forage", "combat"):
        h = visitation_heatmap(paths, policy)
        with open(out / f"{policy}.csv", "w") as fh:
            h.to_csv(fh)
        print(f"{policy:<7} teams {h.teams:>4}  agent-ticks {h.mass:>10}  "
              f"edge share (band {args.band}) {edge_mass_fraction(h, args.band):.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
