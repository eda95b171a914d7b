#!/usr/bin/env python3
"""Throughput: one full scripted match on one core, then serial vs parallel batches."""

from __future__ import annotations

import argparse
import os
import time

from mmo_arena.config import ArenaConfig, desk_config
from mmo_arena.orchestrator.pool import MatchDescriptor, run_descriptor, worker_pool

SPECS = ("combat",) * 6 + ("forage",) * 5 + ("random",) * 5


def descriptor(k: int, cfg: dict) -> MatchDescriptor:
    return MatchDescriptor(k, 500 + k, tuple(f"builtin:{s}#{i}" for i, s in enumerate(SPECS)), SPECS, cfg)


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--matches", type=int, default=100)
    p.add_argument("--parallelism", type=int, default=8)
    p.add_argument("--scale", choices=("full", "desk"), default="full")
    args = p.parse_args()
    cfg = (ArenaConfig() if args.scale == "full" else desk_config()).to_dict()

    t0 = time.perf_counter()
    run_descriptor(descriptor(0, cfg))
    print(f"single match: {time.perf_counter() - t0:.2f} s")

    batch = [descriptor(k, cfg) for k in range(args.matches)]
    t0 = time.perf_counter()
    list(worker_pool(batch, 1))
    serial = time.perf_counter() - t0
    t0 = time.perf_counter()
    list(worker_pool(batch, args.parallelism))
    par = time.perf_counter() - t0
    print(f"{args.matches} matches: serial {serial:.1f} s, parallelism {args.parallelism} {par:.1f} s, "
          f"speedup {serial / par:.2f}x on {os.cpu_count()} CPU(s)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
