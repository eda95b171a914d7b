"""Parallel match execution.

A ``MatchDescriptor`` carries everything that determines a match, so any
worker can run it and a crashed match can be re-run with the same result.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import FIRST_COMPLETED, Future, ProcessPoolExecutor, wait
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Iterator, Sequence

from ..config import ArenaConfig
from ..policies.registry import make_policy
from ..scoring import MatchResult
from ..sim.episode import run_episode
from ..sim.mapgen import derive_seed, generate_map

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MatchDescriptor:
    seq: int
    seed: int
    entrants: tuple[str, ...]
    specs: tuple[str, ...]
    config: dict = field(default_factory=lambda: ArenaConfig().to_dict())
    replay_path: str | None = None

    @property
    def map_seed(self) -> int:
        return derive_seed(self.seed, 0x4D53)

    def arena_config(self) -> ArenaConfig:
        return ArenaConfig.from_dict(self.config)


@dataclass
class MatchOutcome:
    seq: int
    result: MatchResult
    digest: str
    replay_path: str | None = None
    wall_time: float = 0.0
    attempts: int = 1


@dataclass
class MatchFailure:
    seq: int
    error: str
    attempts: int


def run_descriptor(desc: MatchDescriptor) -> MatchOutcome:
    """Play one described match in this process."""
    t0 = time.perf_counter()
    cfg = desc.arena_config()
    game_map = generate_map(desc.map_seed, cfg)
    policies = [make_policy(s) for s in desc.specs]
    if desc.replay_path is not None:
        path = Path(desc.replay_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(path.suffix + ".part")
        with open(tmp, "wb") as fh:
            out = run_episode(game_map, policies, desc.seed, cfg, desc.entrants, fh)
        tmp.replace(path)
    else:
        out = run_episode(game_map, policies, desc.seed, cfg, desc.entrants)
    return MatchOutcome(desc.seq, out.result, out.digest, desc.replay_path, time.perf_counter() - t0)


def _check_unique(descs: Sequence[MatchDescriptor]) -> None:
    seen: set[int] = set()
    for d in descs:
        if d.seq in seen:
            raise ValueError(f"duplicate match sequence number {d.seq}")
        seen.add(d.seq)


def worker_pool(
    descriptors: Iterable[MatchDescriptor],
    parallelism: int = 1,
    runner: Callable[[MatchDescriptor], MatchOutcome] = run_descriptor,
    retries: int = 1,
) -> Iterator[MatchOutcome | MatchFailure]:
    """Run descriptors with at most ``parallelism`` in flight; yield results as they finish.

    A match that raises, or whose worker dies, is re-run with the same
    descriptor up to ``retries`` more times; after that a ``MatchFailure`` is
    yielded in its place. ``runner`` must be picklable when parallelism > 1.
    """
    descs = list(descriptors)
    _check_unique(descs)
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if parallelism == 1:
        for d in descs:
            for attempt in range(1, retries + 2):
                try:
                    out = runner(d)
                    out.attempts = attempt
                    yield out
                    break
                except Exception as e:  # noqa: BLE001 - any match failure is retried
                    log.warning("match %d attempt %d failed: %r", d.seq, attempt, e)
                    if attempt == retries + 1:
                        yield MatchFailure(d.seq, repr(e), attempt)
        return

    pending = list(reversed(descs))  # pop() takes the next in order
    attempts: dict[int, int] = {}
    in_flight: dict[Future, MatchDescriptor] = {}
    pool = ProcessPoolExecutor(max_workers=parallelism)
    try:
        while pending or in_flight:
            while pending and len(in_flight) < parallelism:
                d = pending.pop()
                attempts[d.seq] = attempts.get(d.seq, 0) + 1
                in_flight[pool.submit(runner, d)] = d
            done, _ = wait(list(in_flight), return_when=FIRST_COMPLETED)
            broken = False
            for fut in sorted(done, key=lambda f: in_flight[f].seq):
                d = in_flight.pop(fut)
                try:
                    out = fut.result()
                    out.attempts = attempts[d.seq]
                    yield out
                    continue
                except BrokenProcessPool as e:
                    broken = True
                    err = e
                except Exception as e:  # noqa: BLE001
                    err = e
                log.warning("match %d attempt %d failed: %r", d.seq, attempts[d.seq], err)
                if attempts[d.seq] <= retries:
                    pending.append(d)
                else:
                    yield MatchFailure(d.seq, repr(err), attempts[d.seq])
            if broken:
                # every other in-flight match died with the pool: requeue them without charging an attempt
                for fut, d in in_flight.items():
                    attempts[d.seq] -= 1
                    pending.append(d)
                in_flight.clear()
                pool.shutdown(wait=True, cancel_futures=True)
                pool = ProcessPoolExecutor(max_workers=parallelism)
    finally:
        pool.shutdown(wait=True, cancel_futures=True)
