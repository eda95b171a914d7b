"""PvE qualification ladder: 10 matches against built-in opponents, Top1Ratio, stage gates."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from ..config import ArenaConfig
from ..scoring import MatchResult, TeamTaskStats, rank_teams
from ..sim.mapgen import derive_seed
from .pool import MatchDescriptor, MatchFailure, worker_pool

PVE_MATCHES = 10
PVP_QUALIFY_POINTS = 25


class QualState(IntEnum):
    """Highest stage a submission may play; Stage1 means stage 1 was played but not passed."""

    REGISTERED = 0
    STAGE1 = 1
    STAGE2 = 2
    STAGE3 = 3


def stage_opponents(stage: int, team_count: int = 16) -> list[str]:
    """Specs of the built-in field for a PvE stage (team_count - 1 teams)."""
    n = team_count - 1
    if stage == 1:
        third = n // 3
        # 5 Combat, 5 Forage, 5 Random at 16 teams; remainder goes to Random
        return ["combat"] * third + ["forage"] * third + ["random"] * (n - 2 * third)
    if stage in (2, 3):
        return [f"stage{stage}"] * n
    raise ValueError(f"no PvE stage {stage}")


@dataclass
class Gates:
    promote: dict[int, float] = field(default_factory=lambda: {1: 0.5, 2: 0.5})
    pvp_points: int = PVP_QUALIFY_POINTS


@dataclass
class Submission:
    id: str
    spec: str
    name: str = ""
    state: QualState = QualState.REGISTERED
    pvp_qualified: bool = False
    best: dict[int, int] = field(default_factory=dict)  # stage -> best achievement
    top1_history: dict[int, list[float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"id": self.id, "spec": self.spec, "name": self.name, "state": self.state.name,
                "pvp_qualified": self.pvp_qualified, "best": {str(k): v for k, v in self.best.items()},
                "top1_history": {str(k): v for k, v in self.top1_history.items()}}

    @classmethod
    def from_dict(cls, d: dict) -> "Submission":
        return cls(d["id"], d["spec"], d.get("name", ""), QualState[d.get("state", "REGISTERED")],
                   bool(d.get("pvp_qualified", False)), {int(k): v for k, v in d.get("best", {}).items()},
                   {int(k): list(v) for k, v in d.get("top1_history", {}).items()})


@dataclass
class PvEResult:
    stage: int
    slots: list[int]  # submission's team index in each match
    results: list[MatchResult]
    failures: list[MatchFailure] = field(default_factory=list)

    @property
    def top1(self) -> list[bool]:
        # ties with the best team count as top-1
        return [r.achievements[s] >= max(r.achievements) for r, s in zip(self.results, self.slots)]

    @property
    def top1_ratio(self) -> float:
        return sum(self.top1) / len(self.results) if self.results else 0.0

    @property
    def best_achievement(self) -> int:
        return max((r.achievements[s] for r, s in zip(self.results, self.slots)), default=0)

    @property
    def degraded(self) -> list[str | None]:
        return [r.degraded[s] for r, s in zip(self.results, self.slots)]


def pve_descriptors(
    spec: str,
    stage: int,
    config: ArenaConfig,
    seed: int,
    n_matches: int = PVE_MATCHES,
    replay_dir: str | Path | None = None,
    submission_id: str = "submission",
) -> tuple[list[MatchDescriptor], list[int]]:
    field_specs = stage_opponents(stage, config.team_count)
    descs, slots = [], []
    for k in range(n_matches):
        mseed = derive_seed(seed, 0x505645, stage, k)
        rng = np.random.Generator(np.random.PCG64(derive_seed(mseed, 0x534C4F54)))
        slot = int(rng.integers(config.team_count))
        specs = list(field_specs)
        specs.insert(slot, spec)
        entrants = [f"builtin:{s}#{i}" for i, s in enumerate(specs)]
        entrants[slot] = submission_id
        path = None if replay_dir is None else str(Path(replay_dir) / f"pve-s{stage}-{k:02d}.jsonl")
        descs.append(MatchDescriptor(k, mseed, tuple(entrants), tuple(specs), config.to_dict(), path))
        slots.append(slot)
    return descs, slots


def evaluate_pve(
    submission: Submission | str,
    stage: int,
    config: ArenaConfig = ArenaConfig(),
    seed: int = 0,
    n_matches: int = PVE_MATCHES,
    parallelism: int = 1,
    replay_dir: str | Path | None = None,
    check_eligible: bool = True,
) -> PvEResult:
    """Play ``n_matches`` of the submission against the stage's built-in field.

    Each match has its own map seed and spawn permutation, and the
    submission's team index is drawn per match.
    """
    if isinstance(submission, str):
        submission = Submission("submission", submission)
    if check_eligible and stage > 1 and submission.state < stage:
        raise ValueError(f"{submission.id} has not unlocked stage {stage} (state {submission.state.name})")
    descs, slots = pve_descriptors(submission.spec, stage, config, seed, n_matches, replay_dir, submission.id)
    outcomes = {}
    failures = []
    for out in worker_pool(descs, parallelism):
        if isinstance(out, MatchFailure):
            failures.append(out)
        else:
            outcomes[out.seq] = out
    kept = sorted(outcomes)
    return PvEResult(stage, [slots[k] for k in kept], [outcomes[k].result for k in kept], failures)


def advance_stage(submission: Submission, result: PvEResult, gates: Gates = Gates()) -> QualState:
    """Apply a PvE result; qualification never moves backwards."""
    stage = result.stage
    best = result.best_achievement
    submission.best[stage] = max(submission.best.get(stage, 0), best)
    submission.top1_history.setdefault(stage, []).append(result.top1_ratio)
    if stage == 1 and submission.best[1] >= gates.pvp_points:
        submission.pvp_qualified = True
    new = QualState(max(submission.state, stage))
    gate = gates.promote.get(stage)
    if gate is not None and result.top1_ratio >= gate and stage < QualState.STAGE3:
        new = QualState(max(new, stage + 1))
    submission.state = new
    return new


def synthetic_result(stage: int, achievements: Sequence[Sequence[int]], slot: int = 0) -> PvEResult:
    """PvEResult from bare achievement lists (for gate checks without playing)."""
    results = []
    for i, ach in enumerate(achievements):
        ach = list(ach)
        results.append(MatchResult(
            entrants=[f"t{j}" for j in range(len(ach))], seed=i, episode_length=0,
            stats=[TeamTaskStats(0, 0, 0, 0) for _ in ach], points=[(0, 0, 0, 0) for _ in ach],
            achievements=ach, ranks=rank_teams(ach), degraded=[None] * len(ach),
        ))
    return PvEResult(stage, [slot] * len(results), results)
