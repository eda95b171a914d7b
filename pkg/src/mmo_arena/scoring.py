"""Achievement metric: four tiered tasks, team ranking and the per-tick reward channel."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

TASKS = ("explore", "forage", "equipment", "kills")
TIER_POINTS = (4, 10, 21)
MAX_ACHIEVEMENT = len(TASKS) * TIER_POINTS[-1]


@dataclass(frozen=True)
class TaskThresholds:
    explore: tuple[int, int, int] = (32, 64, 127)
    forage: tuple[int, int, int] = (20, 35, 50)
    equipment: tuple[int, int, int] = (1, 10, 20)
    kills: tuple[int, int, int] = (1, 3, 6)
    points: tuple[int, int, int] = TIER_POINTS

    def __post_init__(self):
        for name in TASKS:
            e, m, h = getattr(self, name)
            if not e < m < h:
                raise ValueError(f"{name} thresholds must be strictly increasing")

    def table(self) -> np.ndarray:
        return np.array([getattr(self, t) for t in TASKS])


DEFAULT_THRESHOLDS = TaskThresholds()


@dataclass(frozen=True)
class TeamTaskStats:
    best_explore: int = 0
    best_forage_level: int = 0
    best_equipment_level: int = 0
    best_player_kills: int = 0

    def values(self) -> tuple[int, int, int, int]:
        return (self.best_explore, self.best_forage_level, self.best_equipment_level, self.best_player_kills)


def task_points(value: float, tiers: Sequence[float], points: Sequence[int] = TIER_POINTS) -> int:
    """Points for the highest tier reached; ``tiers`` is (easy, medium, hard)."""
    if value < 0:
        raise ValueError("task value must be >= 0")
    easy, medium, hard = tiers
    if value >= hard:
        return points[2]
    if value >= medium:
        return points[1]
    if value >= easy:
        return points[0]
    return 0


def task_point_vector(stats: TeamTaskStats, thresholds: TaskThresholds = DEFAULT_THRESHOLDS) -> tuple[int, ...]:
    return tuple(
        task_points(v, getattr(thresholds, t), thresholds.points) for t, v in zip(TASKS, stats.values())
    )


def team_achievement(stats: TeamTaskStats, thresholds: TaskThresholds = DEFAULT_THRESHOLDS) -> int:
    return sum(task_point_vector(stats, thresholds))


def rank_teams(achievements: Sequence[float]) -> list[int]:
    """Standard competition ranking: [84, 24, 24, 0] -> [1, 2, 2, 4]."""
    return [1 + sum(1 for b in achievements if b > a) for a in achievements]


def draw_groups(ranks: Sequence[int]) -> list[list[int]]:
    """Team indices grouped by shared rank, best group first."""
    groups: dict[int, list[int]] = {}
    for i, r in enumerate(ranks):
        groups.setdefault(r, []).append(i)
    return [groups[r] for r in sorted(groups)]


def achievement_delta(
    prev: TeamTaskStats, new: TeamTaskStats, thresholds: TaskThresholds = DEFAULT_THRESHOLDS
) -> int:
    return team_achievement(new, thresholds) - team_achievement(prev, thresholds)


def team_points_array(values: np.ndarray, thresholds: TaskThresholds = DEFAULT_THRESHOLDS) -> np.ndarray:
    """Vectorized task points for a (teams, 4) array of task values."""
    table = thresholds.table()
    pts = np.array((0,) + tuple(thresholds.points))
    out = np.empty(values.shape, dtype=np.int64)
    for k in range(len(TASKS)):
        out[:, k] = pts[np.searchsorted(table[k], values[:, k], side="right")]
    return out


def team_stat_array(world) -> np.ndarray:
    """(team_count, 4) task values taken as maxima over each team's agents, dead ones included."""
    cfg = world.config
    per_agent = np.stack(
        [world.max_explore, world.forage_levels(), world.equip, world.kills], axis=1
    ).reshape(cfg.team_count, cfg.team_size, 4)
    return per_agent.max(axis=1)


def team_stats(world) -> list[TeamTaskStats]:
    return [TeamTaskStats(*map(int, row)) for row in team_stat_array(world)]


@dataclass
class MatchResult:
    entrants: list[str]
    seed: int
    episode_length: int
    stats: list[TeamTaskStats]
    points: list[tuple[int, int, int, int]] = field(default_factory=list)
    achievements: list[int] = field(default_factory=list)
    ranks: list[int] = field(default_factory=list)
    early_stop: str | None = None
    degraded: list[str | None] = field(default_factory=list)

    @classmethod
    def score(
        cls,
        entrants: Sequence[str],
        seed: int,
        episode_length: int,
        stats: Sequence[TeamTaskStats],
        thresholds: TaskThresholds = DEFAULT_THRESHOLDS,
        early_stop: str | None = None,
        degraded: Sequence[str | None] | None = None,
    ) -> "MatchResult":
        points = [task_point_vector(s, thresholds) for s in stats]
        ach = [sum(p) for p in points]
        return cls(
            entrants=list(entrants),
            seed=seed,
            episode_length=episode_length,
            stats=list(stats),
            points=points,
            achievements=ach,
            ranks=rank_teams(ach),
            early_stop=early_stop,
            degraded=list(degraded) if degraded is not None else [None] * len(entrants),
        )

    def winners(self) -> list[int]:
        return [i for i, r in enumerate(self.ranks) if r == 1]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stats"] = [list(s.values()) for s in self.stats]
        d["points"] = [list(p) for p in self.points]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MatchResult":
        d = dict(d)
        d["stats"] = [TeamTaskStats(*s) for s in d["stats"]]
        d["points"] = [tuple(p) for p in d["points"]]
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps({"type": "match_result", **self.to_dict()}, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "MatchResult":
        d = json.loads(line)
        if d.pop("type", None) != "match_result":
            raise ValueError("not a match_result record")
        return cls.from_dict(d)
