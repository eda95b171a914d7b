"""Post-hoc analysis of replay files: heatmaps, trajectories, per-task breakdowns, rescoring.

Everything here reads only replay records, never a live world, so any
figure can be regenerated from stored matches.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable, Sequence

import numpy as np

from .config import ArenaConfig
from .replay import ReplayRecord, read_replay
from .scoring import TASKS, DEFAULT_THRESHOLDS, MatchResult, TaskThresholds, TeamTaskStats
from .sim.world import MAX_FORAGE_LEVEL

EDGE_BAND = 24

ReplaySource = ReplayRecord | str | Path


def _load(src: ReplaySource) -> ReplayRecord:
    return src if isinstance(src, ReplayRecord) else read_replay(src)


def _spec_of(entrant: str) -> str:
    """``builtin:random#3`` -> ``random``; plain submission ids map to themselves."""
    base = entrant.rsplit("#", 1)[0]
    for prefix in ("builtin:", "standin:"):
        if base.startswith(prefix):
            return base[len(prefix):]
    return base


def policy_matcher(policy: str | Callable[[str], bool]) -> Callable[[str], bool]:
    """Entrant predicate: an exact entrant id, or the policy spec behind built-in/stand-in entrants."""
    if callable(policy):
        return policy
    return lambda e: e == policy or _spec_of(e) == policy


@dataclass
class Heatmap:
    policy: str
    counts: np.ndarray  # (map_size, map_size) agent-ticks per tile
    episodes: int = 0
    teams: int = 0

    @property
    def mass(self) -> int:
        return int(self.counts.sum())

    def to_csv(self, out: IO[str]) -> None:
        """Long format ``row,col,count`` covering every tile."""
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["row", "col", "count"])
        n = self.counts.shape[0]
        for r in range(n):
            for c in range(n):
                w.writerow([r, c, int(self.counts[r, c])])


def visitation_heatmap(replays: Iterable[ReplaySource], policy: str | Callable[[str], bool],
                       map_size: int | None = None) -> Heatmap:
    """Occupancy counts for every team played by ``policy``.

    Each living agent adds one to its tile on every tick record, so the
    total mass equals the sum over matching agents of ticks survived.
    All replays must share one map size (and ``map_size``, when given);
    an empty replay set yields an all-zero map of ``map_size`` (default 128).
    """
    match = policy_matcher(policy)
    counts = None if map_size is None else np.zeros((map_size, map_size), dtype=np.int64)
    episodes = teams = 0
    for src in replays:
        rec = _load(src)
        cfg = rec.header["config"]
        n, ts = cfg["map_size"], cfg["team_size"]
        if counts is None:
            counts = np.zeros((n, n), dtype=np.int64)
        elif counts.shape[0] != n:
            raise ValueError(f"mixed map sizes: {counts.shape[0]} and {n}")
        chosen = [t for t, e in enumerate(rec.header["entrants"]) if match(e)]
        episodes += 1
        teams += len(chosen)
        if not chosen:
            continue
        agents = np.concatenate([np.arange(t * ts, (t + 1) * ts) for t in chosen])
        flat = counts.ravel()
        for tick in rec.ticks:
            pos = np.asarray(tick["pos"], dtype=np.int64).reshape(-1, 2)[agents]
            pos = pos[pos[:, 0] >= 0]
            np.add.at(flat, pos[:, 0] * n + pos[:, 1], 1)
    if counts is None:
        counts = np.zeros((ArenaConfig().map_size,) * 2, dtype=np.int64)
    name = policy if isinstance(policy, str) else getattr(policy, "__name__", "predicate")
    return Heatmap(name, counts, episodes, teams)


def edge_mass_fraction(heatmap: Heatmap | np.ndarray, band: int = EDGE_BAND) -> float:
    """Share of visitation mass within ``band`` tiles of the map border."""
    counts = heatmap.counts if isinstance(heatmap, Heatmap) else np.asarray(heatmap)
    n = counts.shape[0]
    idx = np.arange(n)
    near = np.minimum(idx, n - 1 - idx) < band
    mask = near[:, None] | near[None, :]
    total = counts.sum()
    return float(counts[mask].sum() / total) if total else 0.0


@dataclass
class AgentTrajectory:
    agent: int
    slot: int
    positions: list[tuple[int, int]]  # spawn first, then one per tick survived
    died_at: int | None = None  # tick count at which the agent was first seen dead

    @property
    def max_displacement(self) -> int:
        r0, c0 = self.positions[0]
        return max(max(abs(r - r0), abs(c - c0)) for r, c in self.positions)


def team_trajectories(src: ReplaySource, team: int | str) -> list[AgentTrajectory]:
    """Per-agent position sequences for one team (index or entrant id).

    The sequence starts at the spawn tile and gains one entry per tick the
    agent ends alive, so an agent removed during tick ``k - 1`` (first seen
    dead after ``k`` ticks) has exactly ``k`` positions.
    """
    rec = _load(src)
    entrants = rec.header["entrants"]
    if isinstance(team, str):
        if team not in entrants:
            raise KeyError(f"no team {team!r} in replay")
        team = entrants.index(team)
    if not 0 <= team < len(entrants):
        raise KeyError(f"no team {team} in replay")
    ts = rec.header["config"]["team_size"]
    spawn = rec.header["spawn"]
    out = []
    for slot in range(ts):
        a = team * ts + slot
        traj = AgentTrajectory(a, slot, [(spawn[2 * a], spawn[2 * a + 1])])
        for tick in rec.ticks:
            r, c = tick["pos"][2 * a], tick["pos"][2 * a + 1]
            if r < 0:
                traj.died_at = tick["t"] + 1
                break
            traj.positions.append((r, c))
        out.append(traj)
    return out


def write_trajectories(trajs: Sequence[AgentTrajectory], out: IO[str], delimiter: str = "\t") -> None:
    w = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    w.writerow(["agent", "slot", "step", "row", "col"])
    for tr in trajs:
        for k, (r, c) in enumerate(tr.positions):
            w.writerow([tr.agent, tr.slot, k, r, c])


def rescore_agents(rec: ReplayRecord) -> dict[str, np.ndarray]:
    """Per-agent task counters rebuilt from tick events alone."""
    cfg = ArenaConfig.from_dict(rec.header["config"])
    na = cfg.n_agents
    spawn = np.asarray(rec.header["spawn"], dtype=np.int64).reshape(-1, 2)
    explore = np.zeros(na, dtype=np.int64)
    xp = np.zeros(na, dtype=np.int64)
    equip = np.zeros(na, dtype=np.int64)
    kills = np.zeros(na, dtype=np.int64)
    for tick in rec.ticks:
        for agent, _kind in tick["harv"]:
            xp[agent] += 1
        for agent, level in tick["eq"]:
            equip[agent] = max(equip[agent], level)
        for victim, credit in tick["die"]:
            if victim < na and credit is not None:
                kills[credit] += 1
        pos = np.asarray(tick["pos"], dtype=np.int64).reshape(-1, 2)
        alive = pos[:, 0] >= 0
        disp = np.abs(pos - spawn).max(axis=1)
        np.maximum(explore, np.where(alive, disp, 0), out=explore)
    return {"max_explore": explore, "forage_xp": xp, "equipment": equip, "kills": kills}


def rescore_stats(rec: ReplayRecord) -> list[TeamTaskStats]:
    """Team task values (maxima over each team's agents, dead ones included)."""
    cfg = ArenaConfig.from_dict(rec.header["config"])
    a = rescore_agents(rec)
    forage = np.minimum(MAX_FORAGE_LEVEL, 1 + a["forage_xp"] // cfg.forage_xp_per_level)
    per = np.stack([a["max_explore"], forage, a["equipment"], a["kills"]], axis=1)
    per = per.reshape(cfg.team_count, cfg.team_size, 4).max(axis=1)
    return [TeamTaskStats(*map(int, row)) for row in per]


def rescore_replay(src: ReplaySource, thresholds: TaskThresholds = DEFAULT_THRESHOLDS) -> MatchResult:
    """Recompute the match result from tick records, independent of the footer."""
    rec = _load(src)
    h = rec.header
    cfg = h["config"]
    degraded: list[str | None] = [None] * cfg["team_count"]
    for tick in rec.ticks:
        for team, reason in tick["deg"]:
            if degraded[team] is None:
                degraded[team] = reason
    length = len(rec.ticks)
    early = None
    if rec.ticks and length < cfg["horizon"]:
        players = np.asarray(rec.ticks[-1]["pos"]).reshape(-1, 2)
        if (players[:, 0] < 0).all():
            early = "all_players_dead"
    return MatchResult.score(h["entrants"], h["seed"], length, rescore_stats(rec), thresholds, early, degraded)


def check_replay(src: ReplaySource, thresholds: TaskThresholds = DEFAULT_THRESHOLDS) -> list[str]:
    """Differences between the footer's result and a rescore; empty when they agree."""
    rec = _load(src)
    stored = rec.footer["result"]
    fresh = rescore_replay(rec, thresholds).to_dict()
    problems = [f"{k}: footer {stored.get(k)!r} != rescored {v!r}" for k, v in fresh.items() if stored.get(k) != v]
    recorded = rec.footer.get("agents", {})
    for k, v in rescore_agents(rec).items():
        if k in recorded and recorded[k] != v.tolist():
            problems.append(f"per-agent {k} disagrees with rescore")
    last = [int(x) for x in rec.ticks[-1]["ach"]] if rec.ticks else []
    if rec.ticks and last != fresh["achievements"]:
        problems.append("final tick achievements disagree with rescore")
    return problems


@dataclass
class SubtaskBreakdown:
    submission: str
    matches: int
    mean_points: dict[str, float] = field(default_factory=dict)
    mean_values: dict[str, float] = field(default_factory=dict)
    mean_achievement: float = 0.0

    def radar_rows(self) -> list[tuple[str, float]]:
        return [(t, self.mean_points[t]) for t in TASKS]

    def to_csv(self, out: IO[str]) -> None:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["task", "mean_points", "mean_value"])
        for t in TASKS:
            w.writerow([t, f"{self.mean_points[t]:.6g}", f"{self.mean_values[t]:.6g}"])


def subtask_breakdown(results: Iterable[MatchResult], submission: str | Callable[[str], bool]) -> SubtaskBreakdown:
    """Mean per-task points and raw values over every team the submission played."""
    match = policy_matcher(submission)
    pts, vals = [], []
    matches = 0
    for r in results:
        hit = [i for i, e in enumerate(r.entrants) if match(e)]
        if hit:
            matches += 1
        for i in hit:
            pts.append(r.points[i])
            vals.append(r.stats[i].values())
    name = submission if isinstance(submission, str) else "predicate"
    if not pts:
        raise KeyError(f"{name!r} does not appear in any result")
    p = np.asarray(pts, dtype=float).mean(axis=0)
    v = np.asarray(vals, dtype=float).mean(axis=0)
    return SubtaskBreakdown(name, matches, dict(zip(TASKS, p.tolist())), dict(zip(TASKS, v.tolist())),
                            float(p.sum()))
