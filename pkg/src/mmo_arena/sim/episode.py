"""Run one full match: spawn, tick loop with team policies, scoring and replay."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from ..config import ArenaConfig
from ..policies.base import EpisodeMeta
from ..policies.observation import build_observations
from ..replay import ReplayRecord, ReplayWriter, read_replay
from ..scoring import DEFAULT_THRESHOLDS, MatchResult, TaskThresholds, team_points_array, team_stat_array, team_stats
from .mapgen import GameMap, derive_seed
from .world import NOOP, AgentAction, TickEvents, WorldState, spawn_episode

log = logging.getLogger(__name__)


@dataclass
class EpisodeOutcome:
    result: MatchResult
    digest: str
    ticks: int


def policy_seed(seed: int, team_id: int) -> int:
    return derive_seed(seed, 0x504F4C, team_id)


def _encode_actions(flat: list[AgentAction | None], alive: np.ndarray) -> list:
    out: list = []
    for i, a in enumerate(flat):
        if not alive[i] or a is None:
            out.append(None)
        elif a.attack is None:
            out.append([int(a.move)])
        else:
            out.append([int(a.move), int(a.attack[0]), int(a.attack[1])])
    return out


def _tick_record(world: WorldState, ev: TickEvents, acts: list, ach: list[int], degraded: list) -> dict:
    na = world.n_agents
    alive = world.alive
    pos = np.stack([world.row, world.col], axis=1)
    pos[~alive] = -1
    return {
        "t": ev.tick,
        "pos": pos[:na].ravel().tolist(),
        "hp": world.hp[:na].tolist(),
        "act": acts,
        "atk": [list(a) for a in ev.attacks],
        "ill": [list(x) for x in ev.illegal],
        "die": [list(d) for d in ev.deaths],
        "harv": [list(h) for h in ev.harvests],
        "eq": [list(e) for e in ev.equips],
        "meta": ev.metabolism,
        "npc": np.concatenate([pos[na:], world.hp[na:, None]], axis=1).ravel().tolist(),
        "ach": ach,
        "deg": degraded,
    }


def _valid_actions(actions, team_size: int) -> bool:
    return (
        isinstance(actions, (list, tuple))
        and len(actions) == team_size
        and all(a is None or isinstance(a, AgentAction) for a in actions)
    )


def run_episode(
    game_map: GameMap,
    policies: Sequence,
    seed: int,
    config: ArenaConfig,
    entrants: Sequence[str] | None = None,
    replay: IO[bytes] | None = None,
    thresholds: TaskThresholds = DEFAULT_THRESHOLDS,
) -> EpisodeOutcome:
    """Play ``config.horizon`` ticks (or until every player is dead).

    A policy that raises, returns a malformed action list, or reports itself
    degraded (``policy.degraded``) plays no-ops for the rest of the match; the
    reason is recorded in the replay and in ``MatchResult.degraded``.
    """
    if len(policies) != config.team_count:
        raise ValueError(f"expected {config.team_count} policies, got {len(policies)}")
    entrants = list(entrants) if entrants is not None else [f"team{t}" for t in range(config.team_count)]
    world = spawn_episode(game_map, entrants, seed, config)
    ts = config.team_size
    degraded: list[str | None] = [None] * config.team_count
    writer = ReplayWriter(replay)
    writer.header({
        "seed": seed,
        "map_seed": game_map.seed,
        "map_digest": game_map.digest(),
        "config": config.to_dict(),
        "config_digest": config.digest(),
        "entrants": entrants,
        "anchors": [list(a) for a in world.team_anchor],
        "spawn": np.stack([world.spawn_row, world.spawn_col], axis=1).ravel().tolist(),
        "npc_levels": world.npc_level.tolist(),
    })

    def degrade(t: int, reason: str) -> list:
        if degraded[t] is None:
            degraded[t] = reason
            log.warning("team %d (%s) degraded: %s", t, entrants[t], reason)
            return [[t, reason]]
        return []

    pending: list = []
    for t, pol in enumerate(policies):
        try:
            pol.reset(EpisodeMeta(team_id=t, seed=policy_seed(seed, t), config=config))
        except Exception as e:  # policy code is untrusted
            pending += degrade(t, f"reset failed: {e!r}")
        if getattr(pol, "degraded", None):
            pending += degrade(t, pol.degraded)

    try:
        while not world.done():
            obs = build_observations(world)
            flat: list[AgentAction | None] = [None] * world.n_agents
            newly = pending
            pending = []
            for t, pol in enumerate(policies):
                if degraded[t] is not None:
                    continue
                try:
                    acts = pol.act(obs[t])
                except Exception as e:
                    newly += degrade(t, f"act raised: {e!r}")
                    continue
                if getattr(pol, "degraded", None):
                    newly += degrade(t, pol.degraded)
                    continue
                if acts is None:
                    continue
                if not _valid_actions(acts, ts):
                    newly += degrade(t, "malformed actions")
                    continue
                flat[t * ts : (t + 1) * ts] = acts
            alive_before = world.alive[: world.n_agents].copy()
            ev = world.step(flat)
            ach = team_points_array(team_stat_array(world), thresholds).sum(axis=1).tolist()
            writer.tick(_tick_record(world, ev, _encode_actions(flat, alive_before), ach, newly))
    finally:
        for pol in policies:
            close = getattr(pol, "close", None)
            if close is not None:
                close()

    result = MatchResult.score(
        entrants, seed, world.tick, team_stats(world), thresholds, world.early_stop, degraded
    )
    na = world.n_agents
    agents = {
        "max_explore": world.max_explore.tolist(),
        "forage_xp": world.xp[:na].tolist(),
        "equipment": world.equip[:na].tolist(),
        "kills": world.kills[:na].tolist(),
    }
    digest = writer.footer({"result": result.to_dict(), "early_stop": world.early_stop, "agents": agents})
    return EpisodeOutcome(result=result, digest=digest, ticks=world.tick)


def run_episode_record(game_map, policies, seed, config, entrants=None, thresholds=DEFAULT_THRESHOLDS):
    """``run_episode`` keeping the full replay in memory."""
    import io

    buf = io.BytesIO()
    outcome = run_episode(game_map, policies, seed, config, entrants, buf, thresholds)
    record: ReplayRecord = read_replay(buf.getvalue())
    return outcome, record
