"""World state and the fixed-phase tick update.

Entities live in struct-of-arrays form: ids ``0 .. n_agents-1`` are player
agents in team-major order, ids ``n_agents ..`` are NPCs. ``AgentState`` and
``NpcState`` are read-only snapshots built on request.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..config import MOVE_DELTAS, VIEW_RADIUS, ArenaConfig, Move, Style, Tile
from .mapgen import GameMap, derive_seed, nearest_tiles

OCC_NONE, OCC_PLAYER, OCC_NPC = 0, 1, 2
MAX_FORAGE_LEVEL = 50
MAX_EQUIPMENT = 20


def forage_level(forage_xp: int, config: ArenaConfig) -> int:
    if forage_xp < 0:
        raise ValueError("forage_xp must be >= 0")
    return min(MAX_FORAGE_LEVEL, 1 + forage_xp // config.forage_xp_per_level)


def npc_level(pos: tuple[int, int], map_size: int) -> int:
    center = map_size // 2
    d = max(abs(pos[0] - center), abs(pos[1] - center))
    d_max = center - 1
    level = 1 + int(19 * (1 - d / d_max) // 1)
    return max(1, min(20, level))


def npc_max_hp(level: int) -> int:
    return 20 + 4 * level


def npc_damage(level: int) -> int:
    return 1 + level // 3


def npc_hostile(level: int) -> bool:
    return level > 10


@dataclass(frozen=True, slots=True)
class AgentAction:
    move: Move = Move.STAY
    attack: tuple[Style, int] | None = None


NOOP = AgentAction()


@dataclass(frozen=True)
class AgentState:
    agent_id: int
    team_id: int
    position: tuple[int, int]
    spawn_position: tuple[int, int]
    hp: int
    food: int
    water: int
    forage_xp: int
    equipment_level: int
    last_style: Style | None
    alive: bool
    player_kills: int
    max_explore: int


@dataclass(frozen=True)
class NpcState:
    npc_id: int
    position: tuple[int, int]
    hp: int
    level: int
    hostile: bool
    alive: bool

    @property
    def drop_equipment_level(self) -> int:
        return self.level


@dataclass
class TickEvents:
    tick: int
    attacks: list[tuple[int, int, int, int]] = field(default_factory=list)  # src, dst, style, applied dmg
    illegal: list[tuple[int, str]] = field(default_factory=list)
    deaths: list[tuple[int, int | None]] = field(default_factory=list)  # entity, credited player or None
    harvests: list[tuple[int, str]] = field(default_factory=list)  # agent, "food" | "water"
    equips: list[tuple[int, int]] = field(default_factory=list)  # agent, new equipment level
    metabolism: list[int] = field(default_factory=list)  # hp delta per agent id


class WorldState:
    def __init__(self, config: ArenaConfig, game_map: GameMap, seed: int):
        self.config = config
        self.map = game_map
        self.seed = seed
        n = config.map_size
        if game_map.size != n:
            raise ValueError("map size does not match config")
        self.tiles = game_map.tiles
        self.passable = game_map.passable()
        self.near_water = game_map.water_adjacent()
        self.forest_ok = self.tiles == Tile.FOREST
        self.regrow: deque[tuple[int, list[tuple[int, int]]]] = deque()
        self.tick = 0
        self.rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 0x4E5043)))

        na, nn = config.n_agents, config.npc_count
        self.n_agents = na
        self.n_entities = na + nn
        ne = self.n_entities
        self.row = np.zeros(ne, dtype=np.int64)
        self.col = np.zeros(ne, dtype=np.int64)
        self.hp = np.zeros(ne, dtype=np.int64)
        self.alive = np.zeros(ne, dtype=bool)
        self.team = np.repeat(np.arange(config.team_count), config.team_size)
        self.spawn_row = np.zeros(na, dtype=np.int64)
        self.spawn_col = np.zeros(na, dtype=np.int64)
        self.food = np.full(na, config.food_cap, dtype=np.int64)
        self.water = np.full(na, config.water_cap, dtype=np.int64)
        self.xp = np.zeros(na, dtype=np.int64)
        self.equip = np.zeros(na, dtype=np.int64)
        self.kills = np.zeros(na, dtype=np.int64)
        self.max_explore = np.zeros(na, dtype=np.int64)
        self.last_style = np.full(na, -1, dtype=np.int64)
        self.npc_level = np.zeros(nn, dtype=np.int64)
        self.npc_hostile = np.zeros(nn, dtype=bool)
        self.npc_last_attacker = np.full(nn, -1, dtype=np.int64)
        self.npc_last_hit = np.full(nn, -(10**9), dtype=np.int64)
        self.occ = np.full((n, n), -1, dtype=np.int64)

        # padded grid for 15x15 crops: channel 0 kind, 1 harvestable forest, 2 occupancy
        r = VIEW_RADIUS
        self.pad = r
        self.view = np.zeros((3, n + 2 * r, n + 2 * r), dtype=np.int8)
        self.view[0] = Tile.BORDER
        self.view[0, r : r + n, r : r + n] = self.tiles
        self.view[1, r : r + n, r : r + n] = self.forest_ok

        self.team_anchor: list[tuple[int, int]] = []
        self.entrants: list[str] = []
        self.early_stop: str | None = None
        self._pending_credit: dict[int, int] = {}

    # -- placement --------------------------------------------------------

    def _place(self, eid: int, r: int, c: int) -> None:
        self.row[eid] = r
        self.col[eid] = c
        self.alive[eid] = True
        self.occ[r, c] = eid
        self.view[2, r + self.pad, c + self.pad] = OCC_PLAYER if eid < self.n_agents else OCC_NPC

    def _move(self, eid: int, r: int, c: int) -> None:
        p = self.pad
        self.occ[self.row[eid], self.col[eid]] = -1
        self.view[2, self.row[eid] + p, self.col[eid] + p] = OCC_NONE
        self.row[eid] = r
        self.col[eid] = c
        self.occ[r, c] = eid
        self.view[2, r + p, c + p] = OCC_PLAYER if eid < self.n_agents else OCC_NPC

    def _remove(self, eid: int) -> None:
        p = self.pad
        self.alive[eid] = False
        if self.occ[self.row[eid], self.col[eid]] == eid:
            self.occ[self.row[eid], self.col[eid]] = -1
            self.view[2, self.row[eid] + p, self.col[eid] + p] = OCC_NONE

    # -- snapshots ----------------------------------------------------------

    def agent(self, agent_id: int) -> AgentState:
        i = agent_id
        return AgentState(
            agent_id=i,
            team_id=int(self.team[i]),
            position=(int(self.row[i]), int(self.col[i])),
            spawn_position=(int(self.spawn_row[i]), int(self.spawn_col[i])),
            hp=int(self.hp[i]),
            food=int(self.food[i]),
            water=int(self.water[i]),
            forage_xp=int(self.xp[i]),
            equipment_level=int(self.equip[i]),
            last_style=None if self.last_style[i] < 0 else Style(int(self.last_style[i])),
            alive=bool(self.alive[i]),
            player_kills=int(self.kills[i]),
            max_explore=int(self.max_explore[i]),
        )

    @property
    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(self.n_agents)]

    def npc(self, npc_id: int) -> NpcState:
        j = npc_id - self.n_agents
        return NpcState(
            npc_id=npc_id,
            position=(int(self.row[npc_id]), int(self.col[npc_id])),
            hp=int(self.hp[npc_id]),
            level=int(self.npc_level[j]),
            hostile=bool(self.npc_hostile[j]),
            alive=bool(self.alive[npc_id]),
        )

    @property
    def npcs(self) -> list[NpcState]:
        return [self.npc(i) for i in range(self.n_agents, self.n_entities)]

    def forage_levels(self) -> np.ndarray:
        return np.minimum(MAX_FORAGE_LEVEL, 1 + self.xp // self.config.forage_xp_per_level)

    def team_members(self, team_id: int) -> range:
        ts = self.config.team_size
        return range(team_id * ts, (team_id + 1) * ts)

    def done(self) -> bool:
        return self.tick >= self.config.horizon or self.early_stop is not None

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.row, self.col, self.hp, self.alive, self.food, self.water, self.xp,
                    self.equip, self.kills, self.max_explore, self.view[1]):
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(str(self.tick).encode())
        h.update(self.rng.bit_generator.state["state"]["state"].to_bytes(16, "little"))
        return h.hexdigest()

    # -- tick -------------------------------------------------------------------

    def step(self, actions: Mapping[int, Sequence[AgentAction | None]] | Sequence[AgentAction | None]) -> TickEvents:
        """Advance one tick.

        ``actions`` maps team id to that team's per-slot actions, or is a flat
        sequence indexed by agent id. Missing entries mean no-op. Actions for
        dead or unknown agents are ignored and flagged.
        """
        if self.done():
            raise RuntimeError("episode is over")
        cfg = self.config
        ev = TickEvents(tick=self.tick)
        na = self.n_agents
        flat = self._flatten(actions, ev)

        active = self.alive[:na].copy()
        self._phase_attacks(flat, active, ev)
        active &= self.hp[:na] > 0
        self._phase_moves(flat, active)
        self._phase_forage(active, ev)
        self._phase_metabolism(active, ev)
        self._phase_deaths(ev)
        self._phase_npcs(ev)
        self._phase_deaths(ev)

        alive = self.alive[:na]
        disp = np.maximum(np.abs(self.row[:na] - self.spawn_row), np.abs(self.col[:na] - self.spawn_col))
        np.maximum(self.max_explore, np.where(alive, disp, 0), out=self.max_explore)
        self.tick += 1
        if not alive.any() and self.tick < cfg.horizon:
            self.early_stop = "all_players_dead"
        return ev

    def _flatten(self, actions, ev: TickEvents) -> list[AgentAction | None]:
        na = self.n_agents
        flat: list[AgentAction | None] = [None] * na
        if isinstance(actions, Mapping):
            ts = self.config.team_size
            for team_id, team_actions in actions.items():
                if not 0 <= team_id < self.config.team_count:
                    ev.illegal.append((-1, f"unknown team {team_id}"))
                    continue
                base = team_id * ts
                for slot, a in enumerate(team_actions[:ts]):
                    flat[base + slot] = a
        else:
            for i, a in enumerate(actions):
                if i >= na:
                    ev.illegal.append((i, "unknown agent"))
                    continue
                flat[i] = a
        for i in range(na):
            a = flat[i]
            if a is not None and not self.alive[i]:
                if a.move != Move.STAY or a.attack is not None:
                    ev.illegal.append((i, "dead agent"))
                flat[i] = None
        return flat

    def _phase_attacks(self, flat, active, ev: TickEvents) -> None:
        cfg = self.config
        na = self.n_agents
        hits: list[tuple[int, int, int, int]] = []
        for i in range(na):
            a = flat[i]
            if a is None or a.attack is None or not active[i]:
                continue
            style, target = a.attack
            style = Style(style)
            stats = cfg.style(style)
            if not (0 <= target < self.n_entities) or not self.alive[target]:
                ev.illegal.append((i, "bad target"))
                continue
            if target < na and self.team[target] == self.team[i]:
                ev.illegal.append((i, "friendly target"))
                continue
            dist = max(abs(self.row[i] - self.row[target]), abs(self.col[i] - self.col[target]))
            if dist > stats.range:
                ev.illegal.append((i, "out of range"))
                continue
            self.last_style[i] = style
            hits.append((i, target, int(style), stats.damage))
        if not hits:
            return
        # simultaneous: every legal attack was validated against the pre-phase state
        credited: dict[int, int] = {}
        for src, dst, style, dmg in hits:
            applied = int(min(dmg, self.hp[dst]))
            self.hp[dst] -= applied
            ev.attacks.append((src, dst, style, applied))
            if dst not in credited or src < credited[dst]:
                credited[dst] = src
            if dst >= na:
                j = dst - na
                if src < self.npc_last_attacker[j] or self.npc_last_hit[j] != self.tick:
                    self.npc_last_attacker[j] = src
                self.npc_last_hit[j] = self.tick
        for dst, src in sorted(credited.items()):
            if self.hp[dst] > 0:
                continue
            if dst < na:
                self.kills[src] += 1
            else:
                level = int(self.npc_level[dst - na])
                if level > self.equip[src]:
                    self.equip[src] = min(MAX_EQUIPMENT, level)
                    ev.equips.append((src, int(self.equip[src])))
            self._pending_credit[dst] = src

    def _phase_moves(self, flat, active) -> None:
        passable = self.passable
        occ = self.occ
        for i in range(self.n_agents):
            a = flat[i]
            if a is None or a.move == Move.STAY or not active[i]:
                continue
            dr, dc = MOVE_DELTAS[a.move]
            r, c = self.row[i] + dr, self.col[i] + dc
            if passable[r, c] and occ[r, c] < 0:
                self._move(i, r, c)

    def _phase_forage(self, active, ev: TickEvents) -> None:
        cfg = self.config
        na = self.n_agents
        while self.regrow and self.regrow[0][0] <= self.tick:
            _, tiles = self.regrow.popleft()
            for r, c in tiles:
                self.forest_ok[r, c] = True
                self.view[1, r + self.pad, c + self.pad] = 1
        r = self.row[:na]
        c = self.col[:na]
        on_forest = active & self.forest_ok[r, c]
        if on_forest.any():
            idx = np.flatnonzero(on_forest)
            self.food[idx] = cfg.food_cap
            self.xp[idx] += 1
            done = []
            for i in idx:
                rr, cc = int(r[i]), int(c[i])
                self.forest_ok[rr, cc] = False
                self.view[1, rr + self.pad, cc + self.pad] = 0
                done.append((rr, cc))
                ev.harvests.append((int(i), "food"))
            self.regrow.append((self.tick + cfg.forest_regrow, done))
        drink = active & self.near_water[r, c]
        if drink.any():
            idx = np.flatnonzero(drink)
            self.water[idx] = cfg.water_cap
            self.xp[idx] += 1
            ev.harvests.extend((int(i), "water") for i in idx)

    def _phase_metabolism(self, active, ev: TickEvents) -> None:
        cfg = self.config
        na = self.n_agents
        food = np.where(active, np.maximum(self.food - 1, 0), self.food)
        water = np.where(active, np.maximum(self.water - 1, 0), self.water)
        hp = self.hp[:na]
        fed = (food > 0) & (water > 0)
        delta = np.where(fed, np.minimum(cfg.regen, cfg.max_hp - hp), -np.minimum(cfg.starvation_damage, hp))
        delta = np.where(active, delta, 0)
        self.food = food
        self.water = water
        self.hp[:na] += delta
        ev.metabolism = delta.tolist()

    def _phase_deaths(self, ev: TickEvents) -> None:
        dying = np.flatnonzero(self.alive & (self.hp <= 0))
        for eid in dying:
            eid = int(eid)
            ev.deaths.append((eid, self._pending_credit.pop(eid, None)))
            self._remove(eid)

    def _phase_npcs(self, ev: TickEvents) -> None:
        cfg = self.config
        na = self.n_agents
        nn = cfg.npc_count
        moves = self.rng.integers(0, 5, size=nn)
        if nn == 0:
            return
        npc_alive = self.alive[na:]
        if not npc_alive.any():
            return
        reach = cfg.npc_aggro_radius
        pr, pc = self.row[:na], self.col[:na]
        palive = self.alive[:na]
        hits: list[tuple[int, int, int]] = []
        for j in np.flatnonzero(npc_alive):
            eid = na + int(j)
            r, c = self.row[eid], self.col[eid]
            target = -1
            if self.npc_hostile[j]:
                d = np.maximum(np.abs(pr - r), np.abs(pc - c))
                d = np.where(palive, d, reach + 1)
                k = int(np.argmin(d))
                if d[k] <= reach:
                    target = k
            elif self.tick - self.npc_last_hit[j] <= cfg.npc_memory:
                k = int(self.npc_last_attacker[j])
                if k >= 0 and self.alive[k] and max(abs(pr[k] - r), abs(pc[k] - c)) <= reach:
                    target = k
            if target >= 0:
                hits.append((eid, target, npc_damage(int(self.npc_level[j]))))
                continue
            m = int(moves[j])
            if m:
                dr, dc = MOVE_DELTAS[m]
                nr, nc = r + dr, c + dc
                if self.passable[nr, nc] and self.occ[nr, nc] < 0:
                    self._move(eid, nr, nc)
        for src, dst, dmg in hits:
            applied = int(min(dmg, self.hp[dst]))
            self.hp[dst] -= applied
            ev.attacks.append((src, dst, int(Style.MAGE), applied))


def spawn_episode(game_map: GameMap, submissions_order: Sequence[str], seed: int, config: ArenaConfig) -> WorldState:
    """Place teams on a seeded permutation of the map's anchors and scatter NPCs."""
    if len(submissions_order) != config.team_count:
        raise ValueError(f"expected {config.team_count} entrants, got {len(submissions_order)}")
    world = WorldState(config, game_map, seed)
    world.entrants = list(submissions_order)
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, 0x5350574E)))
    perm = rng.permutation(config.team_count)
    world.team_anchor = [game_map.anchors[int(k)] for k in perm]
    n = config.map_size
    free = world.passable.copy()
    for t, anchor in enumerate(world.team_anchor):
        slots = nearest_tiles(n, anchor, config.team_size, allowed=free)
        for eid, (r, c) in zip(world.team_members(t), slots):
            world._place(eid, r, c)
            world.spawn_row[eid] = r
            world.spawn_col[eid] = c
            world.hp[eid] = config.max_hp
            free[r, c] = False
    cand = np.flatnonzero(free.ravel())
    picks = rng.choice(cand, size=config.npc_count, replace=False) if config.npc_count else []
    for j, flat_idx in enumerate(picks):
        r, c = divmod(int(flat_idx), n)
        eid = world.n_agents + j
        level = npc_level((r, c), n)
        world._place(eid, r, c)
        world.npc_level[j] = level
        world.npc_hostile[j] = npc_hostile(level)
        world.hp[eid] = npc_max_hp(level)
    return world
