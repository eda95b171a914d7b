"""Hand-built worlds for rule-level tests."""

from __future__ import annotations

import numpy as np

from mmo_arena.config import ArenaConfig, Tile
from mmo_arena.sim.mapgen import GameMap
from mmo_arena.sim.world import WorldState, npc_hostile, npc_max_hp


def open_map(size: int, features: dict[tuple[int, int], Tile] | None = None) -> GameMap:
    """All-grass interior inside a Border ring, with optional tile overrides."""
    tiles = np.full((size, size), Tile.GRASS, dtype=np.int8)
    tiles[0, :] = tiles[-1, :] = tiles[:, 0] = tiles[:, -1] = Tile.BORDER
    for (r, c), kind in (features or {}).items():
        tiles[r, c] = kind
    return GameMap(seed=0, size=size, tiles=tiles, anchors=[(1, 1)])


def make_world(config: ArenaConfig, agents: dict[int, tuple[int, int]],
               npcs: dict[int, tuple[int, int, int]] | None = None,
               features: dict[tuple[int, int], Tile] | None = None, seed: int = 0) -> WorldState:
    """World with agents at given positions (others absent) and NPCs as id -> (row, col, level)."""
    w = WorldState(config, open_map(config.map_size, features), seed)
    for eid, (r, c) in agents.items():
        w._place(eid, r, c)
        w.spawn_row[eid], w.spawn_col[eid] = r, c
        w.hp[eid] = config.max_hp
    for j, (r, c, level) in (npcs or {}).items():
        eid = config.n_agents + j
        w._place(eid, r, c)
        w.npc_level[j] = level
        w.npc_hostile[j] = npc_hostile(level)
        w.hp[eid] = npc_max_hp(level)
    return w
