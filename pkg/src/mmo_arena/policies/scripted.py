"""Rule-based team policies: Random, Forage, Combat, plus the crop navigation helpers they share."""

from __future__ import annotations

import numpy as np

from ..config import MOVE_DELTAS, VIEW_RADIUS, ArenaConfig, Move, Style, Tile
from ..sim.world import NOOP, AgentAction
from .base import EpisodeMeta, policy_rng
from .observation import VIEW, EntityView, MemberView, TeamObservation

C = VIEW_RADIUS
STEPS = (Move.N, Move.S, Move.E, Move.W)

_dr, _dc = np.meshgrid(np.arange(VIEW) - C, np.arange(VIEW) - C, indexing="ij")
# crop cells ordered nearest first: L-inf, then L1, then row, then col
SEARCH_ORDER = np.lexsort((_dc.ravel(), _dr.ravel(), (np.abs(_dr) + np.abs(_dc)).ravel(),
                           np.maximum(np.abs(_dr), np.abs(_dc)).ravel()))


def linf(a: tuple[int, int], b: tuple[int, int]) -> int:
    return max(abs(a[0] - b[0]), abs(a[1] - b[1]))


GRASS, FOREST, WATER = int(Tile.GRASS), int(Tile.FOREST), int(Tile.WATER)
STEP_DELTAS = [(int(m), MOVE_DELTAS[m]) for m in STEPS]
MOVE_OF = {int(m): m for m in Move}  # enum lookup without the Enum.__call__ overhead


def free_mask(crop: np.ndarray) -> np.ndarray:
    """Crop cells a member could stand on: passable and unoccupied (own cell included)."""
    kinds = crop[0]
    ok = ((kinds == GRASS) | (kinds == FOREST)) & (crop[2] == 0)
    ok[C, C] = True
    return ok


def passable_mask(crop: np.ndarray) -> np.ndarray:
    """Crop cells with walkable terrain, ignoring who stands there."""
    kinds = crop[0]
    return (kinds == GRASS) | (kinds == FOREST)


def step_toward(free: np.ndarray, dr: int, dc: int) -> Move:
    """Greedy single step toward offset (dr, dc); sidesteps when the direct moves are blocked."""
    if dr == 0 and dc == 0:
        return Move.STAY
    best, best_key = 0, None
    for m, (mr, mc) in STEP_DELTAS:
        if not free[C + mr, C + mc]:
            continue
        rr, rc = dr - mr, dc - mc
        key = (max(abs(rr), abs(rc)), abs(rr) + abs(rc))
        if best_key is None or key < best_key:
            best, best_key = m, key
    return MOVE_OF[best]


def step_away(free: np.ndarray, dr: int, dc: int) -> Move:
    """Move (or stay) maximizing distance from a threat at offset (dr, dc)."""
    best, best_key = 0, (max(abs(dr), abs(dc)), abs(dr) + abs(dc))
    for m, (mr, mc) in STEP_DELTAS:
        if not free[C + mr, C + mc]:
            continue
        rr, rc = dr - mr, dc - mc
        key = (max(abs(rr), abs(rc)), abs(rr) + abs(rc))
        if key > best_key:
            best, best_key = m, key
    return MOVE_OF[best]


def nearest_cell(mask: np.ndarray) -> tuple[int, int] | None:
    """Offset of the nearest True cell in a 15x15 mask, or None."""
    flat = mask.ravel()[SEARCH_ORDER]
    k = int(flat.argmax())
    if not flat[k]:
        return None
    idx = int(SEARCH_ORDER[k])
    return idx // VIEW - C, idx % VIEW - C


def forest_target(crop: np.ndarray, free: np.ndarray) -> tuple[int, int] | None:
    return nearest_cell((crop[1] == 1) & free)


def water_target(crop: np.ndarray, free: np.ndarray) -> tuple[int, int] | None:
    w = crop[0] == WATER
    adj = np.zeros(w.shape, dtype=bool)
    adj[1:, :] |= w[:-1, :]
    adj[:-1, :] |= w[1:, :]
    adj[:, 1:] |= w[:, :-1]
    adj[:, :-1] |= w[:, 1:]
    return nearest_cell(adj & free)


def search_heading(m: MemberView, map_size: int) -> tuple[int, int]:
    """Offset to walk along when nothing useful is in view: inland, then across to the far side."""
    c = map_size // 2
    if max(abs(c - m.position[0]), abs(c - m.position[1])) > C:
        tr, tc = c, c
    else:
        tr, tc = map_size - 1 - m.spawn_position[0], map_size - 1 - m.spawn_position[1]
    return int(np.clip(tr - m.position[0], -C, C)), int(np.clip(tc - m.position[1], -C, C))


def forage_move(m: MemberView, map_size: int, free: np.ndarray | None = None) -> Move:
    """Walk to the nearest source of whichever of food/water is lower.

    The other resource is only used as a target when it is itself below half;
    otherwise the member searches inland for what it needs.
    """
    if free is None:
        free = free_mask(m.crop)
    food_first = m.food <= m.water
    first, second = (forest_target, water_target) if food_first else (water_target, forest_target)
    other_level = m.water if food_first else m.food
    target = first(m.crop, free)
    if target is None and other_level < 50:
        target = second(m.crop, free)
    if target is None:
        target = search_heading(m, map_size)
    return step_toward(free, *target)


# flat-index neighbours of every crop cell, in STEP_DELTAS order
_NEIGHBOURS = [
    [(m, (r + mr) * VIEW + c + mc) for m, (mr, mc) in STEP_DELTAS if 0 <= r + mr < VIEW and 0 <= c + mc < VIEW]
    for r in range(VIEW)
    for c in range(VIEW)
]


def bfs_first_moves(free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Breadth-first search over free crop cells from the centre.

    Returns (dist, first) arrays: path length (-1 if unreachable) and the
    first move of one shortest path to each cell.
    """
    ok = free.ravel().tolist()
    centre = C * VIEW + C
    dist = [-1] * (VIEW * VIEW)
    first = [0] * (VIEW * VIEW)
    dist[centre] = 0
    for m, j in _NEIGHBOURS[centre]:
        if ok[j]:
            dist[j] = 1
            first[j] = m
    frontier = [j for _, j in _NEIGHBOURS[centre] if ok[j]]
    d = 1
    while frontier:
        d += 1
        nxt = []
        for i in frontier:
            f0 = first[i]
            for _, j in _NEIGHBOURS[i]:
                if dist[j] < 0 and ok[j]:
                    dist[j] = d
                    first[j] = f0
                    nxt.append(j)
        frontier = nxt
    return np.array(dist, dtype=np.int32).reshape(VIEW, VIEW), np.array(first, dtype=np.int8).reshape(VIEW, VIEW)


def path_step(free: np.ndarray, dr: int, dc: int, bfs=None) -> Move:
    """First move of a shortest in-crop path to the reachable cell closest to offset (dr, dc)."""
    if dr == 0 and dc == 0:
        return Move.STAY
    dist, first = bfs if bfs is not None else bfs_first_moves(free)
    reach = dist >= 0
    gap = np.maximum(np.abs(_dr - dr), np.abs(_dc - dc))
    l1 = np.abs(_dr - dr) + np.abs(_dc - dc)
    key = np.where(reach, (gap * 64 + l1) * 256 + dist, np.iinfo(np.int64).max)
    idx = int(key.ravel()[SEARCH_ORDER].argmin())
    r, c = divmod(int(SEARCH_ORDER[idx]), VIEW)
    return Move(int(first[r, c])) if (r, c) != (C, C) else Move.STAY


def nearest_reachable(mask: np.ndarray, bfs) -> tuple[int, int] | None:
    """Offset of the mask cell with the shortest in-crop path, or None."""
    dist = bfs[0]
    ok = mask & (dist >= 0)
    if not ok.any():
        return None
    key = np.where(ok, dist, np.iinfo(np.int32).max).ravel()[SEARCH_ORDER]
    r, c = divmod(int(SEARCH_ORDER[int(key.argmin())]), VIEW)
    return r - C, c - C


def forage_path_move(m: MemberView, map_size: int, free: np.ndarray, bfs) -> Move:
    """``forage_move`` with path-aware targets; used by the composite policies."""
    food_first = m.food <= m.water
    forest = (m.crop[1] == 1) & free
    w = m.crop[0] == WATER
    water = np.zeros_like(w)
    water[1:, :] |= w[:-1, :]
    water[:-1, :] |= w[1:, :]
    water[:, 1:] |= w[:, :-1]
    water[:, :-1] |= w[:, 1:]
    water &= free
    first, second = (forest, water) if food_first else (water, forest)
    other_level = m.water if food_first else m.food
    target = nearest_reachable(first, bfs)
    if target is None and other_level < 50:
        target = nearest_reachable(second, bfs)
    if target is None:
        return path_step(free, *search_heading(m, map_size), bfs=bfs)
    if target == (0, 0):
        return Move.STAY
    return Move(int(bfs[1][C + target[0], C + target[1]]))


def offset(m: MemberView, e: EntityView) -> tuple[int, int]:
    return e.position[0] - m.position[0], e.position[1] - m.position[1]


def nearest_entity(m: MemberView, entities: list[EntityView]) -> EntityView | None:
    best, best_key = None, None
    for e in entities:
        key = (linf(m.position, e.position), e.entity_id)
        if best_key is None or key < best_key:
            best, best_key = e, key
    return best


def longest_reaching_style(config: ArenaConfig, dist: int) -> Style | None:
    reach = [(config.style(s).range, s) for s in Style if config.style(s).range >= dist]
    return max(reach)[1] if reach else None


def hardest_hitting_style(config: ArenaConfig, dist: int) -> Style | None:
    reach = [(config.style(s).damage, -config.style(s).range, s) for s in Style if config.style(s).range >= dist]
    return max(reach)[2] if reach else None


class RandomPolicy:
    """Uniform random moves from the policy seed, never attacks.

    Draws one move per team slot every tick, alive or not, so the random
    stream does not depend on deaths.
    """

    name = "random"

    def reset(self, meta: EpisodeMeta) -> None:
        self.rng = policy_rng(meta.seed)

    def act(self, obs: TeamObservation) -> list[AgentAction]:
        moves = self.rng.integers(0, 5, size=len(obs.members))
        return [AgentAction(Move(int(k))) for k in moves]


class ForagePolicy:
    name = "forage"
    flee_radius = 5

    def reset(self, meta: EpisodeMeta) -> None:
        self.config = meta.config

    def act(self, obs: TeamObservation) -> list[AgentAction]:
        out = []
        for m in obs.members:
            if m is None:
                out.append(NOOP)
                continue
            threats = [e for e in obs.visible_to(m.slot) if e.hostile and linf(m.position, e.position) <= self.flee_radius]
            threat = nearest_entity(m, threats)
            if threat is not None:
                out.append(AgentAction(step_away(free_mask(m.crop), *offset(m, threat))))
            else:
                out.append(AgentAction(forage_move(m, obs.map_size)))
        return out


class CombatPolicy:
    """Attacks the nearest visible enemy player with the longest-range style that reaches it.

    ``aggressiveness`` in [0, 1] is the per-member, per-tick probability of
    acting at all; the rest of the time the member idles.
    """

    name = "combat"

    def __init__(self, aggressiveness: float = 1.0):
        if not 0.0 <= aggressiveness <= 1.0:
            raise ValueError("aggressiveness must be in [0, 1]")
        self.aggressiveness = aggressiveness

    def reset(self, meta: EpisodeMeta) -> None:
        self.config = meta.config
        self.rng = policy_rng(meta.seed)

    def member_action(self, m: MemberView, obs: TeamObservation) -> AgentAction:
        target = nearest_entity(m, [e for e in obs.visible_to(m.slot) if not e.is_npc])
        if target is None:
            return AgentAction(forage_move(m, obs.map_size))
        d = linf(m.position, target.position)
        style = longest_reaching_style(self.config, d)
        if style is not None:
            return AgentAction(Move.STAY, (style, target.entity_id))
        return AgentAction(step_toward(free_mask(m.crop), *offset(m, target)))

    def act(self, obs: TeamObservation) -> list[AgentAction]:
        roll = self.rng.random(len(obs.members))
        return [
            self.member_action(m, obs) if m is not None and roll[m.slot] < self.aggressiveness else NOOP
            for m in obs.members
        ]
