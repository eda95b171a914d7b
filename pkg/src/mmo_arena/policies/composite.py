"""Scripted stand-ins for the stronger PvE opponents.

Stage 2 switches mode per agent using only that agent's own view. Stage 3
adds team-level coordination: fixed roles and a shared focus-fire target.
"""

from __future__ import annotations

import numpy as np

from ..config import Move
from ..sim.world import NOOP, AgentAction
from .base import EpisodeMeta, policy_rng
from .observation import EntityView, MemberView, TeamObservation
from .scripted import (
    C,
    bfs_first_moves,
    forage_path_move,
    free_mask,
    hardest_hitting_style,
    linf,
    nearest_entity,
    offset,
    passable_mask,
    path_step,
    step_away,
)

SAFE_FOOD = 50
SAFE_WATER = 50
SAFE_HP = 50
# explorers travel until a resource drops this low
EXPLORER_RESERVE = 40
BLOCKED_TICKS = 2
# role goals: top forage tier, a margin past the medium explore tier
FORAGER_DONE = 50
EXPLORER_DONE = 72
RETREAT_RADIUS = 5
# NPCs this far above own equipment are hunted only at BRAVE_HP or more
PREY_MARGIN = 6
BRAVE_HP = 70
# an explorer whose displacement from spawn has not grown for this long takes a detour
STALL_TICKS = 24
DETOUR_TICKS = 32
COMPASS = ((-1, 0), (1, 0), (0, 1), (0, -1), (-1, 1), (-1, -1), (1, 1), (1, -1))

EXPLORER, FORAGER, FIGHTER = "explorer", "forager", "fighter"
STAGE3_ROLES = (EXPLORER, EXPLORER, FORAGER, FORAGER, FORAGER, FORAGER, FIGHTER, FIGHTER)


def popcount(x: int) -> int:
    return bin(x).count("1")


class CompositePolicy:
    """Mode switcher: forage until safe, then hunt weak NPCs, then fight players, else explore."""

    def __init__(self, stage: int):
        if stage not in (2, 3):
            raise ValueError(f"composite policies exist for stages 2 and 3, not {stage}")
        self.stage = stage
        self.name = f"stage{stage}"

    def reset(self, meta: EpisodeMeta) -> None:
        self.config = meta.config
        self.rng = policy_rng(meta.seed)
        ts = meta.config.team_size
        self.last_pos: list[tuple[int, int] | None] = [None] * ts
        self.blocked = [0] * ts
        self.last_move = [Move.STAY] * ts
        self.best_disp = [0] * ts
        self.last_gain = [0] * ts
        self.detour: list[tuple[int, int, int] | None] = [None] * ts  # (dr, dc, until tick)
        self.tick = 0
        self.roles = [STAGE3_ROLES[s % len(STAGE3_ROLES)] for s in range(ts)]

    # -- per-member pieces -------------------------------------------------------

    def _safe(self, m: MemberView, role: str | None = None) -> bool:
        if role == EXPLORER:
            return min(m.food, m.water) >= EXPLORER_RESERVE and m.hp >= EXPLORER_RESERVE
        return m.food >= SAFE_FOOD and m.water >= SAFE_WATER and m.hp >= SAFE_HP

    def _attack_or_close(self, m: MemberView, free: np.ndarray, bfs, target: EntityView) -> AgentAction:
        d = linf(m.position, target.position)
        style = hardest_hitting_style(self.config, d)
        if style is not None:
            return AgentAction(Move.STAY, (style, target.entity_id))
        return AgentAction(path_step(free, *offset(m, target), bfs=bfs))

    def _prey(self, m: MemberView, seen: list[EntityView]) -> EntityView | None:
        # NPCs worth hunting: they would raise equipment and are not far above it
        reach = m.equipment_level + (PREY_MARGIN if m.hp < BRAVE_HP else 20)
        weak = [e for e in seen if e.is_npc and m.equipment_level < e.level <= reach]
        return nearest_entity(m, weak)

    def _explore(self, m: MemberView, free: np.ndarray, map_size: int, bfs) -> Move:
        """Head for the point mirrored through the map centre from spawn, detouring when stalled."""
        s = m.slot
        det = self.detour[s]
        if det is not None and self.tick < det[2]:
            return path_step(free, det[0] * C, det[1] * C, bfs=bfs)
        self.detour[s] = None
        if self.tick - self.last_gain[s] >= STALL_TICKS:
            dr, dc = COMPASS[int(self.rng.integers(len(COMPASS)))]
            self.detour[s] = (dr, dc, self.tick + DETOUR_TICKS)
            self.last_gain[s] = self.tick + DETOUR_TICKS
            return path_step(free, dr * C, dc * C, bfs=bfs)
        tr = map_size - 1 - m.spawn_position[0]
        tc = map_size - 1 - m.spawn_position[1]
        dr = int(np.clip(tr - m.position[0], -C, C))
        dc = int(np.clip(tc - m.position[1], -C, C))
        return path_step(free, dr, dc, bfs=bfs)

    def _role(self, m: MemberView) -> str | None:
        """Stage-3 role; members whose own task is done become fighters."""
        if self.stage != 3:
            return None
        role = self.roles[m.slot]
        if role == FORAGER and m.forage_level >= FORAGER_DONE:
            return FIGHTER
        if role == EXPLORER and self.best_disp[m.slot] >= EXPLORER_DONE:
            return FIGHTER
        return role

    def _sidestep(self, free: np.ndarray, move: Move) -> Move:
        moves = [k for k in (1, 2, 3, 4) if k != move and free[C + (-1, 1, 0, 0)[k - 1], C + (0, 0, 1, -1)[k - 1]]]
        if not moves:
            return Move.STAY
        return Move(moves[int(self.rng.integers(len(moves)))])

    def _track(self, m: MemberView) -> None:
        # count ticks where a chosen move did not happen
        if self.last_pos[m.slot] == m.position and self.last_move[m.slot] != Move.STAY:
            self.blocked[m.slot] += 1
        else:
            self.blocked[m.slot] = 0
        self.last_pos[m.slot] = m.position
        disp = linf(m.position, m.spawn_position)
        if disp > self.best_disp[m.slot]:
            self.best_disp[m.slot] = disp
            self.last_gain[m.slot] = self.tick

    def member_action(self, m: MemberView, obs: TeamObservation, focus: EntityView | None) -> AgentAction:
        free = free_mask(m.crop)
        # plan over terrain only: occupied cells usually clear as the team moves in id order
        bfs = bfs_first_moves(passable_mask(m.crop))
        seen = obs.visible_to(m.slot)
        role = self._role(m)

        # never walk into a strong hostile NPC
        danger = [e for e in seen if e.is_npc and e.hostile and e.level > m.equipment_level + PREY_MARGIN
                  and m.hp < BRAVE_HP
                  and linf(m.position, e.position) <= self.config.npc_aggro_radius + 1]
        threat = nearest_entity(m, danger)
        if threat is not None:
            return AgentAction(step_away(free, *offset(m, threat)))
        if m.hp < SAFE_HP:
            # hurt members back off from players so regeneration can work
            hunter = nearest_entity(m, [e for e in seen if not e.is_npc])
            if hunter is not None and linf(m.position, hunter.position) <= RETREAT_RADIUS:
                return AgentAction(step_away(free, *offset(m, hunter)))

        if focus is not None and not focus.is_npc and m.hp >= SAFE_HP and focus.mask & (1 << m.slot):
            # everyone in reach joins focus fire on a player; only fighters chase
            style = hardest_hitting_style(self.config, linf(m.position, focus.position))
            if style is not None or role == FIGHTER:
                return self._attack_or_close(m, free, bfs, focus)

        if not self._safe(m, role) or role == FORAGER:
            players = [e for e in seen if not e.is_npc and linf(m.position, e.position) <= 2]
            target = nearest_entity(m, players)
            if target is not None and m.hp >= SAFE_HP:
                return self._attack_or_close(m, free, bfs, target)
            return AgentAction(forage_path_move(m, obs.map_size, free, bfs))

        if role == EXPLORER:
            # explorers cross NPC country; take equipment on the way
            prey = self._prey(m, seen)
            if prey is not None and m.hp >= BRAVE_HP:
                return self._attack_or_close(m, free, bfs, prey)
            return AgentAction(self._explore(m, free, obs.map_size, bfs))

        if focus is not None and focus.mask & (1 << m.slot):
            return self._attack_or_close(m, free, bfs, focus)
        players = [e for e in seen if not e.is_npc]
        target = nearest_entity(m, players)
        if target is not None:
            return self._attack_or_close(m, free, bfs, target)
        prey = self._prey(m, seen)
        if prey is not None:
            return self._attack_or_close(m, free, bfs, prey)
        return AgentAction(self._explore(m, free, obs.map_size, bfs))

    def focus_target(self, obs: TeamObservation) -> EntityView | None:
        """Lowest-HP enemy seen by at least two members (ties: lowest id)."""
        if self.stage != 3:
            return None
        shared = [e for e in obs.entities if popcount(e.mask) >= 2]
        if not shared:
            return None
        return min(shared, key=lambda e: (e.hp, e.entity_id))

    def act(self, obs: TeamObservation) -> list[AgentAction]:
        self.tick = obs.tick
        focus = self.focus_target(obs)
        out = []
        for m in obs.members:
            if m is None:
                out.append(NOOP)
                continue
            self._track(m)
            a = self.member_action(m, obs, focus)
            if a.attack is None and a.move != Move.STAY and self.blocked[m.slot] >= BLOCKED_TICKS:
                a = AgentAction(self._sidestep(free_mask(m.crop), a.move))
            self.last_move[m.slot] = a.move
            out.append(a)
        return out


def composite_policy(stage: int) -> CompositePolicy:
    return CompositePolicy(stage)
