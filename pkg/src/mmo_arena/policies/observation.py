"""Grouped team observations and their numeric featurization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import VIEW_RADIUS, Tile

VIEW = 2 * VIEW_RADIUS + 1
FEATURE_VERSION = 1


@dataclass
class MemberView:
    slot: int
    agent_id: int
    position: tuple[int, int]
    spawn_position: tuple[int, int]
    hp: int
    food: int
    water: int
    forage_level: int
    equipment_level: int
    crop: np.ndarray  # (3, 15, 15) int8: tile kind, harvestable forest, occupancy

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "id": self.agent_id,
            "pos": list(self.position),
            "spawn": list(self.spawn_position),
            "hp": self.hp,
            "food": self.food,
            "water": self.water,
            "forage": self.forage_level,
            "equip": self.equipment_level,
            "crop": ["".join(map(str, ch.ravel().tolist())) for ch in self.crop],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MemberView":
        crop = np.array([[int(ch) for ch in s] for s in d["crop"]], dtype=np.int8).reshape(3, VIEW, VIEW)
        return cls(d["slot"], d["id"], tuple(d["pos"]), tuple(d["spawn"]), d["hp"], d["food"], d["water"],
                   d["forage"], d["equip"], crop)


@dataclass
class EntityView:
    entity_id: int
    is_npc: bool
    team_id: int  # -1 for NPCs
    position: tuple[int, int]
    hp: int
    level: int
    hostile: bool
    mask: int  # bit i set when team slot i sees the entity

    def to_dict(self) -> dict:
        return {"id": self.entity_id, "npc": self.is_npc, "team": self.team_id, "pos": list(self.position),
                "hp": self.hp, "level": self.level, "hostile": self.hostile, "mask": self.mask}

    @classmethod
    def from_dict(cls, d: dict) -> "EntityView":
        return cls(d["id"], d["npc"], d["team"], tuple(d["pos"]), d["hp"], d["level"], d["hostile"], d["mask"])


@dataclass
class TeamObservation:
    team_id: int
    tick: int
    horizon: int
    map_size: int
    members: list[MemberView | None]
    entities: list[EntityView] = field(default_factory=list)

    @property
    def living(self) -> int:
        return sum(m is not None for m in self.members)

    def visible_to(self, slot: int) -> list[EntityView]:
        bit = 1 << slot
        return [e for e in self.entities if e.mask & bit]

    def to_dict(self) -> dict:
        return {
            "team": self.team_id,
            "tick": self.tick,
            "horizon": self.horizon,
            "map_size": self.map_size,
            "living": self.living,
            "members": [m.to_dict() if m is not None else None for m in self.members],
            "entities": [e.to_dict() for e in self.entities],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TeamObservation":
        return cls(
            team_id=d["team"],
            tick=d["tick"],
            horizon=d["horizon"],
            map_size=d["map_size"],
            members=[MemberView.from_dict(m) if m is not None else None for m in d["members"]],
            entities=[EntityView.from_dict(e) for e in d["entities"]],
        )


def build_observations(world) -> list[TeamObservation]:
    """One observation per team for the current tick."""
    cfg = world.config
    na = world.n_agents
    ts = cfg.team_size
    rad = VIEW_RADIUS
    levels = world.forage_levels()
    alive = world.alive
    ents = np.flatnonzero(alive)
    er, ec = world.row[ents], world.col[ents]
    ar, ac = world.row[:na], world.col[:na]
    # (agents, living entities) window membership
    vis = (np.abs(ar[:, None] - er[None, :]) <= rad) & (np.abs(ac[:, None] - ec[None, :]) <= rad)
    vis &= alive[:na, None]
    weights = (1 << (np.arange(na) % ts)).astype(np.int64)
    ent_team = np.where(ents < na, world.team[np.minimum(ents, na - 1)], -1)

    # python scalars once per tick; per-item int() on numpy values dominates otherwise
    hp, equip = world.hp.tolist(), world.equip.tolist()
    food, water, lv = world.food.tolist(), world.water.tolist(), levels.tolist()
    srow, scol = world.spawn_row.tolist(), world.spawn_col.tolist()
    arl, acl, alive_l = ar.tolist(), ac.tolist(), alive.tolist()
    ents_l, erl, ecl, team_l = ents.tolist(), er.tolist(), ec.tolist(), ent_team.tolist()
    npc_lv, npc_host = world.npc_level.tolist(), world.npc_hostile.tolist()
    view = world.view

    out = []
    for t in range(cfg.team_count):
        lo = t * ts
        members: list[MemberView | None] = []
        for slot in range(ts):
            i = lo + slot
            if not alive_l[i]:
                members.append(None)
                continue
            r, c = arl[i], acl[i]
            members.append(
                MemberView(
                    slot=slot,
                    agent_id=i,
                    position=(r, c),
                    spawn_position=(srow[i], scol[i]),
                    hp=hp[i],
                    food=food[i],
                    water=water[i],
                    forage_level=lv[i],
                    equipment_level=equip[i],
                    crop=view[:, r : r + VIEW, c : c + VIEW].copy(),
                )
            )
        masks = weights[lo : lo + ts] @ vis[lo : lo + ts]
        sel = np.flatnonzero((masks > 0) & (ent_team != t)).tolist()
        mask_l = masks.tolist()
        entities = []
        for k in sel:
            eid = ents_l[k]
            if eid < na:
                entities.append(EntityView(eid, False, team_l[k], (erl[k], ecl[k]), hp[eid], equip[eid],
                                           True, mask_l[k]))
            else:
                j = eid - na
                entities.append(EntityView(eid, True, -1, (erl[k], ecl[k]), hp[eid], npc_lv[j],
                                           bool(npc_host[j]), mask_l[k]))
        out.append(TeamObservation(t, world.tick, cfg.horizon, cfg.map_size, members, entities))
    return out


def build_observation(world, team_id: int) -> TeamObservation:
    if not 0 <= team_id < world.config.team_count:
        raise ValueError(f"unknown team {team_id}")
    return build_observations(world)[team_id]


# -- featurization ---------------------------------------------------------

MEMBER_FEATURES = (
    "present", "slot", "agent_id", "row", "col", "spawn_row", "spawn_col",
    "hp", "food", "water", "forage_level", "equipment_level",
)
ENTITY_FEATURES = ("present", "is_npc", "row", "col", "hp", "level", "hostile")
MAP_CHANNELS = tuple(k.name.lower() for k in Tile) + ("harvestable", "player", "npc")
GLOBAL_FEATURES = ("time", "living_teammates")


@dataclass
class FeatureVectorBundle:
    version: int
    members: np.ndarray  # (team_size, len(MEMBER_FEATURES))
    local_map: np.ndarray  # (team_size, len(MAP_CHANNELS), 15, 15)
    entities: np.ndarray  # (max_entities, len(ENTITY_FEATURES))
    entity_observers: np.ndarray  # (max_entities, team_size)
    global_: np.ndarray  # (len(GLOBAL_FEATURES),)

    def arrays(self) -> dict[str, np.ndarray]:
        return {
            "members": self.members,
            "local_map": self.local_map,
            "entities": self.entities,
            "entity_observers": self.entity_observers,
            "global": self.global_,
        }


def featurize(obs: TeamObservation, max_hp: int = 100, resource_cap: int = 100,
              max_entities: int = 32, n_agents: int | None = None) -> FeatureVectorBundle:
    """Fixed-shape float32 encoding. Positions are divided by map_size; absent slots are all zero."""
    ts = len(obs.members)
    n = float(obs.map_size)
    n_ids = float(n_agents if n_agents is not None else 128)
    members = np.zeros((ts, len(MEMBER_FEATURES)), dtype=np.float32)
    local = np.zeros((ts, len(MAP_CHANNELS), VIEW, VIEW), dtype=np.float32)
    for slot, m in enumerate(obs.members):
        if m is None:
            continue
        members[slot] = (
            1.0, slot / ts, m.agent_id / n_ids, m.position[0] / n, m.position[1] / n,
            m.spawn_position[0] / n, m.spawn_position[1] / n, m.hp / max_hp,
            m.food / resource_cap, m.water / resource_cap, m.forage_level / 50.0, m.equipment_level / 20.0,
        )
        kinds = m.crop[0]
        for k in Tile:
            local[slot, int(k)] = kinds == k
        local[slot, len(Tile)] = m.crop[1]
        local[slot, len(Tile) + 1] = m.crop[2] == 1
        local[slot, len(Tile) + 2] = m.crop[2] == 2
    ents = np.zeros((max_entities, len(ENTITY_FEATURES)), dtype=np.float32)
    observers = np.zeros((max_entities, ts), dtype=np.float32)
    # most-observed entities first, so truncation keeps the ones the team agrees on
    ordered = sorted(obs.entities, key=lambda e: (-bin(e.mask).count("1"), e.entity_id))
    for k, e in enumerate(ordered[:max_entities]):
        ents[k] = (1.0, float(e.is_npc), e.position[0] / n, e.position[1] / n, e.hp / max_hp, e.level / 20.0,
                   float(e.hostile))
        observers[k] = [(e.mask >> s) & 1 for s in range(ts)]
    glob = np.array([obs.tick / obs.horizon, obs.living / ts], dtype=np.float32)
    return FeatureVectorBundle(FEATURE_VERSION, members, local, ents, observers, glob)
