"""Arena configuration and the small enums shared across the package."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from enum import IntEnum


class Tile(IntEnum):
    GRASS = 0
    FOREST = 1
    WATER = 2
    STONE = 3
    BORDER = 4


PASSABLE = (Tile.GRASS, Tile.FOREST)

# observation window is (2 * VIEW_RADIUS + 1) tiles square
VIEW_RADIUS = 7


class Move(IntEnum):
    STAY = 0
    N = 1
    S = 2
    E = 3
    W = 4


# (drow, dcol) per Move value
MOVE_DELTAS = ((0, 0), (-1, 0), (1, 0), (0, 1), (0, -1))


class Style(IntEnum):
    MELEE = 0
    RANGE = 1
    MAGE = 2


@dataclass(frozen=True)
class StyleStats:
    range: int
    damage: int


def default_combat() -> dict[str, StyleStats]:
    return {
        "melee": StyleStats(range=1, damage=10),
        "range": StyleStats(range=3, damage=7),
        "mage": StyleStats(range=4, damage=5),
    }


@dataclass(frozen=True)
class ArenaConfig:
    map_size: int = 128
    team_count: int = 16
    team_size: int = 8
    horizon: int = 1024
    npc_count: int = 64
    max_hp: int = 100
    food_cap: int = 100
    water_cap: int = 100
    combat: dict[str, StyleStats] = field(default_factory=default_combat)
    forage_xp_per_level: int = 4
    starvation_damage: int = 5
    regen: int = 5
    seed: int = 0

    # terrain generation
    forest_fraction: float = 0.15
    water_fraction: float = 0.10
    stone_fraction: float = 0.10
    noise_cell: int = 8
    resource_radius: int = 16
    map_retries: int = 16

    # mechanics not named in the competition rules
    forest_regrow: int = 20
    npc_aggro_radius: int = 4
    npc_memory: int = 10

    def __post_init__(self):
        if self.map_size < 16:
            raise ValueError(f"map_size must be >= 16, got {self.map_size}")
        if self.team_count < 1 or self.team_size < 1:
            raise ValueError("team_count and team_size must be positive")
        if self.n_agents + self.npc_count >= self.map_size**2:
            raise ValueError("too many entities for the map")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.team_size > 8:
            # observer masks are 8-bit
            raise ValueError("team_size must be <= 8")
        for name in ("melee", "range", "mage"):
            if name not in self.combat:
                raise ValueError(f"combat table missing style {name!r}")

    @property
    def n_agents(self) -> int:
        return self.team_count * self.team_size

    def style(self, style: Style) -> StyleStats:
        return self.combat[style.name.lower()]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["combat"] = {k: [v.range, v.damage] for k, v in sorted(self.combat.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArenaConfig":
        d = dict(d)
        if "combat" in d:
            d["combat"] = {k: StyleStats(*v) for k, v in d["combat"].items()}
        return cls(**d)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def replace(self, **changes) -> "ArenaConfig":
        return dataclasses.replace(self, **changes)


def desk_config(**overrides) -> ArenaConfig:
    """A scaled-down arena (64 tiles, 256 ticks) for quick experiments and tests."""
    base = dict(map_size=64, horizon=256, npc_count=32)
    base.update(overrides)
    return ArenaConfig(**base)
