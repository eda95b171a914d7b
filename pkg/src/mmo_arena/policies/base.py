from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

import numpy as np

from ..config import ArenaConfig
from ..sim.world import NOOP, AgentAction
from .observation import TeamObservation


@dataclass
class EpisodeMeta:
    team_id: int
    seed: int  # policy seed for this team in this episode
    config: ArenaConfig = field(default_factory=ArenaConfig)


@runtime_checkable
class TeamPolicy(Protocol):
    def reset(self, meta: EpisodeMeta) -> None: ...

    def act(self, obs: TeamObservation) -> list[AgentAction]: ...


class NoopPolicy:
    """Every member stays put and never attacks."""

    name = "noop"

    def reset(self, meta: EpisodeMeta) -> None:
        self.team_size = meta.config.team_size

    def act(self, obs: TeamObservation) -> list[AgentAction]:
        return [NOOP] * len(obs.members)


def policy_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))
