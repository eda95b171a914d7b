from __future__ import annotations

import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from mmo_arena.config import ArenaConfig, desk_config
from mmo_arena.orchestrator.pool import MatchDescriptor, worker_pool

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ROOT = Path(__file__).resolve().parents[1]
CORPUS_SIZE = 50
CORPUS_FIELD = ("combat",) * 5 + ("forage",) * 5 + ("random",) * 6


@pytest.fixture
def desk() -> ArenaConfig:
    return desk_config()


def tiny_config(**kw) -> ArenaConfig:
    """Small arena for unit tests of the step rules."""
    base = dict(map_size=16, team_count=2, team_size=2, horizon=32, npc_count=0)
    base.update(kw)
    return ArenaConfig(**base)


@pytest.fixture(scope="session")
def replay_corpus(tmp_path_factory) -> list[Path]:
    """50 full-size stage-1-field matches with replays, shared by the analytics and replay checks."""
    out = tmp_path_factory.mktemp("corpus")
    cfg = ArenaConfig().to_dict()
    descs = []
    for k in range(CORPUS_SIZE):
        entrants = tuple(f"builtin:{s}#{i}" for i, s in enumerate(CORPUS_FIELD))
        descs.append(MatchDescriptor(k, 9000 + k, entrants, CORPUS_FIELD, cfg, str(out / f"m{k:02d}.jsonl")))
    paths = []
    for o in worker_pool(descs, parallelism=min(8, os.cpu_count() or 1)):
        paths.append(Path(o.replay_path))
    return sorted(paths)


ACCEPTANCE: dict[str, tuple[str, str]] = {}


@pytest.fixture(scope="session")
def verdicts() -> dict[str, tuple[str, str]]:
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int(k.rstrip("ab")), k)):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<3} {status}  {detail}")
