from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tiny_config
from helpers import make_world
from mmo_arena.config import Move, Style, Tile
from mmo_arena.policies.base import EpisodeMeta, NoopPolicy
from mmo_arena.policies.composite import CompositePolicy
from mmo_arena.policies.observation import (
    ENTITY_FEATURES,
    MAP_CHANNELS,
    MEMBER_FEATURES,
    TeamObservation,
    build_observation,
    build_observations,
    featurize,
)
from mmo_arena.policies.registry import PolicySpecError, make_policy, validate_spec
from mmo_arena.policies.scripted import CombatPolicy, ForagePolicy, RandomPolicy
from mmo_arena.sim.world import NOOP, AgentAction

CFG = tiny_config()  # 2 teams of 2 on a 16x16 map
CFGN = tiny_config(npc_count=2)


def ready(policy, team=0, seed=1, config=CFG):
    policy.reset(EpisodeMeta(team, seed, config))
    return policy


# -- observations -----------------------------------------------------------------


def test_masks_record_which_member_sees_what():
    w = make_world(CFG, {0: (5, 5), 1: (5, 12), 2: (5, 9), 3: (12, 13)})
    obs = build_observation(w, 0)
    by_id = {e.entity_id: e for e in obs.entities}
    assert set(by_id) == {2, 3}
    assert by_id[2].mask == 0b11
    # 8 columns from member 0, inside member 1's window
    assert by_id[3].mask == 0b10
    assert all(e.team_id == 1 for e in obs.entities)


def test_out_of_view_entities_are_dropped():
    w = make_world(CFG, {0: (2, 2), 1: (2, 3), 2: (13, 13), 3: (13, 12)})
    assert build_observation(w, 0).entities == []


def test_own_team_never_listed_as_entity():
    w = make_world(CFG, {0: (5, 5), 1: (5, 6), 2: (5, 7), 3: (6, 7)})
    for obs in build_observations(w):
        assert all(e.team_id != obs.team_id for e in obs.entities)


def test_crop_pads_with_border_outside_map():
    w = make_world(CFG, {0: (1, 1)})
    m = build_observation(w, 0).members[0]
    kinds, occ = m.crop[0], m.crop[2]
    assert kinds.shape == (15, 15)
    assert (kinds[:7, :] == Tile.BORDER).all() and (kinds[:, :7] == Tile.BORDER).all()
    assert kinds[7, 7] == Tile.GRASS
    assert occ[7, 7] == 1


def test_npc_in_view_carries_level_and_hostility():
    w = make_world(CFGN, {0: (5, 5)}, npcs={0: (5, 7, 12), 1: (6, 5, 3)})
    ents = {e.entity_id: e for e in build_observation(w, 0).entities}
    na = CFGN.n_agents
    assert ents[na].is_npc and ents[na].level == 12 and ents[na].hostile
    assert not ents[na + 1].hostile and ents[na + 1].team_id == -1
    assert build_observation(w, 0).members[0].crop[2][7, 9] == 2


def test_dead_members_are_none():
    w = make_world(CFG, {0: (5, 5), 2: (9, 9)})
    obs = build_observation(w, 0)
    assert obs.members[1] is None and obs.living == 1
    with pytest.raises(ValueError):
        build_observation(w, 5)


def test_observation_json_round_trip():
    w = make_world(CFGN, {0: (3, 4), 1: (5, 5), 2: (6, 6)}, npcs={0: (4, 4, 2)})
    obs = build_observation(w, 0)
    back = TeamObservation.from_dict(json.loads(json.dumps(obs.to_dict())))
    assert back.to_dict() == obs.to_dict()
    assert np.array_equal(back.members[0].crop, obs.members[0].crop)


# -- featurization -------------------------------------------------------------


def test_featurize_shapes_and_values():
    w = make_world(CFG, {0: (4, 8), 1: (5, 5), 2: (6, 6)})
    w.tick = 16
    f = featurize(build_observation(w, 0), n_agents=CFG.n_agents)
    assert f.members.shape == (2, len(MEMBER_FEATURES))
    assert f.local_map.shape == (2, len(MAP_CHANNELS), 15, 15)
    assert f.entities.shape == (32, len(ENTITY_FEATURES))
    assert all(a.dtype == np.float32 for a in f.arrays().values())
    row = dict(zip(MEMBER_FEATURES, f.members[0]))
    assert row["present"] == 1 and row["row"] == pytest.approx(4 / 16) and row["col"] == pytest.approx(8 / 16)
    assert row["hp"] == pytest.approx(1.0)
    assert f.global_.tolist() == [0.5, 1.0]
    # each tile belongs to exactly one kind channel
    kinds = f.local_map[0, : len(Tile)]
    assert (kinds.sum(axis=0) == 1).all()
    assert f.entities[0, 0] == 1 and f.entities[1:, 0].sum() == 0
    assert f.entity_observers[0].tolist() == [1.0, 1.0]


def test_featurize_all_dead_team_is_zero():
    w = make_world(CFG, {2: (6, 6)})
    f = featurize(build_observation(w, 0))
    assert not f.members.any() and not f.local_map.any() and not f.entities.any()
    assert f.global_[1] == 0


def test_featurize_truncates_to_most_observed():
    w = make_world(CFG, {0: (5, 5), 1: (5, 9), 2: (5, 7), 3: (5, 1)})
    f = featurize(build_observation(w, 0), max_entities=1)
    # agent 2 is seen by both members, agent 3 only by member 0
    assert f.entity_observers[0].tolist() == [1.0, 1.0]
    assert f.entities[0, 3] == pytest.approx(7 / 16)


# -- scripted policies -------------------------------------------------------------


@pytest.mark.parametrize("dist,style", [(1, Style.MAGE), (3, Style.MAGE), (4, Style.MAGE)])
def test_combat_attacks_with_longest_reach(dist, style):
    w = make_world(CFG, {0: (5, 5), 2: (5, 5 + dist)})
    acts = ready(CombatPolicy(1.0)).act(build_observation(w, 0))
    assert acts[0] == AgentAction(Move.STAY, (style, 2))
    assert acts[1] == NOOP


def test_combat_closes_distance_beyond_reach():
    w = make_world(CFG, {0: (5, 5), 2: (5, 11)})
    acts = ready(CombatPolicy(1.0)).act(build_observation(w, 0))
    assert acts[0] == AgentAction(Move.E)


def test_combat_ignores_npcs():
    w = make_world(CFGN, {0: (5, 5)}, npcs={0: (5, 6, 1)})
    acts = ready(CombatPolicy(1.0), config=CFGN).act(build_observation(w, 0))
    assert acts[0].attack is None


def test_zero_aggressiveness_idles():
    w = make_world(CFG, {0: (5, 5), 1: (6, 6), 2: (5, 7)})
    pol = ready(CombatPolicy(0.0))
    for _ in range(20):
        assert pol.act(build_observation(w, 0)) == [NOOP, NOOP]
    with pytest.raises(ValueError):
        CombatPolicy(1.5)


def test_aggressiveness_is_acting_rate():
    w = make_world(CFG, {0: (5, 5), 2: (5, 7)})
    pol = ready(CombatPolicy(0.3), seed=9)
    obs = build_observation(w, 0)
    acted = sum(pol.act(obs)[0] != NOOP for _ in range(4000))
    assert acted / 4000 == pytest.approx(0.3, abs=0.03)


def test_forage_flees_hostile_npc():
    w = make_world(CFGN, {0: (8, 8)}, npcs={0: (8, 10, 12)})
    assert ready(ForagePolicy(), config=CFGN).act(build_observation(w, 0))[0] == AgentAction(Move.W)


def test_forage_heads_for_water_when_thirsty():
    w = make_world(CFG, {0: (8, 8)}, features={(8, 11): Tile.WATER})
    w.water[0] = 5
    w.food[0] = 100
    act = ready(ForagePolicy()).act(build_observation(w, 0))[0]
    assert act.move == Move.E and act.attack is None


@given(st.integers(0, 2**63 - 1))
def test_random_policy_is_seed_deterministic(seed):
    w = make_world(CFG, {0: (5, 5), 1: (6, 6)})
    obs = build_observation(w, 0)
    a, b = ready(RandomPolicy(), seed=seed), ready(RandomPolicy(), seed=seed)
    assert [a.act(obs) for _ in range(10)] == [b.act(obs) for _ in range(10)]
    assert all(x.attack is None for x in a.act(obs))


def test_random_policy_seeds_differ():
    w = make_world(CFG, {0: (5, 5), 1: (6, 6)})
    obs = build_observation(w, 0)
    a, b = ready(RandomPolicy(), seed=1), ready(RandomPolicy(), seed=2)
    assert [a.act(obs) for _ in range(20)] != [b.act(obs) for _ in range(20)]


def test_noop_policy():
    w = make_world(CFG, {0: (5, 5), 1: (6, 6)})
    assert ready(NoopPolicy()).act(build_observation(w, 0)) == [NOOP, NOOP]


# -- composite policies -----------------------------------------------------------


def test_stage3_focus_fires_on_weakest_shared_target():
    w = make_world(CFG, {0: (5, 5), 1: (5, 7), 2: (5, 6), 3: (4, 6)})
    w.hp[2], w.hp[3] = 60, 30
    obs = build_observation(w, 0)
    pol = ready(CompositePolicy(3))
    assert pol.focus_target(obs).entity_id == 3
    acts = pol.act(obs)
    assert all(a.attack is not None and a.attack[1] == 3 for a in acts)


def test_stage2_members_decide_independently():
    w = make_world(CFG, {0: (5, 5), 1: (5, 7), 2: (5, 6), 3: (4, 6)})
    w.hp[2], w.hp[3] = 60, 30
    full = build_observation(w, 0)
    assert ready(CompositePolicy(2)).focus_target(full) is None
    alone = build_observation(w, 0)
    alone.members[1] = None
    a = ready(CompositePolicy(2)).act(full)[0]
    b = ready(CompositePolicy(2)).act(alone)[0]
    assert a == b


def test_composite_stage_validation():
    with pytest.raises(ValueError):
        CompositePolicy(1)


# -- registry -----------------------------------------------------------------------


@pytest.mark.parametrize("spec,cls", [
    ("random", RandomPolicy), ("forage", ForagePolicy), ("noop", NoopPolicy),
    ("combat", CombatPolicy), ("combat:0.25", CombatPolicy), ("stage2", CompositePolicy),
    ("stage3", CompositePolicy),
])
def test_make_policy(spec, cls):
    assert isinstance(make_policy(spec), cls)
    assert validate_spec(spec) == spec


def test_combat_spec_argument():
    assert make_policy("combat:0.25").aggressiveness == 0.25


@pytest.mark.parametrize("spec", ["bogus", "random:1", "combat:x", "combat:2", "exec:", "stage4"])
def test_bad_specs(spec):
    with pytest.raises(PolicySpecError):
        make_policy(spec)
