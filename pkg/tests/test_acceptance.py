"""Acceptance criteria 1-11, each at its stated tolerance.

Every test records a PASS/FAIL line that is printed in the terminal summary.
Slow criteria are marked ``slow``; run just this file with
``pytest tests/test_acceptance.py -v``.
"""

from __future__ import annotations

import io
import itertools
import os
import sys
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from mmo_arena.analytics import check_replay, rescore_replay, team_trajectories, visitation_heatmap
from mmo_arena.config import ArenaConfig, desk_config
from mmo_arena.orchestrator.pool import MatchDescriptor, run_descriptor, worker_pool
from mmo_arena.orchestrator.pve import Submission, advance_stage, evaluate_pve, synthetic_result
from mmo_arena.orchestrator.tournament import new_tournament, run_tournament
from mmo_arena.rating import (
    Rating,
    RatingConfig,
    update_ffa,
    update_two_player,
    v_exceeds,
    v_within,
    w_exceeds,
    w_within,
)
from mmo_arena.replay import ReplayError, read_replay
from mmo_arena.scoring import DEFAULT_THRESHOLDS, MAX_ACHIEVEMENT, TASKS, TeamTaskStats, task_points, team_achievement
from mmo_arena.policies.external import ExternalPolicy
from mmo_arena.sim.episode import run_episode
from mmo_arena.sim.mapgen import derive_seed, generate_map

from conftest import CORPUS_FIELD, ROOT, tiny_config
from test_rating import ALPHAS, T_GRID, closed_form_oracle, quad_moments
from test_scoring import oracle_points

CPUS = os.cpu_count() or 1
PAR = min(8, CPUS)
STAGE1_FIELD = ("combat",) * 5 + ("forage",) * 5 + ("random",) * 5


def record(verdicts, key: str, ok: bool, detail: str) -> None:
    verdicts[key] = ("PASS" if ok else "FAIL", detail)
    assert ok, detail


# 1 ------------------------------------------------------------------------------------


def test_c1_scoring_table(verdicts):
    t0 = time.perf_counter()
    bad = [(task, v) for task in TASKS for v in range(0, 200)
           if task_points(v, getattr(DEFAULT_THRESHOLDS, task)) != oracle_points(task, v)]
    dt = time.perf_counter() - t0
    record(verdicts, "1", not bad and dt < 1.0, f"{4 * 200} values checked, {len(bad)} mismatches, {dt:.3f} s")


# 2 ------------------------------------------------------------------------------------


def test_c2_bound_and_gate(verdicts):
    best = max(team_achievement(TeamTaskStats(*v)) for v in itertools.product((0, 200), repeat=4))
    flips = {}
    for score in (24, 25):
        sub = Submission("s", "random")
        advance_stage(sub, synthetic_result(1, [[score, 0]] + [[0, 0]] * 9))
        flips[score] = sub.pvp_qualified
    ok = best == MAX_ACHIEVEMENT == 84 and flips == {24: False, 25: True}
    record(verdicts, "2", ok, f"max achievement {best}; qualified at 24={flips[24]}, at 25={flips[25]}")


# 3 ------------------------------------------------------------------------------------


def test_c3_trueskill_oracles(verdicts):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    fg_err = 0.0
    for _ in range(1000):
        cfg = RatingConfig(beta=float(rng.uniform(1, 8)), tau=float(rng.uniform(0, 0.5)),
                           p_draw=float(rng.uniform(0, 0.4)))
        a = Rating(float(rng.uniform(0, 50)), float(rng.uniform(0.5, 10)))
        b = Rating(float(rng.uniform(0, 50)), float(rng.uniform(0.5, 10)))
        draw = bool(rng.random() < 0.3)
        cw, cl = update_two_player(a, b, cfg, is_draw=draw)
        fg = update_ffa({"a": a, "b": b}, [("a", 1), ("b", 1 if draw else 2)], cfg).ratings
        fg_err = max(fg_err, abs(fg["a"].mu - cw.mu), abs(fg["a"].sigma - cw.sigma),
                     abs(fg["b"].mu - cl.mu), abs(fg["b"].sigma - cl.sigma))
    vw_err = 0.0
    for t, alpha in ((float(t), a) for t in T_GRID for a in ALPHAS):
        v, w = quad_moments(alpha - t, float("inf"))
        vw_err = max(vw_err, abs(v_exceeds(t, alpha) - v), abs(w_exceeds(t, alpha) - w))
        v, w = quad_moments(-alpha - t, alpha - t)
        vw_err = max(vw_err, abs(v_within(t, alpha) - v), abs(w_within(t, alpha) - w))
    dt = time.perf_counter() - t0
    ok = fg_err <= 1e-6 and vw_err <= 1e-9 and dt < 30
    record(verdicts, "3", ok, f"factor graph vs closed form max err {fg_err:.1e}; "
                              f"v/w vs quadrature max err {vw_err:.1e} on {len(T_GRID) * len(ALPHAS)} points; {dt:.1f} s")


# 4 ------------------------------------------------------------------------------------


def test_c4_canonical_update(verdicts):
    cfg = RatingConfig()
    w, _ = update_two_player(Rating(), Rating(), cfg)
    (omu, osig), _ = closed_form_oracle(25, 25 / 3, 25, 25 / 3, cfg.beta, cfg.tau, 0.10)
    ok = (abs(w.mu - 29.396) <= 1e-3 and abs(w.sigma - 7.171) <= 1e-3
          and abs(omu - 29.396) <= 1e-3 and abs(osig - 7.171) <= 1e-3)
    record(verdicts, "4", ok, f"winner ({w.mu:.4f}, {w.sigma:.4f}); independent oracle ({omu:.4f}, {osig:.4f})")


# 5 ------------------------------------------------------------------------------------


@pytest.mark.slow
def test_c5_skill_recovery(verdicts):
    aggr = np.append(np.linspace(0.05, 0.65, 19), 1.0)
    specs = {f"sub{i:02d}": f"combat:{a:.2f}" for i, a in enumerate(aggr)}
    state = new_tournament(specs)
    t0 = time.perf_counter()
    run_tournament(state, 100, PAR, master_seed=7, config=ArenaConfig())
    dt = time.perf_counter() - t0
    mus = [state.ratings[f"sub{i:02d}"].mu for i in range(20)]
    rho = spearmanr(mus, aggr).statistic
    top = max(state.ratings, key=lambda k: state.ratings[k].mu)
    ok = rho >= 0.9 and top == "sub19" and dt < 900
    record(verdicts, "5", ok, f"Spearman {rho:.3f}; top mu {top} ({specs[top]}); "
                              f"{state.cursor} matches, min count {state.round}; {dt:.0f} s at parallelism {PAR}")


# 6 ------------------------------------------------------------------------------------


@pytest.mark.slow
def test_c6_parallelism_independence(verdicts):
    specs = {f"sub{i:02d}": s for i, s in enumerate(["combat", "forage", "random", "stage2"] * 5)}
    runs = []
    for par in (1, 8):
        state = new_tournament(specs)
        digests = {}
        rows = run_tournament(state, 4, par, master_seed=11, config=desk_config(),
                              on_applied=lambda seq, out, d=digests: d.__setitem__(seq, out.digest))
        runs.append(([r.to_dict() for r in rows], digests))
    ok = runs[0] == runs[1]
    record(verdicts, "6", ok, f"{len(runs[0][1])} matches; leaderboards equal={runs[0][0] == runs[1][0]}, "
                              f"digests equal={runs[0][1] == runs[1][1]}")


# 7 ------------------------------------------------------------------------------------


def scripted_descriptor(seq: int, config: ArenaConfig) -> MatchDescriptor:
    specs = ("combat",) + STAGE1_FIELD
    return MatchDescriptor(seq, 500 + seq, tuple(f"builtin:{s}#{i}" for i, s in enumerate(specs)), specs,
                           config.to_dict())


@pytest.mark.slow
def test_c7a_single_match_time(verdicts):
    d = scripted_descriptor(0, ArenaConfig())
    best = min(_timed(run_descriptor, d) for _ in range(2))
    record(verdicts, "7a", best <= 5.0, f"128 agents x 1024 ticks in {best:.2f} s (best of 2, one core)")


def _timed(fn, *args) -> float:
    t0 = time.perf_counter()
    fn(*args)
    return time.perf_counter() - t0


@pytest.mark.slow
def test_c7b_parallel_speedup(verdicts):
    if CPUS < 8:
        # measure what this host can do, then report honestly
        descs = [scripted_descriptor(k, desk_config()) for k in range(8)]
        serial = _timed(lambda: list(worker_pool(descs, 1)))
        par = _timed(lambda: list(worker_pool(descs, 8)))
        verdicts["7b"] = ("FAIL", f"unattainable here: {CPUS} CPU(s); 8 desk matches gave "
                                  f"{serial / par:.2f}x at parallelism 8 (needs >= 8 cores for 4x)")
        pytest.xfail(f"needs >= 8 CPUs, host has {CPUS}")
    descs = [scripted_descriptor(k, ArenaConfig()) for k in range(100)]
    serial = _timed(lambda: list(worker_pool(descs, 1)))
    par = _timed(lambda: list(worker_pool(descs, 8)))
    record(verdicts, "7b", serial / par >= 4.0, f"100 matches: serial {serial:.0f} s, parallel {par:.0f} s, "
                                                f"speedup {serial / par:.2f}x")


# 8 ------------------------------------------------------------------------------------


@pytest.mark.slow
def test_c8_policy_ecology(verdicts):
    cfg = ArenaConfig()
    descs, slots = [], []
    for k in range(10):
        seed = derive_seed(8, k)
        slot = int(np.random.default_rng(seed).integers(16))
        specs = ["random"] * 16
        specs[slot] = "combat"
        descs.append(MatchDescriptor(k, seed, tuple(f"builtin:{s}#{i}" for i, s in enumerate(specs)),
                                     tuple(specs), cfg.to_dict()))
        slots.append(slot)
    outs = sorted(worker_pool(descs, PAR), key=lambda o: o.seq)
    combat = float(np.mean([o.result.achievements[s] >= max(o.result.achievements) for o, s in zip(outs, slots)]))
    stage3 = evaluate_pve("stage3", 1, cfg, seed=0, parallelism=PAR, check_eligible=False).top1_ratio
    ok = combat >= 0.8 and stage3 >= 0.5
    record(verdicts, "8", ok, f"Combat vs Random field Top1Ratio {combat:.1f}; "
                              f"stage-3 composite vs stage-1 field Top1Ratio {stage3:.1f}")


# 9 ------------------------------------------------------------------------------------


@pytest.mark.slow
def test_c9_replay_integrity(verdicts, replay_corpus):
    mismatched = []
    rng = np.random.default_rng(99)
    trials = caught = 0
    for path in replay_corpus:
        raw = path.read_bytes()
        rec = read_replay(raw)
        if rescore_replay(rec).to_dict() != rec.footer["result"] or check_replay(rec):
            mismatched.append(path.name)
        for _ in range(10):
            i = int(rng.integers(len(raw)))
            bad = bytearray(raw)
            bad[i] = (bad[i] + int(rng.integers(1, 256))) % 256
            trials += 1
            try:
                read_replay(io.BytesIO(bytes(bad)))
            except ReplayError:
                caught += 1
    ok = not mismatched and caught == trials
    record(verdicts, "9", ok, f"{len(replay_corpus) - len(mismatched)}/{len(replay_corpus)} replays rescore exactly; "
                              f"{caught}/{trials} single-byte corruptions caught")


# 11 -----------------------------------------------------------------------------------


@pytest.mark.slow
def test_c11_analytics_fidelity(verdicts, replay_corpus):
    recs = [read_replay(p) for p in replay_corpus]
    ts = 8
    mass_ok = True
    for spec in sorted(set(CORPUS_FIELD)):
        h = visitation_heatmap(recs, spec)
        teams = [t for t, s in enumerate(CORPUS_FIELD) if s == spec]
        expect = 0
        for rec in recs:
            died = {v: tick["t"] for tick in rec.ticks for v, _ in tick["die"]}
            expect += sum(died.get(a, len(rec.ticks)) for t in teams for a in range(t * ts, (t + 1) * ts))
        mass_ok &= h.mass == expect and h.episodes == len(recs)
    agents = mismatches = 0
    for rec in recs:
        recorded = rec.footer["agents"]["max_explore"]
        for team in range(16):
            for tr in team_trajectories(rec, team):
                agents += 1
                mismatches += tr.max_displacement != recorded[tr.agent]
    ok = mass_ok and mismatches == 0
    record(verdicts, "11", ok, f"heatmap mass equals survival ticks over {len(recs)} episodes: {mass_ok}; "
                               f"trajectory displacement matches max_explore for {agents - mismatches}/{agents} agents")


# 10 -----------------------------------------------------------------------------------


def test_c10_external_protocol(verdicts):
    ref = ROOT / "scripts" / "reference_random_agent.py"
    cfg = desk_config()
    entrants = tuple(f"t{i}" for i in range(16))
    same = 0
    seeds = (21, 22, 23)
    for seed in seeds:
        a = run_descriptor(MatchDescriptor(0, seed, entrants, ("random",) * 16, cfg.to_dict()))
        ext = (f"exec:{sys.executable} {ref}",) * 2 + ("random",) * 14
        b = run_descriptor(MatchDescriptor(0, seed, entrants, ext, cfg.to_dict()))
        same += a.digest == b.digest and b.result.degraded == [None] * 16

    fault = str(ROOT / "tests" / "agents" / "fault_agent.py")
    small = tiny_config(horizon=8)
    gm = generate_map(1, small)
    expect = {"timeout": 2, "garbage": 2, "crash": 3, "launch": 0}
    seen = {}
    for mode in expect:
        argv = [sys.executable, fault, mode] + (["3"] if mode == "crash" else [])
        if mode == "launch":
            argv = ["/nonexistent/agent"]
        buf = io.BytesIO()
        run_episode(gm, [ExternalPolicy(argv), ExternalPolicy([sys.executable, fault, "ok"])], 1, small, replay=buf)
        rec = read_replay(buf.getvalue())
        flagged = [tick["t"] for tick in rec.ticks if any(t == 0 for t, _ in tick["deg"])]
        other = [tick["t"] for tick in rec.ticks if any(t == 1 for t, _ in tick["deg"])]
        seen[mode] = flagged[0] if len(flagged) == 1 and not other else None
    ok = same == len(seeds) and seen == expect
    record(verdicts, "10", ok, f"reference agent digests equal built-in Random on {same}/{len(seeds)} seeds; "
                               f"degradation ticks {seen} (expected {expect})")
