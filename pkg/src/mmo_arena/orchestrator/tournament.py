"""PvP free-for-all tournaments rated with multi-player TrueSkill.

The schedule depends only on (roster, target, master seed): matchmaking
looks at match counts, never at results, so it is fixed before the first
match starts. Results may come back from workers in any order. They are
buffered and applied to the ratings strictly by sequence number, which
makes the final table independent of parallelism and worker timing.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from ..config import ArenaConfig
from ..rating import Rating, RatingConfig, leaderboard_score, prior, update_ffa
from ..scoring import MatchResult, rank_teams
from ..sim.mapgen import derive_seed
from .pool import MatchDescriptor, MatchFailure, MatchOutcome, run_descriptor, worker_pool

log = logging.getLogger(__name__)

STANDIN_PREFIX = "standin:"
DEFAULT_TARGET = 100


@dataclass
class TournamentState:
    specs: dict[str, str]  # roster: submission id -> policy spec
    ratings: dict[str, Rating]
    counts: dict[str, int] = field(default_factory=dict)
    last_update: dict[str, int] = field(default_factory=dict)
    cursor: int = 0  # next sequence number to apply
    skipped: list[int] = field(default_factory=list)
    nonconverged: list[int] = field(default_factory=list)

    @property
    def roster(self) -> list[str]:
        return sorted(self.specs)

    @property
    def round(self) -> int:
        """Completed passes over the roster (minimum match count)."""
        return min(self.counts.values(), default=0)

    def snapshot(self) -> dict:
        return {
            "cursor": self.cursor,
            "counts": dict(sorted(self.counts.items())),
            "ratings": {k: [r.mu, r.sigma] for k, r in sorted(self.ratings.items())},
            "skipped": list(self.skipped),
            "nonconverged": list(self.nonconverged),
        }


def new_tournament(specs: Mapping[str, str], ratings: Mapping[str, Rating] | None = None,
                   rating_config: RatingConfig = RatingConfig(), reset: bool = False) -> TournamentState:
    """Fresh tournament over ``specs``.

    Ratings carry over from ``ratings`` (continuous mode) unless ``reset`` is set,
    in which case everyone starts from the prior.
    """
    if len(specs) < 2:
        raise ValueError("a tournament needs at least 2 qualified submissions")
    bad = [s for s in specs if s.startswith(STANDIN_PREFIX)]
    if bad:
        raise ValueError(f"ids may not start with {STANDIN_PREFIX!r}: {bad}")
    ratings = ratings or {}
    return TournamentState(
        specs=dict(specs),
        ratings={s: (prior(rating_config) if reset or s not in ratings else ratings[s]) for s in specs},
        counts={s: 0 for s in specs},
        last_update={s: -1 for s in specs},
    )


def sample_match(counts: Mapping[str, int] | TournamentState, rng: np.random.Generator, team_count: int = 16,
                 stand_in: str = "random") -> list[str]:
    """Entrant list for one match, in team order.

    Picks the ``team_count`` roster members with the fewest matches, breaking
    ties with a seeded shuffle; a short roster is topped up with stand-ins.
    """
    if isinstance(counts, TournamentState):
        counts = counts.counts
    roster = sorted(counts)
    if len(roster) < 2:
        raise ValueError("roster must have at least 2 submissions")
    keys = rng.random(len(roster))
    order = sorted(range(len(roster)), key=lambda i: (counts[roster[i]], keys[i]))
    chosen = [roster[i] for i in order[:team_count]]
    chosen += [f"{STANDIN_PREFIX}{stand_in}#{k}" for k in range(team_count - len(chosen))]
    return [chosen[i] for i in rng.permutation(team_count)]


def is_standin(entrant: str) -> bool:
    return entrant.startswith(STANDIN_PREFIX)


def standin_spec(entrant: str) -> str:
    return entrant[len(STANDIN_PREFIX):].rsplit("#", 1)[0]


def match_seed(master_seed: int, seq: int) -> int:
    return derive_seed(master_seed, 0x4D54, seq)


def schedule(
    specs: Mapping[str, str],
    target: int,
    master_seed: int,
    config: ArenaConfig = ArenaConfig(),
    stand_in: str = "random",
    replay_dir: str | Path | None = None,
) -> list[MatchDescriptor]:
    """Every match of a tournament, in sequence order, until each count reaches ``target``."""
    counts = {s: 0 for s in specs}
    out = []
    seq = 0
    while counts and min(counts.values()) < target:
        rng = np.random.Generator(np.random.PCG64(derive_seed(master_seed, 0x5343, seq)))
        entrants = sample_match(counts, rng, config.team_count, stand_in)
        for e in entrants:
            if e in counts:
                counts[e] += 1
        path = None if replay_dir is None else str(Path(replay_dir) / f"match-{seq:06d}.jsonl")
        pol = tuple(standin_spec(e) if is_standin(e) else specs[e] for e in entrants)
        out.append(MatchDescriptor(seq, match_seed(master_seed, seq), tuple(entrants), pol, config.to_dict(), path))
        seq += 1
    return out


def apply_result(state: TournamentState, seq: int, result: MatchResult | None,
                 rating_config: RatingConfig = RatingConfig()) -> None:
    """Fold match ``seq`` into the state; ``None`` records a skipped match."""
    if seq != state.cursor:
        raise ValueError(f"match {seq} applied out of order (expected {state.cursor})")
    state.cursor += 1
    if result is None:
        state.skipped.append(seq)
        return
    rated = [(e, a) for e, a in zip(result.entrants, result.achievements) if e in state.ratings]
    for e, _ in rated:
        state.counts[e] += 1
    if len(rated) < 2:
        return
    ranks = rank_teams([a for _, a in rated])
    upd = update_ffa({e: state.ratings[e] for e, _ in rated}, [(e, r) for (e, _), r in zip(rated, ranks)],
                     rating_config)
    if not upd.converged:
        log.warning("match %d: rating update did not converge in %d iterations", seq, upd.iterations)
        state.nonconverged.append(seq)
    for e, r in upd.ratings.items():
        state.ratings[e] = r
        state.last_update[e] = seq


@dataclass
class LeaderboardRow:
    rank: int
    id: str
    mu: float
    sigma: float
    score: float
    matches: int

    def to_dict(self) -> dict:
        return {"rank": self.rank, "id": self.id, "mu": self.mu, "sigma": self.sigma,
                "score": self.score, "matches": self.matches}


def leaderboard(ratings: Mapping[str, Rating], counts: Mapping[str, int] | None = None,
                k: float = 3.0) -> list[LeaderboardRow]:
    """Sorted by conservative score, then id. A pure function of the ratings table."""
    counts = counts or {}
    rows = sorted(ratings.items(), key=lambda kv: (-leaderboard_score(kv[1], k), kv[0]))
    return [LeaderboardRow(i + 1, s, r.mu, r.sigma, leaderboard_score(r, k), counts.get(s, 0))
            for i, (s, r) in enumerate(rows)]


def progress_line(seq: int, result: MatchResult) -> str:
    order = sorted(range(len(result.entrants)), key=lambda i: (result.ranks[i], i))
    return json.dumps({"seq": seq, "seed": result.seed, "ranked": [result.entrants[i] for i in order],
                       "achievements": [result.achievements[i] for i in order]}, separators=(",", ":"))


def run_tournament(
    state: TournamentState,
    target: int = DEFAULT_TARGET,
    parallelism: int = 1,
    master_seed: int = 0,
    config: ArenaConfig = ArenaConfig(),
    rating_config: RatingConfig = RatingConfig(),
    stand_in: str = "random",
    replay_dir: str | Path | None = None,
    runner: Callable[[MatchDescriptor], MatchOutcome] = run_descriptor,
    retries: int = 2,
    on_applied: Callable[[int, MatchOutcome | None], None] | None = None,
    progress: Callable[[str], None] | None = None,
) -> list[LeaderboardRow]:
    """Play the remaining scheduled matches and return the final leaderboard.

    Matches below ``state.cursor`` are treated as already applied, so a state
    rebuilt from a match log resumes where it stopped. ``on_applied`` runs after
    each in-order application (the store appends to its log there).
    """
    descs = schedule(state.specs, target, master_seed, config, stand_in, replay_dir)
    todo = [d for d in descs if d.seq >= state.cursor]
    buffered: dict[int, MatchOutcome | None] = {}
    for out in worker_pool(todo, parallelism, runner, retries):
        if isinstance(out, MatchFailure):
            log.error("match %d skipped after %d attempts: %s", out.seq, out.attempts, out.error)
            buffered[out.seq] = None
        else:
            buffered[out.seq] = out
        while state.cursor in buffered:
            seq = state.cursor
            done = buffered.pop(seq)
            apply_result(state, seq, None if done is None else done.result, rating_config)
            if on_applied is not None:
                on_applied(seq, done)
            if progress is not None and done is not None:
                progress(progress_line(seq, done.result))
    return leaderboard(state.ratings, state.counts)


def replay_log(state: TournamentState, records: Sequence[tuple[int, MatchResult | None]],
               rating_config: RatingConfig = RatingConfig()) -> TournamentState:
    """Rebuild a state by re-applying logged results in sequence order."""
    for seq, result in sorted(records, key=lambda x: x[0]):
        if seq < state.cursor:
            continue
        apply_result(state, seq, result, rating_config)
    return state
