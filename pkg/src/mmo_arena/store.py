"""On-disk registry: submissions, PvE history, tournaments, ratings and replays.

Layout under the registry root::

    LOCK                       exclusive writer lock (flock)
    submissions.json           id -> submission record (write-then-rename)
    pve.jsonl                  one line per PvE evaluation
    ratings.jsonl              current rating table (write-then-rename)
    tournaments/tNNNN/
        meta.json              roster, seed, target, config, starting ratings, status
        matches.jsonl          append-only, one line per applied match, in seq order
        replays/match-NNNNNN.jsonl

A tournament killed mid-run is resumed by rebuilding its state from
``meta.json`` and ``matches.jsonl``; a torn final line is dropped with a
warning and the log truncated back to its last complete record.
"""

from __future__ import annotations

import fcntl
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .config import ArenaConfig
from .orchestrator.pool import MatchOutcome
from .orchestrator.pve import Gates, PvEResult, QualState, Submission, advance_stage, evaluate_pve
from .orchestrator.tournament import (
    LeaderboardRow,
    TournamentState,
    leaderboard,
    new_tournament,
    replay_log,
    run_tournament,
)
from .policies.registry import validate_spec
from .rating import Rating, RatingConfig, RatingRecord, load_ratings, save_ratings
from .scoring import MatchResult

log = logging.getLogger(__name__)


class RegistryError(Exception):
    pass


class RegistryLocked(RegistryError):
    pass


def _write_json(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    tmp.replace(path)


def read_match_log(path: Path, repair: bool = False) -> list[tuple[int, MatchResult | None, dict]]:
    """Parse a tournament match log; a corrupt last line is skipped (and cut off if ``repair``)."""
    if not path.exists():
        return []
    lines = path.read_bytes().splitlines(keepends=True)
    out = []
    offset = 0
    for k, line in enumerate(lines):
        try:
            if not line.endswith(b"\n"):
                raise ValueError("missing newline")
            d = json.loads(line)
            seq = int(d["seq"])
            result = None if d.get("result") is None else MatchResult.from_dict(d["result"])
        except (ValueError, KeyError, TypeError) as e:
            if k != len(lines) - 1:
                raise RegistryError(f"{path}: corrupt record at line {k + 1}: {e}") from None
            log.warning("%s: dropping torn trailing record (%s)", path, e)
            if repair:
                with open(path, "r+b") as fh:
                    fh.truncate(offset)
            break
        if seq != len(out):
            raise RegistryError(f"{path}: expected seq {len(out)}, found {seq}")
        out.append((seq, result, d))
        offset += len(line)
    return out


@dataclass
class TournamentMeta:
    id: str
    specs: dict[str, str]
    target: int
    master_seed: int
    config: dict
    start_ratings: dict[str, list[float]]
    start_matches: dict[str, int]
    stand_in: str = "random"
    reset: bool = False
    status: str = "running"

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "TournamentMeta":
        return cls(**d)


class Registry:
    """Single-writer handle on a registry directory; use as a context manager."""

    def __init__(self, root: str | Path, create: bool = False, rating_config: RatingConfig = RatingConfig()):
        self.root = Path(root)
        self.rating_config = rating_config
        if not self.root.exists():
            if not create:
                raise RegistryError(f"no registry at {self.root}")
            self.root.mkdir(parents=True)
        self._lock_fh = None

    # -- locking --------------------------------------------------------
    def __enter__(self) -> "Registry":
        self.lock()
        return self

    def __exit__(self, *exc) -> None:
        self.unlock()

    def lock(self) -> None:
        fh = open(self.root / "LOCK", "a+")
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except BlockingIOError:
            fh.close()
            raise RegistryLocked(f"registry {self.root} is locked by another process") from None
        fh.seek(0)
        fh.truncate()
        fh.write(f"{os.getpid()}\n")
        fh.flush()
        self._lock_fh = fh

    def unlock(self) -> None:
        if self._lock_fh is not None:
            fcntl.flock(self._lock_fh, fcntl.LOCK_UN)
            self._lock_fh.close()
            self._lock_fh = None

    def _need_lock(self) -> None:
        if self._lock_fh is None:
            raise RegistryError("registry must be locked for writing")

    # -- submissions ----------------------------------------------------
    @property
    def _subs_path(self) -> Path:
        return self.root / "submissions.json"

    def submissions(self) -> dict[str, Submission]:
        if not self._subs_path.exists():
            return {}
        data = json.loads(self._subs_path.read_text())
        return {k: Submission.from_dict(v) for k, v in data.items()}

    def _save_submissions(self, subs: dict[str, Submission]) -> None:
        _write_json(self._subs_path, {k: s.to_dict() for k, s in sorted(subs.items())})

    def get(self, sid: str) -> Submission:
        subs = self.submissions()
        if sid not in subs:
            raise RegistryError(f"unknown submission {sid!r}")
        return subs[sid]

    def register(self, spec: str, name: str = "", sid: str | None = None) -> Submission:
        self._need_lock()
        validate_spec(spec)
        subs = self.submissions()
        if sid is None:
            k = len(subs)
            while f"sub{k:04d}" in subs:
                k += 1
            sid = f"sub{k:04d}"
        if sid in subs:
            raise RegistryError(f"submission id {sid!r} already exists")
        if sid.startswith(("standin:", "builtin:")) or "#" in sid:
            raise RegistryError(f"reserved submission id {sid!r}")
        sub = Submission(sid, spec, name)
        subs[sid] = sub
        self._save_submissions(subs)
        return sub

    def save(self, sub: Submission) -> None:
        self._need_lock()
        subs = self.submissions()
        if sub.id not in subs:
            raise RegistryError(f"unknown submission {sub.id!r}")
        subs[sub.id] = sub
        self._save_submissions(subs)

    def evaluate(self, sid: str, stage: int, config: ArenaConfig = ArenaConfig(), seed: int = 0,
                 parallelism: int = 1, gates: Gates = Gates(), n_matches: int = 10) -> PvEResult:
        """Run a PvE stage for a registered submission and record the outcome."""
        self._need_lock()
        sub = self.get(sid)
        replay_dir = self.root / "replays" / "pve" / sid / f"stage{stage}"
        res = evaluate_pve(sub, stage, config, seed, n_matches, parallelism, replay_dir)
        before = sub.state
        advance_stage(sub, res, gates)
        self.save(sub)
        rec = {"id": sid, "stage": stage, "seed": seed, "top1_ratio": res.top1_ratio,
               "best": res.best_achievement, "slots": res.slots,
               "achievements": [r.achievements[s] for r, s in zip(res.results, res.slots)],
               "failures": [f.seq for f in res.failures],
               "state_before": before.name, "state_after": sub.state.name}
        with open(self.root / "pve.jsonl", "a") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return res

    # -- ratings --------------------------------------------------------
    @property
    def _ratings_path(self) -> Path:
        return self.root / "ratings.jsonl"

    def rating_records(self) -> dict[str, RatingRecord]:
        return {r.submission_id: r for r in load_ratings(self._ratings_path)}

    def ratings(self) -> dict[str, Rating]:
        return {k: r.rating() for k, r in self.rating_records().items()}

    def leaderboard(self, k: float = 3.0) -> list[LeaderboardRow]:
        recs = self.rating_records()
        return leaderboard({s: r.rating() for s, r in recs.items()}, {s: r.matches for s, r in recs.items()}, k)

    # -- tournaments ----------------------------------------------------
    def _tdir(self, tid: str) -> Path:
        return self.root / "tournaments" / tid

    def tournaments(self) -> list[str]:
        d = self.root / "tournaments"
        return sorted(p.name for p in d.iterdir() if (p / "meta.json").exists()) if d.exists() else []

    def meta(self, tid: str) -> TournamentMeta:
        return TournamentMeta.from_dict(json.loads((self._tdir(tid) / "meta.json").read_text()))

    def active_tournament(self) -> str | None:
        running = [t for t in self.tournaments() if self.meta(t).status == "running"]
        return running[-1] if running else None

    def start_tournament(self, target: int = 100, master_seed: int = 0, config: ArenaConfig = ArenaConfig(),
                         reset: bool = False, stand_in: str = "random") -> str:
        """Open a tournament over every PvP-qualified submission."""
        self._need_lock()
        if self.active_tournament() is not None:
            raise RegistryError(f"tournament {self.active_tournament()} is still running; resume it first")
        validate_spec(stand_in)
        specs = {s.id: s.spec for s in self.submissions().values() if s.pvp_qualified}
        if len(specs) < 2:
            raise RegistryError(f"need at least 2 PvP-qualified submissions, have {len(specs)}")
        recs = self.rating_records()
        tid = f"t{len(self.tournaments()):04d}"
        meta = TournamentMeta(
            id=tid, specs=specs, target=target, master_seed=master_seed, config=config.to_dict(),
            start_ratings={s: [recs[s].mu, recs[s].sigma] for s in specs if s in recs and not reset},
            start_matches={s: recs[s].matches for s in specs if s in recs},
            stand_in=stand_in, reset=reset,
        )
        d = self._tdir(tid)
        (d / "replays").mkdir(parents=True)
        _write_json(d / "meta.json", meta.to_dict())
        return tid

    def tournament_state(self, tid: str, repair: bool = False) -> TournamentState:
        """Rebuild a tournament's state from its starting ratings and match log."""
        meta = self.meta(tid)
        start = {s: Rating(*v) for s, v in meta.start_ratings.items()}
        state = new_tournament(meta.specs, start, self.rating_config, reset=meta.reset)
        records = read_match_log(self._tdir(tid) / "matches.jsonl", repair=repair)
        return replay_log(state, [(seq, res) for seq, res, _ in records], self.rating_config)

    def _publish(self, meta: TournamentMeta, state: TournamentState) -> None:
        recs = self.rating_records()
        for s, r in state.ratings.items():
            recs[s] = RatingRecord(s, r.mu, r.sigma, meta.start_matches.get(s, 0) + state.counts[s],
                                   state.last_update[s])
        save_ratings(self._ratings_path, [recs[k] for k in sorted(recs)])

    def run_tournament(self, tid: str | None = None, parallelism: int = 1,
                       progress: Callable[[str], None] | None = None,
                       stop_after: int | None = None) -> list[LeaderboardRow]:
        """Play (or resume) a tournament to completion.

        ``stop_after`` halts after that many newly applied matches, leaving the
        tournament resumable; it exists for crash-resume tests.
        """
        self._need_lock()
        tid = tid or self.active_tournament()
        if tid is None:
            raise RegistryError("no running tournament")
        meta = self.meta(tid)
        if meta.status != "running":
            raise RegistryError(f"tournament {tid} is {meta.status}")
        state = self.tournament_state(tid, repair=True)
        log_path = self._tdir(tid) / "matches.jsonl"
        fh = open(log_path, "a")
        applied = 0

        class _Stop(Exception):
            pass

        def on_applied(seq: int, out: MatchOutcome | None) -> None:
            nonlocal applied
            rec = {"seq": seq, "result": None if out is None else out.result.to_dict(),
                   "digest": None if out is None else out.digest,
                   "replay": None if out is None or out.replay_path is None
                   else os.path.relpath(out.replay_path, self.root)}
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")
            fh.flush()
            os.fsync(fh.fileno())
            self._publish(meta, state)
            applied += 1
            if stop_after is not None and applied >= stop_after:
                raise _Stop

        try:
            run_tournament(state, meta.target, parallelism, meta.master_seed, ArenaConfig.from_dict(meta.config),
                           self.rating_config, meta.stand_in, self._tdir(tid) / "replays",
                           on_applied=on_applied, progress=progress)
        except _Stop:
            return leaderboard(state.ratings, state.counts)
        finally:
            fh.close()
        self._publish(meta, state)
        meta.status = "done"
        _write_json(self._tdir(tid) / "meta.json", meta.to_dict())
        return leaderboard(state.ratings, state.counts)

    def manifest(self) -> dict:
        subs = self.submissions()
        return {
            "root": str(self.root),
            "submissions": len(subs),
            "by_state": {q.name: sum(1 for s in subs.values() if s.state == q) for q in QualState},
            "pvp_qualified": sorted(s.id for s in subs.values() if s.pvp_qualified),
            "tournaments": {t: self.meta(t).status for t in self.tournaments()},
            "rated": len(self.rating_records()),
        }
