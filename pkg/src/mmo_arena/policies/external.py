"""Team policies running in a child process, spoken to over newline-delimited JSON.

Protocol (version 1), one UTF-8 JSON object per line:

    platform -> agent  {"type": "hello", "protocol": 1, "team_id": t, "seed": s, "config": {...}}
    agent -> platform  {"type": "ready", "protocol": 1}
    platform -> agent  {"type": "obs", "tick": k, "obs": <TeamObservation.to_dict()>}
    agent -> platform  {"type": "act", "tick": k, "actions": [a0, ..., a7]}
    platform -> agent  {"type": "end"}

Each action is ``null`` (no-op), ``[move]`` or ``[move, style, target_id]`` with
move 0..4 (Stay, N, S, E, W) and style 0..2 (Melee, Range, Mage). Actions for
absent members are ignored. A reply that misses the per-tick budget or breaks
the format turns that tick into no-ops; three such faults in a row degrade
the team for the rest of the match. A protocol version other than 1 aborts
the handshake.
"""

from __future__ import annotations

import json
import logging
import queue
import shlex
import subprocess
import threading
import time

from ..config import Move, Style
from ..sim.world import NOOP, AgentAction
from .base import EpisodeMeta
from .observation import TeamObservation

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
TICK_BUDGET = 0.100  # seconds
HANDSHAKE_BUDGET = 10.0
MAX_FAULTS = 3
_EOF = object()


class ProtocolError(ValueError):
    pass


def action_to_wire(a: AgentAction | None) -> list | None:
    if a is None:
        return None
    if a.attack is None:
        return [int(a.move)]
    return [int(a.move), int(a.attack[0]), int(a.attack[1])]


def action_from_wire(x) -> AgentAction:
    if x is None:
        return NOOP
    if not isinstance(x, list) or len(x) not in (1, 3) or not all(type(v) is int for v in x):
        raise ProtocolError(f"bad action {x!r}")
    if not 0 <= x[0] < len(Move):
        raise ProtocolError(f"bad move {x[0]}")
    if len(x) == 1:
        return AgentAction(Move(x[0]))
    if not 0 <= x[1] < len(Style):
        raise ProtocolError(f"bad style {x[1]}")
    return AgentAction(Move(x[0]), (Style(x[1]), x[2]))


def dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":")) + "\n"


class ExternalPolicy:
    """Supervises one agent process for one match."""

    name = "external"

    def __init__(self, command: str | list[str], tick_budget: float = TICK_BUDGET,
                 handshake_budget: float = HANDSHAKE_BUDGET, max_faults: int = MAX_FAULTS):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.tick_budget = tick_budget
        self.handshake_budget = handshake_budget
        self.max_faults = max_faults
        self.proc: subprocess.Popen | None = None
        self.degraded: str | None = None
        self.faults = 0  # consecutive
        self.fault_log: list[tuple[int, str]] = []

    # -- process plumbing ----------------------------------------------------------

    def _reader(self, stream, q: queue.Queue) -> None:
        for line in stream:
            q.put(line)
        q.put(_EOF)

    def _send(self, obj: dict) -> None:
        self.proc.stdin.write(dumps(obj))
        self.proc.stdin.flush()

    def _recv(self, deadline: float):
        """Next line before ``deadline``; None on timeout, _EOF when the child closed stdout."""
        remaining = deadline - time.monotonic()
        try:
            return self._lines.get(timeout=max(remaining, 0.0)) if remaining > 0 else self._lines.get_nowait()
        except queue.Empty:
            return None

    def _degrade(self, reason: str) -> None:
        if self.degraded is None:
            self.degraded = reason
            log.warning("external policy %s degraded: %s", self.argv, reason)
        self.close()

    # -- TeamPolicy ----------------------------------------------------------------

    def reset(self, meta: EpisodeMeta) -> None:
        self.team_size = meta.config.team_size
        self.degraded = None
        self.faults = 0
        self.fault_log = []
        try:
            self.proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL,
                text=True, encoding="utf-8", bufsize=1,
            )
        except OSError as e:
            self.proc = None
            self.degraded = f"launch failed: {e}"
            return
        self._lines: queue.Queue = queue.Queue()
        threading.Thread(target=self._reader, args=(self.proc.stdout, self._lines), daemon=True).start()
        try:
            self._send({"type": "hello", "protocol": PROTOCOL_VERSION, "team_id": meta.team_id,
                        "seed": meta.seed, "config": meta.config.to_dict()})
        except OSError as e:
            self._degrade(f"handshake failed: {e}")
            return
        line = self._recv(time.monotonic() + self.handshake_budget)
        if line is None:
            self._degrade("handshake timed out")
            return
        if line is _EOF:
            self._degrade("agent exited during handshake")
            return
        try:
            msg = json.loads(line)
        except ValueError:
            self._degrade("malformed handshake reply")
            return
        if not isinstance(msg, dict) or msg.get("type") != "ready":
            self._degrade("malformed handshake reply")
        elif msg.get("protocol") != PROTOCOL_VERSION:
            self._degrade(f"protocol version mismatch: agent speaks {msg.get('protocol')!r}")

    def _fault(self, tick: int, reason: str) -> list[AgentAction]:
        self.faults += 1
        self.fault_log.append((tick, reason))
        if self.faults >= self.max_faults:
            self._degrade(f"{self.faults} consecutive faults, last: {reason}")
        return [NOOP] * self.team_size

    def act(self, obs: TeamObservation) -> list[AgentAction]:
        if self.degraded is not None or self.proc is None:
            return [NOOP] * self.team_size
        try:
            self._send({"type": "obs", "tick": obs.tick, "obs": obs.to_dict()})
        except OSError:
            self._degrade("agent stdin closed")
            return [NOOP] * self.team_size
        deadline = time.monotonic() + self.tick_budget
        while True:
            line = self._recv(deadline)
            if line is None:
                return self._fault(obs.tick, "timeout")
            if line is _EOF:
                self._degrade("agent exited")
                return [NOOP] * self.team_size
            try:
                msg = json.loads(line)
            except ValueError:
                return self._fault(obs.tick, "malformed record")
            if isinstance(msg, dict) and isinstance(msg.get("tick"), int) and msg["tick"] < obs.tick:
                continue  # late answer to a tick already given up on
            try:
                if not isinstance(msg, dict) or msg.get("type") != "act" or msg.get("tick") != obs.tick:
                    raise ProtocolError("unexpected record")
                acts = msg.get("actions")
                if not isinstance(acts, list) or len(acts) != self.team_size:
                    raise ProtocolError("wrong number of actions")
                actions = [action_from_wire(a) for a in acts]
            except ProtocolError as e:
                return self._fault(obs.tick, str(e))
            self.faults = 0
            return actions

    def close(self) -> None:
        proc, self.proc = self.proc, None
        if proc is None:
            return
        try:
            if proc.poll() is None:
                proc.stdin.write(dumps({"type": "end"}))
                proc.stdin.flush()
        except OSError:
            pass
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=1.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
