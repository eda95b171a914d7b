"""Line-oriented replay files.

Layout, one canonical JSON object per line::

    {"type": "header", "format": "mmo-arena-replay", "version": 1, ...}
    {"type": "tick", "t": 0, ...}            # one line per simulated tick
    ...
    {"type": "footer", "digest": ..., "result": ..., ...,"seal":"<hex>"}

``digest`` is SHA-256 over the raw bytes of the header and tick lines
(newlines included); it identifies the simulated content and is what
determinism checks compare. ``seal`` is SHA-256 over every byte of the file
before the seal field, so a corrupted footer is caught as well.
"""

from __future__ import annotations

import hashlib
import io
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

REPLAY_FORMAT = "mmo-arena-replay"
REPLAY_VERSION = 1
_SEAL = re.compile(rb'^(.*),"seal":"([0-9a-f]{64})"\}$')


class ReplayError(Exception):
    pass


class ReplayVersionError(ReplayError):
    pass


class ReplayDigestError(ReplayError):
    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(f"digest mismatch: {detail}")


class ReplayTruncatedError(ReplayError):
    def __init__(self, last_tick: int | None):
        self.last_tick = last_tick
        where = "no complete tick" if last_tick is None else f"last complete tick {last_tick}"
        super().__init__(f"replay truncated: {where}")


def canonical(obj: dict) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


class ReplayWriter:
    """Streams a replay one line at a time, keeping only running hashes in memory."""

    def __init__(self, stream: IO[bytes] | None = None):
        self.stream = stream
        self._content = hashlib.sha256()
        self._all = hashlib.sha256()
        self.ticks = 0
        self.digest: str | None = None

    def _emit(self, line: bytes, content: bool) -> None:
        line += b"\n"
        if content:
            self._content.update(line)
        self._all.update(line)
        if self.stream is not None:
            self.stream.write(line)
            self.stream.flush()

    def header(self, header: dict) -> None:
        self._emit(canonical({"type": "header", "format": REPLAY_FORMAT, "version": REPLAY_VERSION, **header}), True)

    def tick(self, record: dict) -> None:
        self._emit(canonical({"type": "tick", **record}), True)
        self.ticks += 1

    def footer(self, footer: dict) -> str:
        self.digest = self._content.hexdigest()
        body = canonical({"type": "footer", "digest": self.digest, "ticks": self.ticks, **footer})
        prefix = body[:-1] + b',"seal":"'
        h = self._all.copy()
        h.update(body[:-1])
        line = prefix + h.hexdigest().encode() + b'"}'
        if self.stream is not None:
            self.stream.write(line + b"\n")
            self.stream.flush()
        return self.digest


@dataclass
class ReplayRecord:
    header: dict
    ticks: list[dict] = field(default_factory=list)
    footer: dict = field(default_factory=dict)

    @property
    def digest(self) -> str:
        return self.footer["digest"]

    def write(self, stream: IO[bytes]) -> str:
        w = ReplayWriter(stream)
        w.header({k: v for k, v in self.header.items() if k not in ("type", "format", "version")})
        for t in self.ticks:
            w.tick({k: v for k, v in t.items() if k != "type"})
        return w.footer({k: v for k, v in self.footer.items() if k not in ("type", "digest", "ticks", "seal")})


def iter_replay(stream: IO[bytes]):
    """Yield ("header", dict), ("tick", dict)..., ("footer", dict) while verifying.

    Verification errors are raised at the point they are detected; the digest
    and seal are only known once the footer has been read.
    """
    content = hashlib.sha256()
    whole = hashlib.sha256()
    last_tick: int | None = None
    header_seen = False
    for raw in stream:
        if not raw.endswith(b"\n"):
            # a final line without newline is a partial write
            raise ReplayTruncatedError(last_tick)
        line = raw[:-1]
        m = _SEAL.match(line)
        if m is not None:
            body = m.group(1)
            whole.update(body)
            if whole.hexdigest() != m.group(2).decode():
                raise ReplayDigestError("footer seal mismatch")
            footer = json.loads(body + b"}")
            if footer.get("digest") != content.hexdigest():
                raise ReplayDigestError("content digest mismatch")
            yield "footer", footer
            rest = stream.read()
            if rest:
                raise ReplayDigestError("trailing data after footer")
            return
        try:
            rec = json.loads(line)
        except ValueError as e:
            raise ReplayDigestError(f"corrupt record after tick {last_tick}: {e}") from None
        kind = rec.get("type") if isinstance(rec, dict) else None
        if not header_seen:
            if kind != "header" or rec.get("format") != REPLAY_FORMAT:
                raise ReplayDigestError("missing or corrupt header")
            if rec.get("version") != REPLAY_VERSION:
                raise ReplayVersionError(f"unsupported replay version {rec.get('version')}")
            header_seen = True
            content.update(raw)
            whole.update(raw)
            yield "header", rec
            continue
        if kind != "tick":
            raise ReplayDigestError(f"unexpected record after tick {last_tick}")
        content.update(raw)
        whole.update(raw)
        last_tick = rec.get("t")
        yield "tick", rec
    if not header_seen:
        raise ReplayTruncatedError(None)
    raise ReplayTruncatedError(last_tick)


def read_replay(source: str | Path | IO[bytes] | bytes) -> ReplayRecord:
    if isinstance(source, bytes):
        stream: IO[bytes] = io.BytesIO(source)
    elif isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return read_replay(fh.read())
    else:
        stream = source
    rec = ReplayRecord(header={})
    for kind, obj in iter_replay(stream):
        if kind == "header":
            rec.header = obj
        elif kind == "tick":
            rec.ticks.append(obj)
        else:
            rec.footer = obj
    return rec


def verify_replay(source: str | Path) -> str:
    """Read and fully verify a replay file; returns its digest."""
    with open(source, "rb") as fh:
        footer = None
        for kind, obj in iter_replay(fh):
            if kind == "footer":
                footer = obj
    return footer["digest"]
