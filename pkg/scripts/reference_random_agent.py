#!/usr/bin/env python3
"""Stand-alone external agent: uniform random moves, never attacks.

Speaks the newline-delimited JSON agent protocol on stdin/stdout and draws
its moves from numpy's PCG64 seeded with the handshake seed, so it plays
exactly like the built-in ``random`` policy. Depends only on numpy.
"""

from __future__ import annotations

import json
import sys

import numpy as np

PROTOCOL = 1


def send(obj: dict) -> None:
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def main() -> int:
    rng = None
    team_size = 0
    for line in sys.stdin:
        msg = json.loads(line)
        kind = msg.get("type")
        if kind == "hello":
            if msg.get("protocol") != PROTOCOL:
                return 2
            rng = np.random.Generator(np.random.PCG64(msg["seed"]))
            team_size = msg["config"]["team_size"]
            send({"type": "ready", "protocol": PROTOCOL})
        elif kind == "obs":
            moves = rng.integers(0, 5, size=team_size)
            send({"type": "act", "tick": msg["tick"], "actions": [[int(m)] for m in moves]})
        elif kind == "end":
            break
    return 0


if __name__ == "__main__":
    sys.exit(main())
