"""Policy specs: short strings naming a built-in policy or an external command.

    random | forage | noop | combat | combat:<aggressiveness> | stage2 | stage3 | exec:<command line>
"""

from __future__ import annotations

from .base import NoopPolicy
from .composite import CompositePolicy
from .external import ExternalPolicy
from .scripted import CombatPolicy, ForagePolicy, RandomPolicy

BUILTIN = ("random", "forage", "noop", "combat", "stage2", "stage3")


class PolicySpecError(ValueError):
    pass


def make_policy(spec: str, tick_budget: float | None = None):
    """Fresh policy instance for one match."""
    name, _, arg = spec.partition(":")
    if name == "exec":
        if not arg.strip():
            raise PolicySpecError("exec: needs a command")
        return ExternalPolicy(arg) if tick_budget is None else ExternalPolicy(arg, tick_budget=tick_budget)
    if name == "combat":
        try:
            return CombatPolicy(float(arg)) if arg else CombatPolicy()
        except ValueError as e:
            raise PolicySpecError(f"bad combat spec {spec!r}: {e}") from None
    if arg:
        raise PolicySpecError(f"policy {name!r} takes no argument")
    if name == "random":
        return RandomPolicy()
    if name == "forage":
        return ForagePolicy()
    if name == "noop":
        return NoopPolicy()
    if name in ("stage2", "stage3"):
        return CompositePolicy(int(name[-1]))
    raise PolicySpecError(f"unknown policy spec {spec!r}")


def validate_spec(spec: str) -> str:
    make_policy(spec)
    return spec
