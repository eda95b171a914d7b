"""Multi-player TrueSkill.

Skills are Gaussian beliefs. A ranked free-for-all outcome is turned into a
rank-chain factor graph::

    prior(s_i) -- s_i -- likelihood -- p_i --+
                                              sum: d_k = p_k - p_{k+1} -- truncate(d_k)
    prior(s_j) -- s_j -- likelihood -- p_j --+

where the truncation factor is ``d_k > eps`` for a decisive adjacency and
``|d_k| <= eps`` for a draw. Expectation propagation runs along the chain
until the difference marginals stop moving. ``update_two_player`` is the
closed-form special case and doubles as a test oracle.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Hashable, Mapping, Sequence

from scipy.special import erfcx, log_ndtr, ndtri

SQRT2 = math.sqrt(2.0)
SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RatingConfig:
    mu0: float = 25.0
    sigma0: float = 25.0 / 3.0
    beta: float = 25.0 / 6.0
    tau: float = 25.0 / 300.0
    p_draw: float = 0.10
    tol: float = 1e-4
    max_iter: int = 100

    def __post_init__(self):
        if self.sigma0 <= 0 or self.beta <= 0:
            raise ValueError("sigma0 and beta must be positive")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if not 0 <= self.p_draw < 1:
            raise ValueError("p_draw must be in [0, 1)")

    def draw_margin(self, n_players: int = 2) -> float:
        return float(ndtri((1.0 + self.p_draw) / 2.0)) * math.sqrt(n_players) * self.beta


@dataclass(frozen=True)
class Rating:
    mu: float = 25.0
    sigma: float = 25.0 / 3.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


def prior(config: RatingConfig) -> Rating:
    return Rating(config.mu0, config.sigma0)


def leaderboard_score(rating: Rating, k: float = 3.0) -> float:
    """Conservative skill estimate used for display ordering."""
    return rating.mu - k * rating.sigma


# -- truncated Gaussian corrections -----------------------------------------------


def _log_phi(x: float) -> float:
    return -0.5 * x * x - LOG_SQRT_2PI


def v_exceeds(t: float, alpha: float) -> float:
    """Mean shift of a unit Gaussian truncated to x > alpha - t: phi(t-a) / Phi(t-a)."""
    # phi(x)/Phi(x) = sqrt(2/pi) / erfcx(-x/sqrt2), finite for any x
    return SQRT_2_OVER_PI / float(erfcx(-(t - alpha) / SQRT2))


def w_exceeds(t: float, alpha: float) -> float:
    v = v_exceeds(t, alpha)
    w = v * (v + t - alpha)
    return min(max(w, 0.0), 1.0)


def _log_window(a: float, b: float) -> float:
    """log(Phi(b) - Phi(a)) for a < b, without cancellation in either tail."""
    if b <= 0:
        lb, la = float(log_ndtr(b)), float(log_ndtr(a))
        return lb + math.log1p(-math.exp(la - lb))
    if a >= 0:
        # mirror into the lower tail
        return _log_window(-b, -a)
    # straddles zero: erf terms have opposite signs, so no cancellation
    return math.log(0.5 * (math.erf(b / SQRT2) - math.erf(a / SQRT2)))


def _within_moments(t: float, alpha: float) -> tuple[float, float]:
    if t < 0:
        v, w = _within_moments(-t, alpha)
        return -v, w
    if alpha < 1e-6:
        # point-mass limit; the first correction is O(alpha^2 * t)
        return -t, 1.0 - alpha * alpha / 3.0
    a, b = -alpha - t, alpha - t
    log_d = _log_window(a, b)
    pa = math.exp(_log_phi(a) - log_d)
    pb = math.exp(_log_phi(b) - log_d)
    v = pa - pb
    w = v * v + b * pb - a * pa
    return v, w


def v_within(t: float, alpha: float) -> float:
    """Mean shift of a unit Gaussian truncated to -alpha - t < x < alpha - t."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return -t
    return _within_moments(t, alpha)[0]


def w_within(t: float, alpha: float) -> float:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return 1.0
    return min(max(_within_moments(t, alpha)[1], 0.0), 1.0)


# -- closed-form two-entity update -------------------------------------------------


def update_two_player(
    winner: Rating, loser: Rating, config: RatingConfig = RatingConfig(), is_draw: bool = False
) -> tuple[Rating, Rating]:
    var_w = winner.sigma**2 + config.tau**2
    var_l = loser.sigma**2 + config.tau**2
    c2 = 2 * config.beta**2 + var_w + var_l
    c = math.sqrt(c2)
    t = (winner.mu - loser.mu) / c
    eps = config.draw_margin(2) / c
    if is_draw:
        v, w = v_within(t, eps), w_within(t, eps)
    else:
        v, w = v_exceeds(t, eps), w_exceeds(t, eps)
    new_w = Rating(winner.mu + var_w / c * v, math.sqrt(var_w * (1 - var_w / c2 * w)))
    new_l = Rating(loser.mu - var_l / c * v, math.sqrt(var_l * (1 - var_l / c2 * w)))
    return new_w, new_l


# -- factor graph ------------------------------------------------------------------


@dataclass
class Gaussian:
    """Gaussian in natural parameters: pi = 1/var, tau = mu/var. pi == 0 is the flat density."""

    pi: float = 0.0
    tau: float = 0.0

    @classmethod
    def from_moments(cls, mu: float, var: float) -> "Gaussian":
        return cls(1.0 / var, mu / var)

    @property
    def mu(self) -> float:
        return self.tau / self.pi if self.pi else 0.0

    @property
    def var(self) -> float:
        return 1.0 / self.pi if self.pi else math.inf

    def __mul__(self, other: "Gaussian") -> "Gaussian":
        return Gaussian(self.pi + other.pi, self.tau + other.tau)

    def __truediv__(self, other: "Gaussian") -> "Gaussian":
        return Gaussian(self.pi - other.pi, self.tau - other.tau)


class Variable:
    """A marginal plus the latest message from each neighbouring factor."""

    def __init__(self):
        self.value = Gaussian()
        self.msgs: dict[Hashable, Gaussian] = {}

    def attach(self, factor: Hashable) -> None:
        self.msgs[factor] = Gaussian()

    def update_message(self, factor: Hashable, msg: Gaussian) -> None:
        old = self.msgs[factor]
        self.msgs[factor] = msg
        self.value = self.value / old * msg

    def update_value(self, factor: Hashable, value: Gaussian) -> None:
        old = self.msgs[factor]
        self.msgs[factor] = value * old / self.value
        self.value = value

    def cavity(self, factor: Hashable) -> Gaussian:
        """Marginal with this factor's message removed."""
        return self.value / self.msgs[factor]


@dataclass
class FfaUpdate:
    ratings: dict
    converged: bool
    iterations: int
    max_delta: float = 0.0
    meta: dict = field(default_factory=dict)


def _check_outcome(ratings: Mapping, outcome: Sequence[tuple[Hashable, int]]) -> list[tuple[Hashable, int]]:
    if len(outcome) < 2:
        raise ValueError("an outcome needs at least two participants")
    ids = [sid for sid, _ in outcome]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate participant in outcome")
    unknown = [sid for sid in ids if sid not in ratings]
    if unknown:
        raise KeyError(f"outcome references unknown submissions: {unknown}")
    ranks = sorted({r for _, r in outcome})
    if ranks[0] < 1:
        raise ValueError("ranks start at 1")
    # stable: participants sharing a rank keep their input order
    return sorted(outcome, key=lambda x: x[1])


def update_ffa(
    ratings: Mapping[Hashable, Rating],
    outcome: Sequence[tuple[Hashable, int]],
    config: RatingConfig = RatingConfig(),
) -> FfaUpdate:
    """Posterior ratings for the participants of one ranked free-for-all.

    ``outcome`` lists (submission id, rank) with rank 1 best; equal ranks are
    draws. Only participants are returned. If the chain has not settled after
    ``config.max_iter`` sweeps the current marginals are returned with
    ``converged=False``.
    """
    order = _check_outcome(ratings, outcome)
    n = len(order)
    beta2 = config.beta**2
    eps = config.draw_margin(2)

    skill = [Variable() for _ in range(n)]
    perf = [Variable() for _ in range(n)]
    diff = [Variable() for _ in range(n - 1)]
    for i in range(n):
        skill[i].attach(("prior", i))
        skill[i].attach(("like", i))
        perf[i].attach(("like", i))
    for k in range(n - 1):
        perf[k].attach(("sum", k))
        perf[k + 1].attach(("sum", k))
        diff[k].attach(("sum", k))
        diff[k].attach(("trunc", k))

    # priors with dynamics noise, then likelihood messages down to performances
    for i, (sid, _) in enumerate(order):
        r = ratings[sid]
        skill[i].update_value(("prior", i), Gaussian.from_moments(r.mu, r.sigma**2 + config.tau**2))
    for i in range(n):
        cav = skill[i].cavity(("like", i))
        perf[i].update_message(("like", i), Gaussian.from_moments(cav.mu, cav.var + beta2))

    def sum_down(k: int) -> None:
        a = perf[k].cavity(("sum", k))
        b = perf[k + 1].cavity(("sum", k))
        diff[k].update_message(("sum", k), Gaussian.from_moments(a.mu - b.mu, a.var + b.var))

    def sum_up(k: int, which: int) -> None:
        d = diff[k].cavity(("sum", k))
        if which == 0:
            b = perf[k + 1].cavity(("sum", k))
            perf[k].update_message(("sum", k), Gaussian.from_moments(d.mu + b.mu, d.var + b.var))
        else:
            a = perf[k].cavity(("sum", k))
            perf[k + 1].update_message(("sum", k), Gaussian.from_moments(a.mu - d.mu, a.var + d.var))

    def truncate(k: int) -> float:
        cav = diff[k].cavity(("trunc", k))
        sqrt_pi = math.sqrt(cav.pi)
        t, alpha = cav.tau / sqrt_pi, eps * sqrt_pi
        if order[k][1] == order[k + 1][1]:
            v, w = v_within(t, alpha), w_within(t, alpha)
        else:
            v, w = v_exceeds(t, alpha), w_exceeds(t, alpha)
        denom = 1.0 - w
        new = Gaussian(cav.pi / denom, (cav.tau + sqrt_pi * v) / denom)
        old = diff[k].value
        diff[k].update_value(("trunc", k), new)
        return max(abs(new.mu - old.mu), abs(math.sqrt(new.var) - (math.sqrt(old.var) if old.pi else 0.0)))

    converged = False
    iterations = 0
    delta = math.inf
    while iterations < config.max_iter:
        iterations += 1
        delta = 0.0
        for k in range(n - 1):
            sum_down(k)
            delta = max(delta, truncate(k))
            sum_up(k, 1)
        for k in range(n - 2, 0, -1):
            sum_down(k)
            delta = max(delta, truncate(k))
            sum_up(k, 0)
        if delta <= config.tol:
            converged = True
            break
    sum_up(0, 0)
    sum_up(n - 2, 1)

    out = {}
    for i, (sid, _) in enumerate(order):
        p = perf[i].cavity(("like", i))
        skill[i].update_message(("like", i), Gaussian.from_moments(p.mu, p.var + beta2))
        out[sid] = Rating(skill[i].value.mu, math.sqrt(skill[i].value.var))
    return FfaUpdate(ratings=out, converged=converged, iterations=iterations, max_delta=delta)


# -- persistence -------------------------------------------------------------------


@dataclass
class RatingRecord:
    submission_id: str
    mu: float
    sigma: float
    matches: int = 0
    last_update: int = -1  # match sequence number of the latest update

    def rating(self) -> Rating:
        return Rating(self.mu, self.sigma)

    def to_json(self) -> str:
        # repr of a float is the shortest string that round-trips exactly
        return json.dumps({"id": self.submission_id, "mu": self.mu, "sigma": self.sigma,
                           "matches": self.matches, "last_update": self.last_update}, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RatingRecord":
        d = json.loads(line)
        return cls(d["id"], float(d["mu"]), float(d["sigma"]), int(d["matches"]), int(d["last_update"]))


def save_ratings(path: str | Path, records: Sequence[RatingRecord]) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("".join(r.to_json() + "\n" for r in records))
    tmp.replace(path)


def load_ratings(path: str | Path) -> list[RatingRecord]:
    path = Path(path)
    if not path.exists():
        return []
    return [RatingRecord.from_json(line) for line in path.read_text().splitlines() if line.strip()]
