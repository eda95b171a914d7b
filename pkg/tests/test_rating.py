from __future__ import annotations

import itertools
import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mmo_arena.rating import (
    Rating,
    RatingConfig,
    RatingRecord,
    leaderboard_score,
    load_ratings,
    save_ratings,
    update_ffa,
    update_two_player,
    v_exceeds,
    v_within,
    w_exceeds,
    w_within,
)

# -- independent oracles -------------------------------------------------------------


def quad_moments(lo, hi, dps: int = 20) -> tuple[float, float]:
    """(mean, 1 - variance) of a unit Gaussian truncated to (lo, hi), by quadrature.

    The integration variable is re-centred on the mode of the truncated
    density so deep tails do not underflow.
    """
    with mp.workdps(dps):
        lo, hi = mp.mpf(lo), mp.mpf(hi)
        m = min(max(mp.mpf(0), lo), hi)
        g = lambda u: mp.exp(-m * u - u * u / 2)  # noqa: E731
        s = 1 / (abs(m) + 1)
        a, b = lo - m, hi - m
        cuts = (-20 * s, -5 * s, -s, mp.mpf(0), s, 5 * s, 20 * s)
        pts = sorted({a, b, *[p for p in cuts if a < p < b]})
        z0 = mp.quad(g, pts)
        z1 = mp.quad(lambda u: u * g(u), pts)
        z2 = mp.quad(lambda u: u * u * g(u), pts)
        eu = z1 / z0
        return float(m + eu), float(1 - (z2 / z0 - eu * eu))


def _phi(x: float) -> float:
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _Phi(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2))


def _inv_Phi(p: float) -> float:
    lo, hi = -10.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if _Phi(mid) < p else (lo, mid)
    return 0.5 * (lo + hi)


def closed_form_oracle(mu_w, sig_w, mu_l, sig_l, beta, tau, p_draw, draw=False):
    """Textbook two-player update written from the definitions with math only."""
    eps = _inv_Phi((p_draw + 1) / 2) * math.sqrt(2) * beta
    vw, vl = sig_w**2 + tau**2, sig_l**2 + tau**2
    c = math.sqrt(2 * beta**2 + vw + vl)
    t, e = (mu_w - mu_l) / c, eps / c
    if draw:
        den = _Phi(e - t) - _Phi(-e - t)
        v = (_phi(-e - t) - _phi(e - t)) / den
        w = v * v + ((e - t) * _phi(e - t) - (-e - t) * _phi(-e - t)) / den
    else:
        v = _phi(t - e) / _Phi(t - e)
        w = v * (v + t - e)
    return (
        (mu_w + vw / c * v, math.sqrt(vw * (1 - vw / c**2 * w))),
        (mu_l - vl / c * v, math.sqrt(vl * (1 - vl / c**2 * w))),
    )


# -- v / w ------------------------------------------------------------------------

T_GRID = np.linspace(-40, 40, 50)
ALPHAS = (0.05, 0.5, 1.0, 2.5)


def test_vw_match_quadrature_on_grid():
    worst = 0.0
    for t, alpha in itertools.product(T_GRID, ALPHAS):
        t = float(t)
        v, w = quad_moments(alpha - t, mp.inf)
        worst = max(worst, abs(v_exceeds(t, alpha) - v), abs(w_exceeds(t, alpha) - w))
        v, w = quad_moments(-alpha - t, alpha - t)
        worst = max(worst, abs(v_within(t, alpha) - v), abs(w_within(t, alpha) - w))
    assert worst < 1e-9, worst


def test_vw_closed_values():
    assert v_exceeds(0, 0) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)
    assert w_exceeds(0, 0) == pytest.approx(2 / math.pi, abs=1e-15)
    # deep loss: the truncation point dominates the mean shift
    assert v_exceeds(-25, 0) == pytest.approx(25.04, abs=0.01)
    assert 0 < w_exceeds(-25, 0) <= 1
    assert v_within(0, 1) == 0
    assert v_within(3, 0.1) < 0 < v_within(-3, 0.1)
    assert w_within(0, 0) == 1.0
    assert v_within(2.0, 1e-300) == -2.0 and w_within(2.0, 1e-300) == pytest.approx(1.0)


@given(st.floats(-40, 40), st.floats(0, 5))
def test_w_in_unit_interval(t, alpha):
    for w in (w_exceeds(t, alpha), w_within(t, alpha)):
        assert 0 <= w <= 1
    assert math.isfinite(v_exceeds(t, alpha)) and math.isfinite(v_within(t, alpha))


# -- two-entity updates -------------------------------------------------------------


def test_canonical_win():
    cfg = RatingConfig()
    w, l = update_two_player(Rating(), Rating(), cfg)
    (omw, osw), (oml, osl) = closed_form_oracle(25, 25 / 3, 25, 25 / 3, cfg.beta, cfg.tau, 0.10)
    assert (w.mu, w.sigma) == pytest.approx((29.396, 7.171), abs=1e-3)
    assert (omw, osw) == pytest.approx((29.396, 7.171), abs=1e-3)
    assert w.mu == pytest.approx(omw, abs=1e-9) and w.sigma == pytest.approx(osw, abs=1e-9)
    assert l.mu == pytest.approx(oml, abs=1e-9) and l.sigma == pytest.approx(osl, abs=1e-9)
    assert w.mu + l.mu == pytest.approx(50, abs=1e-12)
    ffa = update_ffa({"a": Rating(), "b": Rating()}, [("a", 1), ("b", 2)], cfg).ratings
    assert ffa["a"].mu == pytest.approx(w.mu, abs=1e-6)


def test_fuzzed_two_entity_factor_graph_matches_closed_form():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        cfg = RatingConfig(beta=float(rng.uniform(1, 8)), tau=float(rng.uniform(0, 0.5)),
                           p_draw=float(rng.uniform(0, 0.4)))
        a = Rating(float(rng.uniform(0, 50)), float(rng.uniform(0.5, 10)))
        b = Rating(float(rng.uniform(0, 50)), float(rng.uniform(0.5, 10)))
        draw = bool(rng.random() < 0.3)
        cw, cl = update_two_player(a, b, cfg, is_draw=draw)
        fg = update_ffa({"a": a, "b": b}, [("a", 1), ("b", 1 if draw else 2)], cfg)
        assert fg.converged
        for got, want in ((fg.ratings["a"], cw), (fg.ratings["b"], cl)):
            worst = max(worst, abs(got.mu - want.mu), abs(got.sigma - want.sigma))
        if abs(a.mu - b.mu) < 20:  # the naive oracle is only trustworthy away from the tails
            (omw, osw), (oml, osl) = closed_form_oracle(a.mu, a.sigma, b.mu, b.sigma,
                                                        cfg.beta, cfg.tau, cfg.p_draw, draw)
            assert cw.mu == pytest.approx(omw, abs=1e-7) and cl.sigma == pytest.approx(osl, abs=1e-7)
    assert worst < 1e-6, worst


def test_draw_between_equals_is_symmetric():
    w, l = update_two_player(Rating(), Rating(), is_draw=True)
    assert w.mu == pytest.approx(25) and l.mu == pytest.approx(25)
    assert w.sigma == pytest.approx(l.sigma) and w.sigma < 25 / 3


def test_tiny_sigma_barely_moves():
    a, b = Rating(30, 0.01), Rating(20, 0.01)
    w, l = update_two_player(b, a)  # upset
    assert abs(w.mu - 20) < 0.01 and abs(l.mu - 30) < 0.01


def test_upset_moves_more_than_expected_win():
    strong, weak = Rating(35, 4), Rating(15, 4)
    up_w, _ = update_two_player(weak, strong)
    ex_w, _ = update_two_player(strong, weak)
    assert up_w.mu - weak.mu > ex_w.mu - strong.mu > 0


# -- multi-entity -----------------------------------------------------------------


def test_sixteen_way_draw_among_equals():
    ids = [f"s{i}" for i in range(16)]
    up = update_ffa({i: Rating() for i in ids}, [(i, 1) for i in ids])
    assert up.converged
    mus = [up.ratings[i].mu for i in ids]
    assert max(mus) - min(mus) < 1e-6
    assert np.mean(mus) == pytest.approx(25, abs=1e-6)
    assert all(up.ratings[i].sigma < 25 / 3 for i in ids)


def test_three_player_chain_is_symmetric():
    up = update_ffa({k: Rating() for k in "abc"}, [("a", 1), ("b", 2), ("c", 3)]).ratings
    assert up["a"].mu > up["b"].mu > up["c"].mu
    assert up["a"].mu - 25 == pytest.approx(25 - up["c"].mu, abs=1e-4)
    assert up["b"].mu == pytest.approx(25, abs=1e-4)
    assert up["a"].sigma == pytest.approx(up["c"].sigma, abs=1e-4)


@given(st.lists(st.integers(1, 4), min_size=3, max_size=8), st.floats(-20, 20))
def test_shift_equivariance(ranks, shift):
    rng = np.random.default_rng(len(ranks))
    base = {i: Rating(float(rng.uniform(15, 35)), float(rng.uniform(2, 8))) for i in range(len(ranks))}
    moved = {i: Rating(r.mu + shift, r.sigma) for i, r in base.items()}
    outcome = list(enumerate(ranks))
    a = update_ffa(base, outcome).ratings
    b = update_ffa(moved, outcome).ratings
    for i in base:
        assert b[i].mu - shift == pytest.approx(a[i].mu, abs=1e-6)
        assert b[i].sigma == pytest.approx(a[i].sigma, abs=1e-9)


@given(st.lists(st.integers(1, 5), min_size=2, max_size=16))
def test_ffa_posteriors_are_sane(ranks):
    outcome = [(i, r) for i, r in enumerate(ranks)]
    up = update_ffa({i: Rating() for i in range(len(ranks))}, outcome).ratings
    # variance never grows beyond prior plus dynamics noise
    cap = math.sqrt((25 / 3) ** 2 + (25 / 300) ** 2)
    assert all(0 < r.sigma <= cap + 1e-12 for r in up.values())
    # tied entrants need not end equal: the chain ties only the last of a group to the next group
    for i, j in itertools.combinations(range(len(ranks)), 2):
        if ranks[i] < ranks[j]:
            assert up[i].mu > up[j].mu


def test_outcome_validation():
    r = {"a": Rating(), "b": Rating()}
    with pytest.raises(KeyError):
        update_ffa(r, [("a", 1), ("zzz", 2)])
    with pytest.raises(ValueError):
        update_ffa(r, [("a", 1)])
    with pytest.raises(ValueError):
        update_ffa(r, [("a", 1), ("a", 2)])
    with pytest.raises(ValueError):
        update_ffa(r, [("a", 0), ("b", 1)])


def test_iteration_cap_reports_non_convergence():
    ids = range(16)
    cfg = RatingConfig(max_iter=1, tol=1e-15)
    up = update_ffa({i: Rating() for i in ids}, [(i, i + 1) for i in ids], cfg)
    assert not up.converged and up.iterations == 1
    assert all(math.isfinite(r.mu) and r.sigma > 0 for r in up.ratings.values())


def test_config_validation():
    with pytest.raises(ValueError):
        RatingConfig(p_draw=1.0)
    with pytest.raises(ValueError):
        RatingConfig(beta=0)
    with pytest.raises(ValueError):
        Rating(25, 0)


def test_leaderboard_score():
    assert leaderboard_score(Rating()) == pytest.approx(0.0, abs=1e-12)
    assert leaderboard_score(Rating(30, 2), k=1) == 28


def test_rating_records_round_trip_exactly(tmp_path):
    rng = np.random.default_rng(5)
    recs = [RatingRecord(f"sub{i}", float(rng.normal(25, 5)), float(rng.uniform(0.1, 8)), i, i * 3)
            for i in range(20)]
    save_ratings(tmp_path / "r.jsonl", recs)
    back = load_ratings(tmp_path / "r.jsonl")
    assert back == recs
    assert load_ratings(tmp_path / "missing.jsonl") == []
