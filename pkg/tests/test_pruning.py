import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from hypothesis.extra import numpy as hnp

import oracles
from acng import AdaptiveSchedule, PruneRule, RuleKind, UsageError, adaptive_prune, prune_candidates
from acng.pruning import PruneCache, alpha_bar, cached_prunes, prunes, sort_candidates

KIND_NAMES = {
    RuleKind.SHIFTED_SCALED: "shifted_scaled",
    RuleKind.TRIANGLE: "triangle",
    RuleKind.SCALED: "scaled",
    RuleKind.SHIFTED: "shifted",
}

pos = st.floats(0.0, 50.0, allow_nan=False)
alphas = st.floats(0.5, 3.0, allow_nan=False)
taus = st.floats(0.0, 2.0, allow_nan=False)


def rules():
    return st.one_of(
        st.builds(PruneRule.shifted_scaled, alphas, taus),
        st.just(PruneRule.triangle()),
        st.builds(PruneRule.scaled, alphas),
        st.builds(PruneRule.shifted, taus),
    )


@given(rules(), pos, pos)
def test_prunes_matches_inequalities(rule, d_pu, d_uv):
    want = oracles.rule_prunes(KIND_NAMES[rule.kind], rule.alpha, rule.tau, d_pu, d_uv)
    assert prunes(rule, d_pu, d_uv) == want


@pytest.mark.parametrize(
    "rule, d_pu, d_uv",
    [
        (PruneRule.shifted_scaled(2.0, 0.5), 3.5, 1.0),
        (PruneRule.triangle(), 2.0, 2.0),
        (PruneRule.scaled(1.5), 3.0, 2.0),
        (PruneRule.shifted(0.25), 1.75, 1.0),
    ],
)
def test_boundary_is_not_pruned(rule, d_pu, d_uv):
    assert not prunes(rule, d_pu, d_uv)
    assert prunes(rule, d_pu + 1e-9, d_uv)


@given(alphas, taus, pos, pos)
def test_alpha_bar_reformulation(alpha, tau, d_pu, d_uv):
    lhs = d_pu
    rhs = alpha * d_uv + (alpha + 1) * tau
    assume(abs(lhs - rhs) > 1e-9 * (1 + abs(rhs)))
    assume(d_uv + tau > 0)
    assert (alpha_bar(d_pu, d_uv, tau) > alpha) == prunes(PruneRule.shifted_scaled(alpha, tau), d_pu, d_uv)


def test_rule_parameter_validation():
    with pytest.raises(UsageError):
        PruneRule.shifted_scaled(0.0, 1.0)
    with pytest.raises(UsageError):
        PruneRule.shifted_scaled(1.0, -1.0)
    with pytest.raises(UsageError):
        PruneRule.shifted(-0.1)
    with pytest.raises(UsageError):
        AdaptiveSchedule(M=1)
    with pytest.raises(UsageError):
        AdaptiveSchedule(alpha0=2.0, alpha_max=1.0)


def test_default_schedule():
    a = AdaptiveSchedule().alphas()
    assert len(a) == 15
    assert a[0] == 0.9
    assert a[-1] == pytest.approx(1.6)


def test_cached_prunes_evaluates_each_pair_once():
    cache = PruneCache()
    calls = []

    def d():
        calls.append(1)
        return 1.0

    for alpha in (0.9, 1.0, 1.1, 1.2):
        cached_prunes(cache, (3, 7), 2.2, d, 0.0, alpha)
    assert len(calls) == 1
    assert cache.evaluations == 1
    assert cached_prunes(cache, (3, 7), 2.2, d, 0.0, 2.1)
    assert not cached_prunes(cache, (3, 7), 2.2, d, 0.0, 2.2)


def test_sort_candidates_validation():
    with pytest.raises(UsageError, match="itself"):
        sort_candidates(2, [(2, 0.0), (1, 1.0)])
    with pytest.raises(UsageError, match="duplicate"):
        sort_candidates(0, [(1, 1.0), (1, 1.0)])
    c = sort_candidates(0, [(5, 1.0), (3, 1.0), (4, 0.5)])
    assert c.ids.tolist() == [4, 3, 5]


@st.composite
def point_sets(draw, max_n=40, max_dim=4):
    n = draw(st.integers(2, max_n))
    dim = draw(st.integers(1, max_dim))
    seed = draw(st.integers(0, 2**32 - 1))
    x = np.random.default_rng(seed).random((n, dim)).astype(np.float32)
    return x


@given(point_sets(), rules(), st.one_of(st.none(), st.integers(1, 10)))
def test_prune_candidates_matches_oracle(x, rule, cap):
    p = 0
    cands = list(range(1, len(x)))
    got = prune_candidates(x, p, cands, rule, cap=cap).ids.tolist()
    want = oracles.shortcut_set(oracles.as_float64(x), p, cands, KIND_NAMES[rule.kind], rule.alpha, rule.tau, cap)
    assert got == want


def test_ties_break_by_id():
    # integer grid: every distance is exact, 1 and 2 are both at distance 1 from 0
    x = np.array([[0, 0], [1, 0], [0, 1], [-1, 0]], np.float32)
    r = prune_candidates(x, 0, [3, 2, 1], PruneRule.triangle())
    assert r.ids.tolist() == [1, 2, 3]


def test_shortcut_set_is_first_come():
    # 2 lies beyond 1 on a line, so the nearer 1 prunes it
    x = np.array([[0.0], [1.0], [2.5], [-1.5]], np.float32)
    assert prune_candidates(x, 0, [1, 2, 3], PruneRule.triangle()).ids.tolist() == [1, 3]
    # with a large tau the shifted-scaled rule keeps everything
    assert prune_candidates(x, 0, [1, 2, 3], PruneRule.shifted_scaled(1.0, 5.0)).ids.tolist() == [1, 3, 2]


@given(point_sets(max_n=60), st.integers(2, 12), st.floats(0.8, 1.2), st.floats(0.01, 0.2),
       st.floats(1.2, 2.0), st.floats(0.0, 0.1))
def test_adaptive_matches_oracle(x, M, alpha0, d_alpha, alpha_max, tau):
    sched = AdaptiveSchedule(M=M, alpha0=alpha0, alpha_max=alpha_max, d_alpha=d_alpha)
    cands = list(range(1, len(x)))
    want, rounds = oracles.adaptive(oracles.as_float64(x), 0, cands, M, alpha0, alpha_max, d_alpha, tau)
    got = adaptive_prune(x, 0, cands, sched, tau)
    assert got.ids.tolist() == want
    assert got.rounds == rounds
    for cache in (True, False):
        for early in (True, False):
            r = adaptive_prune(x, 0, cands, sched, tau, use_cache=cache, early_stop=early)
            assert r.ids.tolist() == want


def test_small_candidate_set_runs_to_alpha_max(rng):
    x = rng.random((4, 3)).astype(np.float32)
    sched = AdaptiveSchedule(M=10)
    r = adaptive_prune(x, 0, [1, 2, 3], sched, 0.0)
    assert r.rounds == len(sched.alphas())
    assert r.exhausted
    assert len(r.ids) <= 3


def test_one_round_when_alpha0_suffices(rng):
    # eight points on a circle around p; the alpha0 shortcut set already has >= M/2 members
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    x = np.vstack([[0, 0], np.c_[np.cos(ang), np.sin(ang)]]).astype(np.float32)
    sched = AdaptiveSchedule(M=6, alpha0=0.9)
    want = oracles.shortcut_set(oracles.as_float64(x), 0, range(1, 9), "shifted_scaled", 0.9, 0.0)
    assert len(want) >= 3
    r = adaptive_prune(x, 0, list(range(1, 9)), sched, 0.0)
    assert r.rounds == 1
    assert r.ids.tolist() == want[:6]


def test_adaptive_returns_m_closest_of_final_set(rng):
    x = rng.random((200, 2)).astype(np.float32)
    sched = AdaptiveSchedule(M=8, alpha0=1.0, alpha_max=3.0, d_alpha=0.5)
    r = adaptive_prune(x, 0, list(range(1, 200)), sched, 0.5)
    assert len(r.ids) == 8
    assert np.all(np.diff(r.dists) >= 0)


def test_cache_saves_distances_once_alpha_moves(rng):
    x = rng.random((300, 6)).astype(np.float32)
    sched = AdaptiveSchedule(M=40)
    cached = adaptive_prune(x, 0, list(range(1, 300)), sched, 0.0)
    naive = adaptive_prune(x, 0, list(range(1, 300)), sched, 0.0, use_cache=False)
    assert cached.rounds >= 2
    assert cached.ids.tolist() == naive.ids.tolist()
    assert cached.n_dist < naive.n_dist


def test_bare_ids_and_pairs_agree(rng):
    x = rng.random((30, 3)).astype(np.float32)
    ids = list(range(1, 30))
    pairs = [(u, float(np.linalg.norm(x[u].astype(np.float64) - x[0]))) for u in ids]
    a = prune_candidates(x, 0, ids, PruneRule.scaled(1.3))
    b = prune_candidates(x, 0, pairs, PruneRule.scaled(1.3))
    assert a.ids.tolist() == b.ids.tolist()
