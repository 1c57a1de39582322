import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from plasma2d.digraph import (
    DigraphInvariantError,
    NNDigraph,
    build_nn_digraph,
    classify_all_functions,
    count_bound,
    count_bound_exact,
    count_table,
    digraph_stats,
    enumerate_exact,
    enumeration_table,
    log_count_bound,
)
from plasma2d.geometry import SignedConfig


def closed_form_count(M, K):
    # choose K unordered pairs for the 2-cycles, then a rooted forest on the rest
    # hanging off the 2K cycle vertices: 2K * M^(M - 2K - 1) such forests
    pairs = math.factorial(M) // (2 ** K * math.factorial(K) * math.factorial(M - 2 * K))
    forests = 1 if M == 2 * K else 2 * K * M ** (M - 2 * K - 1)
    return pairs * forests


def brute_counts(M):
    counts = {}
    for F in itertools.product(range(M), repeat=M):
        if any(F[i] == i for i in range(M)):
            continue
        lengths, ok = set(), True
        for s in range(M):
            v = s
            for _ in range(M):
                v = F[v]
            # v is on a cycle; measure it
            n, u = 1, F[v]
            while u != v:
                u, n = F[u], n + 1
            lengths.add(n)
        if lengths == {2}:
            K = len({frozenset((i, F[i])) for i in range(M) if F[F[i]] == i})
            counts[K] = counts.get(K, 0) + 1
    return counts


FROZEN = {
    4: (48, 3),
    6: (6480, 1080, 15),
    8: (1835008, 430080, 20160, 105),
}


# -- construction -------------------------------------------------------------------

def test_two_separated_pairs():
    g = build_nn_digraph([(0, 0), (0.1, 0), (1, 1), (1, 1.1)])
    assert list(g.out) == [1, 0, 3, 2]
    assert g.K == 2 and g.cycles == [(0, 1), (2, 3)]


def test_chain_of_three():
    g = build_nn_digraph([(0, 0), (1, 0), (2.5, 0)])
    assert list(g.out) == [1, 0, 1]
    assert g.K == 1 and g.components == [[0, 1, 2]]


def test_signed_config_uses_merged_points():
    cfg = SignedConfig([(0, 0), (5, 5)], [(0.2, 0), (5, 5.3)])
    g = build_nn_digraph(cfg)
    assert list(g.out) == [2, 3, 0, 1]


def test_violations_detect_long_cycles():
    out = np.array([1, 2, 0])
    g = NNDigraph(out, [[0, 1, 2]], [], np.ones(3))
    bad = g.violations()
    assert any("length 3" in b for b in bad)
    assert any("0 two-cycles" in b for b in bad)


def test_needs_two_points():
    with pytest.raises(ValueError):
        build_nn_digraph([(0, 0)])


coord = st.integers(-10 ** 6, 10 ** 6).map(lambda v: v / 1e6)


@given(st.lists(st.tuples(coord, coord), min_size=2, max_size=30, unique=True))
def test_nn_digraph_structure(points):
    g = build_nn_digraph(points)  # raises DigraphInvariantError on any violation
    assert 1 <= g.K <= g.M // 2
    assert len(g.cycles) == g.K
    assert sum(len(c) for c in g.components) == g.M


def test_invariant_error_is_assertion():
    assert issubclass(DigraphInvariantError, AssertionError)


# -- counting ---------------------------------------------------------------------

@pytest.mark.parametrize("M", [2, 3, 4, 5, 6])
def test_enumeration_matches_brute_force(M):
    brute = brute_counts(M)
    for K in range(1, M // 2 + 1):
        assert enumerate_exact(M, K) == brute.get(K, 0)


@pytest.mark.parametrize("M", range(2, 10))
def test_enumeration_matches_closed_form(M):
    for K in range(1, M // 2 + 1):
        assert enumerate_exact(M, K) == closed_form_count(M, K)


def test_enumeration_frozen_values():
    for M, row in FROZEN.items():
        assert enumeration_table(M)[1:] == row


@pytest.mark.parametrize("M", range(2, 8))
def test_classifier_agrees_with_enumeration(M):
    c = classify_all_functions(M)
    table = enumeration_table(M)
    for K in range(1, M // 2 + 1):
        assert c.get(K, 0) == table[K]
    assert sum(c.values()) == (M - 1) ** M


def test_classifier_other_counts():
    assert [classify_all_functions(M)["other"] for M in (3, 4, 5)] == [2, 30, 464]


def test_bound_values():
    assert count_bound_exact(2, 1) == 1
    assert count_bound_exact(4, 2) == 3
    assert count_bound_exact(4, 1) == 96
    assert count_bound(4, 1) == pytest.approx(96)
    assert log_count_bound(50, 7) == pytest.approx(math.log(count_bound_exact(50, 7)), rel=1e-12)


@pytest.mark.parametrize("M", range(2, 10))
def test_bound_dominates_exact_count(M):
    for K in range(1, M // 2 + 1):
        assert enumerate_exact(M, K) <= count_bound_exact(M, K)
        if 2 * K == M:
            assert enumerate_exact(M, K) == count_bound_exact(M, K)


def test_count_limits():
    with pytest.raises(ValueError, match="enumeration budget exceeded"):
        enumerate_exact(11, 2)
    with pytest.raises(ValueError):
        count_bound_exact(4, 3)
    with pytest.raises(ValueError):
        classify_all_functions(9)


def test_count_table_rows():
    rows = count_table([4])
    assert rows[0] == {"M": 4, "K": 1, "exact": 48, "bound": 96.0, "ratio": 0.5}
    assert rows[1]["ratio"] == 1.0


# -- statistics ----------------------------------------------------------------------

def test_digraph_stats_random_configs():
    rng = np.random.default_rng(0)
    cfgs = [SignedConfig.random_uniform(int(rng.integers(1, 10)), rng=rng) for _ in range(500)]
    summary = digraph_stats(cfgs)
    assert all(s.consistent and s.uncapped for s in summary.samples)
    assert summary.flagged == []
    assert sum(summary.K_distribution.values()) == 500
    for s in summary.samples:
        assert s.n_cycles == s.K


def test_digraph_stats_flags_capped_radius():
    cfg = SignedConfig([(0, 0), (10, 0)], [(0.1, 0), (10, 5)])
    s = digraph_stats([cfg])
    assert s.flagged == [0]
    assert not s.samples[0].uncapped
    assert s.samples[0].component_sizes == {2: 2}
