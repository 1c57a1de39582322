"""Nearest-neighbour functional digraphs and the counting of D_{M,K}.

Vertices are 0-based indices into the merged (sign-forgetting) point list.
F(i) is the nearest other point, ties to the lowest index.  Every component of
the functional graph of F carries exactly one cycle, a mutual-nearest pair.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numba as nb
import numpy as np

from plasma2d.geometry import SignedConfig, as_points, nearest_neighbors

MAX_ENUM_M = 10


class DigraphInvariantError(AssertionError):
    """A nearest-neighbour digraph violated the one-2-cycle-per-component structure."""


@dataclass(frozen=True)
class NNDigraph:
    out: np.ndarray
    components: list[list[int]]
    cycles: list[tuple[int, int]]
    nn_dist: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.out)

    @property
    def K(self) -> int:
        return len(self.components)

    def violations(self) -> list[str]:
        """Structural checks; empty when every invariant holds."""
        bad = []
        M = self.M
        if np.any(self.out == np.arange(M)):
            bad.append("self loop")
        if not 1 <= self.K <= M // 2:
            bad.append(f"component count {self.K} outside [1, {M // 2}]")
        comp_of = np.empty(M, dtype=int)
        for c, verts in enumerate(self.components):
            comp_of[verts] = c
        per_comp = Counter(comp_of[a] for a, _ in self.cycles)
        for c in range(self.K):
            if per_comp.get(c, 0) != 1:
                bad.append(f"component {c} has {per_comp.get(c, 0)} two-cycles")
        # every cycle of F, of any length, must be one of the 2-cycles
        for length in _cycle_lengths(self.out):
            if length != 2:
                bad.append(f"cycle of length {length}")
        return bad


def _cycle_lengths(out: np.ndarray) -> list[int]:
    M = len(out)
    state = np.zeros(M, dtype=int)  # 0 new, 1 on stack, 2 done
    lengths = []
    for s in range(M):
        path = []
        v = s
        while state[v] == 0:
            state[v] = 1
            path.append(v)
            v = out[v]
        if state[v] == 1:
            lengths.append(len(path) - path.index(v))
        for u in path:
            state[u] = 2
    return lengths


def _components(out: np.ndarray) -> list[list[int]]:
    parent = list(range(len(out)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in enumerate(out):
        ri, rj = find(i), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, list[int]] = {}
    for i in range(len(out)):
        groups.setdefault(find(i), []).append(i)
    return [groups[k] for k in sorted(groups)]


def build_nn_digraph(points, check: bool = True) -> NNDigraph:
    """Nearest-neighbour digraph of a planar point list (or a SignedConfig, merged)."""
    pts = points.points if isinstance(points, SignedConfig) else as_points(points)
    if len(pts) < 2:
        raise ValueError("need at least 2 points")
    dist, out = nearest_neighbors(pts)
    out = np.asarray(out, dtype=int)
    cycles = [(i, int(j)) for i, j in enumerate(out) if i < j and out[j] == i]
    g = NNDigraph(out, _components(out), cycles, dist)
    if check:
        bad = g.violations()
        if bad:
            raise DigraphInvariantError("; ".join(bad))
    return g


# -- counting ------------------------------------------------------------------

def _check_mk(M: int, K: int) -> None:
    if M < 2:
        raise ValueError("M must be at least 2")
    if not 1 <= K <= M // 2:
        raise ValueError(f"K={K} out of range [1, {M // 2}]")


def count_bound_exact(M: int, K: int) -> Fraction:
    """Gamma(M+1) M^{M-2K} / (2^K Gamma(K+1) Gamma(M-2K+1)) as an exact rational."""
    _check_mk(M, K)
    return Fraction(math.factorial(M) * M ** (M - 2 * K),
                    2 ** K * math.factorial(K) * math.factorial(M - 2 * K))


def log_count_bound(M: int, K: int) -> float:
    _check_mk(M, K)
    return (math.lgamma(M + 1) + (M - 2 * K) * math.log(M) - K * math.log(2)
            - math.lgamma(K + 1) - math.lgamma(M - 2 * K + 1))


def count_bound(M: int, K: int) -> float:
    """The D_{M,K} counting bound, evaluated in log space."""
    return math.exp(log_count_bound(M, K))


@nb.njit(cache=True)
def _enumerate_counts(M):
    """counts[K] = number of F without fixed points whose cycles all have length 2 and number K.

    Depth-first over F(0), F(1), ...; a branch dies as soon as the assigned
    arrows close a cycle of length other than 2.
    """
    counts = np.zeros(M // 2 + 1, np.int64)
    F = np.full(M, -1, np.int64)
    choice = np.zeros(M, np.int64)
    ncyc = np.zeros(M + 1, np.int64)  # two-cycles among F[0..i-1]
    i = 0
    choice[0] = -1
    while i >= 0:
        choice[i] += 1
        if choice[i] == i:
            choice[i] += 1
        if choice[i] >= M:
            F[i] = -1
            i -= 1
            continue
        j = choice[i]
        F[i] = j
        # follow assigned arrows from j; reaching i closes a cycle through i
        v = j
        steps = 1
        closed = False
        while v >= 0 and F[v] >= 0 and steps <= M:
            if v == i:
                closed = True
                break
            v = F[v]
            steps += 1
        if closed and steps != 2:
            continue
        ncyc[i + 1] = ncyc[i] + (1 if closed else 0)
        if i == M - 1:
            counts[ncyc[M]] += 1
        else:
            i += 1
            choice[i] = -1
    return counts


def enumerate_exact(M: int, K: int) -> int:
    """|D_{M,K}| by exhaustive search; M <= 10."""
    if M > MAX_ENUM_M:
        raise ValueError(f"enumeration budget exceeded: M={M} > {MAX_ENUM_M}")
    _check_mk(M, K)
    return int(enumeration_table(M)[K])


_TABLES: dict[int, tuple[int, ...]] = {}


def enumeration_table(M: int) -> tuple[int, ...]:
    """All |D_{M,K}|, indexed by K (entry 0 is 0)."""
    if M > MAX_ENUM_M:
        raise ValueError(f"enumeration budget exceeded: M={M} > {MAX_ENUM_M}")
    if M not in _TABLES:
        _TABLES[M] = tuple(int(c) for c in _enumerate_counts(M))
    return _TABLES[M]


def classify_all_functions(M: int) -> Counter:
    """One pass over every fixed-point-free F on M points, vectorised.

    Returns a Counter keyed by K for functions whose cycles all have length 2,
    plus the key ``"other"`` for the rest.
    """
    if M > 8:
        raise ValueError("classifier is meant for M <= 8")
    rows = []
    for i in range(M):
        rows.append([j for j in range(M) if j != i])
    F = np.array(list(itertools.product(*rows)), dtype=np.int8)
    # after M steps every vertex sits on its cycle
    v = np.tile(np.arange(M, dtype=np.int8), (len(F), 1))
    idx = np.arange(len(F))[:, None]
    for _ in range(M):
        v = F[idx, v]
    on_cycle = np.zeros(F.shape, dtype=bool)
    np.put_along_axis(on_cycle, v.astype(np.int64), True, axis=1)
    ff = F[idx, F]
    good = np.all(~on_cycle | (ff == np.arange(M)), axis=1)
    k = on_cycle.sum(axis=1) // 2
    out = Counter({int(a): int(b) for a, b in zip(*np.unique(k[good], return_counts=True))})
    out["other"] = int((~good).sum())
    return out


def count_table(M_values) -> list[dict]:
    """Rows (M, K, exact, bound, ratio) for the CSV counts table."""
    rows = []
    for M in M_values:
        table = enumeration_table(M)
        for K in range(1, M // 2 + 1):
            b = count_bound_exact(M, K)
            rows.append({"M": M, "K": K, "exact": table[K], "bound": float(b),
                         "ratio": float(Fraction(table[K]) / b)})
    return rows


# -- statistics over samples ---------------------------------------------------------

@dataclass(frozen=True)
class DigraphSample:
    M: int
    K: int
    n_cycles: int
    component_sizes: dict[int, int]
    log_half_nn_sum: float
    dipole_sum: float
    uncapped: bool

    @property
    def consistent(self) -> bool:
        """The two log sums must agree whenever no r(p) is capped at 1."""
        return (not self.uncapped) or math.isclose(self.log_half_nn_sum, self.dipole_sum,
                                                   rel_tol=1e-12, abs_tol=1e-12)


@dataclass(frozen=True)
class DigraphSummary:
    samples: list[DigraphSample]
    K_distribution: dict[int, int]

    @property
    def flagged(self) -> list[int]:
        """Indices of samples where a capped radius makes the two sums differ."""
        return [i for i, s in enumerate(self.samples)
                if not s.uncapped and s.log_half_nn_sum != s.dipole_sum]


def digraph_stats(samples) -> DigraphSummary:
    out = []
    for cfg in samples:
        g = build_nn_digraph(cfg)
        half = 0.5 * g.nn_dist
        r = np.minimum(1.0, half)
        sizes = Counter(len(c) for c in g.components)
        out.append(DigraphSample(g.M, g.K, len(g.cycles), dict(sorted(sizes.items())),
                                 float(np.log(half).sum()), float(np.log(r).sum()),
                                 bool(np.all(half < 1.0))))
    return DigraphSummary(out, dict(sorted(Counter(s.K for s in out).items())))
