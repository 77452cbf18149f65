"""Permutations, partial rankings, rank distances and majorization.

Rankings are tuples of 0-based candidate indices, best first: ``r[0]`` is the
top-ranked candidate.  Distances are position based (a candidate's
displacement is the difference of its positions in the two rankings), which
makes every built-in distance invariant under relabeling candidates.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .common import InvalidInput, ResourceLimit, as_fraction

Ranking = tuple  # tuple[int, ...]

DEFAULT_MONOTONE_CAP = 6

DISTANCE_KINDS = (
    "kendall_tau",
    "spearman_rho",
    "spearman_footrule",
    "cayley",
    "hamming",
    "gsum",
)


def as_ranking(seq: Iterable[int], m: int | None = None) -> Ranking:
    r = tuple(int(c) for c in seq)
    if m is not None and len(r) != m:
        raise InvalidInput(f"ranking {r} has length {len(r)}, expected {m}")
    if sorted(r) != list(range(len(r))):
        raise InvalidInput(f"not a permutation of 0..{len(r) - 1}: {r}")
    return r


def positions(r: Sequence[int]) -> list[int]:
    pos = [0] * len(r)
    for i, c in enumerate(r):
        pos[c] = i
    return pos


def swap_positions(r: Sequence[int], i: int, j: int) -> Ranking:
    out = list(r)
    out[i], out[j] = out[j], out[i]
    return tuple(out)


def all_rankings(m: int) -> Iterable[Ranking]:
    """All rankings of ``m`` candidates in lexicographic order."""
    return itertools.permutations(range(m))


@dataclass(frozen=True)
class PartialRanking:
    """A ranking with some candidates removed, preserving relative order."""

    base: Ranking
    removed: frozenset = frozenset()
    order: Ranking = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "order", tuple(c for c in self.base if c not in self.removed)
        )

    def __len__(self):
        return len(self.order)

    def __getitem__(self, j):
        return self.order[j]

    def top(self) -> int:
        return self.order[0]

    def position(self, candidate: int) -> int:
        return self.order.index(candidate)


def restrict(r: Sequence[int], removed: Iterable[int]) -> PartialRanking:
    r = tuple(r)
    removed = frozenset(int(c) for c in removed)
    bad = [c for c in removed if not 0 <= c < len(r)]
    if bad:
        raise InvalidInput(f"candidates out of range for m={len(r)}: {sorted(bad)}")
    return PartialRanking(r, removed)


@dataclass(frozen=True)
class RankDistance:
    """A distance on rankings.

    ``gsum`` sums ``g(|displacement|)`` over candidates, with ``g`` given as a
    table on ``0..m-1`` that must be non-negative, non-decreasing and convex.
    """

    kind: str
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in DISTANCE_KINDS:
            raise InvalidInput(f"unknown distance kind {self.kind!r}")
        if self.kind == "gsum":
            g = tuple(as_fraction(v) for v in self.table)
            if not g:
                raise InvalidInput("gsum needs a non-empty table")
            if any(v < 0 for v in g):
                raise InvalidInput("gsum table must be non-negative")
            if any(b < a for a, b in zip(g, g[1:])):
                raise InvalidInput("gsum table must be non-decreasing")
            if any(g[t + 1] - 2 * g[t] + g[t - 1] < 0 for t in range(1, len(g) - 1)):
                raise InvalidInput("gsum table must be convex")
            object.__setattr__(self, "table", g)
        elif self.table:
            raise InvalidInput(f"{self.kind} takes no table")

    @classmethod
    def gsum(cls, table: Iterable) -> "RankDistance":
        return cls("gsum", tuple(table))

    @property
    def integral(self) -> bool:
        return self.kind != "gsum" or all(v.denominator == 1 for v in self.table)

    def __call__(self, a: Sequence[int], b: Sequence[int]):
        return distance(self, a, b)

    def to_json(self):
        if self.kind == "gsum":
            return {"kind": "gsum", "table": [str(v) for v in self.table]}
        return self.kind

    @classmethod
    def from_json(cls, obj) -> "RankDistance":
        if isinstance(obj, str):
            return cls(obj)
        if isinstance(obj, dict) and obj.get("kind") == "gsum":
            return cls.gsum(obj.get("table", ()))
        if isinstance(obj, dict) and "kind" in obj:
            return cls(obj["kind"])
        raise InvalidInput(f"bad distance spec: {obj!r}")


KENDALL_TAU = RankDistance("kendall_tau")
SPEARMAN_RHO = RankDistance("spearman_rho")
SPEARMAN_FOOTRULE = RankDistance("spearman_footrule")
CAYLEY = RankDistance("cayley")
HAMMING = RankDistance("hamming")


def _kendall(pa, pb, m):
    # discordant pairs, O(m^2); only used on small m
    count = 0
    for c in range(m):
        for e in range(c + 1, m):
            if (pa[c] - pa[e]) * (pb[c] - pb[e]) < 0:
                count += 1
    return count


def _cycles(perm):
    seen = [False] * len(perm)
    cycles = 0
    for start in range(len(perm)):
        if not seen[start]:
            cycles += 1
            k = start
            while not seen[k]:
                seen[k] = True
                k = perm[k]
    return cycles


def distance(d: RankDistance, a: Sequence[int], b: Sequence[int]):
    """Distance between two rankings; an int, or a Fraction for rational gsum tables."""
    if len(a) != len(b):
        raise InvalidInput(f"length mismatch: {len(a)} vs {len(b)}")
    m = len(a)
    pa, pb = positions(a), positions(b)
    kind = d.kind
    if kind == "kendall_tau":
        return _kendall(pa, pb, m)
    if kind == "spearman_rho":
        return sum((pa[c] - pb[c]) ** 2 for c in range(m))
    if kind == "spearman_footrule":
        return sum(abs(pa[c] - pb[c]) for c in range(m))
    if kind == "hamming":
        return sum(1 for i in range(m) if a[i] != b[i])
    if kind == "cayley":
        # position in a of the candidate at each position of b
        return m - _cycles([pa[c] for c in b])
    if len(d.table) < m:
        raise InvalidInput(f"gsum table covers 0..{len(d.table) - 1}, need 0..{m - 1}")
    total = sum(d.table[abs(pa[c] - pb[c])] for c in range(m))
    return int(total) if total.denominator == 1 else total


def majorizes(x: Sequence, y: Sequence, tol=0) -> bool:
    """True iff ``x`` majorizes ``y``: equal sums and dominating sorted prefix sums."""
    if len(x) != len(y):
        raise InvalidInput(f"length mismatch: {len(x)} vs {len(y)}")
    xs = sorted(x, reverse=True)
    ys = sorted(y, reverse=True)
    if abs(sum(xs) - sum(ys)) > tol:
        return False
    px = py = 0
    for a, b in zip(xs, ys):
        px += a
        py += b
        if px < py - tol:
            return False
    return True


@dataclass(frozen=True)
class MonotoneCheck:
    holds: bool
    checked: int
    ranking: Ranking | None = None
    pair: tuple | None = None
    swapped: Ranking | None = None
    d_ranking: object = None
    d_swapped: object = None


def is_inversion_monotone(
    d: RankDistance,
    m: int,
    ground_truth: Sequence[int] | None = None,
    cap: int = DEFAULT_MONOTONE_CAP,
) -> MonotoneCheck:
    """Check that swapping a correctly ordered pair never decreases the distance.

    Scans rankings in lexicographic order and position pairs ``i < j`` in
    lexicographic order, and reports the first violation found.
    """
    if m > cap:
        raise ResourceLimit(f"m={m} exceeds enumeration cap {cap}", math.factorial(m))
    truth = tuple(range(m)) if ground_truth is None else as_ranking(ground_truth, m)
    rank_of = positions(truth)
    dist = {}
    for p in all_rankings(m):
        dist[p] = d(p, truth)
    checked = 0
    for p in all_rankings(m):
        for i in range(m):
            for j in range(i + 1, m):
                k, l = p[i], p[j]
                if rank_of[k] > rank_of[l]:
                    continue
                checked += 1
                q = swap_positions(p, i, j)
                if dist[p] > dist[q]:
                    return MonotoneCheck(False, checked, p, (k, l), q, dist[p], dist[q])
    return MonotoneCheck(True, checked)
