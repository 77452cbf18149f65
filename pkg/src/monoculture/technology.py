"""Ranking technologies: conditional distributions over rankings given values.

Every technology maps a value vector ``x`` to a distribution over rankings.
Exact kinds (Mallows, tables, deterministic maps, layered constructions and
discrete additive noise) expose rational pmfs; continuous additive noise is
sampled and its pmf can only be estimated.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

import numpy as np

from .common import (
    InvalidInput,
    ResourceLimit,
    UnsupportedConfiguration,
    as_fraction,
)
from .perm import KENDALL_TAU, RankDistance, all_rankings, as_ranking

DEFAULT_CAP = 5
TIE_MODES = ("index", "uniform")


def as_value_vector(x: Iterable) -> tuple:
    vec = tuple(as_fraction(v) for v in x)
    if any(v < 0 for v in vec):
        raise InvalidInput(f"values must be non-negative: {[str(v) for v in vec]}")
    return vec


def ground_truth_ranking(x: Sequence, tie_mode: str = "index", rng=None) -> tuple:
    """Candidates by decreasing value; ties by index, or uniformly at random."""
    m = len(x)
    if tie_mode == "index":
        return tuple(sorted(range(m), key=lambda c: (-x[c], c)))
    if tie_mode != "uniform":
        raise InvalidInput(f"unknown tie mode {tie_mode!r}")
    rng = np.random.default_rng() if rng is None else rng
    keys = rng.random(m)
    return tuple(sorted(range(m), key=lambda c: (-x[c], keys[c])))


def tie_consistent_rankings(x: Sequence) -> list[tuple]:
    """Every ranking that orders candidates by decreasing value (ties in any order)."""
    groups = []
    for c in sorted(range(len(x)), key=lambda c: (-x[c], c)):
        if groups and x[groups[-1][0]] == x[c]:
            groups[-1].append(c)
        else:
            groups.append([c])
    out = []
    for combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        out.append(tuple(c for block in combo for c in block))
    return out


def has_ties(x: Sequence) -> bool:
    return len(set(x)) < len(x)


def sample_without_replacement(rng, pool, size: int, t: int) -> np.ndarray:
    """``size`` independent uniformly random ordered ``t``-subsets of ``pool``."""
    pool = np.asarray(pool)
    L = len(pool)
    if t > L:
        raise InvalidInput(f"cannot draw {t} of {L} without replacement")
    if t == 0:
        return np.empty((size, 0), dtype=np.int64)
    if 10 * t <= L:
        idx = rng.integers(0, L, size=(size, t))
        while True:
            srt = np.sort(idx, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            nbad = int(bad.sum())
            if nbad == 0:
                break
            idx[bad] = rng.integers(0, L, size=(nbad, t))
    else:
        idx = np.argsort(rng.random((size, L)), axis=1)[:, :t]
    return pool[idx]


def _inverse_cdf(pmf: dict, rng, size: int) -> np.ndarray:
    rankings = list(pmf)
    probs = np.array([float(pmf[r]) for r in rankings])
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    u = rng.random(size)
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), len(rankings) - 1)
    table = np.array(rankings, dtype=np.int64)
    return table[idx]


@dataclass
class RankingPmf:
    """A materialized ranking distribution for one value vector."""

    m: int
    x: tuple
    probs: dict
    exact: bool = True
    stderr: dict | None = None
    samples: int | None = None

    def total(self):
        return sum(self.probs.values())

    def __getitem__(self, ranking):
        return self.probs.get(tuple(ranking), Fraction(0) if self.exact else 0.0)


class RankingTechnology:
    """Base class; subclasses are frozen dataclasses with a unique ``id``."""

    kind = "abstract"
    exact = True

    def pmf(self, x: Sequence, cap: int | None = None) -> dict:
        """Exact pmf as ``{ranking: Fraction}`` over rankings with positive mass."""
        raise NotImplementedError

    def support(self, x: Sequence, cap: int | None = None) -> Iterator[tuple]:
        return iter(self.pmf(x, cap).items())

    def prob(self, x: Sequence, ranking: Sequence[int]) -> Fraction:
        return self.pmf(x).get(tuple(ranking), Fraction(0))

    def prefix_pmf(self, x: Sequence, depth: int, cap: int | None = None) -> dict:
        """Distribution of the top ``depth`` entries of the ranking."""
        out: dict = {}
        for r, p in self.support(x, cap):
            key = tuple(r[:depth])
            out[key] = out.get(key, 0) + p
        return out

    def sample_many(self, x: Sequence, rng, size: int) -> np.ndarray:
        raise NotImplementedError

    def sample_prefix(self, x: Sequence, rng, size: int, depth: int) -> np.ndarray:
        return self.sample_many(x, rng, size)[:, :depth]

    def equivariant_at(self, x: Sequence) -> bool:
        """Whether relabeling candidates in ``x`` relabels the ranking distribution."""
        return False

    def to_json(self) -> dict:
        raise NotImplementedError


def _check_cap(m: int, cap: int | None):
    cap = DEFAULT_CAP if cap is None else cap
    if m > cap:
        raise ResourceLimit(
            f"m={m} exceeds the ranking enumeration cap {cap} ({math.factorial(m)} rankings)",
            math.factorial(m),
        )


@functools.lru_cache(maxsize=256)
def _mallows_weights(phi: Fraction, d: RankDistance, truths: tuple, m: int) -> tuple:
    """Integer weights proportional to the Mallows pmf, averaged over ``truths``."""
    if not d.integral:
        raise UnsupportedConfiguration(
            "exact Mallows pmfs need an integer-valued distance (phi**d must be rational)"
        )
    rankings = list(all_rankings(m))
    dist = [[int(d(r, t)) for t in truths] for r in rankings]
    top = max(max(row) for row in dist)
    p, q = phi.numerator, phi.denominator
    pw = [p**k for k in range(top + 1)]
    qw = [q**k for k in range(top + 1)]
    weights = tuple(
        (r, sum(pw[k] * qw[top - k] for k in row)) for r, row in zip(rankings, dist)
    )
    return weights


def _rim(phi: float, m: int, size: int, rng) -> np.ndarray:
    """Repeated insertion: relative Kendall-Tau Mallows rankings of items 0..m-1."""
    cur = np.zeros((size, 1), dtype=np.int64)
    for i in range(1, m):
        w = phi ** (i - np.arange(i + 1, dtype=float))
        pos = rng.choice(i + 1, size=size, p=w / w.sum())
        cols = np.arange(i + 1)
        src = np.where(cols[None, :] < pos[:, None], cols[None, :], cols[None, :] - 1)
        new = np.take_along_axis(cur, np.clip(src, 0, i - 1), axis=1)
        new[cols[None, :] == pos[:, None]] = i
        cur = new
    return cur


@dataclass(frozen=True, eq=False)
class Mallows(RankingTechnology):
    """Mallows model: P(r) proportional to phi ** d(r, ground truth).

    With ``tie_mode="uniform"`` the ground truth breaks value ties uniformly at
    random, i.e. the pmf is the average over all tie-consistent ground truths.
    """

    id: str
    phi: Fraction
    distance: RankDistance = KENDALL_TAU
    tie_mode: str = "index"
    kind = "mallows"

    def __post_init__(self):
        phi = as_fraction(self.phi)
        if not 0 < phi <= 1:
            raise InvalidInput(f"phi must lie in (0, 1], got {phi}")
        if self.tie_mode not in TIE_MODES:
            raise InvalidInput(f"unknown tie mode {self.tie_mode!r}")
        object.__setattr__(self, "phi", phi)

    def _truths(self, x):
        if self.tie_mode == "uniform":
            return tuple(tie_consistent_rankings(x))
        return (ground_truth_ranking(x),)

    def pmf(self, x, cap=None):
        x = as_value_vector(x)
        _check_cap(len(x), cap)
        weights = _mallows_weights(self.phi, self.distance, self._truths(x), len(x))
        total = sum(w for _, w in weights)
        return {r: Fraction(w, total) for r, w in weights}

    def sample_many(self, x, rng, size):
        x = as_value_vector(x)
        m = len(x)
        if self.distance.kind == "kendall_tau":
            rel = _rim(float(self.phi), m, size, rng)
            if self.tie_mode == "uniform" and has_ties(x):
                neg = -np.array([float(v) for v in x])
                keys = rng.random((size, m))
                truths = np.lexsort((keys, np.broadcast_to(neg, (size, m))), axis=-1)
            else:
                truths = np.broadcast_to(np.array(ground_truth_ranking(x)), (size, m))
            return np.take_along_axis(np.ascontiguousarray(truths), rel, axis=1)
        try:
            pmf = self.pmf(x)
        except ResourceLimit as exc:
            raise UnsupportedConfiguration(
                f"Mallows sampling with {self.distance.kind} needs m <= cap"
            ) from exc
        return _inverse_cdf(pmf, rng, size)

    def equivariant_at(self, x):
        return self.tie_mode == "uniform" or not has_ties(x)

    def to_json(self):
        return {
            "id": self.id,
            "kind": "mallows",
            "phi": str(self.phi),
            "distance": self.distance.to_json(),
            "tie_mode": self.tie_mode,
        }


NOISE_FAMILIES = ("gaussian", "laplace", "uniform", "discrete")


@dataclass(frozen=True)
class NoiseSpec:
    """IID per-candidate additive noise.

    ``scale`` is the standard deviation (gaussian), the Laplace scale ``b``, or
    the width of a centered uniform interval.  Discrete noise carries its
    support ``values`` and ``probs``.
    """

    family: str
    scale: float = 1.0
    values: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise InvalidInput(f"unknown noise family {self.family!r}")
        if self.family == "discrete":
            vals = tuple(as_fraction(v) for v in self.values)
            probs = tuple(as_fraction(p) for p in self.probs)
            if not vals or len(vals) != len(probs):
                raise InvalidInput("discrete noise needs matching values and probs")
            if any(p < 0 for p in probs) or sum(probs) != 1:
                raise InvalidInput("discrete noise probabilities must be >= 0 and sum to 1")
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "probs", probs)
        elif not float(self.scale) > 0:
            raise InvalidInput(f"noise scale must be positive, got {self.scale}")

    @property
    def discrete(self) -> bool:
        return self.family == "discrete"

    def sample(self, rng, shape) -> np.ndarray:
        s = float(self.scale)
        if self.family == "gaussian":
            return rng.normal(0.0, s, shape)
        if self.family == "laplace":
            return rng.laplace(0.0, s, shape)
        if self.family == "uniform":
            return rng.uniform(-s / 2, s / 2, shape)
        vals = np.array([float(v) for v in self.values])
        probs = np.array([float(p) for p in self.probs])
        return vals[rng.choice(len(vals), size=shape, p=probs / probs.sum())]

    def density(self, z) -> np.ndarray:
        """Univariate density, elementwise."""
        z = np.asarray(z, dtype=float)
        s = float(self.scale)
        if self.family == "gaussian":
            return np.exp(-0.5 * (z / s) ** 2) / (s * math.sqrt(2 * math.pi))
        if self.family == "laplace":
            return np.exp(-np.abs(z) / s) / (2 * s)
        if self.family == "uniform":
            return np.where(np.abs(z) <= s / 2, 1.0 / s, 0.0)
        raise UnsupportedConfiguration("discrete noise has no density")

    def joint_density(self, z) -> np.ndarray:
        """Density of the iid noise vector; the last axis indexes candidates."""
        return np.prod(self.density(z), axis=-1)

    def to_json(self):
        if self.discrete:
            return {
                "family": "discrete",
                "values": [str(v) for v in self.values],
                "probs": [str(p) for p in self.probs],
            }
        return {"family": self.family, "scale": float(self.scale)}

    @classmethod
    def from_json(cls, obj) -> "NoiseSpec":
        if not isinstance(obj, dict) or "family" not in obj:
            raise InvalidInput(f"bad noise spec: {obj!r}")
        fam = obj["family"]
        if fam == "discrete":
            return cls("discrete", values=tuple(obj["values"]), probs=tuple(obj["probs"]))
        scale = obj.get("scale", obj.get("sigma", obj.get("b", obj.get("width", 1.0))))
        return cls(fam, float(scale))


DEFAULT_NOISE_BUDGET = 10**6


@dataclass(frozen=True, eq=False)
class AdditiveNoise(RankingTechnology):
    """Rank candidates by decreasing ``x + noise``."""

    id: str
    noise: NoiseSpec
    tie_mode: str = "index"
    kind = "additive_noise"

    def __post_init__(self):
        if self.tie_mode not in TIE_MODES:
            raise InvalidInput(f"unknown tie mode {self.tie_mode!r}")

    @property
    def exact(self):
        return self.noise.discrete

    def pmf(self, x, cap=None):
        if not self.noise.discrete:
            raise UnsupportedConfiguration(
                "continuous noise has no exact pmf; use estimated_pmf"
            )
        x = as_value_vector(x)
        m = len(x)
        _check_cap(m, cap)
        k = len(self.noise.values)
        if k**m > DEFAULT_NOISE_BUDGET:
            raise ResourceLimit(f"{k}^{m} noise outcomes exceed budget", k**m)
        out: dict = {}
        for combo in itertools.product(range(k), repeat=m):
            p = Fraction(1)
            for c in combo:
                p *= self.noise.probs[c]
            if p == 0:
                continue
            scores = [x[c] + self.noise.values[combo[c]] for c in range(m)]
            if self.tie_mode == "index":
                rankings = [ground_truth_ranking(scores)]
            else:
                rankings = tie_consistent_rankings(scores)
            share = p / len(rankings)
            for r in rankings:
                out[r] = out.get(r, 0) + share
        return out

    def estimated_pmf(self, x, rng, samples: int = 10**6) -> RankingPmf:
        x = as_value_vector(x)
        m = len(x)
        draws = self.sample_many(x, rng, samples)
        codes = _ranking_codes(draws, m)
        uniq, counts = np.unique(codes, return_counts=True)
        probs, err = {}, {}
        for code, cnt in zip(uniq, counts):
            r = _decode_ranking(int(code), m)
            p = cnt / samples
            probs[r] = p
            err[r] = math.sqrt(p * (1 - p) / samples)
        return RankingPmf(m, x, probs, exact=False, stderr=err, samples=samples)

    def sample_many(self, x, rng, size):
        xf = np.array([float(v) for v in as_value_vector(x)])
        m = len(xf)
        scores = xf[None, :] + self.noise.sample(rng, (size, m))
        if self.tie_mode == "index":
            return np.argsort(-scores, axis=1, kind="stable")
        keys = rng.random((size, m))
        return np.lexsort((keys, -scores), axis=-1)

    def equivariant_at(self, x):
        return not self.noise.discrete or self.tie_mode == "uniform"

    def to_json(self):
        return {
            "id": self.id,
            "kind": "additive_noise",
            "noise": self.noise.to_json(),
            "tie_mode": self.tie_mode,
        }


def _ranking_codes(draws: np.ndarray, m: int) -> np.ndarray:
    weights = m ** np.arange(m - 1, -1, -1, dtype=np.int64)
    return draws.astype(np.int64) @ weights


def _decode_ranking(code: int, m: int) -> tuple:
    out = []
    for _ in range(m):
        out.append(code % m)
        code //= m
    return tuple(reversed(out))


def _check_pmf(pmf: dict, m: int) -> dict:
    out = {}
    for r, p in pmf.items():
        r = as_ranking(r, m)
        p = as_fraction(p)
        if p < 0:
            raise InvalidInput(f"negative probability {p} for {r}")
        if p > 0:
            out[r] = out.get(r, 0) + p
    if sum(out.values()) != 1:
        raise InvalidInput(f"pmf sums to {sum(out.values())}, not 1")
    return out


@dataclass(frozen=True, eq=False)
class TableTechnology(RankingTechnology):
    """Explicit rational pmf per value vector."""

    id: str
    entries: dict = field(default_factory=dict)
    kind = "table"

    def __post_init__(self):
        clean = {}
        for x, pmf in self.entries.items():
            xv = as_value_vector(x)
            clean[xv] = _check_pmf(pmf, len(xv))
        if not clean:
            raise InvalidInput("table technology needs at least one entry")
        object.__setattr__(self, "entries", clean)

    def pmf(self, x, cap=None):
        xv = as_value_vector(x)
        try:
            return dict(self.entries[xv])
        except KeyError:
            raise InvalidInput(
                f"table {self.id!r} has no entry for x={[str(v) for v in xv]}"
            ) from None

    def sample_many(self, x, rng, size):
        return _inverse_cdf(self.pmf(x), rng, size)

    def to_json(self):
        return {
            "id": self.id,
            "kind": "table",
            "entries": [
                {
                    "x": [str(v) for v in x],
                    "pmf": [{"ranking": list(r), "p": str(p)} for r, p in pmf.items()],
                }
                for x, pmf in self.entries.items()
            ],
        }


@dataclass(frozen=True, eq=False)
class Deterministic(RankingTechnology):
    """A fixed ranking, a value order (``"desc"``/``"asc"``), or an explicit map."""

    id: str
    ranking: tuple | None = None
    order: str | None = None
    entries: dict = field(default_factory=dict)
    kind = "deterministic"

    def __post_init__(self):
        given = sum(v is not None and v != {} for v in (self.ranking, self.order, self.entries))
        if given != 1:
            raise InvalidInput("deterministic technology needs exactly one of ranking/order/entries")
        if self.ranking is not None:
            object.__setattr__(self, "ranking", as_ranking(self.ranking))
        if self.order is not None and self.order not in ("desc", "asc"):
            raise InvalidInput(f"unknown order {self.order!r}")
        if self.entries:
            object.__setattr__(
                self,
                "entries",
                {as_value_vector(x): as_ranking(r, len(x)) for x, r in self.entries.items()},
            )

    def ranking_for(self, x) -> tuple:
        xv = as_value_vector(x)
        if self.ranking is not None:
            if len(self.ranking) != len(xv):
                raise InvalidInput(f"ranking length {len(self.ranking)} != m={len(xv)}")
            return self.ranking
        if self.order == "desc":
            return ground_truth_ranking(xv)
        if self.order == "asc":
            return tuple(sorted(range(len(xv)), key=lambda c: (xv[c], c)))
        try:
            return self.entries[xv]
        except KeyError:
            raise InvalidInput(f"no ranking for x={[str(v) for v in xv]}") from None

    def pmf(self, x, cap=None):
        return {self.ranking_for(x): Fraction(1)}

    def prefix_pmf(self, x, depth, cap=None):
        return {self.ranking_for(x)[:depth]: Fraction(1)}

    def sample_many(self, x, rng, size):
        return np.tile(np.array(self.ranking_for(x), dtype=np.int64), (size, 1))

    def equivariant_at(self, x):
        return self.order is not None and not has_ties(x)

    def to_json(self):
        out = {"id": self.id, "kind": "deterministic"}
        if self.ranking is not None:
            out["ranking"] = list(self.ranking)
        elif self.order is not None:
            out["order"] = self.order
        else:
            out["entries"] = [
                {"x": [str(v) for v in x], "ranking": list(r)} for x, r in self.entries.items()
            ]
        return out


SELECT_KINDS = ("top", "values", "exclude_values", "positive", "rest")
TIER_ORDERS = ("shuffle", "desc", "asc")


@dataclass(frozen=True)
class Tier:
    """One block of a layered ranking.

    ``select`` picks candidates from those not yet placed; ``pad_to`` tops the
    block up with a uniformly random subset of the other unplaced candidates;
    the block is then shuffled or sorted by value.
    """

    select: str = "rest"
    k: int = 0
    values: tuple = ()
    order: str = "shuffle"
    pad_to: int = 0

    def __post_init__(self):
        if self.select not in SELECT_KINDS:
            raise InvalidInput(f"unknown tier selector {self.select!r}")
        if self.order not in TIER_ORDERS:
            raise InvalidInput(f"unknown tier order {self.order!r}")
        if self.pad_to and self.order != "shuffle":
            raise InvalidInput("padded tiers must be shuffled")
        object.__setattr__(self, "values", tuple(as_fraction(v) for v in self.values))

    def resolve(self, x, pool):
        """Forced members, the padding pool and the padding count."""
        if self.select == "top":
            forced = sorted(pool, key=lambda c: (-x[c], c))[: self.k]
        elif self.select == "values":
            forced = [c for c in pool if x[c] in self.values]
        elif self.select == "exclude_values":
            forced = [c for c in pool if x[c] not in self.values]
        elif self.select == "positive":
            forced = [c for c in pool if x[c] > 0]
        else:
            forced = list(pool)
        forced_set = set(forced)
        rest = [c for c in pool if c not in forced_set]
        pad = max(0, min(self.pad_to - len(forced), len(rest))) if self.pad_to else 0
        return forced, rest, pad

    def arrange(self, x, members):
        if self.order == "desc":
            return sorted(members, key=lambda c: (-x[c], c))
        if self.order == "asc":
            return sorted(members, key=lambda c: (x[c], c))
        return list(members)

    def to_json(self):
        sel: dict = {"kind": self.select}
        if self.select == "top":
            sel["k"] = self.k
        if self.select in ("values", "exclude_values"):
            sel["values"] = [str(v) for v in self.values]
        out = {"select": sel, "order": self.order}
        if self.pad_to:
            out["pad_to"] = self.pad_to
        return out

    @classmethod
    def from_json(cls, obj) -> "Tier":
        sel = obj.get("select", "rest")
        if isinstance(sel, str):
            sel = {"kind": sel}
        return cls(
            select=sel.get("kind", "rest"),
            k=int(sel.get("k", 0)),
            values=tuple(sel.get("values", ())),
            order=obj.get("order", "shuffle"),
            pad_to=int(obj.get("pad_to", 0)),
        )


_REST = Tier()


@dataclass(frozen=True, eq=False)
class Layered(RankingTechnology):
    """A ranking assembled from value-defined tiers; unplaced candidates go last, shuffled.

    This covers rule-based tables such as "the best candidate first, then a
    uniform permutation of the rest" without materializing ``m!`` entries.
    """

    id: str
    tiers: tuple = ()
    kind = "layered"

    def __post_init__(self):
        object.__setattr__(self, "tiers", tuple(self.tiers))

    def _walk(self, x, ti, pool, depth):
        if depth <= 0 or not pool:
            yield (), Fraction(1)
            return
        tier = self.tiers[ti] if ti < len(self.tiers) else _REST
        forced, rest, pad = tier.resolve(x, pool)
        pads = itertools.combinations(rest, pad) if pad else [()]
        p_pad = Fraction(1, math.comb(len(rest), pad))
        for extra in pads:
            members = tier.arrange(x, forced + list(extra))
            s = len(members)
            t = min(s, depth)
            left = [c for c in pool if c not in set(members)]
            if tier.order == "shuffle":
                p_seq = p_pad * Fraction(math.factorial(s - t), math.factorial(s))
                seqs = itertools.permutations(members, t)
            else:
                p_seq = p_pad
                seqs = [tuple(members[:t])]
            for seq in seqs:
                if t < s or ti >= len(self.tiers):
                    yield seq, p_seq
                else:
                    for tail, p_tail in self._walk(x, ti + 1, left, depth - s):
                        yield seq + tail, p_seq * p_tail

    def support(self, x, cap=None):
        x = as_value_vector(x)
        m = len(x)
        if cap is not None:
            _check_cap(m, cap)
        return self._walk(x, 0, list(range(m)), m)

    def pmf(self, x, cap=None):
        x = as_value_vector(x)
        _check_cap(len(x), cap)
        return dict(self._walk(x, 0, list(range(len(x))), len(x)))

    def prefix_pmf(self, x, depth, cap=None):
        x = as_value_vector(x)
        out: dict = {}
        for seq, p in self._walk(x, 0, list(range(len(x))), depth):
            out[seq] = out.get(seq, 0) + p
        return out

    def prob(self, x, ranking):
        x = as_value_vector(x)
        r = tuple(ranking)
        pool = list(range(len(x)))
        o = 0
        p = Fraction(1)
        for tier in self.tiers + (_REST,):
            if not pool:
                break
            forced, rest, pad = tier.resolve(x, pool)
            s = len(forced) + pad
            block = r[o : o + s]
            bset = set(block)
            if not set(forced) <= bset or not bset <= set(pool) or len(bset) != s:
                return Fraction(0)
            if pad:
                p /= math.comb(len(rest), pad)
            if tier.order == "shuffle":
                p /= math.factorial(s)
            elif list(block) != tier.arrange(x, list(block)):
                return Fraction(0)
            pool = [c for c in pool if c not in bset]
            o += s
        return p

    def sample_prefix(self, x, rng, size, depth):
        x = as_value_vector(x)
        m = len(x)
        depth = min(depth, m)
        blocks = []
        pool = list(range(m))
        o = 0
        tiers = self.tiers + (_REST,)
        for ti, tier in enumerate(tiers):
            if o >= depth or not pool:
                break
            forced, rest, pad = tier.resolve(x, pool)
            s = len(forced) + pad
            t = min(s, depth - o)
            if pad and o + s < depth:
                return self._sample_rows(x, rng, size)[:, :depth]
            if pad:
                extra = sample_without_replacement(rng, rest, size, pad)
                members = np.hstack([np.tile(np.array(forced, dtype=np.int64), (size, 1)), extra])
                perm = np.argsort(rng.random((size, s)), axis=1)[:, :t]
                blocks.append(np.take_along_axis(members, perm, axis=1))
            elif tier.order == "shuffle":
                blocks.append(sample_without_replacement(rng, np.array(forced, dtype=np.int64), size, t))
            else:
                fixed = np.array(tier.arrange(x, forced)[:t], dtype=np.int64)
                blocks.append(np.tile(fixed, (size, 1)))
            fs = set(forced)
            pool = [c for c in pool if c not in fs]
            o += s
        return np.hstack(blocks) if blocks else np.empty((size, 0), dtype=np.int64)

    def _sample_rows(self, x, rng, size):
        out = np.empty((size, len(x)), dtype=np.int64)
        for row in range(size):
            pool = list(range(len(x)))
            seq = []
            for tier in self.tiers + (_REST,):
                if not pool:
                    break
                forced, rest, pad = tier.resolve(x, pool)
                members = list(forced)
                if pad:
                    members += [rest[i] for i in rng.choice(len(rest), pad, replace=False)]
                if tier.order == "shuffle":
                    members = [members[i] for i in rng.permutation(len(members))]
                else:
                    members = tier.arrange(x, members)
                seq += members
                ms = set(members)
                pool = [c for c in pool if c not in ms]
            out[row] = seq
        return out

    def sample_many(self, x, rng, size):
        return self.sample_prefix(x, rng, size, len(x))

    def equivariant_at(self, x):
        x = as_value_vector(x)
        pool = list(range(len(x)))
        for tier in self.tiers:
            forced, rest, pad = tier.resolve(x, pool)
            if tier.select == "top" and forced and rest:
                if min(x[c] for c in forced) == max(x[c] for c in rest):
                    return False
            if tier.order != "shuffle" and has_ties([x[c] for c in forced]):
                return False
            if pad:
                return True
            fs = set(forced)
            pool = [c for c in pool if c not in fs]
        return True

    def to_json(self):
        return {"id": self.id, "kind": "layered", "tiers": [t.to_json() for t in self.tiers]}


def exact_pmf(tech: RankingTechnology, x, cap: int | None = None, rng=None,
              samples: int = 10**6) -> RankingPmf:
    """Materialize the pmf; continuous noise is estimated from ``samples`` draws."""
    x = as_value_vector(x)
    if isinstance(tech, AdditiveNoise) and not tech.noise.discrete:
        _check_cap(len(x), 4 if cap is None else cap)
        rng = np.random.default_rng(0) if rng is None else rng
        return tech.estimated_pmf(x, rng, samples)
    _check_cap(len(x), cap)
    return RankingPmf(len(x), x, tech.pmf(x, cap), exact=True)


def sample(tech: RankingTechnology, x, rng) -> tuple:
    return tuple(int(c) for c in tech.sample_many(x, rng, 1)[0])


def technology_from_json(obj) -> RankingTechnology:
    if not isinstance(obj, dict):
        raise InvalidInput(f"technology spec must be an object, got {type(obj).__name__}")
    try:
        tid = str(obj["id"])
        kind = obj["kind"]
    except KeyError as exc:
        raise InvalidInput(f"technology spec missing field {exc}") from None
    if kind == "mallows":
        return Mallows(
            tid,
            as_fraction(obj.get("phi", 1)),
            RankDistance.from_json(obj.get("distance", "kendall_tau")),
            obj.get("tie_mode", "index"),
        )
    if kind == "additive_noise":
        return AdditiveNoise(tid, NoiseSpec.from_json(obj.get("noise")), obj.get("tie_mode", "index"))
    if kind == "table":
        entries = {}
        for e in obj.get("entries", ()):
            entries[as_value_vector(e["x"])] = {tuple(q["ranking"]): q["p"] for q in e["pmf"]}
        return TableTechnology(tid, entries)
    if kind == "deterministic":
        if "ranking" in obj:
            return Deterministic(tid, ranking=tuple(obj["ranking"]))
        if "order" in obj:
            return Deterministic(tid, order=obj["order"])
        return Deterministic(
            tid, entries={as_value_vector(e["x"]): tuple(e["ranking"]) for e in obj.get("entries", ())}
        )
    if kind == "layered":
        return Layered(tid, tuple(Tier.from_json(t) for t in obj.get("tiers", ())))
    raise InvalidInput(f"unknown technology kind {kind!r}")
