"""The hiring game: value distributions, advice spaces, profiles and one play of RSD.

Firms act in a uniformly random order.  Each firm consults the technology it
chose; firms choosing the same common technology see the same sample, while
idiosyncratic technologies are private to one firm.  Under the obedience
constrained mechanism a firm hires the top remaining candidate of its sample;
under the unconstrained mechanism a selection policy decides.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .common import InvalidInput, InvalidPolicy, ResourceLimit, as_fraction
from .technology import as_value_vector

MECHANISMS = ("obedient", "unconstrained")
DEFAULT_ATOM_LIMIT = 10**6


def _multinomial(counts) -> int:
    out = math.factorial(sum(counts))
    for c in counts:
        out //= math.factorial(c)
    return out


def distinct_permutations(base: Sequence) -> list[tuple]:
    """All distinct orderings of a multiset, in lexicographic index order."""
    return sorted(set(itertools.permutations(base)))


@dataclass(frozen=True)
class ValueDistribution:
    """A finite-support distribution over value vectors.

    ``kind`` selects the representation:

    * ``"explicit"``: ``support`` lists ``(probability, vector)`` pairs.
    * ``"exchangeable"``: ``support`` lists ``(probability, base)``; the vector
      is a uniformly random distinct permutation of ``base``.
    * ``"iid"``: every candidate independently takes ``values[k]`` with
      probability ``probs[k]``; ``m`` is required.

    The last two are permutation invariant by construction.  A declared
    invariant explicit support is verified exactly.
    """

    kind: str = "explicit"
    support: tuple = ()
    permutation_invariant: bool = False
    m: int = 0
    values: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.kind not in ("explicit", "exchangeable", "iid"):
            raise InvalidInput(f"unknown value distribution kind {self.kind!r}")
        if self.kind == "iid":
            vals = tuple(as_fraction(v) for v in self.values)
            probs = tuple(as_fraction(p) for p in self.probs)
            if not vals or len(vals) != len(probs) or len(set(vals)) != len(vals):
                raise InvalidInput("iid values need distinct values with matching probs")
            if any(v < 0 for v in vals) or any(p < 0 for p in probs) or sum(probs) != 1:
                raise InvalidInput("iid values must be >= 0 with probabilities summing to 1")
            if self.m < 1:
                raise InvalidInput("iid values need m >= 1")
            object.__setattr__(self, "values", vals)
            object.__setattr__(self, "probs", probs)
            object.__setattr__(self, "permutation_invariant", True)
            return
        supp = tuple((as_fraction(p), as_value_vector(x)) for p, x in self.support)
        if not supp:
            raise InvalidInput("value distribution needs a non-empty support")
        lengths = {len(x) for _, x in supp}
        if len(lengths) != 1:
            raise InvalidInput(f"value vectors of different lengths {sorted(lengths)}")
        if any(p < 0 for p, _ in supp) or sum(p for p, _ in supp) != 1:
            raise InvalidInput("value probabilities must be >= 0 and sum to 1")
        supp = tuple((p, x) for p, x in supp if p > 0)
        object.__setattr__(self, "support", supp)
        object.__setattr__(self, "m", lengths.pop())
        if self.kind == "exchangeable":
            object.__setattr__(self, "permutation_invariant", True)
        elif self.permutation_invariant:
            self._verify_invariance()

    @classmethod
    def deterministic(cls, x) -> "ValueDistribution":
        return cls("explicit", ((Fraction(1), tuple(x)),))

    def _verify_invariance(self):
        mass: dict = {}
        for p, x in self.support:
            mass[x] = mass.get(x, 0) + p
        orbits: dict = {}
        for x, p in mass.items():
            orbits.setdefault(tuple(sorted(x, reverse=True)), []).append((x, p))
        for base, members in orbits.items():
            perms = _multinomial(Counter(base).values())
            if len(members) != perms or len({p for _, p in members}) != 1:
                raise InvalidInput(
                    f"support is not closed under permutations with equal mass at orbit "
                    f"{[str(v) for v in base]}"
                )

    def orbit_representatives(self) -> list[tuple]:
        """``(mass, representative)`` per orbit, values sorted decreasingly."""
        if not self.permutation_invariant:
            raise InvalidInput("orbit representatives need a permutation-invariant distribution")
        reps: dict = {}
        if self.kind == "iid":
            for combo in itertools.combinations_with_replacement(range(len(self.values)), self.m):
                counts = Counter(combo)
                p = Fraction(_multinomial(counts.values()))
                for k, c in counts.items():
                    p *= self.probs[k] ** c
                if p:
                    base = tuple(sorted((self.values[k] for k in combo), reverse=True))
                    reps[base] = reps.get(base, 0) + p
        else:
            for p, x in self.support:
                base = tuple(sorted(x, reverse=True))
                reps[base] = reps.get(base, 0) + p
        return [(p, base) for base, p in sorted(reps.items(), reverse=True)]

    def atom_count(self) -> int:
        if self.kind == "explicit":
            return len(self.support)
        if self.kind == "iid":
            return sum(1 for p in self.probs if p) ** self.m
        return sum(_multinomial(Counter(x).values()) for _, x in self.support)

    def atoms(self, limit: int = DEFAULT_ATOM_LIMIT) -> list[tuple]:
        """Every ``(probability, vector)`` with positive mass."""
        count = self.atom_count()
        if count > limit:
            raise ResourceLimit(f"{count} value atoms exceed the limit {limit}", count)
        if self.kind == "explicit":
            merged: dict = {}
            for p, x in self.support:
                merged[x] = merged.get(x, 0) + p
            return [(p, x) for x, p in merged.items()]
        out: dict = {}
        for p, base in self.orbit_representatives():
            perms = distinct_permutations(base)
            for x in perms:
                out[x] = out.get(x, 0) + p / len(perms)
        return [(p, x) for x, p in out.items()]

    def sample(self, rng, size: int) -> list[tuple]:
        """``size`` independent vectors (as tuples of Fractions)."""
        if self.kind == "iid":
            p = np.array([float(q) for q in self.probs])
            idx = rng.choice(len(self.values), size=(size, self.m), p=p / p.sum())
            return [tuple(self.values[k] for k in row) for row in idx]
        p = np.array([float(q) for q, _ in self.support])
        which = rng.choice(len(self.support), size=size, p=p / p.sum())
        out = []
        for w in which:
            x = self.support[w][1]
            if self.kind == "exchangeable":
                x = tuple(x[k] for k in rng.permutation(self.m))
            out.append(x)
        return out

    def to_json(self):
        if self.kind == "iid":
            return {
                "kind": "iid",
                "m": self.m,
                "values": [str(v) for v in self.values],
                "probs": [str(p) for p in self.probs],
            }
        return {
            "kind": self.kind,
            "permutation_invariant": self.permutation_invariant,
            "support": [{"p": str(p), "x": [str(v) for v in x]} for p, x in self.support],
        }

    @classmethod
    def from_json(cls, obj) -> "ValueDistribution":
        if not isinstance(obj, dict):
            raise InvalidInput("values must be an object")
        kind = obj.get("kind", "explicit")
        if kind == "iid":
            return cls("iid", m=int(obj["m"]), values=tuple(obj["values"]), probs=tuple(obj["probs"]))
        if "x" in obj and "support" not in obj:
            return cls.deterministic(obj["x"])
        support = tuple((e["p"], tuple(e["x"])) for e in obj.get("support", ()))
        return cls(kind, support, bool(obj.get("permutation_invariant", False)))


@dataclass(frozen=True)
class AdviceSpace:
    """Common technologies (with per-firm access) and per-firm idiosyncratic ones."""

    common: tuple = ()
    idiosyncratic: tuple = ()
    access: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "common", tuple(self.common))
        object.__setattr__(self, "idiosyncratic", tuple(tuple(h) for h in self.idiosyncratic))
        ids = [t.id for t in self.common] + [t.id for h in self.idiosyncratic for t in h]
        dup = [k for k, c in Counter(ids).items() if c > 1]
        if dup:
            raise InvalidInput(f"duplicate technology ids {dup}")
        if self.access is not None:
            common_ids = {t.id for t in self.common}
            acc = tuple(tuple(a) for a in self.access)
            for i, a in enumerate(acc):
                bad = set(a) - common_ids
                if bad:
                    raise InvalidInput(f"firm {i} accesses unknown common technologies {sorted(bad)}")
            object.__setattr__(self, "access", acc)

    @property
    def techs(self) -> dict:
        out = {t.id: t for t in self.common}
        for h in self.idiosyncratic:
            out.update((t.id, t) for t in h)
        return out

    def common_ids(self) -> set:
        return {t.id for t in self.common}

    def options(self, i: int) -> list[str]:
        """Technology ids available to firm ``i``: accessible common ones, then its own."""
        if self.access is not None:
            common = list(self.access[i])
        else:
            common = [t.id for t in self.common]
        own = [t.id for t in self.idiosyncratic[i]] if i < len(self.idiosyncratic) else []
        return common + own

    def validate(self, n: int):
        if self.access is not None and len(self.access) != n:
            raise InvalidInput(f"access lists for {len(self.access)} firms, expected {n}")
        if self.idiosyncratic and len(self.idiosyncratic) != n:
            raise InvalidInput(f"idiosyncratic lists for {len(self.idiosyncratic)} firms, expected {n}")
        for i in range(n):
            if not self.options(i):
                raise InvalidInput(f"firm {i} has no technology")


POLICY_KINDS = ("obedient", "fixed", "qth", "table")


@dataclass(frozen=True)
class SelectionPolicy:
    """How a firm picks among remaining candidates.

    ``fixed`` takes the first remaining candidate of ``prefs`` (falling back to
    obedience once the list is exhausted); ``qth`` takes the ``q``-th remaining
    candidate of the firm's sample (the last one if fewer remain); ``table``
    maps a history key to a candidate.
    """

    kind: str = "obedient"
    prefs: tuple = ()
    q: int = 1
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise InvalidInput(f"unknown policy {self.kind!r}")
        if self.q < 1:
            raise InvalidInput("q must be >= 1")
        object.__setattr__(self, "prefs", tuple(int(c) for c in self.prefs))

    def depth(self, n: int, m: int) -> int:
        """How much of the sample can matter when at most ``n - 1`` candidates are taken."""
        if self.kind == "qth":
            return min(m, n - 1 + self.q)
        if self.kind == "table":
            return m
        return min(m, n)

    def select(self, sample: Sequence[int], taken, history=()) -> int:
        if self.kind == "fixed":
            for c in self.prefs:
                if c not in taken:
                    return c
        elif self.kind == "table":
            lookup = dict(self.table)
            if history in lookup:
                return lookup[history]
        elif self.kind == "qth":
            avail = [c for c in sample if c not in taken]
            return avail[min(self.q, len(avail)) - 1]
        for c in sample:
            if c not in taken:
                return c
        raise InvalidPolicy("no remaining candidate in the visible sample")

    def to_json(self):
        out = {"kind": self.kind}
        if self.kind == "fixed":
            out["prefs"] = list(self.prefs)
        if self.kind == "qth":
            out["q"] = self.q
        return out

    @classmethod
    def from_json(cls, obj) -> "SelectionPolicy":
        if isinstance(obj, str):
            return cls(obj)
        return cls(obj.get("kind", "obedient"), tuple(obj.get("prefs", ())), int(obj.get("q", 1)))


OBEDIENT = SelectionPolicy()


@dataclass(frozen=True)
class Profile:
    choices: tuple
    policies: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "choices", tuple(self.choices))
        if self.policies is not None:
            object.__setattr__(self, "policies", tuple(self.policies))

    def policy(self, i: int) -> SelectionPolicy:
        return OBEDIENT if self.policies is None else self.policies[i]

    @property
    def obedient(self) -> bool:
        return self.policies is None or all(p.kind == "obedient" for p in self.policies)

    def replace(self, i: int, tech_id: str) -> "Profile":
        ch = list(self.choices)
        ch[i] = tech_id
        return Profile(tuple(ch), self.policies)

    def __str__(self):
        return ",".join(self.choices)


@dataclass(frozen=True)
class GameSpec:
    n: int
    m: int
    values: ValueDistribution
    advice: AdviceSpace
    mechanism: str = "obedient"

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise InvalidInput("need n >= 1 and m >= 1")
        if self.m < self.n:
            raise InvalidInput(f"m={self.m} < n={self.n}: every firm must be able to hire")
        if self.values.m != self.m:
            raise InvalidInput(f"value vectors have length {self.values.m}, expected m={self.m}")
        if self.mechanism not in MECHANISMS:
            raise InvalidInput(f"unknown mechanism {self.mechanism!r}")
        self.advice.validate(self.n)

    @property
    def techs(self) -> dict:
        return self.advice.techs

    def options(self, i: int) -> list[str]:
        return self.advice.options(i)

    def profiles(self, cap: int | None = None) -> list[Profile]:
        opts = [self.options(i) for i in range(self.n)]
        count = math.prod(len(o) for o in opts)
        if cap is not None and count > cap:
            raise ResourceLimit(f"{count} profiles exceed the cap {cap}", count)
        return [Profile(c) for c in itertools.product(*opts)]

    def check_profile(self, profile: Profile):
        if len(profile.choices) != self.n:
            raise InvalidInput(f"profile has {len(profile.choices)} choices, expected {self.n}")
        for i, t in enumerate(profile.choices):
            if t not in self.options(i):
                raise InvalidInput(f"firm {i} cannot use technology {t!r}")
        if profile.policies is not None:
            if len(profile.policies) != self.n:
                raise InvalidInput("one policy per firm required")
            if self.mechanism == "obedient" and not profile.obedient:
                raise InvalidInput("the obedience constrained mechanism only allows obedient play")


@dataclass
class OutcomeRecord:
    beta: tuple
    hires: tuple
    hire_values: tuple
    x: tuple
    rankings: dict = field(default_factory=dict)

    @property
    def welfare(self):
        return sum(self.hire_values)


def history_key(records: Sequence[tuple]) -> tuple:
    """Predecessors' ``(firm, technology, hire)`` triples, in order of play."""
    return tuple(records)


def play_once(spec: GameSpec, profile: Profile, rng) -> OutcomeRecord:
    """One realization of the mechanism: values, firm order, samples, hires."""
    spec.check_profile(profile)
    x = spec.values.sample(rng, 1)[0]
    beta = tuple(int(f) for f in rng.permutation(spec.n))
    techs = spec.techs
    rankings = {}
    for tid in dict.fromkeys(profile.choices):
        rankings[tid] = tuple(int(c) for c in techs[tid].sample_many(x, rng, 1)[0])
    taken: set = set()
    hires = [None] * spec.n
    past = []
    for f in beta:
        tid = profile.choices[f]
        c = profile.policy(f).select(rankings[tid], taken, history_key(past))
        if c in taken or not 0 <= c < spec.m:
            raise InvalidPolicy(f"firm {f} picked unavailable candidate {c}")
        taken.add(c)
        hires[f] = c
        past.append((f, tid, c))
    return OutcomeRecord(beta, tuple(hires), tuple(x[c] for c in hires), x, rankings)
