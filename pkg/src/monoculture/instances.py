"""Generators for the lower-bound constructions and for random consistent games.

Every generator returns an ``InstanceDescriptor``: the game, the named
profiles that matter, and the numerical re-verification of the claims the
construction is built on.  Acceptance runs only use verified descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .common import InvalidInput, as_fraction
from .consistency import check_sc_exact, measure_delta
from .engine import welfare_ceiling
from .equilibrium import ExactEvaluator, MCEvaluator, check_equilibrium, dominant_strategy
from .game import AdviceSpace, GameSpec, Profile, ValueDistribution
from .perm import HAMMING, KENDALL_TAU, SPEARMAN_FOOTRULE, SPEARMAN_RHO
from .technology import Deterministic, Layered, Mallows, Tier

SC_DISTANCES = (KENDALL_TAU, SPEARMAN_RHO, SPEARMAN_FOOTRULE)
PHI_GRID = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))


@dataclass
class InstanceDescriptor:
    name: str
    params: dict
    spec: GameSpec
    notes: str = ""
    status: str = "pending"
    checks: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)

    @property
    def verified(self) -> bool:
        return self.status == "verified"

    def to_json(self):
        from .io import spec_to_json, jsonable

        return {
            "name": self.name,
            "params": jsonable(self.params),
            "spec": spec_to_json(self.spec),
            "provenance": {"notes": self.notes, "status": self.status,
                           "checks": jsonable(self.checks)},
            "profiles": {k: list(p.choices) for k, p in self.profiles.items()},
        }


def tight_value(n: int, eta) -> Fraction:
    """Second positive value of the tight construction, ``(1 - 2/(n+1)) (1 - eta)``."""
    return (1 - Fraction(2, n + 1)) * (1 - as_fraction(eta))


def gen_tight_poa(n: int, eta=Fraction(1, 20), verify: str | None = "auto",
                  samples: int = 10**5, seed: int = 0, workers: int = 1) -> InstanceDescriptor:
    """``2**n`` candidates; a random pair has values 1 and ``v``, the rest 0.

    ``A`` always ranks the value-1 candidate first; ``A'`` puts both positive
    candidates among its first ``n`` positions.  Everything else is uniformly
    random.  All firms on ``A'`` hire both positive candidates (welfare
    ``1 + v``, the best possible); all firms on ``A`` is an equilibrium.

    ``verify`` is ``"exact"``, ``"mc"``, ``"auto"`` (exact for ``n <= 3``) or None.
    """
    if n < 2:
        raise InvalidInput("the tight construction needs n >= 2")
    eta = as_fraction(eta)
    if not 0 < eta < 1:
        raise InvalidInput("eta must lie in (0, 1)")
    m = 2**n
    v = tight_value(n, eta)
    base = (Fraction(1), v) + (Fraction(0),) * (m - 2)
    values = ValueDistribution("exchangeable", ((Fraction(1), base),))
    a = Layered("A", (Tier("top", k=1, order="desc"),))
    a2 = Layered("A'", (Tier("positive", pad_to=n),))
    spec = GameSpec(n, m, values, AdviceSpace((a, a2)))
    desc = InstanceDescriptor(
        "tight-poa", {"n": n, "eta": eta, "m": m, "v": v}, spec,
        notes="random pair valued {1, v}; A ranks the 1 first; A' places both positives in "
              "the first n positions; uniform completion elsewhere",
        profiles={"equilibrium": Profile(("A",) * n), "optimum": Profile(("A'",) * n)},
    )
    desc.checks["sw_ceiling"] = welfare_ceiling(spec)
    if verify == "auto":
        verify = "exact" if n <= 3 else "mc"
    if verify == "exact":
        ev = ExactEvaluator(spec)
        chk = check_equilibrium(ev, desc.profiles["equilibrium"])
        desc.checks["equilibrium_gaps"] = [g.gap for g in chk.gaps]
        desc.checks["sw_equilibrium"] = ev.utilities(desc.profiles["equilibrium"]).welfare
        desc.checks["sw_optimum"] = ev.utilities(desc.profiles["optimum"]).welfare
        ok = chk.status == "ne" and desc.checks["sw_optimum"] == 1 + v
        desc.status = "verified" if ok else "unverified"
    elif verify == "mc":
        ev = MCEvaluator(spec, samples, seed, workers)
        chk = check_equilibrium(ev, desc.profiles["equilibrium"], 1e-3 * float(1 + v))
        desc.checks["equilibrium_gap_upper"] = [g.upper for g in chk.gaps]
        eq = ev.utilities(desc.profiles["equilibrium"])
        desc.checks["sw_equilibrium"] = eq.welfare
        desc.checks["sw_equilibrium_stderr"] = eq.welfare_stderr
        desc.checks["sw_optimum"] = ev.utilities(desc.profiles["optimum"]).welfare
        desc.status = "verified" if chk.status == "ne" else "unverified"
    return desc


def linear_sequence(n: int, eps) -> list:
    """``a_j = 1 + j(j-1)/(n-j+1) - (j-1)(j-2)/(n-j+2) - eps/n^2`` for ``j = 1..n``."""
    eps = as_fraction(eps)
    return [
        1 + Fraction(j * (j - 1), n - j + 1) - Fraction((j - 1) * (j - 2), n - j + 2)
        - eps / n**2
        for j in range(1, n + 1)
    ]


def gen_linear_poa(n: int, eps=Fraction(9, 100), verify: bool = True) -> InstanceDescriptor:
    """``2n`` candidates: one worth ``n``, ``n - 1`` zeros and the values ``a_1 < ... < a_n``.

    The common ``A`` ranks the value-``n`` candidate first, then the zeros;
    each firm's private ``H`` ranks the ``a`` candidates first, increasingly.
    ``A`` is strictly dominant, but everyone on ``H`` is far better.
    """
    if n < 2:
        raise InvalidInput("the linear construction needs n >= 2")
    eps = as_fraction(eps)
    if eps <= 0:
        raise InvalidInput("eps must be positive")
    a = linear_sequence(n, eps)
    if len(set(a)) != n or Fraction(n) in a or Fraction(0) in a or min(a) < 0:
        raise InvalidInput(f"eps={eps} makes the a-values collide with 0 or n")
    m = 2 * n
    base = tuple(sorted([Fraction(n)] + a + [Fraction(0)] * (n - 1), reverse=True))
    values = ValueDistribution("exchangeable", ((Fraction(1), base),))
    common = Layered("A", (Tier("values", values=(n,), order="desc"),
                           Tier("values", values=(0,), order="shuffle")))
    own = [
        (Layered(f"H{i}", (Tier("values", values=tuple(a), order="asc"),)),)
        for i in range(n)
    ]
    spec = GameSpec(n, m, values, AdviceSpace((common,), tuple(own)))
    desc = InstanceDescriptor(
        "linear-poa", {"n": n, "eps": eps, "m": m, "a": a}, spec,
        notes="A: value-n candidate, then zeros, then uniform; H_i: a-values increasing, "
              "then uniform",
        profiles={"equilibrium": Profile(("A",) * n),
                  "optimum": Profile(tuple(f"H{i}" for i in range(n)))},
    )
    if verify:
        ev = ExactEvaluator(spec)
        dom = [dominant_strategy(ev, i) for i in range(n)]
        formula = {}
        for k in range(n):
            # firm 0 on A, firms 1..n-k-1 on A, the last k firms on H
            choices = ("A",) * (n - k) + tuple(f"H{i}" for i in range(n - k, n))
            u = ev.utilities(Profile(choices)).utilities[0]
            formula[k] = (u, 1 + Fraction(k, n - k))
        desc.checks["dominance"] = [(d.kind, d.technology) for d in dom]
        desc.checks["u_A"] = formula
        desc.checks["sw_equilibrium"] = ev.utilities(desc.profiles["equilibrium"]).welfare
        desc.checks["sw_optimum"] = ev.utilities(desc.profiles["optimum"]).welfare
        desc.checks["sum_a"] = sum(a)
        ok = all(d.kind == "strict" and d.technology == "A" for d in dom) and all(
            u == f for u, f in formula.values()
        )
        desc.status = "verified" if ok else "unverified"
    return desc


def gen_deviation_counterexample(n: int = 2, phi=Fraction(1, 2), verify: bool = True,
                                 firm: int | None = None) -> InstanceDescriptor:
    """Consistent technologies where switching to the optimum's technology can hurt.

    ``m = n + 3`` candidates with decreasing values ``x(c) = m - c``.  Firm
    ``i`` (the last firm by default) uses a Kendall-Tau Mallows ranking in both
    profiles.  In ``s`` every other firm ``j`` deterministically hires
    candidate ``j + 1``, leaving ``{0, n, n+1, n+2}``; in ``s*`` the others
    share a worst-first ranking and leave ``{0, 1, 2, 3}``.  Given that firm
    ``i``'s optimum hire is still free in ``s``, its sample can still place
    the near-worthless candidates above candidate 0.
    """
    if n < 2:
        raise InvalidInput("the deviation counterexample needs n >= 2")
    phi = as_fraction(phi)
    i = n - 1 if firm is None else firm
    m = n + 3
    x = tuple(Fraction(m - c) for c in range(m))
    others = [j for j in range(n) if j != i]
    mallows = Mallows("M", phi, KENDALL_TAU)
    worst = Deterministic("W", order="asc")
    own = []
    for f in range(n):
        if f == i:
            own.append(())
            continue
        top = others.index(f) + 1
        rest = sorted((c for c in range(m) if c != top), key=lambda c: (-x[c], c))
        own.append((Deterministic(f"T{f}", ranking=(top,) + tuple(rest)),))
    spec = GameSpec(n, m, ValueDistribution.deterministic(x),
                    AdviceSpace((mallows, worst), tuple(own)))
    s = Profile(tuple("M" if f == i else f"T{f}" for f in range(n)))
    s_star = Profile(tuple("M" if f == i else "W" for f in range(n)))
    desc = InstanceDescriptor(
        "deviation-counterexample", {"n": n, "m": m, "phi": phi, "firm": i}, spec,
        notes="others take candidates 1..n-1 in s and the worst n-1 in s*; firm i uses "
              "Kendall-Tau Mallows in both",
        profiles={"s": s, "s_star": s_star},
    )
    if verify:
        from .engine import conditional_deviation_gap

        gap = conditional_deviation_gap(spec, s, s_star, firms=[i])[0]
        desc.checks["gap_given_last"] = gap.given_last()
        desc.checks["gap_aggregate"] = gap.aggregate
        g = gap.given_last()
        desc.status = "verified" if g is not None and g <= 0 else "unverified"
    return desc


def _random_fraction(rng, choices):
    return choices[int(rng.integers(len(choices)))]


def random_iid_values(m: int, rng) -> ValueDistribution:
    k = int(rng.integers(2, 4))
    vals = sorted(int(v) for v in rng.choice(np.arange(0, 6), size=k, replace=False))
    w = [int(t) for t in rng.integers(1, 5, size=k)]
    probs = [Fraction(t, sum(w)) for t in w]
    return ValueDistribution("iid", m=m, values=tuple(vals), probs=tuple(probs))


def gen_random_game(n: int, m: int, rng, distances=SC_DISTANCES, phis=PHI_GRID,
                    mechanism: str = "obedient", max_common: int = 2,
                    name: str = "random-game") -> InstanceDescriptor:
    """Random Mallows advice space over iid discrete values.

    Draws 1..``max_common`` common technologies and 0 or 1 private technology
    per firm, each with a random dispersion and distance; value ties are broken
    uniformly in the ground truth.
    """
    values = random_iid_values(m, rng)

    def draw(tid):
        d = distances[int(rng.integers(len(distances)))]
        return Mallows(tid, _random_fraction(rng, phis), d, "uniform")

    common = tuple(draw(f"C{k}") for k in range(int(rng.integers(1, max_common + 1))))
    own = tuple((draw(f"H{i}"),) if rng.random() < 0.5 else () for i in range(n))
    spec = GameSpec(n, m, values, AdviceSpace(common, own), mechanism)
    techs = list(spec.techs.values())
    delta = measure_delta(techs, [x for _, x in values.orbit_representatives()])
    desc = InstanceDescriptor(
        name, {"n": n, "m": m, "techs": [t.to_json() for t in techs]}, spec,
        notes="random Mallows advice space, iid discrete values",
    )
    desc.checks["delta_star"] = delta.delta_star
    desc.status = "verified"
    return desc


def gen_random_sc_game(n: int, m: int, rng, mechanism: str = "obedient",
                       **kwargs) -> InstanceDescriptor:
    """Random game whose technologies are all certified consistent."""
    if n > 3 or m > 4:
        raise InvalidInput("random consistent suites are sized for n <= 3, m <= 4")
    desc = gen_random_game(n, m, rng, SC_DISTANCES, mechanism=mechanism,
                           name="random-sc-game", **kwargs)
    for tech in desc.spec.techs.values():
        for _, x in desc.spec.values.atoms():
            if not check_sc_exact(tech, x).consistent:
                desc.status = "unverified"
                desc.checks["failed_sc"] = (tech.id, x)
                return desc
    desc.checks["sc_certified"] = True
    return desc


def gen_hamming_game(n: int, rng, m: int = 3) -> InstanceDescriptor:
    """Random game over Mallows-Hamming technologies, with its measured delta."""
    return gen_random_game(n, m, rng, (HAMMING,), name="hamming-game")


def gen_ic_counterexample(kind: str = "uniform") -> InstanceDescriptor:
    """One firm, two candidates worth 10 and 0, values known in advance.

    ``uniform``: a uniformly random ranking, so obedience earns 5.
    ``table``: the worthless candidate is ranked first with probability 9/10.
    """
    from .technology import TableTechnology

    x = (Fraction(10), Fraction(0))
    if kind == "uniform":
        tech = Mallows("U", Fraction(1))
    elif kind == "table":
        tech = TableTechnology("T", {x: {(1, 0): Fraction(9, 10), (0, 1): Fraction(1, 10)}})
    else:
        raise InvalidInput(f"unknown counterexample {kind!r}")
    spec = GameSpec(1, 2, ValueDistribution.deterministic(x), AdviceSpace((tech,)),
                    "unconstrained")
    desc = InstanceDescriptor(f"ic-{kind}", {"kind": kind}, spec,
                              notes="values are not permutation invariant",
                              profiles={"obedient": Profile((tech.id,))})
    desc.status = "verified"
    return desc


def random_sc_suite(count: int, seed: int, n_max: int = 3, m_max: int = 4,
                    mechanism: str = "obedient") -> list[InstanceDescriptor]:
    """A reproducible list of certified random consistent games."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        n = int(rng.integers(1, n_max + 1))
        m = int(rng.integers(max(n, 2), m_max + 1))
        desc = gen_random_sc_game(n, m, rng, mechanism)
        desc.name = f"random-sc-{len(out)}"
        out.append(desc)
    return out


def hamming_suite(count: int, seed: int, n_max: int = 3) -> list[InstanceDescriptor]:
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        desc = gen_hamming_game(int(rng.integers(1, n_max + 1)), rng)
        desc.name = f"hamming-{k}"
        out.append(desc)
    return out
