"""Expected utilities of the hiring game, exactly or by Monte Carlo.

The exact engine walks firm orders and, step by step, splits every
technology's sample distribution by what the acting firms would pick.  Only
the top few positions of a ranking can matter (at most ``n - 1`` candidates
are gone when a firm acts), so technologies are expanded to prefix
distributions instead of full rankings.  Several profiles can be evaluated on
one probability space: they share the values, the firm order and the sample of
every technology id, which is the coupling the deviation analysis needs.

All exact arithmetic is integral: prefix weights are integers up to a common
normalizer and values are scaled by the lcm of their denominators.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import permutations, product
from typing import Iterator, Sequence

import numpy as np

from .common import InvalidInput, ResourceLimit
from .game import GameSpec, Profile, SelectionPolicy, history_key

ENGINE_RANKING_CAP = 8
DEFAULT_BUDGET = 10**8
DEFAULT_CHUNK = 10_000


def _int_weights(pmf: dict) -> tuple[list, int]:
    """Rescale a rational pmf to integer weights; returns (items, total)."""
    den = 1
    for p in pmf.values():
        den = math.lcm(den, Fraction(p).denominator)
    items = [(k, int(Fraction(p) * den)) for k, p in pmf.items() if p]
    return items, sum(w for _, w in items)


def value_points(spec: GameSpec, tech_ids, reduce: bool = True,
                 limit: int | None = None) -> tuple[list, bool]:
    """``(mass, x)`` points to evaluate: orbit representatives when every
    technology relabels with the candidates, otherwise all atoms."""
    vals = spec.values
    techs = spec.techs
    if reduce and vals.permutation_invariant:
        reps = vals.orbit_representatives()
        if all(techs[t].equivariant_at(x) for _, x in reps for t in tech_ids):
            return reps, True
    if limit is None:
        return vals.atoms(), False
    return vals.atoms(limit), False


def _relabels(policy: SelectionPolicy) -> bool:
    return policy.kind in ("obedient", "qth")


@dataclass
class _Run:
    choices: tuple
    policies: tuple


def _pick(policy: SelectionPolicy, prefix, taken: int, history) -> int:
    if policy.kind == "obedient":
        for c in prefix:
            if not taken >> c & 1:
                return c
    else:
        taken_set = {c for c in range(taken.bit_length()) if taken >> c & 1}
        return policy.select(prefix, taken_set, history)
    raise ResourceLimit("sample prefix too short for the policy", len(prefix))


@dataclass
class ValuePoint:
    """One value vector of the enumeration with its prefix distributions."""

    mass: Fraction
    x: tuple
    xi: tuple
    scale: int
    prefixes: dict
    totals: dict

    @property
    def norm(self) -> int:
        return math.prod(self.totals.values())


class CoupledEnumeration:
    """Exact joint enumeration of one or more coupled profiles.

    ``leaves(point)`` yields ``(beta, hires, weight)`` where ``hires[r][i]`` is
    firm ``i``'s hire in run ``r`` and ``weight / point.norm`` is the
    probability of the leaf given ``x`` and ``beta``.
    """

    def __init__(self, spec: GameSpec, profiles: Sequence[Profile], budget: int = DEFAULT_BUDGET,
                 reduce: bool = True, depth: int | None = None, cap: int = ENGINE_RANKING_CAP):
        for p in profiles:
            spec.check_profile(p)
        self.spec = spec
        self.n = spec.n
        self.runs = [
            _Run(p.choices, tuple(p.policy(i) for i in range(spec.n))) for p in profiles
        ]
        n, m = spec.n, spec.m
        depths: dict = {}
        for run in self.runs:
            for i, tid in enumerate(run.choices):
                d = depth if depth is not None else run.policies[i].depth(n, m)
                depths[tid] = max(depths.get(tid, 0), d)
        self.depths = depths
        self.tech_ids = list(depths)
        # per firm: tech id -> run indices using it
        self.firm_techs = []
        for i in range(n):
            by_tech: dict = {}
            for r, run in enumerate(self.runs):
                by_tech.setdefault(run.choices[i], []).append(r)
            self.firm_techs.append(list(by_tech.items()))
        # candidate-specific policies break relabeling symmetry
        reduce = reduce and all(_relabels(pol) for run in self.runs for pol in run.policies)
        raw, self.reduced = value_points(spec, self.tech_ids, reduce)
        techs = spec.techs
        self.points = []
        count = 0
        for mass, x in raw:
            scale = 1
            for v in x:
                scale = math.lcm(scale, v.denominator)
            xi = tuple(int(v * scale) for v in x)
            prefixes, totals = {}, {}
            for tid in self.tech_ids:
                items, total = _int_weights(techs[tid].prefix_pmf(x, depths[tid], cap))
                prefixes[tid], totals[tid] = items, total
            self.points.append(ValuePoint(mass, x, xi, scale, prefixes, totals))
            count += math.factorial(n) * math.prod(len(v) for v in prefixes.values())
            if count > budget:
                raise ResourceLimit(
                    f"exact enumeration needs more than {budget} atoms "
                    f"({len(raw)} value points, n={n})", count)
        self.atoms = count

    def orders(self):
        return permutations(range(self.n))

    def leaves(self, point: ValuePoint, node=None) -> Iterator[tuple]:
        for beta in self.orders():
            yield from self.leaves_for(point, beta, node)

    def leaves_for(self, point: ValuePoint, beta, node=None) -> Iterator[tuple]:
        nruns = len(self.runs)
        groups = {tid: (point.prefixes[tid], point.totals[tid]) for tid in self.tech_ids}
        taken = [0] * nruns
        hires = [[None] * self.n for _ in range(nruns)]
        history = [[] for _ in range(nruns)]
        yield from self._step(point, beta, 0, groups, taken, hires, history, node)

    def _step(self, point, beta, t, groups, taken, hires, history, node):
        if t == self.n:
            w = 1
            for _, total in groups.values():
                w *= total
            yield beta, tuple(tuple(h) for h in hires), w
            return
        f = beta[t]
        if node is not None:
            node(point, beta, t, f, groups, taken, history)
        splits = []
        for tid, run_ids in self.firm_techs[f]:
            parts: dict = {}
            for prefix, w in groups[tid][0]:
                key = tuple(
                    _pick(self.runs[r].policies[f], prefix, taken[r],
                          history_key(history[r])) for r in run_ids
                )
                parts.setdefault(key, []).append((prefix, w))
            splits.append(
                (tid, run_ids, [(k, (v, sum(w for _, w in v))) for k, v in parts.items()])
            )
        for combo in product(*(s[2] for s in splits)):
            new_groups = dict(groups)
            new_taken = list(taken)
            new_hires = [list(h) for h in hires]
            new_hist = [list(h) for h in history]
            for (tid, run_ids, _), (picks, grp) in zip(splits, combo):
                new_groups[tid] = grp
                for r, c in zip(run_ids, picks):
                    new_taken[r] |= 1 << c
                    new_hires[r][f] = c
                    new_hist[r].append((f, tid, c))
            yield from self._step(point, beta, t + 1, new_groups, new_taken, new_hires, new_hist, node)


@dataclass
class Utilities:
    """Per-firm expected utilities and welfare; ``stderr`` is None when exact."""

    profile: Profile
    utilities: tuple
    welfare: object
    method: str = "exact"
    stderr: tuple | None = None
    welfare_stderr: float | None = None
    samples: int | None = None
    seed: int | None = None

    @property
    def exact(self) -> bool:
        return self.method == "exact"

    def to_json(self):
        def num(v):
            return str(v) if isinstance(v, Fraction) else float(v)

        out = {
            "profile": list(self.profile.choices),
            "method": self.method,
            "utilities": [num(u) for u in self.utilities],
            "welfare": num(self.welfare),
        }
        if not self.exact:
            out.update(
                stderr=[float(s) for s in self.stderr],
                welfare_stderr=float(self.welfare_stderr),
                samples=self.samples,
                seed=self.seed,
            )
        return out


def expected_utilities_exact(spec: GameSpec, profile: Profile, budget: int = DEFAULT_BUDGET,
                             reduce: bool = True) -> Utilities:
    """Exact rational utilities over values, firm orders and ranking samples."""
    en = CoupledEnumeration(spec, [profile], budget, reduce)
    n = spec.n
    nfact = math.factorial(n)
    util = [Fraction(0)] * n
    for pt in en.points:
        sums = [0] * n
        for _, hires, w in en.leaves(pt):
            for i, c in enumerate(hires[0]):
                sums[i] += w * pt.xi[c]
        den = pt.norm * pt.scale * nfact
        for i in range(n):
            util[i] += pt.mass * Fraction(sums[i], den)
    return Utilities(profile, tuple(util), sum(util), "exact")


def _seed_int(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, 2**63))
    if seed is None:
        raise InvalidInput("Monte Carlo runs need a seed")
    return int(seed)


def _chunk_rng(seed: int, k: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _simulate_obedient(spec, profile, x, rng, size, depths):
    n, m = spec.n, spec.m
    techs = spec.techs
    xf = np.array([float(v) for v in x])
    beta = np.argsort(rng.random((size, n)), axis=1)
    samples = {
        tid: techs[tid].sample_prefix(x, rng, size, depths[tid])
        for tid in dict.fromkeys(profile.choices)
    }
    taken = np.zeros((size, m), dtype=bool)
    vals = np.zeros((size, n))
    for t in range(n):
        ft = beta[:, t]
        for f in range(n):
            idx = np.flatnonzero(ft == f)
            if idx.size == 0:
                continue
            pre = samples[profile.choices[f]][idx]
            avail = ~np.take_along_axis(taken[idx], pre, axis=1)
            pos = avail.argmax(axis=1)
            if not avail[np.arange(idx.size), pos].all():
                raise ResourceLimit("sample prefix too short", pre.shape[1])
            pick = pre[np.arange(idx.size), pos]
            taken[idx, pick] = True
            vals[idx, f] = xf[pick]
    return vals


def _simulate_general(spec, profile, x, rng, size):
    techs = spec.techs
    vals = np.zeros((size, spec.n))
    for row in range(size):
        beta = rng.permutation(spec.n)
        rankings = {
            tid: [int(c) for c in techs[tid].sample_many(x, rng, 1)[0]]
            for tid in dict.fromkeys(profile.choices)
        }
        taken: set = set()
        past = []
        for f in beta:
            tid = profile.choices[f]
            c = profile.policy(f).select(rankings[tid], taken, history_key(past))
            taken.add(c)
            past.append((int(f), tid, c))
            vals[row, f] = float(x[c])
    return vals


def _mc_chunk(spec, profile, points, seed, k, size, depths):
    rng = _chunk_rng(seed, k)
    if points is not None:
        p = np.array([float(q) for q, _ in points])
        counts = rng.multinomial(size, p / p.sum())
        groups = [(x, int(c)) for (_, x), c in zip(points, counts) if c]
    else:
        seen: dict = {}
        for x in spec.values.sample(rng, size):
            seen[x] = seen.get(x, 0) + 1
        groups = list(seen.items())
    n = spec.n
    s = np.zeros(n)
    s2 = np.zeros(n)
    w1 = w2 = 0.0
    for x, c in groups:
        if profile.obedient:
            vals = _simulate_obedient(spec, profile, x, rng, c, depths)
        else:
            vals = _simulate_general(spec, profile, x, rng, c)
        s += vals.sum(axis=0)
        s2 += (vals**2).sum(axis=0)
        sw = vals.sum(axis=1)
        w1 += float(sw.sum())
        w2 += float((sw**2).sum())
    return s, s2, w1, w2


def _stderr(total, total_sq, count):
    if count < 2:
        return 0.0
    mean = total / count
    var = max(0.0, (total_sq - count * mean * mean) / (count - 1))
    return math.sqrt(var / count)


def expected_utilities_mc(spec: GameSpec, profile: Profile, samples: int, seed=0,
                          workers: int = 1, chunk: int = DEFAULT_CHUNK,
                          reduce: bool = True) -> Utilities:
    """Monte Carlo utilities with standard errors.

    Replicates are split into chunks of ``chunk`` draws; chunk ``k`` uses the
    generator seeded by ``SeedSequence(seed, spawn_key=(k,))`` and partial
    sums are combined in chunk order, so the result is bit-identical for any
    number of workers.
    """
    if samples < 1:
        raise InvalidInput("samples must be >= 1")
    spec.check_profile(profile)
    seed = _seed_int(seed)
    ids = list(dict.fromkeys(profile.choices))
    reduce = reduce and all(_relabels(profile.policy(i)) for i in range(spec.n))
    try:
        points, _ = value_points(spec, ids, reduce, limit=10**5)
    except ResourceLimit:
        points = None
    depths = {tid: min(spec.m, spec.n) for tid in ids}
    tasks = [(k, min(chunk, samples - k * chunk)) for k in range(math.ceil(samples / chunk))]

    def run(task):
        return _mc_chunk(spec, profile, points, seed, task[0], task[1], depths)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, tasks))
    else:
        parts = [run(t) for t in tasks]
    n = spec.n
    s = np.zeros(n)
    s2 = np.zeros(n)
    w1 = w2 = 0.0
    for a, b, c, d in parts:
        s += a
        s2 += b
        w1 += c
        w2 += d
    util = tuple(float(v) / samples for v in s)
    err = tuple(_stderr(float(s[i]), float(s2[i]), samples) for i in range(n))
    return Utilities(profile, util, w1 / samples, "mc", err, _stderr(w1, w2, samples),
                     samples, seed)


def welfare_ceiling(spec: GameSpec) -> Fraction:
    """Expected total value of the ``n`` best candidates: no profile can do better."""
    if spec.values.permutation_invariant:
        pts = spec.values.orbit_representatives()
    else:
        pts = spec.values.atoms()
    return sum(p * sum(sorted(x, reverse=True)[: spec.n]) for p, x in pts)


@dataclass
class GapCell:
    """Weighted pieces of a conditional expectation for one ``(x, beta)``."""

    num: Fraction = Fraction(0)
    dev_value: Fraction = Fraction(0)
    star_value: Fraction = Fraction(0)
    prob: Fraction = Fraction(0)

    @property
    def gap(self):
        return None if self.prob == 0 else self.num / self.prob


@dataclass
class FirmGap:
    firm: int
    cells: dict = field(default_factory=dict)

    def _sum(self, keep):
        num = den = Fraction(0)
        for key, cell in self.cells.items():
            if keep(key):
                num += cell.num
                den += cell.prob
        return None if den == 0 else num / den

    @property
    def aggregate(self):
        """Gap conditioned on the event, averaged over values and orders."""
        return self._sum(lambda k: True)

    def given_last(self):
        """Gap conditioned on the event and on this firm acting last."""
        return self._sum(lambda k: k[1][-1] == self.firm)

    @property
    def event_probability(self):
        return sum((c.prob for c in self.cells.values()), Fraction(0))

    @property
    def min_cell_gap(self):
        gaps = [c.gap for c in self.cells.values() if c.prob > 0]
        return min(gaps) if gaps else None

    def delta_aggregate(self, delta):
        """Conditional expectation of ``x(deviation) - (1 - delta)^2 x(optimum)``."""
        den = self.event_probability
        if den == 0:
            return None
        f = (1 - Fraction(delta)) ** 2
        dev = sum((c.dev_value for c in self.cells.values()), Fraction(0))
        star = sum((c.star_value for c in self.cells.values()), Fraction(0))
        return (dev - f * star) / den

    def min_delta_cell(self, delta):
        f = (1 - Fraction(delta)) ** 2
        gaps = [(c.dev_value - f * c.star_value) / c.prob for c in self.cells.values() if c.prob]
        return min(gaps) if gaps else None

    @property
    def vacuous(self):
        return self.event_probability == 0


def conditional_deviation_gap(spec: GameSpec, s: Profile, s_star: Profile,
                              firms: Sequence[int] | None = None,
                              budget: int = DEFAULT_BUDGET, reduce: bool = True) -> list[FirmGap]:
    """Gain of switching to the optimum's technology, given the optimum's hire was not taken.

    For each firm ``i``, value vector ``x`` and order ``beta`` this is
    ``E[x_i(s*_i, s_-i) - x_i(s*) | x, beta, c_i(s*) not hired before i in s]``.
    The runs ``s``, ``s*`` and every ``(s*_i, s_-i)`` share values, order and
    the sample of each technology id.
    """
    n = spec.n
    firms = list(range(n)) if firms is None else list(firms)
    devs = [s.replace(i, s_star.choices[i]) for i in firms]
    en = CoupledEnumeration(spec, [s, s_star] + devs, budget, reduce)
    nfact = math.factorial(n)
    out = [FirmGap(i) for i in firms]
    for pt in en.points:
        for beta in en.orders():
            num = [0] * len(firms)
            dv = [0] * len(firms)
            sv = [0] * len(firms)
            den = [0] * len(firms)
            pos = {f: t for t, f in enumerate(beta)}
            for _, hires, w in en.leaves_for(pt, beta):
                hs, hstar = hires[0], hires[1]
                for a, i in enumerate(firms):
                    before = {hs[j] for j in range(n) if pos[j] < pos[i]}
                    if hstar[i] in before:
                        continue
                    d = pt.xi[hires[2 + a][i]]
                    st = pt.xi[hstar[i]]
                    num[a] += w * (d - st)
                    dv[a] += w * d
                    sv[a] += w * st
                    den[a] += w
            base = pt.mass / (pt.norm * nfact)
            for a in range(len(firms)):
                if den[a]:
                    out[a].cells[(pt.x, beta)] = GapCell(
                        base * Fraction(num[a], pt.scale),
                        base * Fraction(dv[a], pt.scale),
                        base * Fraction(sv[a], pt.scale),
                        base * den[a],
                    )
    return out


def snatched_available_split(spec: GameSpec, s: Profile, s_star: Profile,
                             budget: int = DEFAULT_BUDGET, reduce: bool = True) -> tuple:
    """Split ``SW(s*)`` by whether each optimum hire was already taken earlier in ``s``."""
    n = spec.n
    en = CoupledEnumeration(spec, [s, s_star], budget, reduce)
    nfact = math.factorial(n)
    snatched = available = Fraction(0)
    for pt in en.points:
        sn = av = 0
        for beta, hires, w in en.leaves(pt):
            pos = {f: t for t, f in enumerate(beta)}
            hs, hstar = hires
            for i in range(n):
                v = w * pt.xi[hstar[i]]
                if hstar[i] in {hs[j] for j in range(n) if pos[j] < pos[i]}:
                    sn += v
                else:
                    av += v
        den = pt.norm * pt.scale * nfact
        snatched += pt.mass * Fraction(sn, den)
        available += pt.mass * Fraction(av, den)
    return snatched, available


@dataclass
class ICViolation:
    firm: int
    step: int
    history: tuple
    deviation: str
    obedient_value: Fraction
    deviation_value: Fraction
    own_sample: tuple | None = None

    @property
    def gap(self):
        return self.deviation_value - self.obedient_value

    def to_json(self):
        return {
            "firm": self.firm,
            "step": self.step,
            "history": [{"firm": f, "technology": t, "hire": c} for f, t, c in self.history],
            "own_sample": None if self.own_sample is None else list(self.own_sample),
            "deviation": self.deviation,
            "obedient_value": str(self.obedient_value),
            "deviation_value": str(self.deviation_value),
            "gap": str(self.gap),
        }


@dataclass
class ICReport:
    decision_points: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self):
        return {
            "decision_points": self.decision_points,
            "violations": [v.to_json() for v in self.violations],
        }


def ic_audit(spec: GameSpec, profile: Profile, sample_aware: bool = False,
             budget: int = DEFAULT_BUDGET) -> ICReport:
    """Is obedience a best response at every reachable decision point?

    A decision point is a firm's turn together with what it observes: the
    technologies and hires of the firms before it (and, with
    ``sample_aware``, its own sample restricted to the remaining candidates).
    Deviations are one-shot: insisting on any particular remaining candidate,
    or taking the ``q``-th remaining candidate of the sample.  Values are
    compared in conditional expectation given the observation.
    """
    if spec.n > 3 or spec.m > 5:
        raise ResourceLimit("the incentive audit enumerates histories only for n <= 3, m <= 5",
                            spec.n * spec.m)
    prof = Profile(profile.choices)
    en = CoupledEnumeration(spec, [prof], budget, reduce=False, depth=spec.m)
    nfact = math.factorial(spec.n)
    table: dict = {}

    def node(pt, beta, t, f, groups, taken, history):
        tid = prof.choices[f]
        other = 1
        for key, (_, total) in groups.items():
            if key != tid:
                other *= total
        base = pt.mass / (pt.norm * pt.scale * nfact)
        tk = taken[0]
        hist = tuple(history[0])
        local: dict = {}
        for ranking, w in groups[tid][0]:
            avail = tuple(c for c in ranking if not tk >> c & 1)
            k = (f, t, hist, avail if sample_aware else None)
            acc = local.setdefault(k, {"prob": 0, "obedient": 0})
            acc["prob"] += w * pt.scale
            acc["obedient"] += w * pt.xi[avail[0]]
            for c in sorted(avail):
                acc[f"prefer:{c}"] = acc.get(f"prefer:{c}", 0) + w * pt.xi[c]
            for q in range(2, len(avail) + 1):
                acc[f"qth:{q}"] = acc.get(f"qth:{q}", 0) + w * pt.xi[avail[q - 1]]
        for k, acc in local.items():
            entry = table.setdefault(k, {})
            for name, v in acc.items():
                entry[name] = entry.get(name, Fraction(0)) + base * other * v

    for pt in en.points:
        for _ in en.leaves(pt, node):
            pass
    violations = []
    for (f, t, hist, own), entry in sorted(table.items(), key=lambda kv: repr(kv[0])):
        prob = entry["prob"]
        if prob == 0:
            continue
        ob = entry["obedient"] / prob
        for name, v in entry.items():
            if name in ("prob", "obedient"):
                continue
            if v / prob > ob:
                violations.append(ICViolation(f, t, hist, name, ob, v / prob, own))
    return ICReport(len(table), violations)
