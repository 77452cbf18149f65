"""Pure equilibria, dominance, social optima and the price of anarchy.

Utilities come from an evaluator: ``ExactEvaluator`` caches rational
utilities per profile, ``MCEvaluator`` caches Monte Carlo estimates whose seed
is derived from the master seed and the profile, so results do not depend on
evaluation order.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction

from scipy import stats

from .common import InvalidInput
from .consistency import implied_poa_bound
from .engine import DEFAULT_BUDGET, Utilities, expected_utilities_exact, expected_utilities_mc
from .game import GameSpec, Profile

DEFAULT_PROFILE_CAP = 10**4


class ExactEvaluator:
    method = "exact"

    def __init__(self, spec: GameSpec, budget: int = DEFAULT_BUDGET, reduce: bool = True):
        self.spec = spec
        self.budget = budget
        self.reduce = reduce
        self._cache: dict = {}

    @property
    def exact(self) -> bool:
        return True

    def utilities(self, profile: Profile) -> Utilities:
        key = profile.choices
        if key not in self._cache:
            self._cache[key] = expected_utilities_exact(self.spec, profile, self.budget, self.reduce)
        return self._cache[key]


def profile_seed(seed: int, profile: Profile) -> int:
    """Stable per-profile seed: independent of evaluation order and process."""
    digest = hashlib.sha256(f"{seed}|{','.join(profile.choices)}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class MCEvaluator:
    def __init__(self, spec: GameSpec, samples: int, seed: int, workers: int = 1,
                 confidence: float = 0.95, chunk: int = 10_000):
        if seed is None:
            raise InvalidInput("Monte Carlo evaluation needs a seed")
        self.spec = spec
        self.samples = samples
        self.seed = int(seed)
        self.workers = workers
        self.confidence = confidence
        self.chunk = chunk
        self._cache: dict = {}

    method = "mc"

    @property
    def exact(self) -> bool:
        return False

    def utilities(self, profile: Profile) -> Utilities:
        key = profile.choices
        if key not in self._cache:
            self._cache[key] = expected_utilities_mc(
                self.spec, profile, self.samples, profile_seed(self.seed, profile),
                self.workers, self.chunk,
            )
        return self._cache[key]


@dataclass
class Gain:
    """Estimated gain of a unilateral switch; bounds equal the estimate when exact."""

    value: object
    lower: object
    upper: object


@dataclass
class BestResponseGap:
    firm: int
    gap: object
    gains: dict
    best: str
    upper: object = None
    lower: object = None

    def to_json(self):
        def num(v):
            return str(v) if isinstance(v, Fraction) else float(v)

        return {
            "firm": self.firm,
            "gap": num(self.gap),
            "best": self.best,
            "gap_upper": num(self.upper),
            "gap_lower": num(self.lower),
            "gains": {k: num(g.value) for k, g in self.gains.items()},
        }


def _deviation_count(spec: GameSpec) -> int:
    return max(1, sum(len(spec.options(i)) - 1 for i in range(spec.n)))


def best_response_gap(ev, profile: Profile, i: int, z: float | None = None) -> BestResponseGap:
    """Largest gain firm ``i`` can get by switching technology (0 if none helps).

    For Monte Carlo evaluators the gains carry ``z``-standard-error bounds; the
    default ``z`` is Bonferroni-corrected over all unilateral deviations.
    """
    spec = ev.spec
    base = ev.utilities(profile)
    if not ev.exact and z is None:
        z = stats.norm.ppf(1 - (1 - ev.confidence) / _deviation_count(spec))
    gains = {}
    for alt in spec.options(i):
        if alt == profile.choices[i]:
            continue
        other = ev.utilities(profile.replace(i, alt))
        g = other.utilities[i] - base.utilities[i]
        if ev.exact:
            gains[alt] = Gain(g, g, g)
        else:
            se = math.hypot(other.stderr[i], base.stderr[i])
            gains[alt] = Gain(g, g - z * se, g + z * se)
    zero = Fraction(0) if ev.exact else 0.0
    best, gap = profile.choices[i], zero
    for alt, g in gains.items():
        if g.value > gap:
            best, gap = alt, g.value
    upper = max([zero] + [g.upper for g in gains.values()])
    lower = max([zero] + [g.lower for g in gains.values()])
    return BestResponseGap(i, gap, gains, best, upper, lower)


@dataclass
class EquilibriumCheck:
    profile: Profile
    gaps: list
    welfare: object
    status: str  # "ne", "inconclusive" or "not_ne"
    welfare_stderr: float | None = None

    def to_json(self):
        def num(v):
            return str(v) if isinstance(v, Fraction) else float(v)

        out = {
            "profile": list(self.profile.choices),
            "status": self.status,
            "welfare": num(self.welfare),
            "gaps": [g.to_json() for g in self.gaps],
        }
        if self.welfare_stderr is not None:
            out["welfare_stderr"] = self.welfare_stderr
        return out


def check_equilibrium(ev, profile: Profile, epsilon=0) -> EquilibriumCheck:
    """Exact: NE iff every gap is <= epsilon.  Monte Carlo: NE iff every upper
    bound is <= epsilon, excluded iff some lower bound exceeds it."""
    gaps = [best_response_gap(ev, profile, i) for i in range(ev.spec.n)]
    u = ev.utilities(profile)
    if ev.exact:
        status = "ne" if all(g.gap <= epsilon for g in gaps) else "not_ne"
    elif all(g.upper <= epsilon for g in gaps):
        status = "ne"
    elif any(g.lower > epsilon for g in gaps):
        status = "not_ne"
    else:
        status = "inconclusive"
    return EquilibriumCheck(profile, gaps, u.welfare, status, u.welfare_stderr)


def _default_epsilon(ev, sw_star):
    return Fraction(0) if ev.exact else 1e-3 * float(sw_star)


def find_pure_nash(ev, epsilon=None, cap: int = DEFAULT_PROFILE_CAP,
                   sw_star=None) -> list[EquilibriumCheck]:
    """Every profile that is (or, under Monte Carlo, may be) a pure equilibrium."""
    profiles = ev.spec.profiles(cap)
    if epsilon is None:
        if not ev.exact and sw_star is None:
            sw_star = social_optimum(ev, cap)[1]
        epsilon = _default_epsilon(ev, sw_star)
    out = []
    for p in profiles:
        chk = check_equilibrium(ev, p, epsilon)
        if chk.status != "not_ne":
            out.append(chk)
    return out


@dataclass
class Dominance:
    kind: str  # "strict", "weak" or "none"
    technology: str | None = None


def dominant_strategy(ev, i: int, cap: int = DEFAULT_PROFILE_CAP) -> Dominance:
    """A technology better than every alternative against every opponent
    sub-profile (``strict``), or never worse and sometimes better (``weak``).

    A firm with a single technology has it weakly dominant; a technology that
    only ever ties its alternatives is not dominant.
    """
    spec = ev.spec
    opts = spec.options(i)
    if len(opts) == 1:
        return Dominance("weak", opts[0])
    others = {p.choices[:i] + p.choices[i + 1:] for p in spec.profiles(cap)}
    weak = None
    for t in opts:
        strict, ok, better = True, True, False
        for rest in sorted(others):
            ut = ev.utilities(Profile(rest[:i] + (t,) + rest[i:])).utilities[i]
            for alt in opts:
                if alt == t:
                    continue
                ua = ev.utilities(Profile(rest[:i] + (alt,) + rest[i:])).utilities[i]
                if ut < ua:
                    ok = strict = False
                    break
                if ut == ua:
                    strict = False
                else:
                    better = True
            if not ok:
                break
        if ok and strict:
            return Dominance("strict", t)
        if ok and better and weak is None:
            weak = t
    return Dominance("weak", weak) if weak is not None else Dominance("none")


def social_optimum(ev, cap: int = DEFAULT_PROFILE_CAP) -> tuple:
    """Welfare-maximizing profile; ties go to the lexicographically smallest choices."""
    best = None
    for p in sorted(ev.spec.profiles(cap), key=lambda p: p.choices):
        w = ev.utilities(p).welfare
        if best is None or w > best[1]:
            best = (p, w)
    return best


@dataclass
class EquilibriumReport:
    pure_nash: list
    social_optimum: Profile
    sw_star: object
    worst_ne_sw: object
    poa: object
    method: str
    epsilon: object
    inconclusive: list = field(default_factory=list)
    poa_interval: tuple | None = None
    delta_star: object = None
    bound: object = None
    bound_violated: bool = False
    dominant: dict = field(default_factory=dict)

    def to_json(self):
        def num(v):
            if v is None:
                return None
            if isinstance(v, Fraction):
                return str(v)
            return "inf" if v == math.inf else float(v)

        return {
            "method": self.method,
            "epsilon": num(self.epsilon),
            "social_optimum": list(self.social_optimum.choices),
            "sw_star": num(self.sw_star),
            "worst_ne_sw": num(self.worst_ne_sw),
            "poa": num(self.poa),
            "poa_interval": None if self.poa_interval is None else [num(v) for v in self.poa_interval],
            "delta_star": num(self.delta_star),
            "bound": num(self.bound),
            "bound_violated": self.bound_violated,
            "pure_nash": [c.to_json() for c in self.pure_nash],
            "inconclusive": [c.to_json() for c in self.inconclusive],
            "dominant": {str(k): {"kind": v.kind, "technology": v.technology}
                         for k, v in self.dominant.items()},
        }


def _ratio(a, b):
    if b == 0:
        return math.inf if a > 0 else Fraction(1)
    return a / b


def price_of_anarchy(ev, epsilon=None, delta_star=None, cap: int = DEFAULT_PROFILE_CAP,
                     sw_star=None, with_dominance: bool = False) -> EquilibriumReport:
    """Optimal welfare over the worst pure-equilibrium welfare.

    With a measured ``delta_star`` every equilibrium is checked against the
    guarantee ``SW >= SW* / (1 + 1/(1 - delta_star)^2)``; a failure sets
    ``bound_violated``.
    """
    opt, best = social_optimum(ev, cap)
    sw_star = best if sw_star is None else sw_star
    if epsilon is None:
        epsilon = _default_epsilon(ev, sw_star)
    found = find_pure_nash(ev, epsilon, cap)
    ne = [c for c in found if c.status == "ne"]
    maybe = [c for c in found if c.status == "inconclusive"]
    worst = min((c.welfare for c in ne), default=None)
    poa = None if worst is None else _ratio(sw_star, worst)
    interval = None
    if maybe:
        low_all = min(c.welfare for c in ne + maybe)
        interval = (poa if poa is not None else Fraction(1), _ratio(sw_star, low_all))
    bound = violated = None
    if delta_star is not None:
        bound = implied_poa_bound(delta_star)
        violated = bound != math.inf and any(c.welfare * bound < sw_star for c in ne)
    dom = {}
    if with_dominance:
        dom = {i: dominant_strategy(ev, i, cap) for i in range(ev.spec.n)}
    return EquilibriumReport(
        ne, opt, sw_star, worst, poa, ev.method, epsilon, maybe, interval,
        delta_star, bound, bool(violated), dom,
    )


@dataclass
class SmoothnessReport:
    passed: bool
    pairs: int
    worst_slack: object
    witness: tuple | None = None

    def to_json(self):
        return {
            "passed": self.passed,
            "pairs": self.pairs,
            "worst_slack": str(self.worst_slack) if isinstance(self.worst_slack, Fraction)
            else self.worst_slack,
            "witness": None if self.witness is None else [list(p.choices) for p in self.witness],
        }


def smoothness_check(ev, cap: int = DEFAULT_PROFILE_CAP) -> SmoothnessReport:
    """Check ``sum_i u_i(t_i, s_-i) >= SW(t) - SW(s)`` over all ordered pairs ``(s, t)``."""
    profiles = ev.spec.profiles(cap)
    worst = None
    witness = None
    for s in profiles:
        sw_s = ev.utilities(s).welfare
        for t in profiles:
            lhs = sum(ev.utilities(s.replace(i, t.choices[i])).utilities[i]
                      for i in range(ev.spec.n))
            slack = lhs - (ev.utilities(t).welfare - sw_s)
            if worst is None or slack < worst:
                worst, witness = slack, (s, t)
    passed = worst is None or worst >= 0
    return SmoothnessReport(passed, len(profiles) ** 2, worst, None if passed else witness)
