"""Certify or refute stochastic consistency and measure its slack delta.

A technology is consistent at ``x`` when, for any two positions ``i < j``, any
candidates ``k``, ``l`` with ``x(k) >= x(l)`` and any placement of the other
candidates, putting ``k`` at ``i`` and ``l`` at ``j`` is at least as likely as
the reverse.  Fixing the other candidates pins down two full rankings, so every
constraint compares the probabilities of a ranking and its transposition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .common import InvalidInput, ResourceLimit
from .perm import majorizes, swap_positions
from .technology import (
    DEFAULT_CAP,
    RankingTechnology,
    _decode_ranking,
    _ranking_codes,
    as_value_vector,
)

STATISTICAL_CAP = 4
DEFAULT_MIN_CELL = 30


@dataclass(frozen=True, order=True)
class ConsistencyTuple:
    """One constraint: ``k`` should be at least as likely at ``i`` (``l`` at ``j``) as the reverse.

    ``conditioning`` lists ``(position, candidate)`` for every other position.
    """

    i: int
    j: int
    k: int
    l: int
    conditioning: tuple
    p_correct: object = field(default=0, compare=False)
    p_incorrect: object = field(default=0, compare=False)

    def __post_init__(self):
        if not self.i < self.j:
            raise InvalidInput(f"need i < j, got {self.i}, {self.j}")
        if self.k == self.l:
            raise InvalidInput("k and l must differ")

    @property
    def correct(self) -> tuple:
        return self._ranking(self.k, self.l)

    @property
    def incorrect(self) -> tuple:
        return self._ranking(self.l, self.k)

    def _ranking(self, a, b):
        r = [None] * (len(self.conditioning) + 2)
        for pos, c in self.conditioning:
            r[pos] = c
        r[self.i], r[self.j] = a, b
        return tuple(r)

    @property
    def ratio(self):
        if self.p_incorrect == 0:
            return None
        return self.p_correct / self.p_incorrect

    @property
    def delta(self):
        """``1 - p_correct / p_incorrect`` clipped at 0; vacuous tuples give 0."""
        if self.p_incorrect == 0:
            return Fraction(0) if isinstance(self.p_correct, Fraction) else 0.0
        d = 1 - self.p_correct / self.p_incorrect
        if d > 0:
            return d
        return Fraction(0) if isinstance(d, Fraction) else 0.0

    def to_json(self):
        return {
            "i": self.i,
            "j": self.j,
            "k": self.k,
            "l": self.l,
            "conditioning": [{"position": p, "candidate": c} for p, c in self.conditioning],
            "p_correct": _num(self.p_correct),
            "p_incorrect": _num(self.p_incorrect),
        }


def _num(v):
    if isinstance(v, Fraction):
        return str(v)
    return None if v is None else float(v)


def implied_poa_bound(delta):
    """Welfare ratio bound ``1 + 1/(1 - delta)^2``; infinite at ``delta = 1``."""
    if delta >= 1:
        return math.inf
    return 1 + 1 / (1 - delta) ** 2


@dataclass
class ConsistencyReport:
    """Result of a consistency check.

    ``verdict`` is ``"consistent"``/``"violated"`` for exact checks and
    ``"statistical"`` otherwise, with ``statistical_verdict`` and ``confidence``
    filled in.
    """

    verdict: str
    delta_star: object
    witness: ConsistencyTuple | None
    tuples_examined: int
    statistical_verdict: str | None = None
    confidence: float | None = None
    delta_upper: float | None = None
    samples: int | None = None
    inconclusive: int = 0
    violations: int = 0
    x: tuple = ()

    @property
    def exact(self) -> bool:
        return self.verdict != "statistical"

    @property
    def consistent(self) -> bool:
        if self.exact:
            return self.verdict == "consistent"
        return self.statistical_verdict == "consistent"

    @property
    def bound(self):
        return implied_poa_bound(self.delta_star)

    def to_json(self):
        out = {
            "verdict": self.verdict,
            "delta_star": _num(self.delta_star),
            "implied_poa_bound": _num(self.bound) if self.bound != math.inf else "inf",
            "witness": None if self.witness is None else self.witness.to_json(),
            "tuples_examined": self.tuples_examined,
            "violations": self.violations,
            "x": [str(v) for v in self.x],
        }
        if not self.exact:
            out.update(
                statistical_verdict=self.statistical_verdict,
                confidence=self.confidence,
                delta_upper=self.delta_upper,
                samples=self.samples,
                inconclusive=self.inconclusive,
            )
        return out


def _tuple_for(r, i, j, p_correct, p_incorrect):
    """Constraint whose incorrect ranking is ``r`` (``r[j]`` belongs at ``i``)."""
    cond = tuple((pos, r[pos]) for pos in range(len(r)) if pos not in (i, j))
    return ConsistencyTuple(i, j, r[j], r[i], cond, p_correct, p_incorrect)


def _better(t: ConsistencyTuple, best: ConsistencyTuple | None) -> bool:
    if best is None:
        return True
    if t.delta != best.delta:
        return t.delta > best.delta
    return t < best


def _incorrect_pairs(x, r):
    m = len(r)
    for i in range(m):
        for j in range(i + 1, m):
            # r puts l = r[i] ahead of k = r[j] although x(k) >= x(l)
            if x[r[j]] >= x[r[i]]:
                yield i, j


def check_sc_exact(tech: RankingTechnology, x: Sequence, cap: int | None = None,
                   **statistical_kwargs) -> ConsistencyReport:
    """Exhaustive check over every constraint with positive incorrect-side mass.

    Constraints whose incorrect ranking has probability 0 hold trivially and
    are skipped.  Equal-value pairs are checked in both orders.
    """
    x = as_value_vector(x)
    if not tech.exact:
        return check_sc_statistical(tech, x, **statistical_kwargs)
    m = len(x)
    if m > (DEFAULT_CAP if cap is None else cap):
        raise ResourceLimit(f"m={m} exceeds the exact consistency cap", math.factorial(m))
    pmf = tech.pmf(x, cap)
    witness = None
    examined = 0
    violations = 0
    for r, p_inc in pmf.items():
        if p_inc == 0:
            continue
        for i, j in _incorrect_pairs(x, r):
            examined += 1
            p_cor = pmf.get(swap_positions(r, i, j), Fraction(0))
            t = _tuple_for(r, i, j, p_cor, p_inc)
            if p_cor < p_inc:
                violations += 1
            if _better(t, witness):
                witness = t
    delta = witness.delta if witness is not None else Fraction(0)
    verdict = "consistent" if violations == 0 else "violated"
    return ConsistencyReport(verdict, delta, witness, examined, violations=violations, x=x)


def check_sc_statistical(tech: RankingTechnology, x: Sequence, samples: int = 10**6,
                         confidence: float = 0.99, rng=None,
                         min_cell: int = DEFAULT_MIN_CELL) -> ConsistencyReport:
    """Sample-based surrogate of the exact check.

    Given the combined count ``n`` of a ranking and its transposition, the
    correct-side count is Binomial(n, p) and consistency means ``p >= 1/2``.
    Each constraint gets a one-sided exact binomial test, Bonferroni-corrected
    over all constraints; cells with fewer than ``min_cell`` draws are left
    inconclusive.  The upper bound on delta comes from Clopper-Pearson lower
    bounds on ``p`` at the corrected level.
    """
    x = as_value_vector(x)
    m = len(x)
    if m > STATISTICAL_CAP:
        raise ResourceLimit(f"m={m} exceeds the statistical consistency cap {STATISTICAL_CAP}",
                            math.factorial(m))
    if samples < 1:
        raise InvalidInput("samples must be positive")
    rng = np.random.default_rng(0) if rng is None else rng
    draws = tech.sample_many(x, rng, samples)
    codes, counts = np.unique(_ranking_codes(draws, m), return_counts=True)
    count = {_decode_ranking(int(c), m): int(n) for c, n in zip(codes, counts)}

    cells = []
    for r, n_inc in count.items():
        for i, j in _incorrect_pairs(x, r):
            n_cor = count.get(swap_positions(r, i, j), 0)
            cells.append((r, i, j, n_cor, n_inc))
    alpha = (1 - confidence) / max(1, len(cells))

    witness = None
    inconclusive = violations = 0
    delta_upper = 0.0
    for r, i, j, n_cor, n_inc in cells:
        n = n_cor + n_inc
        t = _tuple_for(r, i, j, n_cor / samples, n_inc / samples)
        if _better(t, witness):
            witness = t
        if n < min_cell:
            inconclusive += 1
            delta_upper = max(delta_upper, 1.0)
            continue
        if stats.binomtest(n_cor, n, 0.5, alternative="less").pvalue < alpha:
            violations += 1
        p_lo = stats.beta.ppf(alpha, n_cor, n_inc + 1) if n_cor > 0 else 0.0
        delta_upper = max(delta_upper, 1 - p_lo / (1 - p_lo))
    delta = witness.delta if witness is not None else 0.0
    if violations:
        sv = "violated"
    elif inconclusive:
        sv = "inconclusive"
    else:
        sv = "consistent"
    return ConsistencyReport(
        "statistical", float(delta), witness, len(cells), statistical_verdict=sv,
        confidence=confidence, delta_upper=float(delta_upper), samples=samples,
        inconclusive=inconclusive, violations=violations, x=x,
    )


@dataclass
class DeltaReport:
    """Space-level slack: the largest delta over technologies and value vectors."""

    delta_star: object
    per_technology: dict
    reports: dict
    exact: bool = True

    @property
    def bound(self):
        return implied_poa_bound(self.delta_star)

    def to_json(self):
        return {
            "delta_star": _num(self.delta_star),
            "implied_poa_bound": _num(self.bound) if self.bound != math.inf else "inf",
            "exact": self.exact,
            "per_technology": {k: _num(v) for k, v in self.per_technology.items()},
        }


def measure_delta(space: Sequence[RankingTechnology], xs: Sequence[Sequence],
                  cap: int | None = None, **statistical_kwargs) -> DeltaReport:
    """Largest delta over every technology in ``space`` and every ``x`` in ``xs``.

    Estimated (continuous-noise) technologies contribute their point estimate.
    """
    per: dict = {}
    reports: dict = {}
    exact = True
    for tech in space:
        worst = Fraction(0)
        for x in xs:
            rep = check_sc_exact(tech, x, cap, **statistical_kwargs)
            reports[(tech.id, tuple(as_value_vector(x)))] = rep
            exact &= rep.exact
            worst = max(worst, rep.delta_star)
        per[tech.id] = worst
    delta = max(per.values(), default=Fraction(0))
    return DeltaReport(delta, per, reports, exact)


@dataclass
class SchurReport:
    passed: bool
    trials: int
    x: tuple | None = None
    y: tuple | None = None
    fx: float | None = None
    fy: float | None = None


def schur_spot_check(density, m: int, trials: int = 10**4, rng=None, tol: float = 1e-12,
                     spread: float = 1.0) -> SchurReport:
    """Probe Schur-concavity of a joint density on random majorizing pairs.

    Each trial draws ``y``, picks coordinates ``a``, ``b`` with ``y_a >= y_b``
    and moves mass ``c >= 0`` from ``b`` to ``a``; the result ``x`` majorizes
    ``y`` and a Schur-concave density must satisfy ``f(x) <= f(y)``.
    ``density`` is a callable on arrays whose last axis has length ``m``, or an
    object with a ``joint_density`` method.
    """
    if m < 2:
        raise InvalidInput("need m >= 2")
    f = getattr(density, "joint_density", density)
    rng = np.random.default_rng(0) if rng is None else rng
    y = rng.uniform(-spread, spread, (trials, m))
    a = rng.integers(0, m, trials)
    b = (a + rng.integers(1, m, trials)) % m
    rows = np.arange(trials)
    swap = y[rows, a] < y[rows, b]
    a, b = np.where(swap, b, a), np.where(swap, a, b)
    c = rng.uniform(0, spread, trials)
    x = y.copy()
    x[rows, a] += c
    x[rows, b] -= c
    fx = np.asarray(f(x), dtype=float)
    fy = np.asarray(f(y), dtype=float)
    bad = np.flatnonzero(fx > fy + tol)
    if bad.size:
        t = int(bad[0])
        xt, yt = tuple(map(float, x[t])), tuple(map(float, y[t]))
        assert majorizes(xt, yt, tol=1e-9)
        return SchurReport(False, t + 1, xt, yt, float(fx[t]), float(fy[t]))
    return SchurReport(True, trials)
