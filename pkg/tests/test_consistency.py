import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from monoculture.common import ResourceLimit
from monoculture.consistency import (
    ConsistencyTuple,
    check_sc_exact,
    check_sc_statistical,
    implied_poa_bound,
    measure_delta,
    schur_spot_check,
)
from monoculture.perm import (
    CAYLEY,
    HAMMING,
    KENDALL_TAU,
    SPEARMAN_FOOTRULE,
    SPEARMAN_RHO,
    RankDistance,
    all_rankings,
    is_inversion_monotone,
)
from monoculture.technology import AdditiveNoise, Mallows, NoiseSpec, TableTechnology

from oracles import brute_sc_subsets

F = Fraction
ALL_D = [KENDALL_TAU, SPEARMAN_RHO, SPEARMAN_FOOTRULE, CAYLEY, HAMMING,
         RankDistance.gsum([0, 1, 3, 6])]


def test_kendall_example_consistent():
    rep = check_sc_exact(Mallows("m", F(1, 2)), (3, 2, 1))
    assert rep.verdict == "consistent" and rep.delta_star == 0
    assert rep.bound == 2


@pytest.mark.parametrize("d", ALL_D, ids=lambda d: d.kind)
def test_uniform_is_consistent_with_equality(d):
    x = (F(2), F(5), F(1), F(3))
    rep = check_sc_exact(Mallows("m", F(1), d), x)
    assert rep.consistent and rep.delta_star == 0
    assert rep.witness.p_correct == rep.witness.p_incorrect


def test_hamming_witness():
    rep = check_sc_exact(Mallows("h", F(1, 2), HAMMING), (3, 2, 1))
    assert rep.verdict == "violated"
    w = rep.witness
    assert (w.i, w.j, w.k, w.l) == (0, 1, 1, 2)
    assert w.conditioning == ((2, 0),)
    assert w.p_correct / w.p_incorrect == F(1, 2)
    assert w.incorrect == (2, 1, 0) and w.correct == (1, 2, 0)
    assert rep.delta_star == F(1, 2) and rep.bound == 5
    js = rep.to_json()
    assert js["witness"]["k"] == 1 and js["implied_poa_bound"] == "5"


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("phi", [F(1, 4), F(1, 2), F(3, 4)])
@pytest.mark.parametrize("d", ALL_D[:5], ids=lambda d: d.kind)
def test_sc_iff_inversion_monotone(m, phi, d):
    x = tuple(F(m - c) for c in range(m))
    assert check_sc_exact(Mallows("m", phi, d), x).consistent == is_inversion_monotone(d, m).holds


@pytest.mark.parametrize("d", [RankDistance.gsum([0, 1, 3, 6]), RankDistance.gsum([0, 0, 2, 4])],
                         ids=["g1", "g2"])
def test_convex_gsum_agrees_with_monotonicity(d):
    x = (F(1), F(4), F(2), F(3))
    assert check_sc_exact(Mallows("g", F(1, 2), d), x).consistent == is_inversion_monotone(d, 4).holds


def _random_table(rng, x, zero_frac=0.3):
    w = rng.integers(1, 10, 6) * (rng.random(6) > zero_frac)
    if w.sum() == 0:
        w[0] = 1
    ranks = all_rankings(3)
    return TableTechnology("t", {x: {r: F(int(v), int(w.sum())) for r, v in zip(ranks, w) if v}})


@pytest.mark.parametrize("seed", range(20))
def test_subset_form_agrees_on_random_tables(seed):
    rng = np.random.default_rng(seed)
    x = [(F(3), F(2), F(1)), (F(1), F(1), F(0)), (F(0), F(2), F(1))][seed % 3]
    tech = _random_table(rng, x)
    assert check_sc_exact(tech, x).consistent == brute_sc_subsets(tech.pmf(x), x)


@pytest.mark.parametrize("seed", range(6))
def test_subset_form_agrees_on_mallows_mixtures(seed):
    rng = np.random.default_rng(100 + seed)
    x = (F(3), F(1), F(2))
    ds = [ALL_D[int(k)] for k in rng.integers(0, 5, 2)]
    pmfs = [Mallows("m", F(int(rng.integers(1, 4)), 4), d).pmf(x) for d in ds]
    mix = {r: (pmfs[0][r] + pmfs[1][r]) / 2 for r in pmfs[0]}
    tech = TableTechnology("mix", {x: mix})
    assert check_sc_exact(tech, x).consistent == brute_sc_subsets(mix, x)


def test_ties_checked_both_ways():
    x = (F(1), F(1), F(0))
    tech = TableTechnology("t", {x: {(0, 1, 2): F(2, 3), (1, 0, 2): F(1, 3)}})
    rep = check_sc_exact(tech, x)
    assert not rep.consistent and rep.delta_star == F(1, 2)
    assert not brute_sc_subsets(tech.pmf(x), x)


def test_vacuous_tuples_and_delta_one():
    x = (F(1), F(0))
    assert check_sc_exact(TableTechnology("t", {x: {(0, 1): F(1)}}), x).delta_star == 0
    rep = check_sc_exact(TableTechnology("t", {x: {(1, 0): F(1)}}), x)
    assert rep.delta_star == 1 and rep.bound == math.inf
    assert rep.to_json()["implied_poa_bound"] == "inf"


def test_exact_cap():
    with pytest.raises(ResourceLimit):
        check_sc_exact(Mallows("m", F(1, 2)), range(7, 0, -1))


@given(st.fractions(0, 1), st.fractions(0, 1))
def test_tuple_delta_range(a, b):
    t = ConsistencyTuple(0, 1, 1, 0, (), a, b)
    assert 0 <= t.delta <= 1
    assert (t.delta == 0) == (b == 0 or a >= b)
    assert not str(t.delta).startswith("-")


@given(st.fractions(0, F(99, 100)))
def test_bound_formula(delta):
    assert implied_poa_bound(delta) == 1 + 1 / (1 - delta) ** 2
    assert implied_poa_bound(delta) >= 2


@pytest.mark.parametrize("family", ["gaussian", "laplace"])
def test_statistical_noise_consistent(family):
    tech = AdditiveNoise("n", NoiseSpec(family, 1.0))
    rep = check_sc_statistical(tech, (3, 2, 1), samples=10**6, confidence=0.99,
                               rng=np.random.default_rng(1))
    assert rep.statistical_verdict == "consistent"
    assert rep.verdict == "statistical" and not rep.exact
    assert rep.delta_star <= rep.delta_upper < 0.05


def test_statistical_uniform_noise_m2():
    tech = AdditiveNoise("u", NoiseSpec("uniform", 1.0))
    rep = check_sc_exact(tech, (2, 1), samples=10**5, rng=np.random.default_rng(2))
    assert rep.statistical_verdict == "consistent"


def test_statistical_table_violation():
    x = (F(1), F(0))
    tech = TableTechnology("t", {x: {(1, 0): F(9, 10), (0, 1): F(1, 10)}})
    rep = check_sc_statistical(tech, x, samples=10**5, rng=np.random.default_rng(3))
    assert rep.statistical_verdict == "violated"
    assert rep.delta_star == pytest.approx(8 / 9, abs=0.01)


@pytest.mark.parametrize("tech", [
    Mallows("kt", F(1, 2)),
    Mallows("ham", F(1, 2), HAMMING),
    Mallows("sf", F(3, 4), SPEARMAN_FOOTRULE),
    Mallows("cay", F(1, 4), CAYLEY),
], ids=lambda t: t.id)
def test_statistical_agrees_with_exact(tech):
    x = (F(3), F(2), F(1))
    exact = check_sc_exact(tech, x)
    est = check_sc_statistical(tech, x, samples=10**6, rng=np.random.default_rng(4))
    assert est.statistical_verdict == exact.verdict
    assert est.delta_star == pytest.approx(float(exact.delta_star), abs=0.02)


def test_statistical_sparse_cells_inconclusive():
    rep = check_sc_statistical(Mallows("m", F(1, 4)), (4, 3, 2, 1), samples=200,
                               rng=np.random.default_rng(5))
    assert rep.statistical_verdict == "inconclusive" and rep.inconclusive > 0
    assert rep.delta_upper == 1.0


def test_measure_delta():
    xs = [(F(3), F(2), F(1)), (F(1), F(3), F(2))]
    sc = measure_delta([Mallows("a", F(1, 2)), Mallows("b", F(1, 4), SPEARMAN_RHO)], xs)
    assert sc.delta_star == 0 and sc.bound == 2 and sc.exact
    ham = measure_delta([Mallows("a", F(1, 2)), Mallows("h", F(1, 2), HAMMING)], xs)
    assert ham.per_technology == {"a": 0, "h": F(1, 2)}
    assert ham.bound == 5


def test_schur_log_concave_pass():
    for family in ("gaussian", "laplace"):
        rep = schur_spot_check(NoiseSpec(family, 1.0), 3, trials=10**4, rng=np.random.default_rng(6))
        assert rep.passed and rep.trials == 10**4


def test_schur_log_convex_box_fails():
    def density(z):
        inside = np.all(np.abs(z) <= 1, axis=-1)
        return np.where(inside, np.exp(np.sum(z**2, axis=-1)), 0.0)

    rep = schur_spot_check(density, 3, trials=10**4, rng=np.random.default_rng(7), spread=0.5)
    assert not rep.passed
    assert rep.fx > rep.fy
    assert sum(rep.x) == pytest.approx(sum(rep.y))
