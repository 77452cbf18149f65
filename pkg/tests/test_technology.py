import itertools
import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from monoculture.common import InvalidInput, ResourceLimit, UnsupportedConfiguration
from monoculture.perm import HAMMING, KENDALL_TAU, SPEARMAN_FOOTRULE, SPEARMAN_RHO, RankDistance
from monoculture.technology import (
    AdditiveNoise,
    Deterministic,
    Layered,
    Mallows,
    NoiseSpec,
    TableTechnology,
    Tier,
    exact_pmf,
    ground_truth_ranking,
    sample,
    sample_without_replacement,
    technology_from_json,
    tie_consistent_rankings,
)

from oracles import mallows_pmf_direct

F = Fraction
DISTANCES = [KENDALL_TAU, SPEARMAN_RHO, SPEARMAN_FOOTRULE, HAMMING]


def chi2_ok(counts: Counter, pmf: dict, n: int, alpha=1e-4):
    keys = list(pmf)
    obs = np.array([counts.get(k, 0) for k in keys], dtype=float)
    exp = np.array([float(pmf[k]) * n for k in keys])
    assert obs.sum() == n, "samples outside the support"
    return stats.chisquare(obs, exp).pvalue > alpha


def test_ground_truth_and_ties():
    assert ground_truth_ranking((1, 3, 2)) == (1, 2, 0)
    assert ground_truth_ranking((1, 1, 0)) == (0, 1, 2)
    assert sorted(tie_consistent_rankings((1, 1, 0))) == [(0, 1, 2), (1, 0, 2)]
    r = ground_truth_ranking((1, 1, 0), "uniform", np.random.default_rng(0))
    assert r[2] == 2


@pytest.mark.parametrize("d", DISTANCES, ids=lambda d: d.kind)
@pytest.mark.parametrize("phi", [F(1, 4), F(1, 2), F(1)])
def test_mallows_pmf_matches_direct_formula(d, phi):
    x = (F(4), F(1), F(3), F(2))
    pmf = Mallows("m", phi, d).pmf(x)
    assert pmf == mallows_pmf_direct(phi, d, ground_truth_ranking(x), 4)
    assert sum(pmf.values()) == 1


def test_mallows_kendall_example():
    pmf = Mallows("m", F(1, 2)).pmf((3, 2, 1))
    assert pmf[(0, 1, 2)] == F(8, 21)
    assert pmf[(2, 1, 0)] == F(1, 21)


def test_mallows_uniform_ties_average_truths():
    x = (F(1), F(1), F(0))
    pmf = Mallows("m", F(1, 2), tie_mode="uniform").pmf(x)
    direct = [mallows_pmf_direct(F(1, 2), KENDALL_TAU, t, 3) for t in tie_consistent_rankings(x)]
    for r in pmf:
        assert pmf[r] == sum(p[r] for p in direct) / 2
    assert pmf[(0, 1, 2)] == pmf[(1, 0, 2)]


def test_mallows_rejects_bad_input():
    with pytest.raises(InvalidInput):
        Mallows("m", F(0))
    with pytest.raises(InvalidInput):
        Mallows("m", F(3, 2))
    with pytest.raises(UnsupportedConfiguration):
        Mallows("m", F(1, 2), RankDistance.gsum(["0", "1/2", "3/2"])).pmf((3, 2, 1))
    with pytest.raises(ResourceLimit):
        Mallows("m", F(1, 2)).pmf(range(6, 0, -1))


@pytest.mark.parametrize("d", [KENDALL_TAU, HAMMING], ids=lambda d: d.kind)
@pytest.mark.parametrize("tie_mode", ["index", "uniform"])
def test_mallows_sampler_matches_pmf(d, tie_mode):
    x = (F(2), F(2), F(1), F(0))
    tech = Mallows("m", F(1, 2), d, tie_mode)
    n = 60_000
    draws = tech.sample_many(x, np.random.default_rng(7), n)
    assert chi2_ok(Counter(map(tuple, draws.tolist())), tech.pmf(x), n)


def test_sample_without_replacement_is_uniform():
    rng = np.random.default_rng(3)
    for pool_size, t in [(20, 2), (5, 3)]:
        draws = sample_without_replacement(rng, np.arange(pool_size), 40_000, t)
        assert (np.sort(draws, axis=1)[:, 1:] != np.sort(draws, axis=1)[:, :-1]).all()
        perms = list(itertools.permutations(range(pool_size), t))
        pmf = {p: F(1, len(perms)) for p in perms}
        assert chi2_ok(Counter(map(tuple, draws.tolist())), pmf, 40_000)


def test_discrete_noise_pmf_by_enumeration():
    noise = NoiseSpec("discrete", values=(0, 1), probs=(F(1, 2), F(1, 2)))
    x = (F(1), F(0), F(0))
    tech = AdditiveNoise("n", noise, "uniform")
    pmf = tech.pmf(x)
    # brute force over the 8 noise outcomes, ties split uniformly
    expect: dict = {}
    for eps in itertools.product((0, 1), repeat=3):
        scores = [x[c] + eps[c] for c in range(3)]
        orders = tie_consistent_rankings(scores)
        for r in orders:
            expect[r] = expect.get(r, 0) + F(1, 8) / len(orders)
    assert pmf == expect
    assert sum(pmf.values()) == 1


def test_continuous_noise_has_only_estimates():
    tech = AdditiveNoise("g", NoiseSpec("gaussian", 1.0))
    with pytest.raises(UnsupportedConfiguration):
        tech.pmf((3, 2, 1))
    est = exact_pmf(tech, (3, 2, 1), samples=20_000)
    assert not est.exact
    assert abs(sum(est.probs.values()) - 1) < 1e-9
    assert est[(0, 1, 2)] > est[(2, 1, 0)]


def test_noise_spec_validation_and_density():
    with pytest.raises(InvalidInput):
        NoiseSpec("cauchy")
    with pytest.raises(InvalidInput):
        NoiseSpec("gaussian", 0.0)
    with pytest.raises(InvalidInput):
        NoiseSpec("discrete", values=(0, 1), probs=(F(1, 2), F(1, 3)))
    g = NoiseSpec("gaussian", 2.0)
    assert g.density(0.0) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)))
    assert NoiseSpec("laplace", 1.0).density(0.0) == pytest.approx(0.5)
    assert NoiseSpec("uniform", 1.0).density(0.6) == 0.0
    z = np.zeros((4, 3))
    assert g.joint_density(z).shape == (4,)


def test_table_technology():
    x = (F(1), F(0))
    tech = TableTechnology("t", {x: {(1, 0): F(9, 10), (0, 1): F(1, 10)}})
    assert tech.prob(x, (1, 0)) == F(9, 10)
    with pytest.raises(InvalidInput):
        tech.pmf((F(2), F(0)))
    with pytest.raises(InvalidInput):
        TableTechnology("t", {x: {(1, 0): F(1, 2)}})
    with pytest.raises(InvalidInput):
        TableTechnology("t", {x: {(1, 1): F(1)}})


def test_deterministic_technology():
    x = (F(5), F(2), F(7))
    assert Deterministic("d", order="desc").pmf(x) == {(2, 0, 1): 1}
    assert Deterministic("d", order="asc").pmf(x) == {(1, 0, 2): 1}
    assert Deterministic("d", ranking=(1, 0, 2)).prefix_pmf(x, 2) == {(1, 0): 1}
    with pytest.raises(InvalidInput):
        Deterministic("d")
    with pytest.raises(InvalidInput):
        Deterministic("d", ranking=(1, 0), order="desc")


def _tight_like():
    x = (F(0), F(1), F(0), F(1, 2), F(0), F(0))
    a = Layered("A", (Tier("top", k=1, order="desc"),))
    a2 = Layered("A'", (Tier("positive", pad_to=3),))
    return x, a, a2


def test_layered_probabilities():
    x, a, a2 = _tight_like()
    pa = a.pmf(x, cap=6)
    assert len(pa) == 120 and all(r[0] == 1 for r in pa)
    assert all(p == F(1, 120) for p in pa.values())
    pa2 = a2.pmf(x, cap=6)
    assert sum(pa2.values()) == 1
    assert all({1, 3} <= set(r[:3]) for r in pa2)
    for r in itertools.permutations(range(6)):
        assert a2.prob(x, r) == pa2.get(r, 0)
        assert a.prob(x, r) == pa.get(r, 0)


@pytest.mark.parametrize("depth", [1, 2, 3, 4])
def test_layered_prefix_is_marginal(depth):
    x, a, a2 = _tight_like()
    for tech in (a, a2):
        full = tech.pmf(x, cap=6)
        marg: dict = {}
        for r, p in full.items():
            marg[r[:depth]] = marg.get(r[:depth], 0) + p
        assert tech.prefix_pmf(x, depth) == marg


@pytest.mark.parametrize("depth", [2, 3, 5])
def test_layered_prefix_sampler(depth):
    x, _, a2 = _tight_like()
    n = 60_000
    draws = a2.sample_prefix(x, np.random.default_rng(11), n, depth)
    assert chi2_ok(Counter(map(tuple, draws.tolist())), a2.prefix_pmf(x, depth), n)


def test_layered_ordered_tiers():
    x = (F(0), F(3), F(2), F(0), F(1))
    h = Layered("H", (Tier("values", values=(1, 2, 3), order="asc"),))
    pmf = h.pmf(x)
    assert set(r[:3] for r in pmf) == {(4, 2, 1)}
    assert h.equivariant_at(x)
    assert not Layered("T", (Tier("top", k=1),)).equivariant_at((F(1), F(1), F(0)))


@settings(max_examples=25)
@given(st.permutations(range(4)), st.sampled_from(DISTANCES), st.sampled_from([F(1, 4), F(1, 2)]))
def test_equivariance(sigma, d, phi):
    # relabeling candidates relabels the distribution
    x = (F(3), F(1), F(2), F(0))
    tech = Mallows("m", phi, d)
    y = tuple(x[sigma.index(c)] for c in range(4))  # candidate c of x becomes sigma[c]
    px, py = tech.pmf(x), tech.pmf(y)
    for r, p in px.items():
        assert py[tuple(sigma[c] for c in r)] == p


def test_json_round_trip():
    x, a, a2 = _tight_like()
    techs = [
        Mallows("m", F(1, 3), SPEARMAN_RHO, "uniform"),
        Mallows("g", F(1, 2), RankDistance.gsum([0, 1, 4])),
        AdditiveNoise("n", NoiseSpec("laplace", 0.5)),
        AdditiveNoise("d", NoiseSpec("discrete", values=(0, 1), probs=("1/3", "2/3"))),
        TableTechnology("t", {(1, 0): {(1, 0): "9/10", (0, 1): "1/10"}}),
        Deterministic("r", ranking=(1, 0, 2)),
        Deterministic("o", order="asc"),
        a, a2,
    ]
    for t in techs:
        back = technology_from_json(t.to_json())
        assert back.to_json() == t.to_json()
    assert technology_from_json(a2.to_json()).pmf(x, cap=6) == a2.pmf(x, cap=6)
    with pytest.raises(InvalidInput):
        technology_from_json({"id": "x", "kind": "oracle"})
    with pytest.raises(InvalidInput):
        technology_from_json({"kind": "mallows"})


def test_single_sample():
    r = sample(Mallows("m", F(1, 2)), (3, 2, 1), np.random.default_rng(0))
    assert sorted(r) == [0, 1, 2]
