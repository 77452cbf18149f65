import math
from fractions import Fraction

import numpy as np
import pytest

from monoculture.common import InvalidInput, ResourceLimit
from monoculture.engine import (
    CoupledEnumeration,
    conditional_deviation_gap,
    expected_utilities_exact,
    expected_utilities_mc,
    ic_audit,
    snatched_available_split,
    welfare_ceiling,
)
from monoculture.game import AdviceSpace, GameSpec, Profile, SelectionPolicy, ValueDistribution
from monoculture.instances import gen_ic_counterexample, gen_random_game, gen_tight_poa, tight_value
from monoculture.perm import HAMMING, KENDALL_TAU
from monoculture.technology import Deterministic, Mallows, TableTechnology

from oracles import brute_utilities, mallows_pmf_direct

F = Fraction
DET = ValueDistribution.deterministic


def small_game(seed, n=None, m=3, mechanism="obedient", distances=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4)) if n is None else n
    kw = {} if distances is None else {"distances": distances}
    return gen_random_game(n, m, rng, mechanism=mechanism, **kw).spec


def some_profiles(spec, k=4):
    profs = spec.profiles()
    step = max(1, len(profs) // k)
    return profs[::step][:k]


def test_single_firm_mallows():
    spec = GameSpec(1, 3, DET((3, 2, 1)), AdviceSpace((Mallows("M", F(1, 2)),)))
    pmf = mallows_pmf_direct(F(1, 2), KENDALL_TAU, (0, 1, 2), 3)
    expect = sum(p * (3 - r[0]) for r, p in pmf.items())
    assert expected_utilities_exact(spec, Profile(("M",))).utilities == (expect,)
    assert expect == F(3 * 12 + 2 * 6 + 1 * 3, 21)


def test_deterministic_techs_average_over_orders():
    a = Deterministic("A", ranking=(0, 1, 2))
    b = Deterministic("B", ranking=(1, 0, 2))
    spec = GameSpec(2, 3, DET((5, 3, 1)), AdviceSpace((a, b)))
    u = expected_utilities_exact(spec, Profile(("A", "A"))).utilities
    assert u == (F(4), F(4))
    u = expected_utilities_exact(spec, Profile(("A", "B"))).utilities
    assert u == (F(5), F(3))


@pytest.mark.parametrize("seed", range(8))
def test_exact_matches_brute_force(seed):
    spec = small_game(seed)
    for prof in some_profiles(spec):
        got = expected_utilities_exact(spec, prof)
        assert list(got.utilities) == brute_utilities(spec, prof)
        assert got.welfare == sum(got.utilities)


@pytest.mark.parametrize("seed", range(4))
def test_exact_matches_brute_force_with_policies(seed):
    spec = small_game(seed, n=2, mechanism="unconstrained")
    ids = spec.profiles()[0].choices
    pols = [
        (SelectionPolicy("qth", q=2), SelectionPolicy()),
        (SelectionPolicy("fixed", prefs=(2,)), SelectionPolicy("qth", q=3)),
    ]
    for p in pols:
        prof = Profile(ids, p)
        assert list(expected_utilities_exact(spec, prof).utilities) == brute_utilities(spec, prof)


@pytest.mark.parametrize("seed", range(6))
def test_orbit_reduction_is_exact(seed):
    spec = small_game(seed + 20, m=4)
    for prof in some_profiles(spec, 3):
        a = expected_utilities_exact(spec, prof, reduce=True)
        b = expected_utilities_exact(spec, prof, reduce=False)
        assert a.utilities == b.utilities


def test_welfare_ceiling_bounds_every_profile():
    spec = small_game(3, m=4)
    ceiling = welfare_ceiling(spec)
    for prof in spec.profiles():
        assert expected_utilities_exact(spec, prof).welfare <= ceiling


def test_budget_limit():
    spec = small_game(1, n=3, m=4)
    with pytest.raises(ResourceLimit) as err:
        expected_utilities_exact(spec, spec.profiles()[0], budget=100)
    assert err.value.count > 100


def test_tight_optimum_welfare():
    desc = gen_tight_poa(3, verify=None)
    u = expected_utilities_exact(desc.spec, desc.profiles["optimum"])
    assert u.welfare == 1 + tight_value(3, F(1, 20))
    assert u.welfare == welfare_ceiling(desc.spec)


@pytest.mark.parametrize("seed", range(10))
def test_mc_within_four_standard_errors(seed):
    spec = small_game(seed + 40, m=4)
    prof = some_profiles(spec, 2)[-1]
    ex = expected_utilities_exact(spec, prof)
    mc = expected_utilities_mc(spec, prof, 10**5, seed=seed)
    for e, u, se in zip(ex.utilities, mc.utilities, mc.stderr):
        assert abs(float(e) - u) <= 4 * se + 1e-12


def test_mc_with_policies_within_four_standard_errors():
    spec = small_game(5, n=2, mechanism="unconstrained")
    ids = spec.profiles()[0].choices
    prof = Profile(ids, (SelectionPolicy("qth", q=2), SelectionPolicy("fixed", prefs=(0,))))
    ex = expected_utilities_exact(spec, prof)
    mc = expected_utilities_mc(spec, prof, 20_000, seed=1)
    for e, u, se in zip(ex.utilities, mc.utilities, mc.stderr):
        assert abs(float(e) - u) <= 4 * se + 1e-12


def test_mc_is_unbiased_over_seeds():
    spec = small_game(7, n=2)
    prof = spec.profiles()[0]
    ex = float(expected_utilities_exact(spec, prof).welfare)
    runs = [expected_utilities_mc(spec, prof, 2000, seed=s) for s in range(200)]
    mean = np.mean([r.welfare for r in runs])
    pooled = math.sqrt(sum(r.welfare_stderr**2 for r in runs)) / len(runs)
    assert abs(mean - ex) < 3 * pooled


def test_mc_determinism_across_workers():
    spec = small_game(2, n=3, m=4)
    prof = spec.profiles()[0]
    a = expected_utilities_mc(spec, prof, 50_000, seed=9, workers=1)
    b = expected_utilities_mc(spec, prof, 50_000, seed=9, workers=4)
    assert a.to_json() == b.to_json()
    c = expected_utilities_mc(spec, prof, 50_000, seed=10)
    assert c.to_json() != a.to_json()


def test_mc_zero_variance():
    spec = GameSpec(1, 2, DET((5, 2)), AdviceSpace((Deterministic("D", ranking=(0, 1)),)))
    mc = expected_utilities_mc(spec, Profile(("D",)), 1000, seed=0)
    assert mc.utilities == (5.0,) and mc.stderr == (0.0,)
    with pytest.raises(InvalidInput):
        expected_utilities_mc(spec, Profile(("D",)), 0)


def test_mc_large_support_falls_back_to_sampling():
    vd = ValueDistribution("iid", m=8, values=tuple(range(5)), probs=("1/5",) * 5)
    spec = GameSpec(2, 8, vd, AdviceSpace((Deterministic("D", order="desc"),)))
    mc = expected_utilities_mc(spec, Profile(("D", "D")), 20_000, seed=0)
    # two best of eight uniform draws from 0..4
    exact = welfare_ceiling(spec)
    assert abs(mc.welfare - float(exact)) < 4 * mc.welfare_stderr


@pytest.mark.parametrize("seed", range(6))
def test_snatched_plus_available(seed):
    spec = small_game(seed + 60)
    profs = some_profiles(spec, 3)
    for s in profs:
        for s_star in profs:
            sn, av = snatched_available_split(spec, s, s_star)
            assert sn + av == expected_utilities_exact(spec, s_star).welfare
            assert sn >= 0 and av >= 0
            # on consistent spaces the comparison profile keeps what it snatches
            assert expected_utilities_exact(spec, s).welfare >= sn


def test_snatched_zero_for_identical_shared_profile():
    spec = GameSpec(2, 2, DET((5, 2)), AdviceSpace((Deterministic("D", ranking=(0, 1)),)))
    p = Profile(("D", "D"))
    assert snatched_available_split(spec, p, p) == (0, F(7))


@pytest.mark.parametrize("seed", range(6))
def test_deviation_gap_nonnegative_on_consistent_games(seed):
    spec = small_game(seed + 80)
    profs = some_profiles(spec, 3)
    for s in profs:
        for s_star in profs:
            for g in conditional_deviation_gap(spec, s, s_star):
                if g.vacuous:
                    continue
                assert g.aggregate >= 0
                assert g.min_cell_gap >= 0
                # the firm acting first always gets its optimum hire back
                for (x, beta), cell in g.cells.items():
                    if beta[0] == g.firm:
                        assert cell.num == 0


def test_delta_weighted_gap():
    spec = small_game(3, distances=(HAMMING,))
    s, s_star = spec.profiles()[0], spec.profiles()[-1]
    for g in conditional_deviation_gap(spec, s, s_star):
        if g.vacuous:
            continue
        assert g.delta_aggregate(0) == g.aggregate
        assert g.delta_aggregate(F(1, 2)) >= g.aggregate


def test_coupled_runs_share_samples():
    spec = small_game(11, n=2)
    p = spec.profiles()[0]
    en = CoupledEnumeration(spec, [p, p])
    for pt in en.points:
        for _, hires, _ in en.leaves(pt):
            assert hires[0] == hires[1]


def test_ic_counterexample_uniform():
    desc = gen_ic_counterexample("uniform")
    rep = ic_audit(desc.spec, desc.profiles["obedient"])
    assert not rep.ok
    v = {x.deviation: x for x in rep.violations}
    assert set(v) == {"prefer:0"}
    assert v["prefer:0"].obedient_value == 5 and v["prefer:0"].deviation_value == 10


def test_ic_counterexample_table():
    desc = gen_ic_counterexample("table")
    rep = ic_audit(desc.spec, desc.profiles["obedient"])
    v = {x.deviation: x for x in rep.violations}
    assert v["prefer:0"].obedient_value == 1 and v["prefer:0"].deviation_value == 10
    assert v["qth:2"].deviation_value == 9
    assert rep.to_json()["violations"][0]["gap"] in ("9", "8")


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("sample_aware", [False, True])
def test_ic_holds_for_invariant_values(seed, sample_aware):
    spec = small_game(seed + 100, m=3, mechanism="unconstrained")
    for prof in some_profiles(spec, 2):
        rep = ic_audit(spec, prof, sample_aware=sample_aware)
        assert rep.ok and rep.decision_points > 0


def test_ic_audit_limits():
    spec = small_game(0, n=1, m=3)
    big = GameSpec(1, 6, DET((6, 5, 4, 3, 2, 1)), AdviceSpace((Mallows("M", F(1, 2)),)))
    with pytest.raises(ResourceLimit):
        ic_audit(big, Profile(("M",)))
    assert ic_audit(spec, spec.profiles()[0]).ok


def test_table_tech_engine():
    x = (F(10), F(0))
    tech = TableTechnology("T", {x: {(1, 0): F(9, 10), (0, 1): F(1, 10)}})
    spec = GameSpec(1, 2, DET(x), AdviceSpace((tech,)))
    assert expected_utilities_exact(spec, Profile(("T",))).welfare == 1
