from fractions import Fraction

import numpy as np
import pytest

from monoculture.common import ResourceLimit
from monoculture.equilibrium import (
    ExactEvaluator,
    MCEvaluator,
    best_response_gap,
    check_equilibrium,
    dominant_strategy,
    find_pure_nash,
    price_of_anarchy,
    profile_seed,
    smoothness_check,
    social_optimum,
)
from monoculture.game import AdviceSpace, GameSpec, Profile, ValueDistribution
from monoculture.instances import gen_linear_poa, gen_random_sc_game, gen_tight_poa
from monoculture.technology import Deterministic, Mallows

F = Fraction
DET = ValueDistribution.deterministic


@pytest.fixture(scope="module")
def linear3():
    desc = gen_linear_poa(3, verify=False)
    return desc, ExactEvaluator(desc.spec)


def test_linear_optimum_deviation_gap(linear3):
    desc, ev = linear3
    eps = desc.params["eps"]
    for i in range(3):
        g = best_response_gap(ev, desc.profiles["optimum"], i)
        assert g.gap == eps / 9 and g.best == "A"
        assert g.upper == g.lower == g.gap


def test_linear_dominance_gives_unique_equilibrium(linear3):
    desc, ev = linear3
    for i in range(3):
        assert dominant_strategy(ev, i).kind == "strict"
    ne = find_pure_nash(ev)
    assert [c.profile for c in ne] == [desc.profiles["equilibrium"]]
    opt, sw = social_optimum(ev)
    assert opt == desc.profiles["optimum"]


def test_single_technology_firm():
    spec = GameSpec(2, 2, DET((3, 1)), AdviceSpace((Deterministic("D", order="desc"),)))
    ev = ExactEvaluator(spec)
    p = Profile(("D", "D"))
    assert best_response_gap(ev, p, 0).gap == 0
    assert dominant_strategy(ev, 0).kind == "weak"
    assert [c.profile for c in find_pure_nash(ev)] == [p]
    rep = price_of_anarchy(ev)
    assert rep.poa == 1 and rep.epsilon == 0


def test_identical_technologies_have_no_dominant():
    a = Deterministic("A", order="desc")
    b = Deterministic("B", order="desc")
    spec = GameSpec(2, 3, DET((3, 2, 1)), AdviceSpace((a, b)))
    ev = ExactEvaluator(spec)
    assert dominant_strategy(ev, 0).kind == "none"
    assert len(find_pure_nash(ev)) == 4
    assert social_optimum(ev)[0] == Profile(("A", "A"))  # lexicographic tie-break


def test_tight_three_is_equilibrium():
    desc = gen_tight_poa(3, verify="exact")
    assert desc.verified
    ev = ExactEvaluator(desc.spec)
    chk = check_equilibrium(ev, desc.profiles["equilibrium"])
    assert chk.status == "ne"
    assert all(g.gains["A'"].value < 0 for g in chk.gaps)


@pytest.mark.parametrize("seed", range(4))
def test_random_consistent_games_within_two(seed):
    rng = np.random.default_rng(seed)
    desc = gen_random_sc_game(int(rng.integers(1, 4)), 3, rng)
    ev = ExactEvaluator(desc.spec)
    rep = price_of_anarchy(ev, delta_star=0)
    assert rep.pure_nash
    assert 1 <= rep.poa <= 2
    assert not rep.bound_violated and rep.bound == 2
    assert smoothness_check(ev).passed


def test_smoothness_report_fields():
    rng = np.random.default_rng(4)
    ev = ExactEvaluator(gen_random_sc_game(2, 3, rng).spec)
    rep = smoothness_check(ev)
    n_prof = len(ev.spec.profiles())
    assert rep.pairs == n_prof**2 and rep.worst_slack >= 0
    assert rep.to_json()["witness"] is None


def test_profile_cap():
    desc = gen_linear_poa(3, verify=False)
    with pytest.raises(ResourceLimit):
        find_pure_nash(ExactEvaluator(desc.spec), cap=4)


def test_report_json(linear3):
    _, ev = linear3
    js = price_of_anarchy(ev, with_dominance=True).to_json()
    assert js["method"] == "exact" and js["epsilon"] == "0"
    assert js["dominant"]["0"] == {"kind": "strict", "technology": "A"}
    assert Fraction(js["poa"]) > 2


def mc_game():
    good = Deterministic("G", order="desc")
    bad = Deterministic("B", order="asc")
    m1 = Mallows("M1", F(1, 2))
    m2 = Mallows("M2", F(1, 2))
    return GameSpec(1, 3, DET((3, 2, 1)), AdviceSpace((good, bad, m1, m2)))


def test_mc_statuses():
    spec = mc_game()
    ev = MCEvaluator(spec, 20_000, seed=3)
    assert check_equilibrium(ev, Profile(("G",)), 0.01).status == "ne"
    assert check_equilibrium(ev, Profile(("B",)), 0.01).status == "not_ne"
    sub = GameSpec(1, 3, DET((3, 2, 1)), AdviceSpace((Mallows("M1", F(1, 2)), Mallows("M2", F(1, 2)))))
    ev2 = MCEvaluator(sub, 20_000, seed=3)
    assert check_equilibrium(ev2, Profile(("M1",)), 0).status == "inconclusive"


def test_mc_report_carries_interval():
    sub = GameSpec(1, 3, DET((3, 2, 1)), AdviceSpace((Mallows("M1", F(1, 2)), Mallows("M2", F(1, 2)))))
    rep = price_of_anarchy(MCEvaluator(sub, 20_000, seed=3), epsilon=0)
    assert rep.method == "mc"
    assert rep.inconclusive and rep.poa_interval is not None
    assert rep.poa_interval[1] >= 1


def test_profile_seed_is_stable():
    p = Profile(("A", "B"))
    assert profile_seed(1, p) == profile_seed(1, Profile(("A", "B")))
    assert profile_seed(1, p) != profile_seed(2, p)
    assert profile_seed(1, p) != profile_seed(1, Profile(("B", "A")))
