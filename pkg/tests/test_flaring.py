import math

import numpy as np
import pytest

from hyptrees import scenes
from hyptrees.flaring import (
    FreeGroupAutomorphism,
    WordLengthCapExceeded,
    automorphism_pseudo_orbit,
    enumerate_ball,
    growth_bound_check,
    invert_word,
    reduce_word,
    section_pair_stats,
    verify_acylindricity,
    verify_bigon_property,
    verify_exponential_flaring,
    verify_uniform_flaring,
    weak_hyperbolicity_test,
)
from hyptrees.flows import find_qi_section
from hyptrees.tree_of_spaces import build_total_space

TOL = 1e-9


@pytest.fixture(scope="module")
def doubling():
    return build_total_space(scenes.doubling_bundle(4))


@pytest.fixture(scope="module")
def constant():
    return build_total_space(scenes.constant_bundle(4, 5))


@pytest.fixture(scope="module")
def acyl():
    return build_total_space(scenes.acylindrical_chain(4, fiber=8))


# --- section pair stats -----------------------------------------------------

def test_pair_stats_equal_sections(constant):
    X = constant
    s = find_qi_section(X, [0, 1, 2, 3, 4], 1.0, X.fiber_vertex(0, 2))
    st = section_pair_stats(X, s, s)
    assert st.profile == (0.0,) * 5 and st.girth == 0.0 and st.ends_max == 0.0


def test_pair_stats_constant_parallel(constant):
    X = constant
    s0 = find_qi_section(X, [0, 1, 2, 3, 4], 1.0, X.fiber_vertex(0, 0))
    s1 = find_qi_section(X, [0, 1, 2, 3, 4], 1.0, X.fiber_vertex(0, 3))
    st = section_pair_stats(X, s0, s1)
    assert st.profile == (3.0,) * 5
    assert st.girth == st.ends_max == 3.0


def test_pair_stats_doubling_profile(doubling):
    X = doubling
    dom = [0, 1, 2, 3, 4]
    s0 = find_qi_section(X, dom, 1.0, X.fiber_vertex(0, 0))
    s1 = find_qi_section(X, dom, 1.0, X.fiber_vertex(0, 1),
                         end=X.fiber_vertex(4, 16))
    st = section_pair_stats(X, s0, s1)
    assert st.profile == (1.0, 2.0, 4.0, 8.0, 16.0)


# --- uniform flaring ---------------------------------------------------------

def test_uniform_flaring_doubling_logarithmic(doubling):
    rep = verify_uniform_flaring(doubling, K=1.0, M_K=1.0, D_grid=[2.0, 4.0, 8.0])
    assert rep.verdict
    assert rep.mode == "exact"
    for D, tau, _ in rep.table:
        assert tau <= math.ceil(math.log2(D)) + 2


def test_uniform_flaring_constant_saturates(constant):
    rep = verify_uniform_flaring(constant, K=1.0, M_K=1.0, D_grid=[3.0])
    assert not rep.verdict  # tau saturates the scene: parallel witness family
    D, tau, wit = rep.table[0]
    assert tau == rep.params["max_interval"]
    assert wit  # explicit witness pair recorded


def test_uniform_flaring_single_edge_base():
    X = build_total_space(scenes.constant_bundle(1, 3))
    rep = verify_uniform_flaring(X, K=1.0, M_K=1.0, D_grid=[2.0])
    assert rep.table[0][1] <= 1


def test_uniform_flaring_constant_growing_family():
    taus = []
    for n in (2, 3, 4):
        X = build_total_space(scenes.constant_bundle(n, 5))
        rep = verify_uniform_flaring(X, K=1.0, M_K=1.0, D_grid=[3.0])
        taus.append(rep.table[0][1])
    assert taus == [2, 3, 4]  # grows with scene size: uniform flaring fails


# --- exponential flaring -------------------------------------------------------

def test_exponential_flaring_doubling_passes(doubling):
    rep = verify_exponential_flaring(doubling, kappa=1.0, lam=2.0, n=1, M=1.0)
    assert rep.verdict


def test_exponential_flaring_constant_fails(constant):
    rep = verify_exponential_flaring(constant, kappa=1.0, lam=1.5, n=1, M=1.0)
    assert not rep.verdict
    assert rep.witness


def test_exponential_flaring_lambda_one_rejected(constant):
    with pytest.raises(ValueError):
        verify_exponential_flaring(constant, kappa=1.0, lam=1.0, n=1, M=1.0)


# --- bigon property -------------------------------------------------------------

def test_bigon_equal_sections_zero(acyl):
    rep = verify_bigon_property(acyl, K=1.0, C=0.0)
    assert rep.params["R"] == 0.0


def test_bigon_doubling_R_equals_C(doubling):
    rep = verify_bigon_property(doubling, K=1.0, C=4.0)
    # interior distances halve toward the thin end: R(1, C) = C
    assert rep.params["R"] == pytest.approx(4.0)


def test_bigon_constant_far_pairs_vacuous(constant):
    # C below the separation of any far parallel pair but >= 0 catches only
    # diagonal-ish pairs; with C=0 only equal sections qualify: R=0
    rep = verify_bigon_property(constant, K=1.0, C=0.0)
    assert rep.params["R"] == 0.0


# --- acylindricity ------------------------------------------------------------------

def test_acylindricity_point_edges_pass(acyl):
    rep = verify_acylindricity(acyl, kappa=1.5, tau=2, M=4.0)
    assert rep.verdict


def test_acylindricity_constant_fails(constant):
    rep = verify_acylindricity(constant, kappa=1.0, tau=2, M=2.0)
    assert not rep.verdict
    assert rep.witness


def test_acylindricity_tau_beyond_diameter_vacuous(constant):
    rep = verify_acylindricity(constant, kappa=1.0, tau=99, M=0.0)
    assert rep.verdict
    assert "vacuous" in rep.note


def test_acyl_implies_uniform_flaring(acyl):
    # tau(kappa, D) = tau + 2 on acylindrical scenes
    acyl_rep = verify_acylindricity(acyl, kappa=1.5, tau=2, M=4.0)
    assert acyl_rep.verdict
    uni = verify_uniform_flaring(acyl, K=1.5, M_K=4.0, D_grid=[6.0])
    assert uni.verdict
    assert uni.table[0][1] <= 2 + 2


def test_growth_bound_on_found_pairs(doubling):
    X = doubling
    dom = [0, 1, 2, 3, 4]
    pairs = []
    for a, b in ((0, 1), (0, 0)):
        s0 = find_qi_section(X, dom, 1.0, X.fiber_vertex(0, a))
        s1 = find_qi_section(X, dom, 1.0, X.fiber_vertex(0, b))
        pairs.append((s0, s1))
    L0p = X.secondary().L0p
    assert growth_bound_check(X, pairs, a=L0p, b=2 * L0p * 1.0)


# --- words and automorphisms ----------------------------------------------------------

def test_reduce_and_invert():
    assert reduce_word("abBA") == ""
    assert reduce_word("abAB") == "abAB"
    assert invert_word("ab") == "BA"
    assert reduce_word(invert_word("ab") + "ab") == ""


def fib_auto():
    # a -> ab, b -> a; inverse: a -> b, b -> Ba
    return FreeGroupAutomorphism("ab", {"a": "ab", "b": "a"},
                                 {"a": "b", "b": "Ba"})


def test_automorphism_inverse_validated():
    aut = fib_auto()
    assert aut.apply("a") == "ab"
    assert aut.apply_inverse(aut.apply("ba")) == "ba"
    with pytest.raises(ValueError, match="invert"):
        FreeGroupAutomorphism("ab", {"a": "ab", "b": "a"},
                              {"a": "b", "b": "a"})


def test_ball_enumeration_counts():
    # |ball r| = 1 + 4 (3^r - 1)/2 in rank 2
    for r in (1, 2, 3):
        assert len(enumerate_ball("ab", r)) == 1 + 2 * (3 ** r - 1)


def test_pseudo_orbit_fibonacci():
    aut = fib_auto()
    orbit = automorphism_pseudo_orbit(aut, "a", K=0, steps=5)
    assert orbit.lengths == (1, 2, 3, 5, 8, 13)


def test_pseudo_orbit_identity_constant():
    ident = FreeGroupAutomorphism.identity("ab")
    orbit = automorphism_pseudo_orbit(ident, "ab", K=0, steps=4)
    assert set(orbit.words) == {"ab"}


def test_pseudo_orbit_greedy_shrinks():
    aut = fib_auto()
    orbit = automorphism_pseudo_orbit(aut, "a", K=1, steps=5, policy="greedy")
    exact = automorphism_pseudo_orbit(aut, "a", K=0, steps=5)
    assert all(a <= b for a, b in zip(orbit.lengths, exact.lengths))


def test_pseudo_orbit_cap():
    aut = fib_auto()
    with pytest.raises(WordLengthCapExceeded):
        automorphism_pseudo_orbit(aut, "a", K=0, steps=40, length_cap=100)


def test_weak_hyperbolicity_fibonacci_commutator_violators():
    # the commutator ABab maps to its cyclic inverse with period 2, so its
    # length never grows: the exhaustive oracle must find it
    res = weak_hyperbolicity_test(fib_auto(), m=3, lam=1.5, ball_radius=5,
                                  exceptional_radius=1)
    assert not res.verdict
    assert "ABab" in res.violating and "BAba" in res.violating
    assert res.checked == len(enumerate_ball("ab", 5)) - len(enumerate_ball("ab", 1))
    aut = fib_auto()
    for h in res.violating:
        assert 1.5 * len(h) > max(len(aut.power(h, 3)), len(aut.power(h, -3)))


def test_weak_hyperbolicity_fibonacci_passes_outside_commutators():
    # away from the commutator cyclic class, growth is genuinely Fibonacci:
    # a larger exceptional ball and slightly smaller lambda pass honestly
    res = weak_hyperbolicity_test(fib_auto(), m=3, lam=1.2, ball_radius=5,
                                  exceptional_radius=4)
    assert res.verdict
    assert res.violating == ()


def test_weak_hyperbolicity_identity_fails_everywhere():
    ident = FreeGroupAutomorphism.identity("ab")
    res = weak_hyperbolicity_test(ident, m=3, lam=1.5, ball_radius=3,
                                  exceptional_radius=0)
    assert not res.verdict
    assert len(res.violating) == res.checked


def test_weak_hyperbolicity_inner_fails():
    inner = FreeGroupAutomorphism.inner("ab", "a")
    res = weak_hyperbolicity_test(inner, m=3, lam=1.5, ball_radius=5,
                                  exceptional_radius=1)
    assert not res.verdict
    # conjugation changes lengths by at most 2|g|: long words all violate
    assert any(len(h) == 5 for h in res.violating)
