import math

import numpy as np
import pytest

from hyptrees import scenes
from hyptrees.metric_core import MetricGraph
from hyptrees.tree_of_spaces import (
    BaseTree,
    SemiContinuousFamily,
    TreeOfSpaces,
    build_total_space,
    k0_formula,
    mitra_retraction,
    restrict_to_subtree,
    secondary_constants,
    verify_axiom_H,
    verify_semicontinuous_family,
)

TOL = 1e-9


def point_graph():
    return MetricGraph(["p"], [], name="pt")


def one_edge_scene(gv, gw, ge, mv, mw):
    base = BaseTree([0, 1], {"e": (0, 1)})
    return TreeOfSpaces(base, {0: gv, 1: gw}, {"e": ge}, {"e": {0: mv, 1: mw}})


# --- build_total_space ------------------------------------------------------

def test_single_vertex_base():
    base = BaseTree(["u"], {})
    g = scenes.unit_path(4)
    tos = TreeOfSpaces(base, {"u": g}, {}, {})
    X = build_total_space(tos)
    assert X.graph.n == 4
    assert all(X.pi[x] == ("v", "u") for x in X.graph.vertices)


def test_point_fibers_give_unit_path():
    tos = one_edge_scene(point_graph(), point_graph(), point_graph(),
                         {"p": "p"}, {"p": "p"})
    X = build_total_space(tos)
    assert X.graph.n == 3
    d = X.graph.distance_matrix()
    a = X.fiber_vertex(0, "p")
    b = X.fiber_vertex(1, "p")
    assert d.d(a, b) == pytest.approx(1.0)


def test_isometric_bundle_crossing_distance():
    g = scenes.unit_path(5)
    tos = scenes.isometric_bundle(1, g)
    X = build_total_space(tos)
    d = X.graph.distance_matrix()
    for x in g.vertices:
        assert d.d(X.fiber_vertex(0, x), X.fiber_vertex(1, x)) == pytest.approx(1.0)
    # pi is 1-Lipschitz: distance between fibers is at least base distance
    assert d.d(X.fiber_vertex(0, 0), X.fiber_vertex(1, 4)) >= 1.0 - TOL


def test_incidence_hitting_missing_vertex_rejected():
    with pytest.raises(ValueError, match="missing vertex"):
        one_edge_scene(point_graph(), point_graph(), point_graph(),
                       {"p": "p"}, {"p": "nope"})


# --- restrict_to_subtree -----------------------------------------------------

def test_restrict_whole_base_is_identity():
    tos = scenes.constant_bundle(2, 3)
    X = build_total_space(tos)
    view, table = restrict_to_subtree(X, [0, 1, 2])
    assert view.graph.n == X.graph.n
    for t, m in table.table:
        assert m == pytest.approx(t, abs=TOL)


def test_restrict_single_vertex_doubling_superlinear():
    tos = scenes.doubling_bundle(3)
    X = build_total_space(tos)
    view, table = restrict_to_subtree(X, [3])
    # ambient distance between endpoints of the big fiber is much smaller
    # than the intrinsic one: the inclusion is properly distorted
    g3 = X.fiber_graph(3)
    a = X.fiber_vertex(3, 0)
    b = X.fiber_vertex(3, 8)
    amb = X.graph.d(a, b)
    intr = view.d(a, b)
    assert intr == 8.0
    assert amb < intr
    assert table.eta(amb) >= intr - TOL


def test_restrict_empty_rejected():
    tos = scenes.constant_bundle(1, 2)
    X = build_total_space(tos)
    with pytest.raises(ValueError):
        restrict_to_subtree(X, [])
    with pytest.raises(ValueError):
        X.subspace([0, 7])


# --- axiom H ------------------------------------------------------------------

def test_axiom_h_tree_fibers_isometric():
    g = scenes.unit_path(4)
    tos = scenes.isometric_bundle(2, g)
    rep = verify_axiom_H(tos)
    assert rep.delta0 == 0.0
    assert rep.L0 == pytest.approx(1.0)
    assert rep.verdict


def test_axiom_h_constant_incidence_fails():
    gv = scenes.unit_path(2)
    ge = MetricGraph(["x", "y"], [("x", "y", 5)])
    tos = one_edge_scene(gv, gv, ge, {"x": 0, "y": 0}, {"x": 0, "y": 1})
    rep = verify_axiom_H(tos, tolerance=4.0)
    assert not rep.verdict
    bad = rep.failing()
    assert bad and bad[0].endpoint == 0


def test_axiom_h_f2_scene_finite():
    tos = scenes.f2_ball_scene(radius=2)
    rep = verify_axiom_H(tos)
    assert rep.delta0 >= 0.0 and math.isfinite(rep.L0)


# --- secondary constants --------------------------------------------------------

def test_k0_exact_arithmetic():
    assert k0_formula(1, 1, 2) == 9_261_000
    assert k0_formula(0, 1, 2) == (15 * 5 * 2) ** 3
    assert k0_formula(2, 3, 2) == (15 * (4 + 15) * 2) ** 3


def test_secondary_tree_fibers():
    tos = scenes.isometric_bundle(2, scenes.unit_path(4))
    sc = secondary_constants(tos)
    assert sc.lam0 == 0.0
    assert sc.L0p >= 2.0
    assert sc.K0_paper == pytest.approx(k0_formula(sc.lam0p_paper, sc.delta0p, sc.L0p))
    assert sc.kstar_tree["op"] == "max"


def test_secondary_grid_fiber_delta_measured():
    g = scenes.grid_graph(3)
    tos = scenes.isometric_bundle(1, g)
    sc = secondary_constants(tos)
    assert sc.delta0p > 0.0  # compiled two-vertex space of a grid is not a tree


# --- semicontinuous families -----------------------------------------------------

def full_fiber_family(X, K=5.0, D=np.inf, E=2.0, lam=0.0):
    Y_v = {v: tuple(X.fibers[v]) for v in X.tos.base.vertices}
    Y_e = {e: tuple(X.edge_fibers[e]) for e in X.tos.base.edges}
    return SemiContinuousFamily(X.tos.base.vertices[0], Y_v, Y_e, K, D, E, lam)


def test_whole_bundle_family_passes():
    tos = scenes.isometric_bundle(2, scenes.unit_path(4))
    X = build_total_space(tos)
    fam = full_fiber_family(X, K=2.0, D=np.inf, E=1.0, lam=0.0)
    rep = verify_semicontinuous_family(X, fam)
    assert rep.verdict, rep.failing()


def test_family_empty_fiber_rejected():
    tos = scenes.isometric_bundle(1, scenes.unit_path(3))
    X = build_total_space(tos)
    fam = full_fiber_family(X)
    fam.Y_v[1] = ()
    with pytest.raises(ValueError, match="empty"):
        verify_semicontinuous_family(X, fam)


def test_family_over_non_subtree_rejected():
    tos = scenes.constant_bundle(2, 2)
    X = build_total_space(tos)
    fam = full_fiber_family(X)
    del fam.Y_v[1]
    with pytest.raises(ValueError, match="subtree"):
        verify_semicontinuous_family(X, fam)


# --- mitra retraction -------------------------------------------------------------

def test_retraction_identity_on_one_vertex_base():
    base = BaseTree(["u"], {})
    g = scenes.unit_path(4)
    tos = TreeOfSpaces(base, {"u": g}, {}, {})
    X = build_total_space(tos)
    fam = SemiContinuousFamily("u", {"u": tuple(X.fibers["u"])}, {}, 1.0, 0.0, 1.0, 0.0)
    res = mitra_retraction(X, fam)
    assert all(res.mapping[x] == x for x in X.graph.vertices)


def test_retraction_fixes_family_and_is_idempotent():
    tos = scenes.acylindrical_chain(2, fiber=4)
    X = build_total_space(tos)
    # family: left half of fiber over 0, flowed nowhere else
    g0 = X.fiber_graph(0)
    Y0 = tuple(X.fiber_vertex(0, x) for x in g0.vertices[:3])
    fam = SemiContinuousFamily(0, {0: Y0}, {}, K=3.0, D=8.0, E=3.0, lam=1.0)
    res = mitra_retraction(X, fam)
    m = res.mapping
    for y in Y0:
        assert m[y] == y
    for x in X.graph.vertices:
        assert m[m[x]] == m[x]
    assert math.isfinite(res.lipschitz)
    # adjacent images stay within the measured constant
    d = X.graph.distance_matrix()
    for p, q, w in X.graph.edges:
        assert d.d(m[p], m[q]) <= res.lipschitz * (float(w) + 1.0) + TOL


def test_retraction_refuses_unverified_boundary():
    tos = scenes.constant_bundle(2, 3)
    X = build_total_space(tos)
    Y0 = tuple(X.fibers[0])
    fam = SemiContinuousFamily(0, {0: Y0}, {}, K=2.0, D=0.5, E=2.0, lam=0.0)
    # boundary pair (whole fiber, next fiber) is not 0.5-cobounded in a product
    with pytest.raises(ValueError, match="cobounded"):
        mitra_retraction(X, fam)


def test_retraction_deterministic_across_runs():
    tos = scenes.acylindrical_chain(2, fiber=4)
    X = build_total_space(tos)
    g0 = X.fiber_graph(0)
    Y0 = tuple(X.fiber_vertex(0, x) for x in g0.vertices[:3])
    fam = SemiContinuousFamily(0, {0: Y0}, {}, K=3.0, D=8.0, E=3.0, lam=1.0)
    r1 = mitra_retraction(X, fam)
    X2 = build_total_space(tos)
    r2 = mitra_retraction(X2, SemiContinuousFamily(0, {0: Y0}, {}, 3.0, 8.0, 3.0, 1.0))
    assert r1.mapping == r2.mapping
    assert r1.lipschitz == r2.lipschitz
