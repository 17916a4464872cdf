import itertools
import math

import numpy as np
import pytest

from hyptrees import scenes
from hyptrees.combing import (
    ChainSeparationError,
    CombingParams,
    MalformedProjectionError,
    bowditch_m,
    carpet_path,
    chain_amalgam_path,
    consistency_probe,
    cut_and_replace,
    full_combing_path,
    ladder_combing,
    ladder_path,
    quasigeodesic_constant,
    small_carpet_test,
    verify_slim_combing,
)
from hyptrees.coarse import Subset, hausdorff_distance
from hyptrees.flows import build_ladder, vertical_subdivision
from hyptrees.metric_core import MetricGraph, canonical_geodesic
from hyptrees.tree_of_spaces import build_total_space

TOL = 1e-9
PARAMS = CombingParams(K=3.0, C=2.0, D=-1.0, E=3.0, R=1.5)


@pytest.fixture(scope="module")
def doubling():
    return build_total_space(scenes.doubling_bundle(3))


@pytest.fixture(scope="module")
def acyl():
    return build_total_space(scenes.acylindrical_chain(4, fiber=6))


@pytest.fixture(scope="module")
def isometric():
    return build_total_space(scenes.isometric_bundle(3, scenes.unit_path(5)))


def doubling_carpet(X, C=1.0):
    top = max(X.tos.base.vertices)
    size = 2 ** top
    alpha = [X.fiber_vertex(top, i) for i in range(size + 1)]
    L = build_ladder(X, top, alpha, K=3.0, D=-1.0, E=3.0)
    pieces = vertical_subdivision(L, C=C)
    carpets = [p for p in pieces if p.carpet is not None]
    assert carpets
    return carpets[0]


# --- carpet_path ----------------------------------------------------------

def test_carpet_path_degenerate(doubling):
    piece = doubling_carpet(doubling)
    A = piece.carpet
    x = A.ladder.fibers[A.interval[0]][0]
    p = carpet_path(A, x, x, M_K=1.0)
    assert p.start == p.end == x
    assert p.length == 0.0


def test_carpet_path_narrow_end(doubling):
    piece = doubling_carpet(doubling)
    A = piece.carpet
    w = A.interval[-1]
    fib = A.ladder.fibers[w]
    x, y = fib[0], fib[-1]
    p = carpet_path(A, x, y, M_K=1.0)
    p.validate(A.ladder.X)
    assert p.length <= max(1.0, A.end_length()) + TOL


def test_carpet_path_descends_and_returns(doubling):
    X = doubling
    piece = doubling_carpet(X)
    A = piece.carpet
    u = A.interval[0]
    fib = A.ladder.fibers[u]
    x, y = fib[0], fib[-1]
    wide_gap = X.fiber_graph(u).d(x[2], y[2])
    p = carpet_path(A, x, y, M_K=1.0)
    p.validate(X)
    depth = len(A.interval) - 1
    # path goes down, jumps at most max(C, M_K), and comes back
    assert p.length <= 2 * depth + max(1.0, A.end_length()) + 2 * depth * 1.0 + TOL
    assert p.length < wide_gap  # the descent beats the wide fiber geodesic
    kinds = [s.kind for s in p.segments]
    assert "horizontal" in kinds and "vertical" in kinds


# --- ladder_path -----------------------------------------------------------

def test_ladder_path_same_section_horizontal_only(isometric):
    X = isometric
    alpha = [X.fiber_vertex(0, i) for i in range(5)]
    L = build_ladder(X, 0, alpha, K=2.0, D=-1.0, E=2.0)
    x = L.fibers[0][2]
    t = L.thread(x)
    y = t[3]
    p = ladder_path(L, x, y, M_Kbar=2.0)
    p.validate(X)
    assert all(s.kind != "vertical" or len(s.vertices) == 1 or
               s.vertices[0] == s.vertices[-1] or True for s in p.segments)
    assert p.length == pytest.approx(3.0)  # three crossings, no vertical travel


def test_ladder_path_adjacent_type1(isometric):
    X = isometric
    alpha = [X.fiber_vertex(0, i) for i in range(5)]
    L = build_ladder(X, 0, alpha, K=2.0, D=-1.0, E=2.0)
    x, y = L.fibers[1][1], L.fibers[1][2]
    p = ladder_path(L, x, y, M_Kbar=2.0)
    assert p.provenance == "ladder-type1"
    assert p.length <= 2.0 + TOL


def test_ladder_path_type2_through_narrow_end(doubling):
    X = doubling
    top = 3
    size = 2 ** top
    alpha = [X.fiber_vertex(top, i) for i in range(size + 1)]
    L = build_ladder(X, top, alpha, K=3.0, D=-1.0, E=3.0)
    x, y = L.fibers[top][0], L.fibers[top][-1]
    p = ladder_path(L, x, y, M_Kbar=1.0)
    assert p.provenance == "ladder-type2"
    p.validate(X)
    direct = X.graph.d(x, y)
    assert p.length <= 4 * direct  # coarse sanity: no wild detour


def test_ladder_combing_multi_piece(acyl):
    X = acyl
    alpha = [X.fiber_vertex(0, i) for i in range(7)]
    L = build_ladder(X, 0, alpha, K=3.0, D=-1.0, E=3.0)
    x, y = alpha[0], alpha[-1]
    p = ladder_combing(L, x, y, C=2.0)
    p.validate(X)
    assert p.start == x and p.end == y


# --- chain_amalgam_path ----------------------------------------------------

def chain_of_grids(k=3, n=4):
    # k n-by-n grids glued corner-to-corner along a shared column
    verts = []
    edges = []
    for c in range(k):
        for i in range(n):
            for j in range(n):
                verts.append((c, i, j))
    merged = {}
    for c in range(1, k):
        for j in range(n):
            merged[(c, 0, j)] = (c - 1, n - 1, j)

    def canon(v):
        while v in merged:
            v = merged[v]
        return v

    vs = sorted({canon(v) for v in verts})
    for c in range(k):
        for i in range(n):
            for j in range(n):
                if i + 1 < n:
                    edges.append((canon((c, i, j)), canon((c, i + 1, j)), 1))
                if j + 1 < n:
                    edges.append((canon((c, i, j)), canon((c, i, j + 1)), 1))
    g = MetricGraph(vs, sorted(set((min(a, b), max(a, b), w) for a, b, w in edges)))
    pieces = []
    for c in range(k):
        pieces.append(tuple(sorted({canon((c, i, j)) for i in range(n) for j in range(n)})))
    return g, pieces


def test_chain_single_piece():
    g, pieces = chain_of_grids(2, 3)
    p = chain_amalgam_path(g, [pieces[0]], (0, 0, 0), (0, 2, 2))
    assert p.length == pytest.approx(g.d((0, 0, 0), (0, 2, 2)))


def test_chain_two_trees_through_gluing_vertex():
    # two stars glued at the center vertex
    g = MetricGraph(["c", "a1", "a2", "b1", "b2"],
                    [("c", "a1", 1), ("a1", "a2", 1), ("c", "b1", 1), ("b1", "b2", 1)])
    p = chain_amalgam_path(g, [("a2", "a1", "c"), ("c", "b1", "b2")], "a2", "b2")
    assert [v for v in p.vertices()] == ["a2", "a1", "c", "b1", "b2"]


def test_chain_three_grids_transit_near_optimal():
    g, pieces = chain_of_grids(3, 4)
    x, y = (0, 0, 0), (2, 3, 3)
    p = chain_amalgam_path(g, pieces, x, y)
    # quasigeodesic comparison against the true geodesic
    assert p.length <= 1.6 * g.d(x, y) + 4
    assert p.vertices()[0] == x and p.vertices()[-1] == y


def test_chain_separation_violated():
    # two pieces whose declared intersection does not separate them
    g = MetricGraph([0, 1, 2, 3], [(0, 1, 1), (1, 2, 1), (2, 3, 1), (0, 3, 1)])
    with pytest.raises(ChainSeparationError):
        chain_amalgam_path(g, [(0, 1), (1, 2, 3)], 0, 3)


# --- full_combing_path ------------------------------------------------------

def test_full_path_single_fiber(acyl):
    X = acyl
    x, y = X.fiber_vertex(2, 0), X.fiber_vertex(2, 5)
    p = full_combing_path(X, x, y, PARAMS)
    p.validate(X)
    assert p.start == x and p.end == y


def test_full_path_adjacent_fibers_isometric(isometric):
    X = isometric
    x, y = X.fiber_vertex(0, 2), X.fiber_vertex(1, 4)
    p = full_combing_path(X, x, y, PARAMS)
    p.validate(X)
    # one horizontal hop plus vertical travel: length = d(x, y) here
    assert p.length == pytest.approx(X.graph.d(x, y))


def test_full_path_acyl_close_to_geodesic(acyl):
    X = acyl
    d = X.graph.distance_matrix()
    worst = 0.0
    for x, y in [(X.fiber_vertex(0, 1), X.fiber_vertex(4, 5)),
                 (X.fiber_vertex(0, 6), X.fiber_vertex(3, 2)),
                 (X.fiber_vertex(1, 3), X.fiber_vertex(4, 0))]:
        p = full_combing_path(X, x, y, PARAMS)
        p.validate(X)
        geo = canonical_geodesic(X.graph, x, y)
        hd = hausdorff_distance(d, p.vertices(), geo.vertices)
        worst = max(worst, hd)
        assert p.length <= 2.0 * d.d(x, y) + 4.0
    assert worst <= 6.0  # HV description stays near true geodesics


def test_full_path_rejects_midpoint_endpoint(acyl):
    X = acyl
    mid = X.edge_fibers["e0"][0]
    with pytest.raises(ValueError):
        full_combing_path(X, mid, X.fiber_vertex(0, 0), PARAMS)


# --- verify_slim_combing ------------------------------------------------------

def geodesic_family(g):
    paths = {}
    for a, b in itertools.combinations(g.vertices, 2):
        paths[(a, b)] = canonical_geodesic(g, a, b).vertices
    return paths


def test_bowditch_m_equation():
    for h in (1.0, 2.5, 7.0):
        m = bowditch_m(h)
        assert 2 * h * (6 + math.log2(m + 2)) <= m + 1e-9
        # least root: slightly smaller m must violate
        assert 2 * h * (6 + math.log2(m * 0.98 + 2)) > m * 0.98


def test_slim_combing_tree_geodesics(acyl):
    # a tree total space: geodesic combing has D2 small and finite certificate
    tos = scenes.isometric_bundle(2, scenes.unit_path(2))
    X = build_total_space(tos)
    from hyptrees.combing import CombingPath, Segment
    paths = {}
    for a, b in itertools.combinations([v for v in X.graph.vertices if v[0] == "v"], 2):
        geo = canonical_geodesic(X.graph, a, b)
        paths[(a, b)] = CombingPath(a, b, (Segment("free", geo.vertices),),
                                    "geodesic", geo.length)
    rep = verify_slim_combing(X, paths, D0=0.5)
    assert rep.sound
    assert rep.k >= rep.measured_delta


def test_slim_combing_detects_planted_detour():
    tos = scenes.isometric_bundle(1, scenes.unit_path(6))
    X = build_total_space(tos)
    from hyptrees.combing import CombingPath, Segment
    net = [v for v in X.graph.vertices if v[0] == "v"]
    paths = {}
    for a, b in itertools.combinations(net, 2):
        geo = canonical_geodesic(X.graph, a, b)
        paths[(a, b)] = CombingPath(a, b, (Segment("free", geo.vertices),),
                                    "geodesic", geo.length)
    base = verify_slim_combing(X, paths, D0=0.5)
    # plant one adversarial detour
    a, b = X.fiber_vertex(0, 0), X.fiber_vertex(0, 2)
    detour = [X.fiber_vertex(0, 0), X.fiber_vertex(0, 1), X.fiber_vertex(1, 1),
              X.fiber_vertex(1, 5), X.fiber_vertex(0, 5), X.fiber_vertex(0, 4),
              X.fiber_vertex(0, 3), X.fiber_vertex(0, 2)]
    # make consecutive vertices adjacent: fibers are paths so fill in
    full = []
    for p, q in zip(detour, detour[1:]):
        geo = canonical_geodesic(X.graph, p, q)
        full.extend(geo.vertices[:-1])
    full.append(detour[-1])
    paths[(a, b)] = CombingPath(a, b, (Segment("free", tuple(full)),), "bad",
                                0.0)
    planted = verify_slim_combing(X, paths, D0=0.5)
    assert planted.D2 > base.D2
    assert set(planted.worst_triple) & {a, b}


# --- cut_and_replace ------------------------------------------------------------

def test_cut_and_replace_inside_path_unchanged(acyl):
    X = acyl
    S = [0, 1, 2]
    geo = canonical_geodesic(X.graph, X.fiber_vertex(0, 0), X.fiber_vertex(2, 3))
    hat, records = cut_and_replace(X, S, geo.vertices)
    assert hat == geo.vertices
    assert records == ()


def test_cut_and_replace_single_excursion():
    tos, trunk = scenes.pruned_branch_scene(trunk=2, branch=1, fiber=4)
    X = build_total_space(tos)
    S = trunk
    mid = 1  # branch hangs off trunk vertex 1
    x = X.fiber_vertex(mid, 0)
    y = X.fiber_vertex(mid, 4)
    through = [x, X.fiber_vertex("b1", 0)]
    verts = []
    for p, q in zip(through, through[1:]):
        verts.extend(canonical_geodesic(X.graph, p, q).vertices[:-1])
    verts.extend(canonical_geodesic(X.graph, X.fiber_vertex("b1", 0), y).vertices)
    hat, records = cut_and_replace(X, S, tuple(verts))
    assert len(records) == 1
    assert all(v[1] in set(S) or v[0] == "e" for v in hat)
    # idempotent
    hat2, rec2 = cut_and_replace(X, S, hat)
    assert hat2 == hat and rec2 == ()


def test_cut_and_replace_wrong_fiber_asserts(acyl):
    X = acyl
    S = [0, 1]
    fake = (X.fiber_vertex(0, 0), X.fiber_vertex(1, 6),
            X.fiber_vertex(2, 0), X.fiber_vertex(1, 0))
    # 1 -> 2 leaves X_S and the fake path re-enters at a different... same
    # fiber 1; craft exit at fiber 1 position 6 and re-entry fiber 0
    fake_bad = (X.fiber_vertex(1, 6), X.fiber_vertex(2, 0), X.fiber_vertex(2, 6),
                X.fiber_vertex(1, 6))
    hat, rec = cut_and_replace(X, S, fake_bad)
    assert len(rec) == 1  # legitimate same-fiber excursion


def test_consistency_probe_whole_base(acyl):
    X = acyl
    rep = consistency_probe(X, list(X.tos.base.vertices), [1.0], 10, seed=3)
    lam, theta = rep.table[0]
    assert theta == pytest.approx(1.0)  # S = whole base: nothing replaced


def test_consistency_probe_stability_across_sizes():
    vals = []
    for n in (3, 4, 5):
        tos, trunk = scenes.pruned_branch_scene(trunk=n, branch=2, fiber=4)
        X = build_total_space(tos)
        rep = consistency_probe(X, trunk, [2.0], 30, seed=11)
        vals.append(rep.table[0][1])
    mean = sum(vals) / len(vals)
    assert all(abs(v - mean) <= 0.25 * mean + 0.5 for v in vals)


# --- small_carpet_test ------------------------------------------------------------

def test_small_carpet_one_vertex_base():
    from hyptrees.tree_of_spaces import BaseTree, TreeOfSpaces
    base = BaseTree(["u"], {})
    tos = TreeOfSpaces(base, {"u": scenes.unit_path(6)}, {}, {})
    X = build_total_space(tos)
    alpha = [X.fiber_vertex("u", i) for i in range(6)]
    res = small_carpet_test(X, alpha, K=2.0, C=1.0, R=0)
    assert res.verdict and res.max_depth == 0


def test_small_carpet_doubling_depth(doubling):
    X = doubling
    top = 3
    alpha = [X.fiber_vertex(top, i) for i in range(9)]
    res = small_carpet_test(X, alpha, K=3.0, C=1.0, R=1)
    # length-8 segment shrinks to length 1 after 3 halvings
    assert res.max_depth == 3
    assert not res.verdict
    ok = small_carpet_test(X, alpha, K=3.0, C=1.0, R=3)
    assert ok.verdict


def test_small_carpet_short_alpha_vacuous(doubling):
    X = doubling
    alpha = [X.fiber_vertex(3, 0), X.fiber_vertex(3, 1)]
    res = small_carpet_test(X, alpha, K=3.0, C=4.0, R=0)
    assert res.verdict and res.max_depth == 0


def test_quasigeodesic_constant_geodesic_is_one():
    g = scenes.unit_path(8)
    geo = canonical_geodesic(g, 0, 7)
    assert quasigeodesic_constant(g, list(geo.vertices)) <= 8 / 8 + TOL
