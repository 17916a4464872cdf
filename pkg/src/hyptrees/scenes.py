"""Builders for the standard desk-scale scenes: bundles over intervals,
acylindrical chains, grids, free-group balls and the four-point fixture.

Scene builders return TreeOfSpaces (or plain MetricGraphs) with small,
reproducible vertex ids; randomized generators take an explicit rng.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from hyptrees.metric_core import DistanceMatrix, MetricGraph
from hyptrees.tree_of_spaces import BaseTree, TreeOfSpaces, build_total_space


def unit_path(n: int, prefix: str = "") -> MetricGraph:
    vs = [f"{prefix}{i}" if prefix else i for i in range(n)]
    return MetricGraph(vs, [(vs[i], vs[i + 1], 1) for i in range(n - 1)],
                       name=f"path{n}")


def unit_cycle(n: int) -> MetricGraph:
    return MetricGraph(list(range(n)), [(i, (i + 1) % n, 1) for i in range(n)],
                       name=f"cycle{n}")


def grid_graph(n: int, m: int = 0) -> MetricGraph:
    m = m or n
    verts = [(i, j) for i in range(n) for j in range(m)]
    edges = []
    for i in range(n):
        for j in range(m):
            if i + 1 < n:
                edges.append(((i, j), (i + 1, j), 1))
            if j + 1 < m:
                edges.append(((i, j), (i, j + 1), 1))
    return MetricGraph(verts, edges, name=f"grid{n}x{m}")


def random_tree(n: int, rng: np.random.Generator, weighted: bool = True) -> MetricGraph:
    edges = []
    for i in range(1, n):
        p = int(rng.integers(0, i))
        w = float(rng.uniform(0.5, 2.0)) if weighted else 1
        edges.append((p, i, w))
    return MetricGraph(list(range(n)), edges, name=f"rtree{n}")


def random_connected_graph(n: int, extra: int, rng: np.random.Generator) -> MetricGraph:
    g = random_tree(n, rng, weighted=False)
    edges = list(g.edges)
    have = {(min(u, v), max(u, v)) for u, v, _ in edges}
    tries = 0
    while extra > 0 and tries < 60 * n:
        u, v = (int(x) for x in rng.integers(0, n, 2))
        tries += 1
        if u == v or (min(u, v), max(u, v)) in have:
            continue
        edges.append((u, v, 1))
        have.add((min(u, v), max(u, v)))
        extra -= 1
    return MetricGraph(list(range(n)), edges, name=f"rgraph{n}")


def free_group_ball(radius: int, rank: int = 2) -> MetricGraph:
    """Cayley ball of the free group on `rank` letters (a tree)."""
    letters = "ab"[:rank] + "AB"[:rank]
    gens = list("ab"[:rank]) + list("AB"[:rank])

    def inv(c):
        return c.swapcase()

    verts = [""]
    edges = []
    frontier = [""]
    for _ in range(radius):
        nxt = []
        for w in frontier:
            for c in gens:
                if w and w[-1] == inv(c):
                    continue
                u = w + c
                verts.append(u)
                edges.append((w, u, 1))
                nxt.append(u)
        frontier = nxt
    return MetricGraph(verts, edges, name=f"F{rank}ball{radius}")


def four_point_example(n: int) -> DistanceMatrix:
    """The non-hyperbolic four-point configuration o, p, q, z at scale n.

    Distances: d(o,p)=d(o,q)=sqrt(2) n, d(o,z)=2 sqrt(2) n, d(p,q)=2n,
    d(q,z)=sqrt(2) n and d(p,z)=sqrt(2) n (p degenerate on the o--z side),
    the unique 4-point metric realizing the products
    (p.q)_o=(sqrt(2)-1) n, (p.z)_o=(q.z)_o=sqrt(2) n, so the four-point
    defect of the quadruple is exactly n.
    """
    r2 = math.sqrt(2.0)
    pts = ("o", "p", "q", "z")
    d = {("o", "p"): r2 * n, ("o", "q"): r2 * n, ("o", "z"): 2 * r2 * n,
         ("p", "q"): 2.0 * n, ("q", "z"): r2 * n, ("p", "z"): r2 * n}
    arr = np.zeros((4, 4))
    for i, a in enumerate(pts):
        for j, b in enumerate(pts):
            if i != j:
                arr[i, j] = d.get((a, b)) or d[(b, a)]
    return DistanceMatrix(pts, arr)


def interval_base(n_edges: int) -> BaseTree:
    return BaseTree(list(range(n_edges + 1)),
                    {f"e{i}": (i, i + 1) for i in range(n_edges)})


def doubling_bundle(levels: int) -> TreeOfSpaces:
    """Bundle over an interval whose fiber paths double in length per step.

    Fiber over base vertex i is a unit path with 2^i edges; the edge graph
    between i and i+1 is the fiber of i, included identically on the left
    and by k -> 2k (path subdivision) on the right.  Pairs of sections
    through the endpoints flare exponentially with rate 2.
    """
    base = interval_base(levels)
    vgraphs = {i: unit_path(2 ** i + 1) for i in range(levels + 1)}
    egraphs = {}
    incidence = {}
    for i in range(levels):
        eid = f"e{i}"
        egraphs[eid] = unit_path(2 ** i + 1, prefix="m")
        incidence[eid] = {
            i: {f"m{k}": k for k in range(2 ** i + 1)},
            i + 1: {f"m{k}": 2 * k for k in range(2 ** i + 1)},
        }
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def constant_bundle(length: int, fiber: int) -> TreeOfSpaces:
    """Product of an interval base with a fixed unit-path fiber; flaring
    fails here (parallel sections keep constant separation)."""
    base = interval_base(length)
    vgraphs = {i: unit_path(fiber + 1) for i in range(length + 1)}
    egraphs = {}
    incidence = {}
    for i in range(length):
        eid = f"e{i}"
        egraphs[eid] = unit_path(fiber + 1, prefix="m")
        incidence[eid] = {
            i: {f"m{k}": k for k in range(fiber + 1)},
            i + 1: {f"m{k}": k for k in range(fiber + 1)},
        }
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def acylindrical_chain(n_edges: int, fiber: int = 8) -> TreeOfSpaces:
    """Chain whose edge graphs are single points glued to far-apart gates.

    The fiber over every base vertex is a unit path of `fiber` edges; the
    edge between i and i+1 attaches at the right end of fiber i and the
    left end of fiber i+1, so sections crossing an edge pass near the
    gates and flows die after one step.
    """
    base = interval_base(n_edges)
    vgraphs = {i: unit_path(fiber + 1) for i in range(n_edges + 1)}
    egraphs = {}
    incidence = {}
    for i in range(n_edges):
        eid = f"e{i}"
        egraphs[eid] = MetricGraph(["p"], [], name="point")
        incidence[eid] = {i: {"p": fiber}, i + 1: {"p": 0}}
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def isometric_bundle(n_edges: int, fiber_graph: MetricGraph) -> TreeOfSpaces:
    """Bundle over an interval with all incidence maps the identity."""
    base = interval_base(n_edges)
    vgraphs = {i: fiber_graph for i in range(n_edges + 1)}
    egraphs = {}
    incidence = {}
    ident = {x: x for x in fiber_graph.vertices}
    for i in range(n_edges):
        eid = f"e{i}"
        egraphs[eid] = fiber_graph
        incidence[eid] = {i: dict(ident), i + 1: dict(ident)}
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def collapsing_bundle(levels: int, fiber: int = 4) -> TreeOfSpaces:
    """Bundle whose incidence maps halve the fiber: fibers shrink moving
    away from vertex 0 and collapse to points past log2(fiber) steps."""
    base = interval_base(levels)
    sizes = [fiber // (2 ** i) for i in range(levels + 1)]
    vgraphs = {i: unit_path(sizes[i] + 1) for i in range(levels + 1)}
    egraphs = {}
    incidence = {}
    for i in range(levels):
        eid = f"e{i}"
        small = sizes[i + 1]
        egraphs[eid] = unit_path(small + 1, prefix="m")
        incidence[eid] = {
            i: {f"m{k}": min(2 * k, sizes[i]) for k in range(small + 1)},
            i + 1: {f"m{k}": k for k in range(small + 1)},
        }
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def pruned_branch_scene(trunk: int = 3, branch: int = 3, fiber: int = 6):
    """Acylindrical trunk with a doubling branch hanging off its middle;
    restriction to the trunk is the cut-and-replace test bed.

    Returns (TreeOfSpaces, trunk vertex list).
    """
    trunk_vs = list(range(trunk + 1))
    branch_vs = [f"b{i}" for i in range(1, branch + 1)]
    vertices = trunk_vs + branch_vs
    edges = {f"e{i}": (i, i + 1) for i in range(trunk)}
    mid = trunk // 2
    prev = mid
    for i, b in enumerate(branch_vs):
        edges[f"be{i}"] = (prev, b)
        prev = b
    base = BaseTree(vertices, edges)
    vgraphs = {v: unit_path(fiber + 1) for v in trunk_vs}
    size = fiber
    for b in branch_vs:
        size *= 2
        vgraphs[b] = unit_path(size + 1)
    egraphs = {}
    incidence = {}
    for i in range(trunk):
        eid = f"e{i}"
        egraphs[eid] = MetricGraph(["p"], [], name="point")
        incidence[eid] = {i: {"p": fiber}, i + 1: {"p": 0}}
    size = fiber
    prev = mid
    for i, b in enumerate(branch_vs):
        eid = f"be{i}"
        egraphs[eid] = unit_path(size + 1, prefix="m")
        incidence[eid] = {prev: {f"m{k}": k for k in range(size + 1)},
                          b: {f"m{k}": 2 * k for k in range(size + 1)}}
        prev = b
        size *= 2
    return TreeOfSpaces(base, vgraphs, egraphs, incidence), trunk_vs


def tripod_scene(fiber: int = 5, legs: int = 3) -> TreeOfSpaces:
    """Tripod base with point edge graphs: the flow of a far seed dies on
    other branches when R is below the gate separation."""
    vertices = ["c"] + [f"l{i}" for i in range(legs)]
    edges = {f"e{i}": ("c", f"l{i}") for i in range(legs)}
    base = BaseTree(vertices, edges)
    vgraphs = {v: unit_path(fiber + 1) for v in vertices}
    egraphs = {}
    incidence = {}
    for i in range(legs):
        eid = f"e{i}"
        egraphs[eid] = MetricGraph(["p"], [], name="point")
        incidence[eid] = {"c": {"p": min(i * (fiber // max(1, legs - 1)), fiber)},
                          f"l{i}": {"p": 0}}
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def f2_ball_scene(radius: int = 3, m: int = 3) -> TreeOfSpaces:
    """Two-vertex scene whose fibers are free-group balls and whose
    incidence is induced by the substitution a -> ab, b -> a."""
    ball_small = free_group_ball(radius - 1)
    ball_big = free_group_ball(radius + 1)

    def sub(word):
        out = []
        for c in word:
            out.extend({"a": "ab", "b": "a", "A": "BA", "B": "A"}[c])
        # free reduction
        red = []
        for c in out:
            if red and red[-1] == c.swapcase():
                red.pop()
            else:
                red.append(c)
        return "".join(red)

    base = BaseTree([0, 1], {"e0": (0, 1)})
    vgraphs = {0: ball_big, 1: ball_big}
    egraphs = {"e0": ball_small}
    fmap = {}
    for w in ball_small.vertices:
        img = sub(w)
        fmap[w] = img if img in ball_big.index else img[:radius + 1]
    incidence = {"e0": {0: {w: w for w in ball_small.vertices}, 1: fmap}}
    return TreeOfSpaces(base, vgraphs, egraphs, incidence)


def coset_segments(ball: MetricGraph, letter: str = "a", min_len: int = 2):
    """Maximal <letter>-coset segments inside a free-group ball, as vertex
    lists; peripherals for electrification tests."""
    segs = []
    seen = set()
    for v in ball.vertices:
        if v in seen:
            continue
        seg = [v]
        cur = v
        while True:
            nxt = cur + letter
            red = _reduce_word(nxt)
            if red in ball.index:
                seg.append(red)
                cur = red
            else:
                break
        cur = v
        while True:
            nxt = cur + letter.swapcase()
            red = _reduce_word(nxt)
            if red in ball.index:
                seg.insert(0, red)
                cur = red
            else:
                break
        if len(seg) >= min_len and not (set(seg) & seen):
            seen.update(seg)
            segs.append(tuple(seg))
    return segs


def _reduce_word(w: str) -> str:
    red = []
    for c in w:
        if red and red[-1] == c.swapcase():
            red.pop()
        else:
            red.append(c)
    return "".join(red)
