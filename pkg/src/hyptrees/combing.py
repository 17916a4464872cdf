"""Hierarchical combing paths (carpets -> ladders -> chains -> full tree),
slim-combing certification, cut-and-replace, consistency probing and the
small-carpet vertical-quasigeodesic test.

Combing paths are tagged concatenations of vertical segments (fiber
geodesics) and horizontal segments (single base-edge crossings on recorded
sections); every construction is deterministic under id-order tie-breaks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from hyptrees.coarse import Subset, nearest_point_projection
from hyptrees.flows import (
    Carpet,
    Ladder,
    SubdivisionPiece,
    build_ladder,
    horizontal_subdivision,
    vertical_subdivision,
)
from hyptrees.metric_core import (
    TOL,
    MetricGraph,
    canonical_geodesic,
    delta_hyperbolicity,
    id_key,
    path_length,
    sample_quasigeodesic,
)
from hyptrees.tree_of_spaces import TotalSpace


@dataclass(frozen=True)
class Segment:
    kind: str                  # vertical | horizontal | free
    vertices: tuple
    where: tuple = ()          # ("v", base) / ("e", eid) / ("sub", name)


@dataclass
class CombingPath:
    """Alternating concatenation of tagged segments between two vertices."""

    start: tuple
    end: tuple
    segments: tuple
    provenance: str
    length: float
    audit: dict = field(default_factory=dict)

    def vertices(self) -> tuple:
        out = []
        for seg in self.segments:
            for v in seg.vertices:
                if not out or out[-1] != v:
                    out.append(v)
        return tuple(out) if out else (self.start,)

    def validate(self, X: TotalSpace):
        vs = self.vertices()
        assert vs[0] == self.start and vs[-1] == self.end
        total = path_length(X.graph, list(vs))
        assert abs(total - self.length) <= 1e-6, (total, self.length)
        for seg in self.segments:
            if seg.kind == "vertical":
                assert len({x[1] for x in seg.vertices}) <= 1
        return True


class _PathBuilder:
    def __init__(self, X: TotalSpace, start):
        self.X = X
        self.parts = []
        self.cur = start
        self.start = start

    def vertical(self, target):
        """Fiber geodesic from the current point to target (same fiber)."""
        if target == self.cur:
            return
        v = self.cur[1]
        assert target[1] == v and target[0] == self.cur[0] == "v"
        g = self.X.fiber_graph(v)
        geo = canonical_geodesic(g, self.cur[2], target[2])
        verts = tuple(self.X.fiber_vertex(v, q) for q in geo.vertices)
        self.parts.append(Segment("vertical", verts, ("v", v)))
        self.cur = target

    def cross(self, eid, m):
        """Unit crossing of one base edge through midpoint copy (eid, m)."""
        tos = self.X.tos
        u, w = tos.base.edges[eid]
        v = self.cur[1]
        other = w if v == u else u
        a = self.X.fiber_vertex(v, tos.incidence[eid][v][m])
        b = self.X.fiber_vertex(other, tos.incidence[eid][other][m])
        self.vertical(a)
        self.parts.append(Segment("horizontal", (a, ("e", eid, m), b), ("e", eid)))
        self.cur = b

    def gate_cross(self, target_base):
        """Cross toward an adjacent base vertex through the id-least nearest
        gate: the canonical one-edge horizontal move."""
        v = self.cur[1]
        eid = self.X.tos.base.edge_between(v, target_base)
        g = self.X.fiber_graph(v)
        dm = g.distance_matrix()
        fmap = self.X.tos.incidence[eid][v]
        best = min(((dm.d(self.cur[2], fmap[m]), id_key(m), m)
                    for m in self.X.tos.edge_graphs[eid].vertices))
        self.cross(eid, best[2])

    def splice(self, other: "CombingPath", reverse: bool = False):
        segs = list(other.segments)
        if reverse:
            segs = [Segment(s.kind, tuple(reversed(s.vertices)), s.where)
                    for s in reversed(segs)]
            expect, final = other.end, other.start
        else:
            expect, final = other.start, other.end
        if expect != self.cur:
            self.vertical(expect)
        self.parts.extend(segs)
        self.cur = final

    def free(self, vertices, name=""):
        if len(vertices) >= 2:
            self.parts.append(Segment("free", tuple(vertices), ("sub", name)))
        if vertices:
            self.cur = vertices[-1]

    def done(self, provenance: str, audit=None) -> CombingPath:
        segs = tuple(s for s in self.parts if len(s.vertices) >= 2)
        vs = []
        for s in segs:
            for v in s.vertices:
                if not vs or vs[-1] != v:
                    vs.append(v)
        if not vs:
            vs = [self.start]
        total = path_length(self.X.graph, vs)
        return CombingPath(self.start, self.cur, segs, provenance, total,
                           audit or {})


def _thread_path(builder: _PathBuilder, L: Ladder, thread: dict, frm, to):
    """Walk a ladder thread between two base vertices, emitting vertical
    corrections and horizontal crossings."""
    X = builder.X
    base = X.tos.base
    path = base.path(frm, to)
    builder.vertical(thread[frm])
    for a, b in zip(path, path[1:]):
        builder.vertical(thread[a])
        builder.gate_cross(b)
        builder.vertical(thread[b])


def carpet_path(A: Carpet, x, y, M_K: float) -> CombingPath:
    """Descend the section through x to the deepest common vertex where the
    two sections are M_K-close (or the narrow end), jump, and come back."""
    L = A.ladder
    X = L.X
    if not (L.contains(x) and L.contains(y)):
        raise ValueError("points must lie in the carpet")
    tx = L.thread(x)
    ty = L.thread(y)
    interval = list(A.interval)            # ordered from center u to the end w
    common = [b for b in interval if b in tx and b in ty]
    px, py = x[1], y[1]
    # supremum vertex: the first (least descent) common vertex at or beyond
    # both base positions where the two sections are M_K-close
    chosen = None
    for b in common:
        at_or_past = True
        if px in interval:
            at_or_past = at_or_past and interval.index(b) >= interval.index(px)
        if py in interval:
            at_or_past = at_or_past and interval.index(b) >= interval.index(py)
        g = X.fiber_graph(b)
        if at_or_past and g.d(tx[b][2], ty[b][2]) <= M_K + TOL:
            chosen = b
            break
    if chosen is None:
        chosen = common[-1] if common else interval[-1]
    builder = _PathBuilder(X, x)
    _thread_path(builder, L, tx, px, chosen)
    builder.vertical(ty[chosen])
    back = _PathBuilder(X, ty[chosen])
    _thread_path(back, L, ty, chosen, py)
    bp = back.done("carpet")
    builder.splice(bp)
    builder.vertical(y)
    return builder.done("carpet", {"t_xy": chosen})


def ladder_path(L: Ladder, x, y, *, M_Kbar: float,
                carpet: Optional[Carpet] = None) -> CombingPath:
    """Combing path in a carpeted ladder: type 1 when the two threads come
    M_Kbar-close in a common fiber, else type 2 through the carpet."""
    X = L.X
    tx = L.thread(x)
    ty = L.thread(y)
    base = X.tos.base
    common = sorted(set(tx) & set(ty), key=id_key)
    close = []
    for b in common:
        g = X.fiber_graph(b)
        if g.d(tx[b][2], ty[b][2]) <= M_Kbar + TOL:
            close.append(b)
    if close:
        # type 1: meet at the closest such vertex to the pair
        def span(b):
            return (len(base.path(b, x[1])) + len(base.path(b, y[1])), id_key(b))
        t = min(close, key=span)
        builder = _PathBuilder(X, x)
        _thread_path(builder, L, tx, x[1], t)
        builder.vertical(ty[t])
        back = _PathBuilder(X, ty[t])
        _thread_path(back, L, ty, t, y[1])
        builder.splice(back.done("ladder-type1"))
        builder.vertical(y)
        return builder.done("ladder-type1", {"t_xy": t})
    if carpet is None:
        pieces = vertical_subdivision(L, C=M_Kbar)
        carpets = [p.carpet for p in pieces if p.carpet is not None]
        if not carpets:
            raise ValueError("ladder is not carpeted and threads never meet")
        carpet = carpets[0]

    def to_carpet(thread, p):
        cand = None
        for b in carpet.interval:
            if b not in thread or b not in carpet.ladder.fibers:
                continue
            g = X.fiber_graph(b)
            fib = carpet.ladder.fibers[b]
            dmin = min(g.d(thread[b][2], q[2]) for q in fib)
            if dmin <= M_Kbar + TOL:
                cand = b          # keep the deepest qualifying vertex
        if cand is None:
            cand = carpet.interval[0]
        g = X.fiber_graph(cand)
        fib = carpet.ladder.fibers[cand]
        best = min(((g.d(thread[cand][2], q[2]), id_key(q), q) for q in fib))
        return cand, best[2]

    sx, xbar = to_carpet(tx, x)
    sy, ybar = to_carpet(ty, y)
    builder = _PathBuilder(X, x)
    _thread_path(builder, L, tx, x[1], sx)
    builder.vertical(xbar)
    mid = carpet_path(carpet, xbar, ybar, M_Kbar)
    builder.splice(mid)
    back = _PathBuilder(X, ybar)
    back.vertical(ty[sy])
    _thread_path(back, L, ty, sy, y[1])
    builder.splice(back.done("x"))
    builder.vertical(y)
    return builder.done("ladder-type2", {"s_x": sx, "s_y": sy})


def ladder_combing(L: Ladder, x, y, C: float) -> CombingPath:
    """Combing of a general ladder: vertical subdivision into carpeted
    pieces, chained through the marked near-pairs."""
    pieces = vertical_subdivision(L, C)
    alpha = L.alpha()

    def locate(p):
        v, i = L.position(p)
        t = L.thread(p)
        a0 = t.get(L.center, alpha[0])
        pos = alpha.index(a0)
        for idx, piece in enumerate(pieces):
            lo, hi = piece.bounds
            if lo <= pos <= hi:
                return idx
        return len(pieces) - 1

    ix, iy = locate(x), locate(y)
    if ix > iy:
        return _reverse_path(ladder_combing(L, y, x, C), L.X)
    if ix == iy:
        piece = pieces[ix]
        return ladder_path(piece.ladder, x, y, M_Kbar=C,
                           carpet=piece.carpet)
    builder = _PathBuilder(L.X, x)
    cur = x
    for k in range(ix, iy):
        piece = pieces[k]
        exit_pt = piece.marked[1] if piece.marked else piece.ladder.alpha()[-1]
        leg = ladder_path(piece.ladder, cur, exit_pt, M_Kbar=C, carpet=piece.carpet)
        builder.splice(leg)
        cur = exit_pt
    last = pieces[iy]
    leg = ladder_path(last.ladder, cur, y, M_Kbar=C, carpet=last.carpet)
    builder.splice(leg)
    out = builder.done("ladder", {"pieces": len(pieces), "route": (ix, iy)})
    return out


def _reverse_path(p: CombingPath, X: TotalSpace) -> CombingPath:
    segs = tuple(Segment(s.kind, tuple(reversed(s.vertices)), s.where)
                 for s in reversed(p.segments))
    return CombingPath(p.end, p.start, segs, p.provenance, p.length, p.audit)


class ChainSeparationError(ValueError):
    def __init__(self, i, witness):
        self.index = i
        self.witness = witness
        super().__init__(f"pieces {i} and {i+1} are bypassed: {witness}")


def chain_amalgam_path(host: MetricGraph, pieces: list, x, y, *,
                       C_slack: float = 0.0) -> CombingPath:
    """Alternating path through a chain of subsets with separating
    intersections, routed through near-optimal transit points."""
    subs = [set(p.vertices if isinstance(p, Subset) else p) for p in pieces]
    seps = []
    for i in range(len(subs) - 1):
        sep = subs[i] & subs[i + 1]
        if not sep:
            raise ChainSeparationError(i, "empty intersection")
        seps.append(sep)
        inside = subs[i] | subs[i + 1]
        reach = {v for v in subs[i] - sep}
        stack = list(reach)
        while stack:
            a = stack.pop()
            for b, _ in host.neighbors(a):
                if b in inside and b not in sep and b not in reach:
                    if b in subs[i + 1]:
                        raise ChainSeparationError(i, (a, b))
                    reach.add(b)
                    stack.append(b)

    graphs = [host.induced(sorted(s, key=id_key)) for s in subs]

    def locate(p):
        for i, s in enumerate(subs):
            if p in s:
                return i
        raise ValueError(f"{p} lies in no piece")

    def piece_geo(i, a, b):
        geo = canonical_geodesic(graphs[i], a, b)
        return Segment("free", tuple(geo.vertices), ("sub", f"Q{i}"))

    ix, iy = locate(x), locate(y)
    if ix > iy:
        rev = chain_amalgam_path(host, pieces, y, x, C_slack=C_slack)
        segs = tuple(Segment(s.kind, tuple(reversed(s.vertices)), s.where)
                     for s in reversed(rev.segments))
        return CombingPath(x, y, segs, rev.provenance, rev.length, rev.audit)
    if ix == iy:
        seg = piece_geo(ix, x, y)
        return CombingPath(x, y, (seg,), "chain",
                           path_length(host, list(seg.vertices)), {})
    # transit pairs (x_j^-, x_j^+) inside interior pieces: mutual projections
    # of the two separators, near-optimal by coboundedness
    transit = {}
    for j in range(ix + 1, iy):
        g = graphs[j]
        left = tuple(sorted(seps[j - 1] & set(g.vertices), key=id_key))
        right = tuple(sorted(seps[j] & set(g.vertices), key=id_key))
        pl = nearest_point_projection(g, Subset(g, left)).map
        pr = nearest_point_projection(g, Subset(g, right)).map
        transit[j] = (min((pl(r) for r in right), key=id_key),
                      min((pr(l) for l in left), key=id_key))
    gx = graphs[ix]
    sep0 = tuple(sorted(seps[ix] & set(gx.vertices), key=id_key))
    xbar = nearest_point_projection(gx, Subset(gx, sep0)).map(x)
    gy = graphs[iy]
    sep1 = tuple(sorted(seps[iy - 1] & set(gy.vertices), key=id_key))
    ybar = nearest_point_projection(gy, Subset(gy, sep1)).map(y)
    segs = [piece_geo(ix, x, xbar)]
    cur = xbar
    for j in range(ix + 1, iy):
        xm, xp = transit[j]
        segs.append(piece_geo(j, cur, xm))
        segs.append(piece_geo(j, xm, xp))
        cur = xp
    segs.append(piece_geo(iy, cur, ybar))
    segs.append(piece_geo(iy, ybar, y))
    vs = []
    for s in segs:
        for v in s.vertices:
            if not vs or vs[-1] != v:
                vs.append(v)
    return CombingPath(x, y, tuple(s for s in segs if len(s.vertices) >= 2),
                       "chain", path_length(host, vs), {"transit": transit})


@dataclass(frozen=True)
class CombingParams:
    """User-supplied desk-scale parameters for the full hierarchy."""

    K: float = 3.0
    C: float = 2.0
    D: float = -1.0
    E: float = 3.0
    R: float = 1.5

    def coerce(self):
        return self


def full_combing_path(X: TotalSpace, x, y, params: CombingParams) -> CombingPath:
    """Staged combing between fiber vertices: within-fiber requests run the
    ladder hierarchy; cross-fiber requests subdivide the base interval by
    flow reachability, transport horizontally through id-least gates, and
    finish with a within-fiber stage.  Every stage's intermediate objects
    are attached for audit.
    """
    if x[0] != "v" or y[0] != "v":
        raise ValueError("combing endpoints must be fiber vertices")
    audit = {}
    if x == y:
        return CombingPath(x, y, (), "full", 0.0, audit)
    if x[1] == y[1]:
        v = x[1]
        g = X.fiber_graph(v)
        geo = canonical_geodesic(g, x[2], y[2])
        alpha = [X.fiber_vertex(v, q) for q in geo.vertices]
        diag = None
        try:
            L = build_ladder(X, v, alpha, params.K, params.D, params.E, verify=False)
            audit["ladder"] = L
            inner = ladder_combing(L, x, y, params.C)
            audit.update(inner.audit)
            return CombingPath(x, y, inner.segments, "full", inner.length, audit)
        except ValueError as exc:
            diag = str(exc)
        # partial result: the fiber geodesic itself, with the diagnostic;
        # never a silent fallback
        audit["diagnostic"] = diag
        seg = Segment("vertical", tuple(alpha), ("v", v))
        return CombingPath(x, y, (seg,), "full-partial",
                           path_length(X.graph, list(alpha)), audit)
    J = X.tos.base.path(x[1], y[1])
    hs = horizontal_subdivision(X, J, params.R)
    audit["horizontal_subdivision"] = hs
    builder = _PathBuilder(X, x)
    for a, b in zip(J, J[1:]):
        builder.gate_cross(b)
    z = builder.cur
    transported = builder.done("full-transport")
    audit["transport_end"] = z
    if z == y:
        return CombingPath(x, y, transported.segments, "full",
                           transported.length, audit)
    tail = full_combing_path(X, z, y, params)
    audit["fiber_stage"] = tail.audit
    segs = transported.segments + tail.segments
    vs = []
    for s in segs:
        for v in s.vertices:
            if not vs or vs[-1] != v:
                vs.append(v)
    return CombingPath(x, y, segs, "full", path_length(X.graph, vs), audit)


@dataclass(frozen=True)
class SlimnessReport:
    D0: float
    D1: float
    D2: float
    h: float
    m: float
    k: float                    # certified hyperbolicity constant
    measured_delta: float
    sound: bool                 # k >= measured slim constant of X
    exhaustive: bool
    seed: Optional[int]
    worst_triple: tuple

    def __post_init__(self):
        assert 2 * self.h * (6 + math.log2(self.m + 2)) <= self.m + 1e-9


def bowditch_m(h: float) -> float:
    """Least positive m with 2h(6 + log2(m+2)) <= m, by bisection."""
    if h <= 0:
        return 0.0

    def f(m):
        return m - 2 * h * (6 + math.log2(m + 2))

    hi = max(4 * h, 1.0)
    while f(hi) < 0:
        hi *= 2
    lo = 0.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if f(mid) >= 0:
            hi = mid
        else:
            lo = mid
    return hi


class MissingPairError(ValueError):
    pass


def verify_slim_combing(X: TotalSpace, paths: dict, D0: float, *,
                        triple_cap: int = 40, seed: int = 0,
                        samples: int = 4000) -> SlimnessReport:
    """Certify hyperbolicity from a combing family over a D0-net.

    paths maps unordered net pairs to combing paths.  Exhaustive triples up
    to the cap, stratified random triples with a recorded seed above it.
    """
    net = sorted({p for pair in paths for p in pair}, key=id_key)
    d = X.graph.distance_matrix()
    for v in X.graph.vertices:
        if min(d.d(v, p) for p in net) > D0 + TOL:
            raise ValueError(f"net is not a {D0}-net: {v} is too far")

    def get(a, b):
        if (a, b) in paths:
            return paths[(a, b)].vertices()
        if (b, a) in paths:
            return tuple(reversed(paths[(b, a)].vertices()))
        if a == b:
            return (a,)
        raise MissingPairError(f"no combing path for {(a, b)}")

    idx = {v: X.graph.index[v] for v in X.graph.vertices}
    D1 = 0.0
    for i, a in enumerate(net):
        for b in net[i:]:
            if d.d(a, b) <= 1 + 2 * D0 + TOL:
                vs = get(a, b)
                D1 = max(D1, path_length(X.graph, list(vs)) if len(vs) > 1 else 0.0)

    def slimness(a, b, c):
        sa = [idx[v] for v in get(a, b)]
        sb = [idx[v] for v in get(b, c)]
        sc = [idx[v] for v in get(c, a)]
        arr = d.array
        worst = 0.0
        for side, o1, o2 in ((sa, sb, sc), (sb, sc, sa), (sc, sa, sb)):
            other = sorted(set(o1) | set(o2))
            gap = arr[np.ix_(side, other)].min(axis=1).max()
            worst = max(worst, float(gap))
        return worst

    import itertools as _it
    D2 = 0.0
    worst_triple = ()
    exhaustive = len(net) <= triple_cap
    if exhaustive:
        triples = _it.combinations(net, 3)
    else:
        rng = np.random.default_rng(seed)
        arrn = np.array(net, dtype=object)
        triples = []
        for _ in range(samples):
            picks = rng.choice(len(net), 3, replace=False)
            triples.append(tuple(arrn[p] for p in sorted(picks)))
    for tri in triples:
        s = slimness(*tri)
        if s > D2:
            D2 = s
            worst_triple = tri
    h = max(D1 + 1.0, 2.0 + D0 + D2)
    m = bowditch_m(h)
    k = math.ceil((3 * m - 10 * h) / 2)
    measured = delta_hyperbolicity(X.graph, "slim_intervals").value
    return SlimnessReport(D0, D1, D2, h, m, float(k), measured,
                          k >= measured - TOL, exhaustive,
                          None if exhaustive else seed, worst_triple)


class MalformedProjectionError(AssertionError):
    pass


def cut_and_replace(X: TotalSpace, S: Iterable, c) -> tuple:
    """Replace maximal excursions of a path out of the subtree space by
    fiber geodesics at the exit fiber; returns (new vertex path, excursion
    records)."""
    S = set(S)
    view = X.subspace(sorted(S, key=id_key))
    inside = set(view.graph.vertices)
    verts = list(c.vertices() if isinstance(c, CombingPath) else c)
    if verts[0] not in inside or verts[-1] not in inside:
        raise ValueError("endpoints must lie in the subtree space")
    out = []
    records = []
    i = 0
    n = len(verts)
    while i < n:
        v = verts[i]
        if v in inside:
            out.append(v)
            i += 1
            continue
        j = i
        while j < n and verts[j] not in inside:
            j += 1
        exit_v = out[-1]
        reentry = verts[j]
        if exit_v[0] != "v" or reentry[0] != "v" or exit_v[1] != reentry[1]:
            raise MalformedProjectionError(
                f"excursion exits at {exit_v} and re-enters at {reentry}: "
                "tree separation violated (malformed projection)")
        g = X.fiber_graph(exit_v[1])
        geo = canonical_geodesic(g, exit_v[2], reentry[2])
        repl = [X.fiber_vertex(exit_v[1], q) for q in geo.vertices]
        records.append((exit_v, reentry, j - i))
        out.extend(repl[1:])
        i = j + 1
    dedup = [out[0]]
    for v in out[1:]:
        if v != dedup[-1]:
            dedup.append(v)
    return tuple(dedup), tuple(records)


def quasigeodesic_constant(g: MetricGraph, verts) -> float:
    """Least k with arclength(i, j) <= k (d(c_i, c_j) + 1) along the path."""
    dm = g.distance_matrix()
    pos = [0.0]
    for a, b in zip(verts, verts[1:]):
        pos.append(pos[-1] + min(w for x, w in g.neighbors(a) if x == b))
    k = 1.0
    for i in range(len(verts)):
        for j in range(i + 1, len(verts)):
            k = max(k, (pos[j] - pos[i]) / (dm.d(verts[i], verts[j]) + 1.0))
    return k


@dataclass(frozen=True)
class ConsistencyReport:
    table: tuple                # (Lambda, theta_hat)
    worst: tuple                # (Lambda, endpoints, path) achieving theta_hat
    samples: int
    seed: int
    note: str = ("desk-scale tables do not certify the asymptotic "
                 "consistency function; they measure these samples only")


def consistency_probe(X: TotalSpace, S: Iterable, lambdas: Iterable, samples: int,
                      seed: int) -> ConsistencyReport:
    """Sampled consistency table: cut-and-replace constants of random
    quasigeodesics of X with endpoints in the subtree space."""
    rng = np.random.default_rng(seed)
    S = sorted(set(S), key=id_key)
    view = X.subspace(S)
    fiber_pts = [v for v in view.graph.vertices if v[0] == "v"]
    table = []
    worst = ()
    worst_val = -1.0
    for lam in lambdas:
        theta = 1.0
        for _ in range(samples):
            a, b = (fiber_pts[int(rng.integers(len(fiber_pts)))] for _ in range(2))
            qg = sample_quasigeodesic(X.graph, a, b, lam, rng)
            hat, _ = cut_and_replace(X, S, qg)
            k = quasigeodesic_constant(view.graph, hat)
            if k > theta:
                theta = k
                if k > worst_val:
                    worst_val = k
                    worst = (lam, (a, b), hat)
        table.append((lam, theta))
    return ConsistencyReport(tuple(table), worst, samples, seed)


@dataclass(frozen=True)
class SmallCarpetResult:
    verdict: bool
    max_depth: int
    R: float
    witness: tuple              # (subsegment bounds, branch end) of max depth
    partial: bool = False


def small_carpet_test(X: TotalSpace, alpha, K: float, C: float, R: float, *,
                      budget: int = 2000) -> SmallCarpetResult:
    """Search subsegments of a fiber geodesic for narrow carpets deeper than
    R: the depth is the base distance until the transported segment first
    shrinks to length <= C."""
    alpha = list(alpha)
    u = alpha[0][1]
    base = X.tos.base
    g_u = X.fiber_graph(u)
    best = 0
    witness = ()
    partial = False
    tried = 0
    n = len(alpha)
    for i in range(n):
        for j in range(n - 1, i, -1):
            seg = alpha[i:j + 1]
            if g_u.d(seg[0][2], seg[-1][2]) <= C:
                continue
            tried += 1
            if tried > budget:
                partial = True
                break
            L = build_ladder(X, u, seg, K, -1.0, 2 * K, verify=False)
            for v in L.S:
                fib = L.fibers[v]
                gv = X.fiber_graph(v)
                length = gv.d(fib[0][2], fib[-1][2])
                if length <= C + TOL:
                    depth = len(base.path(u, v)) - 1
                    if depth > best:
                        best = depth
                        witness = ((i, j), v)
        if partial:
            break
    return SmallCarpetResult(best <= R, best, R, witness, partial)
