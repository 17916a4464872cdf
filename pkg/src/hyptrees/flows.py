"""Flow-spaces, qi-section search, ladders and carpets, ladder-pair
projection, vertical and horizontal subdivision, and the flow-incidence
graph.

Constructions are inductive outward from a center vertex and
deterministic: frontier processing and all tie-breaks use id order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Optional

import numpy as np

from hyptrees.coarse import Subset, coboundedness, hausdorff_distance, quasiconvex_hull
from hyptrees.metric_core import TOL, MetricGraph, canonical_geodesic, id_key
from hyptrees.tree_of_spaces import (
    SCFReport,
    SemiContinuousFamily,
    TotalSpace,
    _fiber_projection,
    verify_semicontinuous_family,
)


def wedge(L0p: float, R: float) -> float:
    """R -> (15 L'_0 R)^3, the section constant implied by a flow radius."""
    return (15.0 * L0p * R) ** 3


@dataclass
class QiSection:
    """Fiberwise choice over a base subtree with bounded horizontal jumps."""

    domain: tuple                 # base vertices, a subtree
    mapping: dict                 # base vertex -> total-space vertex
    K: float
    measured_jump: float = 0.0

    def __post_init__(self):
        for v in self.domain:
            x = self.mapping[v]
            assert x[0] == "v" and x[1] == v, "section leaves its fiber"

    def __getitem__(self, v):
        return self.mapping[v]


def _edge_view(X: TotalSpace, a, b):
    return X.edge_space(X.tos.base.edge_between(a, b))


def find_qi_section(X: TotalSpace, domain: Iterable, K: float, start,
                    end=None, *, maximal: bool = False) -> Optional[QiSection]:
    """Layered reachability search for a K-qi section over a subtree.

    start must sit in the fiber over a vertex of the domain; the search
    orients the domain away from it.  Deterministic: least-id frontier
    order, least-id parents.  Returns None when no section exists.  With
    maximal=True the domain is extended greedily while fibers stay
    reachable.
    """
    base = X.tos.base
    domain = list(domain)
    if not base.is_subtree(domain):
        raise ValueError("domain must be a subtree of the base")
    s0 = start[1]
    if s0 not in domain:
        raise ValueError("start must lie over the domain")
    reach = {s0: {start: None}}
    order = [(None, None, s0)]
    seen = {s0}
    frontier = [s0]
    dset = set(domain)
    while frontier:
        nxt = []
        for v in sorted(frontier, key=id_key):
            for w, eid in base.neighbors(v):
                if w in dset and w not in seen:
                    seen.add(w)
                    order.append((eid, v, w))
                    nxt.append(w)
        frontier = nxt
    for eid, v, w in order[1:]:
        view = X.edge_space(eid)
        layer = set()
        for y in X.fibers[w]:
            if any(view.d(x, y) <= K + TOL for x in reach[v]):
                layer.add(y)
        if not layer:
            return None
        reach[w] = layer
    if end is not None:
        vend = end[1]
        if vend not in dset or end not in reach.get(vend, set()):
            return None
    # backward viability pruning: keep only choices that extend to the
    # whole subtree below (and hit the pinned end)
    children = {}
    for eid, v, w in order[1:]:
        children.setdefault(v, []).append((eid, w))
    viable = {}
    for eid, v, w in reversed(order[1:]):
        cand = set(reach[w])
        if end is not None and w == end[1]:
            cand &= {end}
        for e2, c in children.get(w, []):
            view = X.edge_space(e2)
            cand = {y for y in cand
                    if any(view.d(y, z) <= K + TOL for z in viable[c])}
        if not cand:
            return None
        viable[w] = cand
    root_ok = True
    for e2, c in children.get(s0, []):
        view = X.edge_space(e2)
        root_ok = root_ok and any(view.d(start, z) <= K + TOL for z in viable[c])
    if not root_ok or (end is not None and end[1] == s0 and end != start):
        return None
    mapping = {s0: start}
    for eid, v, w in order[1:]:
        view = X.edge_space(eid)
        cands = [y for y in sorted(viable[w], key=id_key)
                 if view.d(mapping[v], y) <= K + TOL]
        if not cands:
            return None
        mapping[w] = cands[0]
    sec_domain = list(domain)
    if maximal:
        changed = True
        while changed:
            changed = False
            have = set(sec_domain)
            for v in sorted(have, key=id_key):
                for w, eid in base.neighbors(v):
                    if w in have:
                        continue
                    view = X.edge_space(eid)
                    cands = [y for y in X.fibers[w] if view.d(mapping[v], y) <= K + TOL]
                    if cands:
                        mapping[w] = min(cands, key=id_key)
                        sec_domain.append(w)
                        have.add(w)
                        changed = True
    jump = 0.0
    have = set(sec_domain)
    for v in sec_domain:
        for w, eid in base.neighbors(v):
            if w in have:
                jump = max(jump, X.edge_space(eid).d(mapping[v], mapping[w]))
    return QiSection(tuple(sec_domain), {v: mapping[v] for v in sec_domain}, K, jump)


@dataclass
class FlowSpace:
    """Inductively grown family of fiber subsets around a seed."""

    center: Hashable
    seed: tuple
    R: float
    K_implied: float
    Q_v: dict                    # base vertex -> tuple of total vertices
    Q_e: dict
    boundary: dict               # boundary edge id -> measured coboundedness
    D0: float                    # stopping-rule constant used for reporting
    family: SemiContinuousFamily
    report: SCFReport

    def shadow(self) -> tuple:
        return tuple(sorted(self.Q_v, key=id_key))

    def vertices(self) -> tuple:
        out = []
        for v in sorted(self.Q_v, key=id_key):
            out.extend(self.Q_v[v])
        return tuple(out)


def flow_space(X: TotalSpace, u, seed: Iterable, R: float, *,
               delta0: Optional[float] = None, verify: bool = True) -> FlowSpace:
    """Grow the flow of a quasiconvex seed: R-neighborhood intersection in
    each two-vertex space, then a delta0-hull in the new fiber; empty
    intersections close the flow with a measured coboundedness record."""
    if R < 0:
        raise ValueError("R must be nonnegative")
    base = X.tos.base
    if delta0 is None:
        delta0 = X.axiom_h().delta0
    seed = tuple(seed)
    seed = tuple(x if isinstance(x, tuple) and x and x[0] == "v"
                 else X.fiber_vertex(u, x) for x in seed)
    g_u = X.fiber_graph(u)
    hull_u = quasiconvex_hull(g_u, Subset(g_u, tuple(x[2] for x in seed)), delta0)
    Q_v = {u: tuple(X.fiber_vertex(u, x) for x in hull_u.vertices)}
    Q_e = {}
    boundary = {}
    for eid, v, w in base.edges_oriented_from(u):
        if v not in Q_v:
            continue
        view = X.edge_space(eid)
        near = [y for y in X.fibers[w]
                if min(view.d(y, q) for q in Q_v[v]) <= R + TOL]
        if not near:
            g = view.graph
            cob = coboundedness(g, Subset(g, Q_v[v]), Subset(g, X.fibers[w])).value
            boundary[eid] = cob
            continue
        g_w = X.fiber_graph(w)
        hull = quasiconvex_hull(g_w, Subset(g_w, tuple(y[2] for y in near)), delta0)
        Q_v[w] = tuple(X.fiber_vertex(w, x) for x in hull.vertices)
        g_e = X.tos.edge_graphs[eid]
        proj = _fiber_projection(view, Q_v[w], X.edge_fibers[eid])
        ehull = quasiconvex_hull(g_e, Subset(g_e, tuple(dict.fromkeys(y[2] for y in proj))), delta0)
        Q_e[eid] = tuple(("e", eid, x) for x in ehull.vertices)
    sec = X.secondary()
    l0p = sec.L0p
    K = wedge(l0p, max(R, 1.0))
    # measured stopping constant: D_0 = 2 lam'_0 + 7 delta'_0
    D0 = 2.0 * sec.lam0p_measured + 7.0 * sec.delta0p
    E = (2.0 * (2.0 * sec.lam0p_measured + 3.0 * sec.delta0p + R)
         + (1500.0 * (l0p * (R + 2 * sec.delta0p)) ** 3 + delta0))
    fam = SemiContinuousFamily(u, Q_v, Q_e, K=K, D=max(D0, max(boundary.values(), default=0.0)),
                               E=E, lam=4.0 * delta0)
    report = verify_semicontinuous_family(X, fam) if verify else SCFReport((), True)
    return FlowSpace(u, seed, R, K, Q_v, Q_e, boundary, D0, fam, report)


def flow_monotone_check(f1: FlowSpace, f2: FlowSpace) -> bool:
    """Fiberwise containment Fl_{R1} subset Fl_{R2} for R1 <= R2."""
    for v, ys in f1.Q_v.items():
        if v not in f2.Q_v or not set(ys) <= set(f2.Q_v[v]):
            return False
    return True


def _monotone_matching(costs: np.ndarray) -> tuple:
    """Indices j_i, nondecreasing in i, minimizing sum costs[i, j_i];
    ties resolved toward the least j.

    dp[i, j] = min cost of matching rows 0..i with j_i = j.
    """
    n, m = costs.shape
    dp = np.empty((n, m))
    dp[0] = costs[0]
    for i in range(1, n):
        dp[i] = costs[i] + np.minimum.accumulate(dp[i - 1])
    out = [int(np.argmin(dp[n - 1]))]
    for i in range(n - 1, 0, -1):
        out.append(int(np.argmin(dp[i - 1][:out[-1] + 1])))
    out.reverse()
    return tuple(out)


@dataclass
class Ladder:
    """Oriented fiber geodesic segments over a subtree, with monotone
    transfer maps toward the center."""

    X: TotalSpace
    center: Hashable
    fibers: dict                 # base vertex -> tuple of total vertices, ordered
    edge_fibers: dict
    transfers: dict              # (child, parent) -> tuple: child index -> parent index
    K: float
    D: float
    E: float
    boundary: dict = field(default_factory=dict)
    _graph: Optional[MetricGraph] = None
    scf: Optional[SCFReport] = None

    @property
    def S(self):
        return tuple(sorted(self.fibers, key=id_key))

    def alpha(self) -> tuple:
        return self.fibers[self.center]

    def contains(self, x) -> bool:
        return any(x in fib for fib in self.fibers.values())

    def position(self, x) -> tuple:
        v = x[1]
        return v, self.fibers[v].index(x)

    def thread(self, x) -> dict:
        """The canonical section through x: transfers toward the center,
        nearest preimages outward; returns base vertex -> total vertex."""
        base = self.X.tos.base
        v, i = self.position(x)
        out = {v: x}
        path = base.path(v, self.center)
        cur = i
        for a, b in zip(path, path[1:]):
            cur = self.transfers[(a, b)][cur]
            out[b] = self.fibers[b][cur]
        # outward: BFS from the covered set following transfer preimages
        changed = True
        while changed:
            changed = False
            for (child, parent), tmap in sorted(self.transfers.items(),
                                                key=lambda kv: id_key(kv[0])):
                if parent in out and child not in out:
                    target = self.fibers[parent].index(out[parent])
                    pre = [ci for ci, pj in enumerate(tmap) if pj == target]
                    if pre:
                        cands = sorted(pre, key=lambda ci: (abs(tmap[ci] - target), ci))
                        out[child] = self.fibers[child][cands[0]]
                        changed = True
        return out

    def ladder_graph(self) -> MetricGraph:
        """Coarse intrinsic model: fiber segments plus transfer jumps."""
        if self._graph is None:
            verts = [x for v in self.S for x in self.fibers[v]]
            edges = []
            for v in self.S:
                g = self.X.fiber_graph(v)
                dm = g.distance_matrix()
                fib = self.fibers[v]
                for a, b in zip(fib, fib[1:]):
                    edges.append((a, b, max(dm.d(a[2], b[2]), TOL)))
            for (child, parent), tmap in self.transfers.items():
                eid = self.X.tos.base.edge_between(child, parent)
                view = self.X.edge_space(eid)
                for ci, pj in enumerate(tmap):
                    a = self.fibers[child][ci]
                    b = self.fibers[parent][pj]
                    edges.append((a, b, max(view.d(a, b), TOL)))
            self._graph = MetricGraph(verts, edges, name="ladder")
        return self._graph


def build_ladder(X: TotalSpace, u, alpha, K: float, D: float, E: float, *,
                 verify: bool = True) -> Ladder:
    """Grow the ladder of a fiber geodesic: project endpoint pairs outward,
    rebuild fibers as canonical geodesics, align with monotone matching.

    Extension along an edge stops (recorded as a boundary) once the whole
    fiber projects to a segment of diameter <= D.
    """
    base = X.tos.base
    g_u = X.fiber_graph(u)
    averts = [x if isinstance(x, tuple) and x and x[0] == "v" else X.fiber_vertex(u, x)
              for x in alpha]
    ids = [x[2] for x in averts]
    geo = canonical_geodesic(g_u, ids[0], ids[-1])
    try:
        seq_len = _seq_length(g_u, ids)
    except ValueError as exc:
        raise ValueError(f"alpha is not a fiber geodesic: {exc}")
    if abs(geo.length - seq_len) > TOL:
        raise ValueError("alpha is not a fiber geodesic: longer than the distance")
    fibers = {u: tuple(averts)}
    edge_fibers = {}
    transfers = {}
    boundary = {}
    for eid, v, w in base.edges_oriented_from(u):
        if v not in fibers:
            continue
        view = X.edge_space(eid)
        fib_v = fibers[v]
        reach = min(min(view.d(y, x) for x in fib_v) for y in X.fibers[w])
        g = view.graph
        cob = coboundedness(g, Subset(g, fib_v), Subset(g, X.fibers[w])).value
        # a K-family cannot continue past an unreachable fiber; a D-cobounded
        # pair closes the ladder deliberately (D < 0 disables that rule)
        if reach > K + TOL or cob <= D + TOL:
            boundary[eid] = cob
            continue
        proj_all = _fiber_projection(view, fib_v, X.fibers[w])
        px, py = proj_all[0], proj_all[-1]
        geow = canonical_geodesic(X.fiber_graph(w), px[2], py[2])
        fib_w = tuple(X.fiber_vertex(w, q) for q in geow.vertices)
        fibers[w] = fib_w
        costs = np.array([[view.d(a, b) for b in fib_v] for a in fib_w])
        transfers[(w, v)] = _monotone_matching(costs)
        g_e = X.tos.edge_graphs[eid]
        eproj = _fiber_projection(view, [fib_w[0], fib_w[-1]], X.edge_fibers[eid])
        try:
            geoe = canonical_geodesic(g_e, eproj[0][2], eproj[-1][2])
            edge_fibers[eid] = tuple(("e", eid, q) for q in geoe.vertices)
        except Exception:
            edge_fibers[eid] = tuple(dict.fromkeys(eproj))
    L = Ladder(X, u, fibers, edge_fibers, transfers, K, D, E, boundary)
    if verify:
        fam = SemiContinuousFamily(u, fibers, {e: tuple(xs) for e, xs in edge_fibers.items()},
                                   K=K, D=max(D, max(boundary.values(), default=0.0)),
                                   E=E, lam=X.axiom_h().delta0)
        L.scf = verify_semicontinuous_family(X, fam)
    return L


def ladder_from_fibers(X: TotalSpace, u, fibers: dict, K, D, E) -> Ladder:
    """Rebuild ladder structure over given oriented fiber segments."""
    base = X.tos.base
    transfers = {}
    for eid, v, w in base.edges_oriented_from(u):
        if v in fibers and w in fibers:
            view = X.edge_space(eid)
            costs = np.array([[view.d(a, b) for b in fibers[v]] for a in fibers[w]])
            transfers[(w, v)] = _monotone_matching(costs)
    return Ladder(X, u, dict(fibers), {}, transfers, K, D, E)


@dataclass
class LadderPairProjection:
    sub1: Ladder
    sub2: Ladder
    hd_table: dict             # base vertex -> fiberwise Hausdorff distance
    bound: float               # 20 delta0
    cut_vertices: tuple
    separated_at_center: bool


def project_ladder_pair(X: TotalSpace, L1: Ladder, L2: Ladder, *,
                        delta0: Optional[float] = None) -> LadderPairProjection:
    """Fiberwise modified projections of two ladders with a common center,
    truncated at the separation/coboundedness dichotomy vertices."""
    if L1.center != L2.center:
        raise ValueError("ladders must share a center")
    if delta0 is None:
        delta0 = max(X.axiom_h().delta0, 1.0)
    base = X.tos.base
    S = [v for v in L1.S if v in set(L2.S)]
    cut = []
    for v in S:
        g = X.fiber_graph(v)
        dm = g.distance_matrix()
        a = [g.index[x[2]] for x in L1.fibers[v]]
        b = [g.index[x[2]] for x in L2.fibers[v]]
        if dm.array[np.ix_(a, b)].min() > 7.0 * delta0:
            cut.append(v)
    keep = set(S)
    for v in cut:
        for w in S:
            if w != v and v != L1.center and v in base.path(L1.center, w)[:-1]:
                keep.discard(w)
    keep.update([L1.center])
    if L1.center in cut:
        keep = {L1.center}

    def modified(fib_self, fib_other, v):
        g = X.fiber_graph(v)
        dm = g.distance_matrix()
        pos = []
        for y in fib_other:
            row = [dm.d(y[2], x[2]) for x in fib_self]
            m = min(row)
            pos.append(min(i for i, r in enumerate(row) if r <= m + TOL))
        lo, hi = min(pos), max(pos)
        return tuple(fib_self[lo:hi + 1])

    fib1 = {}
    fib2 = {}
    table = {}
    for v in sorted(keep, key=id_key):
        fib1[v] = modified(L1.fibers[v], L2.fibers[v], v)
        fib2[v] = modified(L2.fibers[v], L1.fibers[v], v)
        dmv = X.fiber_graph(v).distance_matrix()
        table[v] = hausdorff_distance(dmv, [x[2] for x in fib1[v]],
                                      [x[2] for x in fib2[v]])
    sub1 = ladder_from_fibers(X, L1.center, fib1, L1.K, L1.D, L1.E)
    sub2 = ladder_from_fibers(X, L2.center, fib2, L2.K, L2.D, L2.E)
    return LadderPairProjection(sub1, sub2, table, 20.0 * delta0, tuple(cut),
                                L1.center in cut)


@dataclass
class Carpet:
    """A ladder piece over an interval with full top/bottom threads and a
    short narrow end."""

    ladder: Ladder
    interval: tuple             # base vertices ordered from the center u to w
    top: dict                   # base vertex -> total vertex
    bot: dict
    C: float

    @property
    def narrow_end(self):
        w = self.interval[-1]
        return self.ladder.fibers[w]

    def end_length(self) -> float:
        w = self.interval[-1]
        fib = self.ladder.fibers[w]
        g = self.ladder.X.fiber_graph(w)
        return g.d(fib[0][2], fib[-1][2])


@dataclass
class SubdivisionPiece:
    ladder: Ladder
    carpet: Optional[Carpet]
    bounds: tuple               # (alpha index of x_i, alpha index of x_{i+1})
    cobounded: Optional[float]  # measured coboundedness of the section pair
    marked: tuple               # (x_i^-, x_i^+) nearest pair, or ()


def _seq_length(g: MetricGraph, ids) -> float:
    """Length of an edge path; raises ValueError on non-adjacent steps."""
    from hyptrees.metric_core import path_length
    return path_length(g, list(ids))


def _threads_separated(X, t1: dict, t2: dict, C: float) -> bool:
    shared = set(t1) & set(t2)
    for b in shared:
        g = X.fiber_graph(b)
        if g.d(t1[b][2], t2[b][2]) <= C + TOL:
            return False
    return True


def _closest_meeting(X, t1, t2, C, center):
    """Id-least base vertex nearest the center where two threads come
    C-close; None if they never do."""
    base = X.tos.base
    best = None
    for b in sorted(set(t1) & set(t2), key=id_key):
        g = X.fiber_graph(b)
        if g.d(t1[b][2], t2[b][2]) <= C + TOL:
            depth = len(base.path(center, b)) - 1
            if best is None or depth < best[0]:
                best = (depth, b)
    return best


def vertical_subdivision(L: Ladder, C: float, *, M_K: Optional[float] = None) -> list:
    """Split a ladder along its center fiber into carpeted pieces.

    Subdivision points are chosen greedily: the next point is the first
    alpha position whose thread is fiberwise C-separated from the current
    one.  Each piece gets a narrow-carpet witness, the measured
    coboundedness of its bounding section pair and the nearest-pair marked
    points.
    """
    if M_K is None:
        M_K = C
    if C < M_K - TOL:
        raise ValueError("C must be at least the flaring threshold surrogate")
    X = L.X
    alpha = L.alpha()
    threads = {i: L.thread(alpha[i]) for i in range(len(alpha))}
    cuts = [0]
    while True:
        p = cuts[-1]
        q = None
        for cand in range(p + 1, len(alpha)):
            if _threads_separated(X, threads[p], threads[cand], C):
                q = cand
                break
        if q is None:
            break
        cuts.append(q)
    from_omega = [False] + [True] * (len(cuts) - 1)
    if cuts[-1] != len(alpha) - 1:
        cuts.append(len(alpha) - 1)
        from_omega.append(False)
    pieces = []
    for (a, b), omega_cut in zip(zip(cuts, cuts[1:]), from_omega[1:]):
        fibs = {}
        for v in L.S:
            ta, tb = threads[a].get(v), threads[b].get(v)
            if ta is None or tb is None:
                continue
            fib = L.fibers[v]
            ia, ib = fib.index(ta), fib.index(tb)
            lo, hi = min(ia, ib), max(ia, ib)
            fibs[v] = fib[lo:hi + 1]
        piece = ladder_from_fibers(X, L.center, fibs, L.K, L.D, L.E)
        carpet = None
        # the carpet witness pairs the lower thread with the last thread not
        # yet C-separated from it (the piece's own top when the subdivision
        # ended without separation)
        bprime = max(a, b - 1) if omega_cut else b
        meet = _closest_meeting(X, threads[a], threads[bprime], C, L.center)
        if meet is not None:
            _, w = meet
            interval = tuple(X.tos.base.path(L.center, w))
            top = {v: threads[bprime][v] for v in interval}
            bot = {v: threads[a][v] for v in interval}
            cf = {v: piece.fibers[v] for v in interval if v in piece.fibers}
            cl = ladder_from_fibers(X, L.center, cf, L.K, float("inf"), L.E)
            carpet = Carpet(cl, interval, top, bot, C)
        lg = piece.ladder_graph()
        dm = lg.distance_matrix()
        s1 = [threads[a][v] for v in piece.S if v in threads[a]]
        s2 = [threads[b][v] for v in piece.S if v in threads[b]]
        s1 = [x for x in s1 if x in lg.index]
        s2 = [x for x in s2 if x in lg.index]
        marked = ()
        cob = None
        if s1 and s2:
            pairs = [(dm.d(x, y), id_key(x), id_key(y), x, y) for x in s1 for y in s2]
            _, _, _, xm, ym = min(pairs)
            marked = (xm, ym)
            cob = coboundedness(lg, Subset(lg, tuple(s1)), Subset(lg, tuple(s2))).value
        pieces.append(SubdivisionPiece(piece, carpet, (a, b), cob, marked))
    return pieces


@dataclass
class HorizontalSubdivision:
    vertices: tuple              # u_0, ..., u_{n+1}
    double_primes: tuple         # u_i''
    primes: tuple                # u_{i+1}'
    certificates: dict           # u_i -> flow shadow restricted to J


def horizontal_subdivision(X: TotalSpace, J: Iterable, R: float, *,
                           delta0: Optional[float] = None) -> HorizontalSubdivision:
    """Greedy subdivision of a base interval by flow reachability: each
    piece is a union of at most three special subintervals."""
    J = list(J)
    base = X.tos.base
    if len(J) < 2:
        return HorizontalSubdivision(tuple(J), tuple(J), tuple(J), {})
    shadows = {}

    def shadow(s):
        if s not in shadows:
            fl = flow_space(X, s, X.fibers[s], R, delta0=delta0, verify=False)
            shadows[s] = set(fl.shadow())
        return shadows[s]

    pos = {v: i for i, v in enumerate(J)}
    v_end = J[-1]
    us = [J[0]]
    dps = []
    prs = []
    while us[-1] != v_end:
        ui = us[-1]
        sh = shadow(ui)
        in_j = [w for w in J[pos[ui]:] if w in sh]
        ui2 = in_j[-1] if in_j else ui
        dps.append(ui2)
        if ui2 == v_end:
            prs.append(v_end)
            us.append(v_end)
            break
        nxt = None
        for s in J[pos[ui2] + 1:]:
            if ui2 not in shadow(s):
                nxt = s
                break
        if nxt is None:
            prs.append(ui2)
            us.append(v_end)
            break
        prs.append(J[pos[nxt] - 1])
        us.append(nxt)
    certs = {u: tuple(sorted(shadow(u) & set(J), key=lambda w: pos[w]))
             for u in us}
    return HorizontalSubdivision(tuple(us), tuple(dps), tuple(prs), certs)


@dataclass
class FlowIncidenceResult:
    gamma: MetricGraph
    shadows: dict
    monotone_ok: bool            # d(u,v) >= d(u,w) for w between
    separation_ok: bool
    witnesses: tuple


def flow_incidence_graph(X: TotalSpace, R: float, *,
                         delta0: Optional[float] = None) -> FlowIncidenceResult:
    """Graph on the base vertices joining u,v whenever their flow shadows
    meet; checked for the quasi-tree separation properties."""
    base = X.tos.base
    shadows = {}
    for v in sorted(base.vertices, key=id_key):
        fl = flow_space(X, v, X.fibers[v], R, delta0=delta0, verify=False)
        shadows[v] = set(fl.shadow())
    edges = []
    vs = sorted(base.vertices, key=id_key)
    for i, u in enumerate(vs):
        for v in vs[i + 1:]:
            if shadows[u] & shadows[v]:
                edges.append((u, v, 1))
    gamma = MetricGraph(vs, edges, name="flow-incidence", allow_disconnected=True)
    dg = gamma.distance_matrix()
    monotone_ok = True
    separation_ok = True
    witnesses = []
    for u in vs:
        for v in vs:
            if u == v:
                continue
            path = base.path(u, v)
            for w in path:
                if dg.d(u, v) + TOL < dg.d(u, w):
                    monotone_ok = False
                    witnesses.append(("monotone", u, v, w))
            for p in path:
                ball = {x for x in vs if dg.d(x, p) <= 1 + TOL}
                if u in ball or v in ball:
                    continue
                if _connected_avoiding(gamma, u, v, ball):
                    separation_ok = False
                    witnesses.append(("separation", u, v, p))
            for a, b in zip(path, path[1:]):
                ball = {x for x in vs if a in shadows[x] and b in shadows[x]}
                ball.update((a, b))
                if u in ball or v in ball:
                    continue
                if _connected_avoiding(gamma, u, v, ball):
                    separation_ok = False
                    witnesses.append(("separation-mid", u, v, (a, b)))
    return FlowIncidenceResult(gamma, shadows, monotone_ok, separation_ok,
                               tuple(witnesses))


def _connected_avoiding(g: MetricGraph, u, v, banned: set) -> bool:
    seen = {u}
    stack = [u]
    while stack:
        x = stack.pop()
        if x == v:
            return True
        for y, _ in g.neighbors(x):
            if y not in seen and y not in banned:
                seen.add(y)
                stack.append(y)
    return False
