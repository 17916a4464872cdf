"""Quasiconvexity, hulls, nearest-point projections, coboundedness,
Hausdorff distance and distortion measurement for maps between graphs.

Neighborhoods N_R are vertex sets {x : d(x, A) <= R}; no edge subdivision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from hyptrees.metric_core import (
    TOL,
    DistanceMatrix,
    GeodesicCapExceeded,
    MetricGraph,
    enumerate_geodesics,
    id_key,
    interval_set,
)


@dataclass(frozen=True)
class Subset:
    """A nonempty vertex subset of a host graph."""

    host: MetricGraph
    vertices: tuple

    def __post_init__(self):
        if not self.vertices:
            raise ValueError("subset must be nonempty")
        missing = [v for v in self.vertices if v not in self.host.index]
        if missing:
            raise ValueError(f"vertices {missing[:4]} not in host")
        object.__setattr__(self, "vertices", tuple(dict.fromkeys(self.vertices)))

    def indices(self) -> np.ndarray:
        return np.array([self.host.index[v] for v in self.vertices])

    def __contains__(self, v):
        return v in set(self.vertices)

    def __len__(self):
        return len(self.vertices)


def neighborhood(A: Subset, R: float) -> Subset:
    """N_R(A) as a vertex subset of the host."""
    d = A.host.distance_matrix()
    dv = d.array[:, A.indices()].min(axis=1)
    keep = [v for v, dist in zip(A.host.vertices, dv) if dist <= R + TOL]
    return Subset(A.host, tuple(keep))


def set_distance(A: Subset, B: Subset) -> float:
    d = A.host.distance_matrix()
    return float(d.array[np.ix_(A.indices(), B.indices())].min())


def hausdorff_distance(d: DistanceMatrix, A: Iterable, B: Iterable) -> float:
    """Hausdorff distance between vertex sets; inf only across components."""
    ai = [d.index[a] for a in A]
    bi = [d.index[b] for b in B]
    sub = d.array[np.ix_(ai, bi)]
    return float(max(sub.min(axis=1).max(), sub.min(axis=0).max()))


@dataclass(frozen=True)
class QcResult:
    value: float
    witness: tuple          # (a, a', far point) or ()
    mode: str
    overflow: bool = False
    overflow_info: tuple = ()


def quasiconvexity_constant(g: MetricGraph, A: Subset, *, mode: str = "intervals",
                            geodesic_cap: int = 2048) -> QcResult:
    """Smallest lambda with every geodesic between points of A inside
    N_lambda(A); measured over interval sets or enumerated geodesics."""
    d = g.distance_matrix()
    aidx = A.indices()
    dist_to_A = d.array[:, aidx].min(axis=1)
    best = 0.0
    witness = ()
    for i, a in enumerate(A.vertices):
        for b in A.vertices[i + 1:]:
            if mode == "intervals":
                pts = interval_set(g, a, b)
            else:
                try:
                    pts = {p for c in enumerate_geodesics(g, a, b, cap=geodesic_cap) for p in c}
                except GeodesicCapExceeded as exc:
                    return QcResult(float("nan"), (), mode, True,
                                    (exc.pair, exc.count, exc.cap))
            for p in pts:
                v = float(dist_to_A[g.index[p]])
                if v > best:
                    best = v
                    witness = (a, b, p)
    if best <= TOL:
        best = 0.0
    return QcResult(best, witness, mode)


def quasiconvex_hull(g: MetricGraph, A: Subset, eps: float, *,
                     within: Optional[Subset] = None) -> Subset:
    """Hull_eps(A): the eps-neighborhood of the union of interval sets of
    pairs in A.

    With `within`, intervals and the neighborhood are taken in the induced
    subgraph on that carrier (used for projections to tripods, where only
    the hull closure inside the tripod matters).
    """
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if within is None:
        host, back = g, None
    else:
        host = g.induced(within.vertices)
        back = g
        A = Subset(host, tuple(v for v in A.vertices if v in host.index))
    core = set()
    for i, a in enumerate(A.vertices):
        for b in A.vertices[i:]:
            core.update(interval_set(host, a, b))
    hull = neighborhood(Subset(host, tuple(sorted(core, key=id_key))), eps)
    target = back if back is not None else g
    return Subset(target, tuple(v for v in target.vertices if v in set(hull.vertices)))


@dataclass(frozen=True)
class ProjectionMap:
    """Nearest-point projection onto a subset; fixes the subset pointwise."""

    subset: Subset
    mapping: dict = field(hash=False, compare=False)
    tie_break: str = "least-id"

    def __post_init__(self):
        sub = set(self.subset.vertices)
        assert all(self.mapping[v] == v for v in sub)
        assert set(self.mapping.values()) <= sub

    def __call__(self, v):
        return self.mapping[v]


@dataclass(frozen=True)
class ProjectionResult:
    map: ProjectionMap
    lipschitz: float        # max over adjacent x,y of d(P x, P y)/(d(x,y)+1)


def nearest_point_projection(g: MetricGraph, A: Subset) -> ProjectionResult:
    """Nearest vertex of A for every vertex (ties to the least id), with the
    measured coarse-Lipschitz constant over adjacent pairs."""
    d = g.distance_matrix()
    aidx = A.indices()
    mapping = {}
    for v in g.vertices:
        row = d.array[g.index[v], aidx]
        m = row.min()
        cands = [A.vertices[i] for i in np.nonzero(row <= m + TOL)[0]]
        mapping[v] = min(cands, key=id_key)
    lip = 0.0
    for u, v, w in g.edges:
        lip = max(lip, d.d(mapping[u], mapping[v]) / (float(w) + 1.0))
    return ProjectionResult(ProjectionMap(A, mapping), lip)


def projection_lipschitz_bound(delta: float, lam: float) -> float:
    """max(2, 2 lambda + 9 delta): the nearest-point projection constant."""
    return max(2.0, 2.0 * lam + 9.0 * delta)


@dataclass(frozen=True)
class CoboundednessResult:
    value: float
    diam_proj_AB: float     # diameter of P_A(B)
    diam_proj_BA: float


def coboundedness(g: MetricGraph, A: Subset, B: Subset) -> CoboundednessResult:
    """C = max diameter of the two mutual nearest-point projections."""
    d = g.distance_matrix()
    pa = nearest_point_projection(g, A).map
    pb = nearest_point_projection(g, B).map
    img_ab = sorted({pa(b) for b in B.vertices}, key=id_key)
    img_ba = sorted({pb(a) for a in A.vertices}, key=id_key)

    def diam(pts):
        idx = [g.index[p] for p in pts]
        return float(d.array[np.ix_(idx, idx)].max())

    da, db = diam(img_ab), diam(img_ba)
    return CoboundednessResult(max(da, db), da, db)


def cobounded_separation_bounds(delta: float, lam: float) -> tuple:
    """(R, D): pairs of lambda-quasiconvex sets at distance >= R = 2 lam + 5 delta
    are D = 2 lam + 7 delta cobounded."""
    return (2.0 * lam + 5.0 * delta, 2.0 * lam + 7.0 * delta)


@dataclass(frozen=True)
class MapDistortion:
    """Measured coarse constants of a vertex map f: X -> Y.

    upper: best multiplicative fit L with d_Y(fx, fy) <= L (d_X(x,y) + 1);
    lower: L' with d_X(x,y) <= L' (d_Y(fx, fy) + 1).
    eta_max[t] / eta_min[t]: max and min image distance over pairs at
    d_X <= t / d_X >= t (both nondecreasing in t).
    """

    upper: float
    lower: float
    eta_max: tuple
    eta_min: tuple
    qi_constant: float
    verdict: bool
    tolerance: float
    witness_upper: tuple
    witness_lower: tuple


def map_distortion(f: dict, gX: MetricGraph, gY: MetricGraph, *,
                   tolerance: float = float("inf")) -> MapDistortion:
    """Distortion profile of a total vertex map between graphs, with a
    qi-embedding verdict at the configured tolerance."""
    missing = [v for v in gX.vertices if v not in f]
    if missing:
        raise ValueError(f"map not total: missing {missing[:4]}")
    dX = gX.distance_matrix()
    dY = gY.distance_matrix()
    up = lo = 0.0
    wit_up = wit_lo = ()
    pairs = []
    for i, x in enumerate(gX.vertices):
        for y in gX.vertices[i + 1:]:
            a = dX.d(x, y)
            b = dY.d(f[x], f[y])
            pairs.append((a, b))
            ru = b / (a + 1.0)
            rl = a / (b + 1.0)
            if ru > up:
                up, wit_up = ru, (x, y)
            if rl > lo:
                lo, wit_lo = rl, (x, y)
    ts = sorted({round(a, 9) for a, _ in pairs})
    eta_max = []
    eta_min = []
    for t in ts:
        eta_max.append((t, max((b for a, b in pairs if a <= t + TOL), default=0.0)))
        eta_min.append((t, min((b for a, b in pairs if a >= t - TOL), default=0.0)))
    qi = max(up, lo, 1.0)
    return MapDistortion(up, lo, tuple(eta_max), tuple(eta_min), qi,
                         qi <= tolerance, tolerance, wit_up, wit_lo)
