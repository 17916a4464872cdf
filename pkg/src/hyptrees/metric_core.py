"""Finite weighted graphs, exact shortest-path metrics, geodesics,
Gromov products, hyperbolicity constants, Rips graphs and net approximation.

All operations are pure; graphs and matrices are immutable after
construction.  Metric equalities on rational weights are compared at
tolerance TOL = 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from hyptrees import _kernels

TOL = 1e-9

VertexId = Hashable


class DisconnectedGraphError(ValueError):
    """Raised when an operation requires a connected graph."""

    def __init__(self, component):
        self.component = tuple(component)
        super().__init__(
            f"graph is disconnected; one component is {self.component[:8]}"
            + ("..." if len(self.component) > 8 else "")
        )


class GeodesicCapExceeded(RuntimeError):
    """Raised internally when geodesic enumeration exceeds the cap."""

    def __init__(self, pair, count, cap):
        self.pair = pair
        self.count = count
        self.cap = cap
        super().__init__(f"{count} geodesics between {pair} exceed cap {cap}")


def id_key(v):
    """Deterministic order on heterogeneous vertex ids."""
    if isinstance(v, bool):
        return (0, int(v))
    if isinstance(v, int):
        return (0, v)
    if isinstance(v, float):
        return (0, v)
    if isinstance(v, str):
        return (1, v)
    if isinstance(v, tuple):
        return (2, tuple(id_key(x) for x in v))
    return (3, str(v))


class MetricGraph:
    """Finite weighted graph with its shortest-path metric.

    Vertices are opaque hashable ids; edges are unordered pairs with a
    positive length (ints, floats and Fractions all work; Fractions are
    kept exact on the edge records).  Loops are forbidden, parallel edges
    allowed.  Connectivity is required unless allow_disconnected is set.
    """

    def __init__(self, vertices: Iterable[VertexId], edges: Iterable, *,
                 allow_disconnected: bool = False, name: str = ""):
        self.vertices = tuple(vertices)
        if len(set(self.vertices)) != len(self.vertices):
            raise ValueError("duplicate vertex ids")
        if not self.vertices:
            raise ValueError("graph needs at least one vertex")
        self.index = {v: i for i, v in enumerate(self.vertices)}
        self.name = name
        norm = []
        for e in edges:
            if len(e) == 2:
                u, v = e
                w = 1
            else:
                u, v, w = e
            if u not in self.index or v not in self.index:
                raise ValueError(f"edge {e} references unknown vertex")
            if u == v:
                raise ValueError(f"loop edge at {u} is forbidden")
            if not float(w) > 0:
                raise ValueError(f"edge {e} must have positive length")
            norm.append((u, v, w))
        self.edges = tuple(norm)
        self._adj: dict[VertexId, list] = {v: [] for v in self.vertices}
        for u, v, w in self.edges:
            fw = float(w)
            self._adj[u].append((v, fw))
            self._adj[v].append((u, fw))
        self._dm: Optional[DistanceMatrix] = None
        if not allow_disconnected:
            comp = self._component(self.vertices[0])
            if len(comp) != len(self.vertices):
                raise DisconnectedGraphError(sorted(comp, key=id_key))

    def _component(self, start):
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for v, _ in self._adj[u]:
                if v not in seen:
                    seen.add(v)
                    stack.append(v)
        return seen

    def neighbors(self, u):
        """(vertex, min edge length) pairs, deduplicated over parallel edges."""
        best = {}
        for v, w in self._adj[u]:
            if v not in best or w < best[v]:
                best[v] = w
        return sorted(best.items(), key=lambda t: id_key(t[0]))

    @property
    def n(self) -> int:
        return len(self.vertices)

    def is_connected(self) -> bool:
        return len(self._component(self.vertices[0])) == self.n

    def distance_matrix(self) -> "DistanceMatrix":
        if self._dm is None:
            self._dm = shortest_path_metric(self, _allow_disconnected=True)
        return self._dm

    def d(self, u, v) -> float:
        return self.distance_matrix().d(u, v)

    def induced(self, vertices: Iterable[VertexId], *, name: str = "",
                allow_disconnected: bool = False) -> "MetricGraph":
        """Subgraph induced on a vertex subset, with inherited weights."""
        keep = set(vertices)
        sub_edges = [(u, v, w) for u, v, w in self.edges if u in keep and v in keep]
        order = [v for v in self.vertices if v in keep]
        return MetricGraph(order, sub_edges, name=name or f"{self.name}|induced",
                           allow_disconnected=allow_disconnected)

    def content_hash(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for v in self.vertices:
            h.update(repr(v).encode())
            h.update(b";")
        for u, v, w in self.edges:
            h.update(repr((u, v, str(w))).encode())
            h.update(b";")
        return h.hexdigest()

    def __repr__(self):
        return f"MetricGraph({self.name or 'unnamed'}: {self.n} vertices, {len(self.edges)} edges)"


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs shortest-path distances with vertex-id indexing."""

    vertices: tuple
    array: np.ndarray
    index: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "index", {v: i for i, v in enumerate(self.vertices)})
        self.validate()

    def validate(self):
        a = self.array
        n = a.shape[0]
        assert a.shape == (n, n) == (len(self.vertices), n)
        assert np.all(np.diag(a) == 0.0), "nonzero diagonal"
        assert np.allclose(a, a.T, atol=TOL, equal_nan=True), "asymmetric"
        if np.isfinite(a).all() and n <= 800:
            for k in range(n):
                slack = a - (a[:, k][:, None] + a[k, :][None, :])
                assert slack.max() <= TOL, f"triangle inequality fails through {self.vertices[k]}"
        off = a[~np.eye(n, dtype=bool)]
        finite_off = off[np.isfinite(off)]
        if finite_off.size:
            assert finite_off.min() > 0, "distinct vertices at distance zero"

    @property
    def n(self) -> int:
        return len(self.vertices)

    def d(self, u, v) -> float:
        return float(self.array[self.index[u], self.index[v]])

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.array).all())


def shortest_path_metric(g: MetricGraph, *, _allow_disconnected: bool = False) -> DistanceMatrix:
    """Exact all-pairs shortest-path distances of a MetricGraph.

    Rejects disconnected input (unless the graph itself was built with the
    disconnected flag) and names one offending component.
    """
    if not _allow_disconnected and not g.is_connected():
        raise DisconnectedGraphError(sorted(g._component(g.vertices[0]), key=id_key))
    n = g.n
    seen = {}
    for u, v, w in g.edges:
        i, j = g.index[u], g.index[v]
        key = (min(i, j), max(i, j))
        fw = float(w)
        if key not in seen or fw < seen[key]:
            seen[key] = fw
    if seen:
        rows = np.fromiter((k[0] for k in seen), dtype=np.int64)
        cols = np.fromiter((k[1] for k in seen), dtype=np.int64)
        vals = np.fromiter(seen.values(), dtype=np.float64)
        mat = csr_matrix((vals, (rows, cols)), shape=(n, n))
    else:
        mat = csr_matrix((n, n))
    arr = dijkstra(mat, directed=False)
    arr = np.minimum(arr, arr.T)
    np.fill_diagonal(arr, 0.0)
    return DistanceMatrix(g.vertices, arr)


@dataclass(frozen=True)
class GeodesicPath:
    """A geodesic as a vertex sequence; consecutive vertices share an edge."""

    vertices: tuple
    length: float

    def __len__(self):
        return len(self.vertices)


def canonical_geodesic(g: MetricGraph, u, v) -> GeodesicPath:
    """Deterministic geodesic from u to v.

    Ties are broken by always stepping to the id-least neighbor that
    decreases the remaining distance by its edge length.
    """
    dm = g.distance_matrix()
    if u not in g.index or v not in g.index:
        raise KeyError(f"unknown vertex in ({u}, {v})")
    path = [u]
    cur = u
    total = 0.0
    guard = 0
    while cur != v:
        rem = dm.d(cur, v)
        step = None
        for w, ew in g.neighbors(cur):
            if abs(ew + dm.d(w, v) - rem) <= TOL:
                step = (w, ew)
                break
        if step is None:
            raise DisconnectedGraphError([u])
        cur = step[0]
        total += step[1]
        path.append(cur)
        guard += 1
        if guard > 4 * g.n:
            raise RuntimeError("geodesic walk failed to terminate")
    return GeodesicPath(tuple(path), total)


def gromov_product(d: DistanceMatrix, y, z, x) -> float:
    """(y.z)_x = (d(x,y)+d(x,z)-d(y,z))/2."""
    return 0.5 * (d.d(x, y) + d.d(x, z) - d.d(y, z))


def interval_set(g_or_d, u, v) -> tuple:
    """All vertices on some geodesic from u to v:
    {w : d(u,w)+d(w,v) = d(u,v)} within TOL."""
    d = g_or_d.distance_matrix() if isinstance(g_or_d, MetricGraph) else g_or_d
    i, j = d.index[u], d.index[v]
    mask = d.array[i, :] + d.array[:, j] <= d.array[i, j] + TOL
    return tuple(d.vertices[k] for k in np.nonzero(mask)[0])


def _membership_tensor(a: np.ndarray) -> np.ndarray:
    """member[i,j,p] = p lies on some geodesic from i to j,
    i.e. a[i,p] + a[p,j] <= a[i,j] + TOL."""
    return (a[:, None, :] + a[None, :, :]) <= (a[:, :, None] + TOL)


def enumerate_geodesics(g: MetricGraph, u, v, cap: int = 2048) -> list:
    """All geodesic vertex sequences from u to v, or raise GeodesicCapExceeded.

    Counting runs first on the shortest-path DAG, so the cap is enforced
    before any enumeration blows up.
    """
    dm = g.distance_matrix()
    succ = {}
    order = sorted(g.vertices, key=lambda w: dm.d(u, w))
    for w in order:
        if dm.d(u, w) + dm.d(w, v) > dm.d(u, v) + TOL:
            continue
        nxt = [x for x, ew in g.neighbors(w)
               if abs(dm.d(u, x) - dm.d(u, w) - ew) <= TOL
               and dm.d(u, x) + dm.d(x, v) <= dm.d(u, v) + TOL]
        succ[w] = nxt
    counts = {v: 1}
    for w in reversed(order):
        if w == v or w not in succ:
            continue
        counts[w] = sum(counts.get(x, 0) for x in succ[w])
    total = counts.get(u, 0)
    if total > cap:
        raise GeodesicCapExceeded((u, v), total, cap)
    out = []
    stack = [(u, [u])]
    while stack:
        w, path = stack.pop()
        if w == v:
            out.append(tuple(path))
            continue
        for x in reversed(succ.get(w, ())):
            stack.append((x, path + [x]))
    return out


@dataclass(frozen=True)
class DeltaResult:
    """Result of a hyperbolicity measurement.

    value is None only when the exhaustive mode overflowed its geodesic
    cap; the overflow is explicit, never a silent fallback.
    """

    value: Optional[float]
    mode: str
    witness: tuple = ()
    overflow: bool = False
    overflow_info: tuple = ()
    note: str = ""


def _four_point(d: DistanceMatrix) -> DeltaResult:
    a = np.ascontiguousarray(d.array, dtype=np.float64)
    if not np.isfinite(a).all():
        raise ValueError("four-point mode needs a finite metric")
    if d.n < 4:
        return DeltaResult(0.0, "four_point", ())
    val = float(_kernels.four_point_max_defect(a))
    if val <= TOL:
        val = 0.0
    i, j, k, l = _kernels.four_point_witness(a, val)
    wit = tuple(d.vertices[t] for t in (i, j, k, l)) if i >= 0 else ()
    return DeltaResult(val, "four_point", wit)


def _slim(g: MetricGraph, mode: str, geodesic_cap: int) -> DeltaResult:
    d = g.distance_matrix()
    a = np.ascontiguousarray(d.array, dtype=np.float64)
    n = d.n
    member = _membership_tensor(a)
    if mode == "slim_intervals":
        gtab = _kernels.min_dist_to_interval(a, member)
        note = ("interval-set slimness: lower bound on the Rips constant, "
                "exact when geodesics are unique")
    else:
        # farthest-geodesic table: gtab[i,j,p] = max over geodesics c from i
        # to j of d(p, c).  The max over geodesic triangle choices factors
        # through this per-pair table because side choices are independent.
        gtab = np.zeros((n, n, n), dtype=np.float32)
        for i in range(n):
            for j in range(i + 1, n):
                try:
                    geods = enumerate_geodesics(g, d.vertices[i], d.vertices[j], cap=geodesic_cap)
                except GeodesicCapExceeded as exc:
                    return DeltaResult(None, mode, (), overflow=True,
                                       overflow_info=(exc.pair, exc.count, exc.cap))
                col = np.zeros(n, dtype=np.float32)
                for c in geods:
                    idx = [d.index[w] for w in c]
                    col = np.maximum(col, a[:, idx].min(axis=1).astype(np.float32))
                gtab[i, j] = col
                gtab[j, i] = col
        note = "exhaustive geodesic-triangle slimness"
    if n < 3:
        return DeltaResult(0.0, mode, (), note=note)
    val = float(_kernels.slim_triple_max(member, gtab))
    if val <= TOL:
        val = 0.0
    i, j, k, p = _kernels.slim_triple_witness(member, gtab, val)
    wit = ()
    if i >= 0:
        wit = (d.vertices[i], d.vertices[j], d.vertices[k], d.vertices[p])
    return DeltaResult(val, mode, wit, note=note)


def delta_hyperbolicity(obj, mode: str = "four_point", *, geodesic_cap: int = 2048) -> DeltaResult:
    """Hyperbolicity constant of a graph or distance matrix.

    four_point: minimal delta so the Gromov four-point condition holds for
    all quadruples, with a witnessing quadruple.  slim_intervals /
    slim_exhaustive: slimness of triangles measured against interval sets
    or against actual enumerated geodesics (cap enforced).
    """
    if mode == "four_point":
        d = obj.distance_matrix() if isinstance(obj, MetricGraph) else obj
        return _four_point(d)
    if mode in ("slim_intervals", "slim_exhaustive"):
        if not isinstance(obj, MetricGraph):
            raise TypeError(f"{mode} requires a MetricGraph")
        return _slim(obj, mode, geodesic_cap)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class RipsGraphResult:
    graph: MetricGraph
    connected: bool


def rips_graph(d: DistanceMatrix, R: float) -> RipsGraphResult:
    """Unit-edge graph on the same vertices, joining pairs at distance <= R.

    Disconnectedness is reported via the flag, not fatal.
    """
    if R < 0:
        raise ValueError("R must be nonnegative")
    edges = []
    a = d.array
    n = d.n
    for i in range(n):
        for j in range(i + 1, n):
            if a[i, j] <= R + TOL:
                edges.append((d.vertices[i], d.vertices[j], 1))
    g = MetricGraph(d.vertices, edges, allow_disconnected=True,
                    name=f"rips(R={R})")
    return RipsGraphResult(g, g.is_connected())


class NetPreconditionError(ValueError):
    def __init__(self, D, r, R):
        self.D, self.r, self.R = D, r, R
        super().__init__(
            f"subset is a {D}-net and the graph is {r}-quasi-path; "
            f"need R >= r + 2D = {r + 2 * D}, got R = {R}")


@dataclass(frozen=True)
class NetApproximation:
    graph: MetricGraph          # Z: full Rips subgraph on the net
    net_constant: float         # D: how coarse the net is
    step: float                 # r: the quasi-path step of the host
    R: float
    measured: tuple             # best multiplicative (K, eps=0) fit, both directions
    bound: tuple                # (K(r,R), eps(r,R)) from the approximation lemma
    bound_holds: bool


def net_approximation(g: MetricGraph, Y: Sequence[VertexId], R: float) -> NetApproximation:
    """Rips subgraph Z on a net Y, with measured distortion of Z -> g.

    The measured (K, eps) pair is compared against the approximation
    bound K = max(R, 2/r), eps = max(4R, 3) + 2 max(1, r).
    """
    dm = g.distance_matrix()
    Y = list(Y)
    if not Y or any(y not in g.index for y in Y):
        raise ValueError("net must be a nonempty subset of the host vertices")
    yidx = np.array([g.index[y] for y in Y])
    D = float(dm.array[:, yidx].min(axis=1).max())
    r = max(float(w) for _, _, w in g.edges) if g.edges else 1.0
    if R < r + 2 * D - TOL:
        raise NetPreconditionError(D, r, R)
    sub = dm.array[np.ix_(yidx, yidx)]
    edges = []
    for i in range(len(Y)):
        for j in range(i + 1, len(Y)):
            if sub[i, j] <= R + TOL:
                edges.append((Y[i], Y[j], 1))
    Z = MetricGraph(Y, edges, name=f"{g.name}|net", allow_disconnected=True)
    dz = Z.distance_matrix().array
    K_bound = max(R, 2.0 / r)
    eps_bound = max(4.0 * R, 3.0) + 2.0 * max(1.0, r)
    K_meas = 1.0
    ok = True
    for i in range(len(Y)):
        for j in range(i + 1, len(Y)):
            dg = sub[i, j]
            dzz = dz[i, j]
            if not np.isfinite(dzz):
                ok = False
                continue
            if dg > 0 and dzz > 0:
                K_meas = max(K_meas, dg / dzz, dzz / dg)
            ok = ok and dg <= K_bound * dzz + eps_bound + TOL
            ok = ok and dzz <= K_bound * dg + eps_bound + TOL
    return NetApproximation(Z, D, r, R, (K_meas, 0.0), (K_bound, eps_bound), ok)


def vertex_set_distance(d: DistanceMatrix, A: Iterable, B: Iterable) -> float:
    ai = [d.index[a] for a in A]
    bi = [d.index[b] for b in B]
    return float(d.array[np.ix_(ai, bi)].min())


def hausdorff(d: DistanceMatrix, A: Iterable, B: Iterable) -> float:
    """Hausdorff distance between two vertex sets (inf across components)."""
    ai = [d.index[a] for a in A]
    bi = [d.index[b] for b in B]
    if not ai or not bi:
        return float("inf")
    sub = d.array[np.ix_(ai, bi)]
    return float(max(sub.min(axis=1).max(), sub.min(axis=0).max()))


def path_length(g: MetricGraph, vertices: Sequence[VertexId]) -> float:
    dm = g.distance_matrix()
    total = 0.0
    for a, b in zip(vertices, vertices[1:]):
        step = min((w for x, w in g.neighbors(a) if x == b), default=None)
        if step is None:
            raise ValueError(f"{a} and {b} are not adjacent")
        total += step
    return total


def sample_quasigeodesic(g: MetricGraph, u, v, k: float, rng: np.random.Generator,
                         max_tries: int = 60):
    """A random discrete (k,k)-quasigeodesic edge path from u to v.

    Perturbs the canonical geodesic with bounded detours through random
    neighbors, then verifies the two-sided quasigeodesic inequality;
    retries until a valid sample appears (the unperturbed geodesic always
    qualifies, so this terminates).
    """
    dm = g.distance_matrix()
    base = list(canonical_geodesic(g, u, v).vertices)

    def is_kqg(path):
        pos = [0.0]
        for a, b in zip(path, path[1:]):
            pos.append(pos[-1] + min(w for x, w in g.neighbors(a) if x == b))
        for i in range(len(path)):
            for j in range(i + 1, len(path)):
                s = pos[j] - pos[i]
                t = dm.d(path[i], path[j])
                if s > k * t + k + TOL:
                    return False
        return True

    for _ in range(max_tries):
        path = []
        for w in base:
            path.append(w)
            if rng.random() < 0.35:
                nbrs = [x for x, _ in g.neighbors(w)]
                x = nbrs[int(rng.integers(len(nbrs)))]
                path.extend([x, w])
        if is_kqg(path):
            return tuple(path)
    return tuple(base)


def morse_bound(k: float, delta: float) -> float:
    """Stability bound 92 k^2 (k + 3 delta) for k-quasigeodesics."""
    return 92.0 * k * k * (k + 3.0 * delta)
