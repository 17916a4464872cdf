"""Numba kernels for the quartic-time hyperbolicity scans.

Everything here works on plain numpy arrays indexed by vertex position;
id bookkeeping stays in metric_core.
"""

import warnings

import numpy as np

with warnings.catch_warnings():
    # the sandbox TBB is older than numba wants; the fallback layer is fine
    warnings.simplefilter("ignore")
    from numba import njit, prange
    from numba.core.errors import NumbaWarning

warnings.filterwarnings("ignore", category=NumbaWarning)


@njit(cache=True, parallel=True)
def four_point_max_defect(d):
    """max over quadruples of (largest pairing - second pairing)/2."""
    n = d.shape[0]
    best = 0.0
    for i in prange(n):
        local = 0.0
        for j in range(i + 1, n):
            dij = d[i, j]
            for k in range(j + 1, n):
                dik = d[i, k]
                djk = d[j, k]
                for l in range(k + 1, n):
                    s1 = dij + d[k, l]
                    s2 = dik + d[j, l]
                    s3 = d[i, l] + djk
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s2 < s3:
                        s2 = s3
                        if s1 < s2:
                            s1, s2 = s2, s1
                    v = 0.5 * (s1 - s2)
                    if v > local:
                        local = v
        best = max(best, local)
    return best


@njit(cache=True)
def four_point_witness(d, target):
    """First quadruple (lexicographic) whose defect reaches target - 1e-12."""
    n = d.shape[0]
    thr = target - 1e-12
    for i in range(n):
        for j in range(i + 1, n):
            dij = d[i, j]
            for k in range(j + 1, n):
                dik = d[i, k]
                djk = d[j, k]
                for l in range(k + 1, n):
                    s1 = dij + d[k, l]
                    s2 = dik + d[j, l]
                    s3 = d[i, l] + djk
                    if s1 < s2:
                        s1, s2 = s2, s1
                    if s2 < s3:
                        s2 = s3
                        if s1 < s2:
                            s1, s2 = s2, s1
                    if 0.5 * (s1 - s2) >= thr:
                        return i, j, k, l
    return -1, -1, -1, -1


@njit(cache=True, parallel=True)
def min_dist_to_interval(d, member):
    """DI[i,j,p] = min over q in the interval of (i,j) of d[p,q].

    member[i,j,q] marks interval membership; member[i,j] is symmetric in i,j.
    """
    n = d.shape[0]
    out = np.empty((n, n, n), dtype=np.float32)
    for i in prange(n):
        for j in range(i, n):
            for p in range(n):
                m = np.inf
                for q in range(n):
                    if member[i, j, q] and d[p, q] < m:
                        m = d[p, q]
                out[i, j, p] = m
                out[j, i, p] = m
    return out


@njit(cache=True, parallel=True)
def slim_triple_max(member, gtab):
    """max over triples {i,j,k}, sides and p on the side, of the gap to the
    union of the other two sides.

    gtab[a,b,p] is the relevant distance from p to side (a,b): the distance
    to the interval set (interval mode) or the farthest-geodesic distance
    (exhaustive mode).  gtab must be symmetric in a,b.
    """
    n = member.shape[0]
    best = 0.0
    for i in prange(n):
        local = 0.0
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                # side (i,j) against (j,k), (k,i)
                for p in range(n):
                    if member[i, j, p]:
                        v = min(gtab[j, k, p], gtab[k, i, p])
                        if v > local:
                            local = v
                # side (j,k) against (k,i), (i,j)
                for p in range(n):
                    if member[j, k, p]:
                        v = min(gtab[k, i, p], gtab[i, j, p])
                        if v > local:
                            local = v
                # side (k,i) against (i,j), (j,k)
                for p in range(n):
                    if member[k, i, p]:
                        v = min(gtab[i, j, p], gtab[j, k, p])
                        if v > local:
                            local = v
        best = max(best, local)
    return best


@njit(cache=True)
def slim_triple_witness(member, gtab, target):
    """First (i,j,k,p) achieving slim_triple_max up to 1e-9 slack
    (gtab is float32)."""
    n = member.shape[0]
    thr = target - 1e-9
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                for p in range(n):
                    if member[i, j, p] and min(gtab[j, k, p], gtab[k, i, p]) >= thr:
                        return i, j, k, p
                    if member[j, k, p] and min(gtab[k, i, p], gtab[i, j, p]) >= thr:
                        return j, k, i, p
                    if member[k, i, p] and min(gtab[i, j, p], gtab[j, k, p]) >= thr:
                        return k, i, j, p
    return -1, -1, -1, -1
