"""Dynamic front-ends: naive-dynamic, delta-screening, dynamic frontier.

Each front-end takes the post-update snapshot, the applied batch, and the
previous (communities, K, Sigma); it returns new communities plus the
updated K and Sigma so they can be carried into the next batch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .errors import GraphIntegrityError
from .graph import BatchUpdate, Graph
from .louvain import (
    COMMUNITY_DTYPE,
    AuxWeights,
    HookSet,
    LouvainParams,
    check_aux,
    check_membership,
    louvain,
)
from .parallel import use_workers


@dataclass
class DynamicStats:
    affected_count: int
    iterations: int
    passes: int
    elapsed: float


@dataclass
class DynamicResult:
    communities: np.ndarray
    aux: AuxWeights
    stats: DynamicStats


# ---------------------------------------------------------------------------
# Auxiliary weights


@njit(parallel=True, cache=True)
def _update_weights_kernel(del_src, del_w, ins_src, ins_w, c, k, sigma, nworkers):
    n = k.shape[0]
    for t in prange(nworkers):
        lo = t * n // nworkers
        hi = (t + 1) * n // nworkers
        for x in range(del_src.shape[0]):
            i = del_src[x]
            ci = c[i]
            if lo <= i < hi:
                k[i] -= del_w[x]
            if lo <= ci < hi:
                sigma[ci] -= del_w[x]
        for x in range(ins_src.shape[0]):
            i = ins_src[x]
            ci = c[i]
            if lo <= i < hi:
                k[i] += ins_w[x]
            if lo <= ci < hi:
                sigma[ci] += ins_w[x]


def update_weights(g_new: Graph, b: BatchUpdate, c_prev, aux_prev: AuxWeights, workers=None) -> AuxWeights:
    """K and Sigma for ``g_new`` obtained by patching ``aux_prev`` with the batch.

    Every worker scans the whole batch but only touches the vertex ids and
    community ids in its own contiguous range.
    """
    c_prev = check_membership(g_new, c_prev)
    check_aux(g_new, aux_prev)
    k = aux_prev.vertex_weight.astype(np.float64, copy=True)
    sigma = aux_prev.community_weight.astype(np.float64, copy=True)
    if b.is_empty:
        return AuxWeights(k, sigma)
    with use_workers(workers) as w:
        _update_weights_kernel(b.del_src, b.del_w, b.ins_src, b.ins_w, c_prev, k, sigma, w)
    # tolerate float noise when a vertex loses its last edge
    eps = 1e-9 * max(1.0, g_new.total_weight)
    if (len(k) and k.min() < -eps) or (len(sigma) and sigma.min() < -eps):
        raise GraphIntegrityError("negative weight after update; batch and auxiliary state disagree")
    np.maximum(k, 0.0, out=k)
    np.maximum(sigma, 0.0, out=sigma)
    return AuxWeights(k, sigma)


# ---------------------------------------------------------------------------
# Initial marking


def frontier_initial_affected(b: BatchUpdate, c_prev, n: int) -> np.ndarray:
    """Flags for endpoints of intra-community deletions and cross-community insertions.

    Only the source of each arc is flagged; the symmetric batch supplies the
    reverse arc for the other endpoint.
    """
    c_prev = np.asarray(c_prev)
    flags = np.zeros(n, dtype=np.uint8)
    same = c_prev[b.del_src] == c_prev[b.del_dst]
    flags[b.del_src[same]] = 1
    cross = c_prev[b.ins_src] != c_prev[b.ins_dst]
    flags[b.ins_src[cross]] = 1
    return flags


@njit(cache=True)
def _screening_kernel(offsets, nbrs, c, k, sigma, m, del_src, del_dst, ins_src, ins_dst, ins_w,
                      dv, de, dc, hw, hk):
    n = c.shape[0]
    for x in range(del_src.shape[0]):
        i = del_src[x]
        j = del_dst[x]
        if c[i] == c[j]:
            dv[i] = 1
            de[i] = 1
            dc[c[j]] = 1
    # insertions are sorted by source; each run of one source is a group
    x = 0
    nins = ins_src.shape[0]
    while x < nins:
        i = ins_src[x]
        y = x
        nk = 0
        while y < nins and ins_src[y] == i:
            cj = c[ins_dst[y]]
            if cj != c[i]:
                if hw[cj] == 0.0:
                    hk[nk] = cj
                    nk += 1
                hw[cj] += ins_w[y]
            y += 1
        if nk > 0:
            d = c[i]
            ki = k[i]
            best = -1
            best_dq = -np.inf
            best_w = 0.0
            for z in range(nk):
                cc = hk[z]
                dq = hw[cc] / m - ki / (2.0 * m * m) * (ki + sigma[cc] - sigma[d])
                if (dq > best_dq or (dq == best_dq and (hw[cc] > best_w
                                     or (hw[cc] == best_w and cc < best)))):
                    best = cc
                    best_dq = dq
                    best_w = hw[cc]
            for z in range(nk):
                hw[hk[z]] = 0.0
            dv[i] = 1
            de[i] = 1
            dc[best] = 1
        x = y
    for i in range(n):
        if de[i]:
            for e in range(offsets[i], offsets[i + 1]):
                dv[nbrs[e]] = 1
        if dc[c[i]]:
            dv[i] = 1


@dataclass
class ScreeningFlags:
    vertex: np.ndarray
    neighbors: np.ndarray
    community: np.ndarray


def screening_affected(g_new: Graph, b: BatchUpdate, c_prev, aux: AuxWeights) -> ScreeningFlags:
    """Delta-screening flags.

    The target community for a source's cross-community insertions is the
    one with the highest modularity gain using only the inserted weights;
    ties go to the larger inserted weight, then the lower community id.
    """
    n = g_new.vertex_count
    c_prev = check_membership(g_new, c_prev)
    check_aux(g_new, aux)
    s = b.sorted_by_source()
    dv = np.zeros(n, dtype=np.uint8)
    de = np.zeros(n, dtype=np.uint8)
    dc = np.zeros(n, dtype=np.uint8)
    m = g_new.total_weight / 2.0
    if m <= 0:
        return ScreeningFlags(dv, de, dc)
    hw = np.zeros(n, dtype=np.float64)
    hk = np.empty(n, dtype=COMMUNITY_DTYPE)
    _screening_kernel(g_new.offsets, g_new.neighbors, c_prev, aux.vertex_weight, aux.community_weight,
                      m, s.del_src, s.del_dst, s.ins_src, s.ins_dst, s.ins_w, dv, de, dc, hw, hk)
    return ScreeningFlags(dv, de, dc)


# ---------------------------------------------------------------------------
# Front-ends


def _finish(res, aux, affected_count, t0) -> DynamicResult:
    elapsed = time.perf_counter() - t0
    out_aux = AuxWeights(aux.vertex_weight, res.community_weight)
    return DynamicResult(res.membership, out_aux,
                         DynamicStats(int(affected_count), res.iterations, res.passes, elapsed))


def naive_dynamic(g_new: Graph, b: BatchUpdate, c_prev, aux_prev: AuxWeights,
                  params: LouvainParams = LouvainParams(), workers=None) -> DynamicResult:
    """Process every vertex, starting from the previous communities."""
    t0 = time.perf_counter()
    aux = update_weights(g_new, b, c_prev, aux_prev, workers)
    res = louvain(g_new, c_prev, aux, HookSet.all_true(), params, workers)
    return _finish(res, aux, g_new.vertex_count, t0)


def delta_screening(g_new: Graph, b: BatchUpdate, c_prev, aux_prev: AuxWeights,
                    params: LouvainParams = LouvainParams(), workers=None) -> DynamicResult:
    """Process only the region flagged by delta-screening (first pass)."""
    t0 = time.perf_counter()
    aux = update_weights(g_new, b, c_prev, aux_prev, workers)
    flags = screening_affected(g_new, b, c_prev, aux)
    hooks = HookSet(affected=flags.vertex, affected_range=flags.vertex)
    res = louvain(g_new, c_prev, aux, hooks, params, workers)
    return _finish(res, aux, np.count_nonzero(flags.vertex), t0)


def dynamic_frontier(g_new: Graph, b: BatchUpdate, c_prev, aux_prev: AuxWeights,
                     params: LouvainParams = LouvainParams(), workers=None,
                     trace=None) -> DynamicResult:
    """Start from the batch endpoints and grow the frontier on every migration.

    ``stats.affected_count`` counts every vertex flagged at any point.
    """
    t0 = time.perf_counter()
    flags = frontier_initial_affected(b, c_prev, g_new.vertex_count)
    aux = update_weights(g_new, b, c_prev, aux_prev, workers)
    hooks = HookSet(affected=flags, affected_range=None, mark_on_change=True)
    res = louvain(g_new, c_prev, aux, hooks, params, workers, trace=trace)
    return _finish(res, aux, np.count_nonzero(flags), t0)


def static_louvain(g: Graph, params: LouvainParams = LouvainParams(), workers=None) -> DynamicResult:
    """Louvain from singleton communities with K and Sigma computed from scratch."""
    t0 = time.perf_counter()
    c0 = np.arange(g.vertex_count, dtype=COMMUNITY_DTYPE)
    with use_workers(workers):
        k = _weighted_degrees(g.offsets, g.weights)
    aux = AuxWeights(k, k.copy())
    res = louvain(g, c0, aux, HookSet.all_true(), params, workers)
    return _finish(res, aux, g.vertex_count, t0)


@njit(parallel=True, cache=True)
def _weighted_degrees(offsets, wts):
    n = offsets.shape[0] - 1
    k = np.zeros(n, dtype=np.float64)
    for i in prange(n):
        s = 0.0
        for e in range(offsets[i], offsets[i + 1]):
            s += wts[e]
        k[i] = s
    return k


APPROACHES = {
    "nd": naive_dynamic,
    "ds": delta_screening,
    "df": dynamic_frontier,
}
