"""Dynamic-supporting parallel Louvain: local moving, aggregation, modularity.

The engine is driven by a :class:`HookSet` that says which vertices start
out affected, which may be processed at all, and whether a migration flags
the neighbors of the migrating vertex. Hooks only apply to the first pass;
later passes run on super-vertex graphs and process everything.

Kernels are compiled with numba. One worker uses a sequential kernel (fully
deterministic); more workers use a ``prange`` kernel with per-thread scratch
tables, where community weights are rebuilt exactly at the end of every
iteration because numba offers no atomic float updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numba
import numpy as np
from numba import njit, prange

from .errors import ContractViolation, UndefinedMetricError
from .graph import OFFSET_DTYPE, VERTEX_DTYPE, Graph
from .parallel import use_workers

COMMUNITY_DTYPE = np.int32


@dataclass(frozen=True)
class LouvainParams:
    tolerance: float = 1e-2
    tolerance_drop: float = 10.0
    max_iterations: int = 20
    max_passes: int = 10
    aggregation_tolerance: float = 1.0

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if not self.tolerance_drop >= 1:
            raise ValueError("tolerance_drop must be >= 1")
        if not 0 < self.aggregation_tolerance <= 1:
            raise ValueError("aggregation_tolerance must lie in (0, 1]")
        if self.max_iterations < 1 or self.max_passes < 1:
            raise ValueError("max_iterations and max_passes must be >= 1")


@dataclass
class AuxWeights:
    """Weighted degree K per vertex and total weight Sigma per community id."""

    vertex_weight: np.ndarray
    community_weight: np.ndarray

    @classmethod
    def from_scratch(cls, g: Graph, membership) -> "AuxWeights":
        k = g.weighted_degrees()
        sigma = np.bincount(np.asarray(membership), weights=k, minlength=g.vertex_count)
        return cls(k, sigma)

    def copy(self) -> "AuxWeights":
        return AuxWeights(self.vertex_weight.copy(), self.community_weight.copy())

    def allclose(self, other: "AuxWeights", rtol=1e-9) -> bool:
        def close(a, b):
            scale = max(1.0, float(np.max(np.abs(b))) if len(b) else 1.0)
            return a.shape == b.shape and np.allclose(a, b, rtol=rtol, atol=rtol * scale)

        return close(self.vertex_weight, other.vertex_weight) and close(
            self.community_weight, other.community_weight
        )


@dataclass
class HookSet:
    """Affected-vertex hooks consulted during the first pass.

    ``affected`` is a uint8 flag per vertex (None means every vertex);
    ``affected_range`` restricts which vertices may be processed (None means
    all). With ``mark_on_change`` a migrating vertex sets ``affected`` on
    all of its neighbors.
    """

    affected: Optional[np.ndarray] = None
    affected_range: Optional[np.ndarray] = None
    mark_on_change: bool = False

    @classmethod
    def all_true(cls) -> "HookSet":
        return cls()

    def is_affected(self, i: int) -> bool:
        return True if self.affected is None else bool(self.affected[i])

    def in_affected_range(self, i: int) -> bool:
        return True if self.affected_range is None else bool(self.affected_range[i])

    def on_change(self, g: Graph, i: int) -> None:
        if self.mark_on_change and self.affected is not None:
            nbrs, _ = g.edges_of(i)
            self.affected[nbrs] = 1


@dataclass
class MoveTrace:
    """Per-move log of a sequential local-moving run (for inspection/tests)."""

    moves: List[Tuple[int, int, int, int]] = field(default_factory=list)  # (iteration, vertex, from, to)
    first_processed: Optional[np.ndarray] = None  # iteration a vertex was first processed, -1 if never

    def processed_in(self, iteration: int) -> np.ndarray:
        return np.flatnonzero(self.first_processed == iteration)


@dataclass
class LouvainResult:
    membership: np.ndarray
    community_weight: np.ndarray
    iterations: int
    passes: int


# ---------------------------------------------------------------------------
# Metrics


@njit(cache=True)
def _modularity_kernel(offsets, nbrs, wts, c, two_m):
    n = c.shape[0]
    inner = np.zeros(n, dtype=np.float64)
    total = np.zeros(n, dtype=np.float64)
    for i in range(n):
        ci = c[i]
        for e in range(offsets[i], offsets[i + 1]):
            w = np.float64(wts[e])
            total[ci] += w
            if c[nbrs[e]] == ci:
                inner[ci] += w
    q = 0.0
    for k in range(n):
        if total[k] > 0:
            q += inner[k] / two_m - (total[k] / two_m) ** 2
    return q


def check_membership(g: Graph, c: np.ndarray) -> np.ndarray:
    c = np.ascontiguousarray(c, dtype=COMMUNITY_DTYPE)
    if c.shape != (g.vertex_count,):
        raise ContractViolation(f"membership has length {len(c)}, expected {g.vertex_count}")
    if len(c) and (c.min() < 0 or c.max() >= g.vertex_count):
        raise ContractViolation("community ids must lie in [0, N)")
    return c


def check_aux(g: Graph, aux: "AuxWeights") -> None:
    n = g.vertex_count
    if len(aux.vertex_weight) != n or len(aux.community_weight) < n:
        raise ContractViolation("auxiliary weights must cover every vertex and community id")


def modularity(g: Graph, c) -> float:
    """Newman modularity of membership ``c`` on ``g``."""
    if g.total_weight <= 0:
        raise UndefinedMetricError("modularity is undefined for a graph without edges")
    c = check_membership(g, c)
    return float(_modularity_kernel(g.offsets, g.neighbors, g.weights, c, g.total_weight))


def delta_modularity(k_to_c, k_to_d, k_i, sigma_c, sigma_d, m) -> float:
    """Modularity change from moving vertex i out of community d into c.

    ``sigma_d`` is d's total weight with i still counted in it and
    ``sigma_c`` is c's total weight without i, so the value is exact.
    Staying put corresponds to ``sigma_c = sigma_d - k_i`` and gives 0.
    """
    return (k_to_c - k_to_d) / m - k_i / (2.0 * m * m) * (k_i + sigma_c - sigma_d)


def scan_communities(g: Graph, c, i: int, include_self: bool = False) -> Dict[int, float]:
    """Total arc weight from ``i`` into each linked community."""
    nbrs, wts = g.edges_of(i)
    out: Dict[int, float] = {}
    for j, w in zip(nbrs.tolist(), wts.tolist()):
        if include_self or j != i:
            k = int(c[j])
            out[k] = out.get(k, 0.0) + w
    return out


# ---------------------------------------------------------------------------
# Local-moving phase


@njit(cache=True)
def _best_move(i, offsets, nbrs, wts, c, k, sigma, m, hw, hk):
    nk = 0
    for e in range(offsets[i], offsets[i + 1]):
        j = nbrs[e]
        if j == i:
            continue
        cj = c[j]
        if hw[cj] == 0.0:
            hk[nk] = cj
            nk += 1
        hw[cj] += wts[e]
    d = c[i]
    ki = k[i]
    kd = hw[d]
    sd = sigma[d]
    scale = ki / (2.0 * m * m)
    best_c = d
    best_dq = 0.0
    for x in range(nk):
        cc = hk[x]
        if cc != d:
            dq = (hw[cc] - kd) / m - scale * (ki + sigma[cc] - sd)
            # equal gains go to the lowest community id
            if dq > best_dq or (dq == best_dq and best_c != d and cc < best_c):
                best_dq = dq
                best_c = cc
    for x in range(nk):
        hw[hk[x]] = 0.0
    return best_c, best_dq


@njit(cache=True)
def _move_serial(offsets, nbrs, wts, c, k, sigma, ready, use_range, range_flags,
                 mark_flags, flags, tol, max_iter, m, hw, hk, trace, first_proc):
    n = c.shape[0]
    ntr = 0
    tracing = first_proc.shape[0] > 0
    for it in range(max_iter):
        dq_total = 0.0
        for i in range(n):
            r = ready[i]
            if r < 0 or r > it:
                continue
            ready[i] = -1
            if tracing and first_proc[i] < 0:
                first_proc[i] = it
            if use_range and range_flags[i] == 0:
                continue
            best, dq = _best_move(i, offsets, nbrs, wts, c, k, sigma, m, hw, hk)
            d = c[i]
            if best == d:
                continue
            sigma[d] -= k[i]
            sigma[best] += k[i]
            c[i] = best
            dq_total += dq
            for e in range(offsets[i], offsets[i + 1]):
                j = nbrs[e]
                if ready[j] < 0:
                    ready[j] = it + 1
                if mark_flags:
                    flags[j] = 1
            if tracing and ntr < trace.shape[0]:
                trace[ntr, 0] = it
                trace[ntr, 1] = i
                trace[ntr, 2] = d
                trace[ntr, 3] = best
                ntr += 1
        if dq_total <= tol:
            return it + 1, ntr
    return max_iter, ntr


@njit(parallel=True, cache=True)
def _move_parallel(offsets, nbrs, wts, c, k, sigma, ready, use_range, range_flags,
                   mark_flags, flags, tol, max_iter, m, hw2, hk2, moved, sigma_start):
    n = c.shape[0]
    nthreads = hw2.shape[0]
    dq_t = np.zeros(nthreads, dtype=np.float64)
    for it in range(max_iter):
        sigma_start[:] = sigma
        dq_t[:] = 0.0
        for i in prange(n):
            r = ready[i]
            if r < 0 or r > it:
                continue
            ready[i] = -1
            if use_range and range_flags[i] == 0:
                continue
            t = numba.get_thread_id()
            best, dq = _best_move(i, offsets, nbrs, wts, c, k, sigma, m, hw2[t], hk2[t])
            d = c[i]
            if best == d:
                continue
            sigma[d] -= k[i]
            sigma[best] += k[i]
            c[i] = best
            moved[i] = d
            dq_t[t] += dq
            for e in range(offsets[i], offsets[i + 1]):
                j = nbrs[e]
                if ready[j] < 0:
                    ready[j] = it + 1
                if mark_flags:
                    flags[j] = 1
        # racy sigma updates are replaced by an exact replay of this iteration's moves
        sigma[:] = sigma_start
        for i in range(n):
            d = moved[i]
            if d >= 0:
                sigma[d] -= k[i]
                sigma[c[i]] += k[i]
                moved[i] = -1
        if dq_t.sum() <= tol:
            return it + 1
    return max_iter


_EMPTY_U8 = np.zeros(0, dtype=np.uint8)
_EMPTY_TRACE = np.zeros((0, 4), dtype=np.int64)
_EMPTY_I32 = np.zeros(0, dtype=np.int32)


def _run_move(g: Graph, c, k, sigma, ready, hooks: HookSet, tol, max_iter, trace: Optional[MoveTrace]):
    n = g.vertex_count
    m = g.total_weight / 2.0
    if m <= 0:
        return 1
    use_range = hooks.affected_range is not None
    range_flags = hooks.affected_range if use_range else _EMPTY_U8
    mark = bool(hooks.mark_on_change and hooks.affected is not None)
    flags = hooks.affected if mark else _EMPTY_U8
    nthreads = numba.get_num_threads()
    if nthreads == 1 or trace is not None:
        hw = np.zeros(n, dtype=np.float64)
        hk = np.empty(n, dtype=COMMUNITY_DTYPE)
        if trace is not None:
            buf = np.zeros((n * max_iter + 1, 4), dtype=np.int64)
            first = np.full(n, -1, dtype=np.int32)
        else:
            buf, first = _EMPTY_TRACE, _EMPTY_I32
        iters, ntr = _move_serial(g.offsets, g.neighbors, g.weights, c, k, sigma, ready,
                                  use_range, range_flags, mark, flags, tol, max_iter, m,
                                  hw, hk, buf, first)
        if trace is not None:
            trace.moves.extend(tuple(int(x) for x in row) for row in buf[:ntr])
            trace.first_processed = first
        return int(iters)
    hw2 = np.zeros((nthreads, n), dtype=np.float64)
    hk2 = np.empty((nthreads, n), dtype=COMMUNITY_DTYPE)
    moved = np.full(n, -1, dtype=COMMUNITY_DTYPE)
    sigma_start = np.empty_like(sigma)
    return int(_move_parallel(g.offsets, g.neighbors, g.weights, c, k, sigma, ready,
                              use_range, range_flags, mark, flags, tol, max_iter, m,
                              hw2, hk2, moved, sigma_start))


def louvain_move(g: Graph, c: np.ndarray, aux: AuxWeights, hooks: HookSet, params: LouvainParams,
                 unprocessed: np.ndarray, tolerance: Optional[float] = None,
                 trace: Optional[MoveTrace] = None, workers=None) -> int:
    """Local-moving phase; updates ``c``, ``aux.community_weight`` and ``unprocessed`` in place.

    A vertex re-marked by a migrating neighbor becomes eligible in the next
    iteration. Returns the number of iterations performed.
    """
    if c.dtype != COMMUNITY_DTYPE or not c.flags.c_contiguous:
        raise ContractViolation("membership must be a contiguous int32 array")
    check_membership(g, c)
    check_aux(g, aux)
    ready = np.where(np.asarray(unprocessed) != 0, 0, -1).astype(np.int32)
    tol = params.tolerance if tolerance is None else tolerance
    with use_workers(workers):
        iters = _run_move(g, c, aux.vertex_weight, aux.community_weight, ready, hooks,
                          tol, params.max_iterations, trace)
    unprocessed[:] = ready >= 0
    return iters


# ---------------------------------------------------------------------------
# Aggregation phase


@njit(parallel=True, cache=True)
def _aggregate_kernel(offsets, nbrs, wts, c, ncomm, hw2, hk2):
    n = c.shape[0]
    # community -> member vertices (CSR)
    coff = np.zeros(ncomm + 1, dtype=np.int64)
    for i in range(n):
        coff[c[i] + 1] += 1
    for x in range(ncomm):
        coff[x + 1] += coff[x]
    fill = coff[:-1].copy()
    cverts = np.empty(n, dtype=np.int32)
    for i in range(n):
        cverts[fill[c[i]]] = i
        fill[c[i]] += 1
    # super-vertex rows over-allocated by community total degree
    yoff = np.zeros(ncomm + 1, dtype=np.int64)
    for i in range(n):
        yoff[c[i] + 1] += offsets[i + 1] - offsets[i]
    for x in range(ncomm):
        yoff[x + 1] += yoff[x]
    ynbr = np.empty(yoff[ncomm], dtype=np.int32)
    ywt = np.empty(yoff[ncomm], dtype=np.float64)
    ycnt = np.zeros(ncomm, dtype=np.int64)
    for cc in prange(ncomm):
        if coff[cc + 1] == coff[cc]:
            continue
        t = numba.get_thread_id()
        hw = hw2[t]
        hk = hk2[t]
        nk = 0
        for p in range(coff[cc], coff[cc + 1]):
            i = cverts[p]
            for e in range(offsets[i], offsets[i + 1]):
                d = c[nbrs[e]]
                if hw[d] == 0.0:
                    hk[nk] = d
                    nk += 1
                hw[d] += wts[e]
        keys = np.sort(hk[:nk])
        base = yoff[cc]
        for x in range(nk):
            d = keys[x]
            ynbr[base + x] = d
            ywt[base + x] = hw[d]
            hw[d] = 0.0
        ycnt[cc] = nk
    # compact the holes left by over-allocation
    off = np.zeros(ncomm + 1, dtype=np.int64)
    for x in range(ncomm):
        off[x + 1] = off[x] + ycnt[x]
    out_n = np.empty(off[ncomm], dtype=np.int32)
    out_w = np.empty(off[ncomm], dtype=np.float64)
    for cc in prange(ncomm):
        src = yoff[cc]
        dst = off[cc]
        for x in range(ycnt[cc]):
            out_n[dst + x] = ynbr[src + x]
            out_w[dst + x] = ywt[src + x]
    return off, out_n, out_w


def aggregate_graph(g: Graph, c, community_count: Optional[int] = None, workers=None) -> Graph:
    """Collapse each community of ``c`` into a super-vertex.

    ``c`` must use contiguous ids ``[0, |communities|)``. Intra-community
    weight (both directions) becomes a single self-loop arc.
    """
    c = np.ascontiguousarray(c, dtype=COMMUNITY_DTYPE)
    if len(c) != g.vertex_count:
        raise ContractViolation("membership length differs from vertex count")
    ncomm = int(c.max()) + 1 if len(c) else 0
    if community_count is not None and community_count != ncomm:
        raise ContractViolation("community_count does not match membership")
    if len(c) and (c.min() < 0 or np.count_nonzero(np.bincount(c, minlength=ncomm)) != ncomm):
        raise ContractViolation("community ids must be contiguous; renumber first")
    with use_workers(workers):
        t = numba.get_num_threads()
        hw2 = np.zeros((t, max(ncomm, 1)), dtype=np.float64)
        hk2 = np.empty((t, max(ncomm, 1)), dtype=np.int32)
        off, nb, wt = _aggregate_kernel(g.offsets, g.neighbors, g.weights, c, ncomm, hw2, hk2)
    return Graph(ncomm, off.astype(OFFSET_DTYPE), nb.astype(VERTEX_DTYPE), wt, g.total_weight)


# ---------------------------------------------------------------------------
# Dendrogram helpers


@njit(cache=True)
def _renumber_kernel(c):
    n = c.shape[0]
    hi = 0
    for i in range(n):
        hi = max(hi, c[i] + 1)
    mapping = np.full(max(hi, 1), -1, dtype=np.int32)
    out = np.empty(n, dtype=np.int32)
    nxt = 0
    for i in range(n):
        x = c[i]
        if mapping[x] < 0:
            mapping[x] = nxt
            nxt += 1
        out[i] = mapping[x]
    return out, nxt


def renumber_communities(c) -> Tuple[np.ndarray, int]:
    """Map occupied ids to ``[0, count)`` in order of first appearance."""
    c = np.ascontiguousarray(c, dtype=COMMUNITY_DTYPE)
    if len(c) and c.min() < 0:
        raise ContractViolation("community ids must be non-negative")
    out, count = _renumber_kernel(c)
    return out, int(count)


def lookup_dendrogram(top, nxt) -> np.ndarray:
    """Compose two dendrogram levels: ``result[i] = nxt[top[i]]``."""
    top = np.asarray(top)
    nxt = np.asarray(nxt, dtype=COMMUNITY_DTYPE)
    if len(top) and (top.min() < 0 or top.max() >= len(nxt)):
        raise ContractViolation("dendrogram id out of range for the next level")
    return nxt[top]


def community_count(c) -> int:
    c = np.asarray(c)
    if len(c) == 0:
        return 0
    return int(np.count_nonzero(np.bincount(c)))


# ---------------------------------------------------------------------------
# Main loop


def louvain(g: Graph, c_prev, aux: AuxWeights, hooks: HookSet, params: LouvainParams,
            workers=None, trace: Optional[MoveTrace] = None) -> LouvainResult:
    """Run Louvain passes starting from ``c_prev`` with the given hooks.

    ``aux`` is not modified. The returned ``community_weight`` matches the
    returned membership (indexed by community id, length N).
    """
    n = g.vertex_count
    c_prev = check_membership(g, c_prev)
    check_aux(g, aux)
    with use_workers(workers):
        ready = np.full(n, -1, dtype=np.int32)
        if hooks.affected is None:
            ready[:] = 0
        else:
            ready[np.asarray(hooks.affected) != 0] = 0
        top = np.arange(n, dtype=COMMUNITY_DTYPE)
        gp = g
        cp = c_prev.copy()
        kp = np.array(aux.vertex_weight, dtype=np.float64, copy=True)
        sp = np.array(aux.community_weight, dtype=np.float64, copy=True)
        tol = params.tolerance
        iterations = passes = 0
        for lp in range(params.max_passes):
            pass_hooks = hooks if lp == 0 else HookSet.all_true()
            li = _run_move(gp, cp, kp, sp, ready, pass_hooks, tol, params.max_iterations,
                           trace if lp == 0 else None)
            iterations += li
            passes += 1
            if li <= 1:
                break
            ncomm = community_count(cp)
            if ncomm / gp.vertex_count > params.aggregation_tolerance:
                break
            cp, ncomm = renumber_communities(cp)
            top = lookup_dendrogram(top, cp)
            gp = aggregate_graph(gp, cp, ncomm, workers=numba.get_num_threads())
            kp = gp.weighted_degrees()
            sp = kp.copy()
            ready = np.zeros(ncomm, dtype=np.int32)
            cp = np.arange(ncomm, dtype=COMMUNITY_DTYPE)
            tol /= params.tolerance_drop
        membership = lookup_dendrogram(top, cp)
    sigma = np.zeros(n, dtype=np.float64)
    sigma[: len(sp)] = sp
    return LouvainResult(membership, sigma, iterations, passes)
