"""CSR storage for undirected weighted graphs, batch updates, and file loaders.

Every undirected edge {i, j} is stored as two arcs (i, j, w) and (j, i, w);
a self-loop (i, i, w) is stored once. Rows are kept sorted by neighbor id,
which lets membership tests run as a binary search over ``i * N + j`` keys.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import GraphBoundsError, GraphFormatError, GraphIntegrityError

log = logging.getLogger(__name__)

VERTEX_DTYPE = np.int32
OFFSET_DTYPE = np.int64
WEIGHT_DTYPE = np.float32


@dataclass(frozen=True, eq=False)
class Graph:
    """Immutable CSR adjacency of an undirected weighted graph.

    ``total_weight`` is the sum over all stored arcs (2m for a graph
    without self-loops).
    """

    vertex_count: int
    offsets: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray
    total_weight: float = field(default=-1.0)

    def __post_init__(self):
        if self.total_weight < 0:
            object.__setattr__(self, "total_weight", float(np.sum(self.weights, dtype=np.float64)))

    @property
    def arc_count(self) -> int:
        return int(self.offsets[-1])

    @property
    def edge_count(self) -> int:
        """Number of undirected edges; a self-loop counts once."""
        src = self.sources()
        loops = int(np.count_nonzero(src == self.neighbors))
        return (self.arc_count - loops) // 2 + loops

    @property
    def m(self) -> float:
        return self.total_weight / 2.0

    def sources(self) -> np.ndarray:
        """Source vertex of every stored arc, aligned with ``neighbors``."""
        return np.repeat(np.arange(self.vertex_count, dtype=VERTEX_DTYPE), np.diff(self.offsets))

    def arc_keys(self) -> np.ndarray:
        """Sorted int64 keys ``src * N + dst`` for every arc."""
        return self.sources().astype(np.int64) * self.vertex_count + self.neighbors

    def edges_of(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        _check_vertex(self, i)
        lo, hi = self.offsets[i], self.offsets[i + 1]
        return self.neighbors[lo:hi], self.weights[lo:hi]

    def degree(self, i: int) -> int:
        _check_vertex(self, i)
        return int(self.offsets[i + 1] - self.offsets[i])

    def weighted_degree(self, i: int) -> float:
        _, w = self.edges_of(i)
        return float(np.sum(w, dtype=np.float64))

    def weighted_degrees(self) -> np.ndarray:
        """K for every vertex, accumulated in float64."""
        return np.bincount(self.sources(), weights=self.weights.astype(np.float64),
                           minlength=self.vertex_count)

    def sorted_arcs(self) -> list:
        """Arcs as a sorted list of ``(i, j, w)`` tuples (for comparisons in tests)."""
        return list(zip(self.sources().tolist(), self.neighbors.tolist(), self.weights.tolist()))

    def has_arc(self, i: int, j: int) -> bool:
        nbrs, _ = self.edges_of(i)
        k = np.searchsorted(nbrs, j)
        return bool(k < len(nbrs) and nbrs[k] == j)

    def check(self) -> None:
        """Raise GraphIntegrityError if any structural invariant is broken."""
        n = self.vertex_count
        if len(self.offsets) != n + 1 or self.offsets[0] != 0:
            raise GraphIntegrityError("offsets must have length N+1 and start at 0")
        if np.any(np.diff(self.offsets) < 0):
            raise GraphIntegrityError("offsets must be nondecreasing")
        if self.offsets[-1] != len(self.neighbors) or len(self.neighbors) != len(self.weights):
            raise GraphIntegrityError("offsets[N] must equal the number of stored arcs")
        if len(self.neighbors) and (self.neighbors.min() < 0 or self.neighbors.max() >= n):
            raise GraphIntegrityError("neighbor id out of range")
        if np.any(self.weights <= 0):
            raise GraphIntegrityError("edge weights must be strictly positive")
        keys = self.arc_keys()
        if np.any(np.diff(keys) <= 0):
            raise GraphIntegrityError("rows must be sorted without duplicate arcs")
        src = self.sources()
        rev = self.neighbors.astype(np.int64) * n + src
        pos = np.searchsorted(keys, rev)
        pos_ok = pos < len(keys)
        if not np.all(pos_ok) or not np.array_equal(keys[pos], rev):
            raise GraphIntegrityError("graph is not symmetric")
        if not np.array_equal(self.weights[pos], self.weights):
            raise GraphIntegrityError("reverse arcs carry different weights")
        if not np.isclose(self.total_weight, np.sum(self.weights, dtype=np.float64), rtol=1e-9, atol=0):
            raise GraphIntegrityError("total_weight does not match the weights array")


def _check_vertex(g: Graph, i: int) -> None:
    if not 0 <= i < g.vertex_count:
        raise GraphBoundsError(f"vertex {i} out of range [0, {g.vertex_count})")


def degree(g: Graph, i: int) -> int:
    return g.degree(i)


def weighted_degree(g: Graph, i: int) -> float:
    return g.weighted_degree(i)


def from_arcs(n: int, src, dst, w=None, weight_dtype=WEIGHT_DTYPE) -> Graph:
    """Build a Graph from directed arcs that already form a symmetric set.

    Duplicate arcs raise GraphIntegrityError; symmetry is the caller's job
    (see :func:`from_edges` for undirected input).
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if w is None:
        w = np.ones(len(src), dtype=weight_dtype)
    w = np.asarray(w, dtype=weight_dtype)
    if len(src) and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= n):
        raise GraphBoundsError(f"arc endpoint out of range [0, {n})")
    keys = src * n + dst
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    dup = np.flatnonzero(np.diff(keys) == 0)
    if len(dup):
        k = int(keys[dup[0]])
        raise GraphIntegrityError(f"duplicate arc ({k // n}, {k % n})")
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype=OFFSET_DTYPE)
    np.cumsum(counts, out=offsets[1:])
    return Graph(n, offsets, dst[order].astype(VERTEX_DTYPE), w[order])


def from_edges(n: int, edges: Iterable[Sequence], weights=None, dedup: bool = True) -> Graph:
    """Build a Graph from undirected edges ``(i, j)`` or ``(i, j, w)``.

    Each edge gains its reverse arc. With ``dedup`` the first occurrence of
    an undirected pair wins; otherwise repeated pairs are an error.
    """
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    i = arr[:, 0].astype(np.int64)
    j = arr[:, 1].astype(np.int64)
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
    elif arr.shape[1] >= 3:
        w = arr[:, 2]
    else:
        w = np.ones(len(i))
    return _undirected(n, i, j, w, dedup)


def _undirected(n, i, j, w, dedup=True, weight_dtype=WEIGHT_DTYPE) -> Graph:
    if len(i) and (min(i.min(), j.min()) < 0 or max(i.max(), j.max()) >= n):
        raise GraphBoundsError(f"edge endpoint out of range [0, {n})")
    if np.any(w <= 0):
        raise GraphIntegrityError("edge weights must be strictly positive")
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    if dedup:
        _, first = np.unique(lo * n + hi, return_index=True)
        first.sort()
        lo, hi, w = lo[first], hi[first], w[first]
    loop = lo == hi
    src = np.concatenate([lo, hi[~loop]])
    dst = np.concatenate([hi, lo[~loop]])
    ww = np.concatenate([w, w[~loop]])
    return from_arcs(n, src, dst, ww, weight_dtype)


# ---------------------------------------------------------------------------
# Batch updates


def _as_int(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=VERTEX_DTYPE)


def _as_weight(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass(eq=False)
class BatchUpdate:
    """Arc-level deletions and insertions between two snapshots.

    Both sides hold the symmetric closure: an undirected edge {i, j}
    contributes the arcs (i, j) and (j, i). ``del_w`` carries the weight of
    each deleted arc so that auxiliary weights can be adjusted without the
    old graph.
    """

    del_src: np.ndarray
    del_dst: np.ndarray
    del_w: np.ndarray
    ins_src: np.ndarray
    ins_dst: np.ndarray
    ins_w: np.ndarray

    def __post_init__(self):
        self.del_src, self.del_dst = _as_int(self.del_src), _as_int(self.del_dst)
        self.ins_src, self.ins_dst = _as_int(self.ins_src), _as_int(self.ins_dst)
        self.del_w, self.ins_w = _as_weight(self.del_w), _as_weight(self.ins_w)

    @classmethod
    def empty(cls) -> "BatchUpdate":
        z = np.zeros(0)
        return cls(z, z, z, z, z, z)

    @classmethod
    def from_edges(cls, deletions=(), insertions=(), graph: Optional[Graph] = None) -> "BatchUpdate":
        """Symmetrize undirected ``deletions`` [(i, j)] and ``insertions`` [(i, j, w)].

        Deleted-arc weights are looked up in ``graph`` when given, else 1.
        """
        d = np.asarray(list(deletions), dtype=np.int64).reshape(-1, 2)
        ins = np.asarray(list(insertions), dtype=np.float64)
        ins = ins.reshape(-1, ins.shape[1] if ins.ndim == 2 else 3)
        if ins.shape[1] == 2:
            ins = np.column_stack([ins, np.ones(len(ins))])
        di, dj = _symmetric(d[:, 0], d[:, 1])
        ii, ij, iw = _symmetric(ins[:, 0].astype(np.int64), ins[:, 1].astype(np.int64), ins[:, 2])
        b = cls(di, dj, np.ones(len(di)), ii, ij, iw)
        if graph is not None:
            b = with_deletion_weights(graph, b)
        return b

    @property
    def is_empty(self) -> bool:
        return len(self.del_src) == 0 and len(self.ins_src) == 0

    @property
    def arc_count(self) -> int:
        return len(self.del_src) + len(self.ins_src)

    def undirected_counts(self) -> Tuple[int, int]:
        """(deleted edges, inserted edges), self-loops counted once."""
        d = int(np.count_nonzero(self.del_src <= self.del_dst))
        i = int(np.count_nonzero(self.ins_src <= self.ins_dst))
        return d, i

    def inverse(self) -> "BatchUpdate":
        return BatchUpdate(self.ins_src, self.ins_dst, self.ins_w, self.del_src, self.del_dst, self.del_w)

    def sorted_by_source(self) -> "BatchUpdate":
        od = np.lexsort((self.del_dst, self.del_src))
        oi = np.lexsort((self.ins_dst, self.ins_src))
        return BatchUpdate(self.del_src[od], self.del_dst[od], self.del_w[od],
                           self.ins_src[oi], self.ins_dst[oi], self.ins_w[oi])

    def validate(self, g: Graph) -> None:
        """Check every BatchUpdate invariant against the pre-update graph ``g``."""
        n = g.vertex_count
        for name, a in (("deletion", self.del_src), ("deletion", self.del_dst),
                        ("insertion", self.ins_src), ("insertion", self.ins_dst)):
            if len(a) and (a.min() < 0 or a.max() >= n):
                raise GraphBoundsError(f"{name} endpoint out of range [0, {n})")
        if np.any(self.ins_w <= 0):
            raise GraphIntegrityError("insertion weights must be strictly positive")
        _check_closure(self.del_src, self.del_dst, None, "deletions")
        _check_closure(self.ins_src, self.ins_dst, self.ins_w, "insertions")
        dk = self.del_src.astype(np.int64) * n + self.del_dst
        ik = self.ins_src.astype(np.int64) * n + self.ins_dst
        _no_duplicates(dk, n, "deletion")
        _no_duplicates(ik, n, "insertion")
        both = np.intersect1d(dk, ik)
        if len(both):
            raise GraphIntegrityError(f"arc {_pair(both[0], n)} is both deleted and inserted")
        keys = g.arc_keys()
        present = _member(keys, dk)
        if not np.all(present):
            raise GraphIntegrityError(f"cannot delete missing arc {_pair(dk[~present][0], n)}")
        present = _member(keys, ik)
        if np.any(present):
            raise GraphIntegrityError(f"cannot insert existing arc {_pair(ik[present][0], n)}")


def _symmetric(i, j, w=None):
    loop = i == j
    si = np.concatenate([i, j[~loop]])
    sj = np.concatenate([j, i[~loop]])
    if w is None:
        return si, sj
    return si, sj, np.concatenate([w, w[~loop]])


def _pair(key, n) -> Tuple[int, int]:
    return int(key) // n, int(key) % n


def _member(sorted_keys: np.ndarray, q: np.ndarray) -> np.ndarray:
    if len(sorted_keys) == 0:
        return np.zeros(len(q), dtype=bool)
    pos = np.searchsorted(sorted_keys, q)
    pos[pos >= len(sorted_keys)] = 0
    return sorted_keys[pos] == q


def _no_duplicates(keys, n, what):
    s = np.sort(keys)
    dup = np.flatnonzero(np.diff(s) == 0)
    if len(dup):
        raise GraphIntegrityError(f"duplicate {what} arc {_pair(s[dup[0]], n)}")


def _check_closure(src, dst, w, what):
    fwd = np.lexsort((dst, src))
    rev = np.lexsort((src, dst))
    ok = np.array_equal(src[fwd], dst[rev]) and np.array_equal(dst[fwd], src[rev])
    if ok and w is not None:
        ok = np.array_equal(w[fwd], w[rev])
    if not ok:
        raise GraphIntegrityError(f"{what} are not closed under reversal")


def with_deletion_weights(g: Graph, b: BatchUpdate) -> BatchUpdate:
    """Copy of ``b`` whose deleted-arc weights are taken from ``g``."""
    dk = b.del_src.astype(np.int64) * g.vertex_count + b.del_dst
    keys = g.arc_keys()
    present = _member(keys, dk)
    if not np.all(present):
        raise GraphIntegrityError(f"cannot delete missing arc {_pair(dk[~present][0], g.vertex_count)}")
    w = g.weights[np.searchsorted(keys, dk)]
    return BatchUpdate(b.del_src, b.del_dst, w, b.ins_src, b.ins_dst, b.ins_w)


def apply_batch(g: Graph, b: BatchUpdate, validate: bool = True) -> Graph:
    """Return the snapshot ``E(g) minus deletions plus insertions``.

    The result is a fresh Graph; ``g`` is left untouched. ``total_weight``
    is tracked incrementally rather than re-summed.
    """
    if validate:
        b.validate(g)
    if b.is_empty:
        return g
    n = g.vertex_count
    keys = g.arc_keys()
    dk = b.del_src.astype(np.int64) * n + b.del_dst
    dpos = np.searchsorted(keys, dk)
    if len(dk) and not np.all(keys[np.minimum(dpos, len(keys) - 1)] == dk):
        raise GraphIntegrityError("deletion references a missing arc")
    removed_w = g.weights[dpos].astype(np.float64)
    if len(dk) and not np.allclose(removed_w, b.del_w, rtol=1e-6, atol=0):
        raise GraphIntegrityError("deletion weights disagree with the graph")
    keep = np.ones(len(keys), dtype=bool)
    keep[dpos] = False
    keys, wts = keys[keep], g.weights[keep]

    ik = b.ins_src.astype(np.int64) * n + b.ins_dst
    order = np.argsort(ik, kind="stable")
    ik = ik[order]
    iw = b.ins_w[order].astype(g.weights.dtype)
    ipos = np.searchsorted(keys, ik)
    keys = np.insert(keys, ipos, ik)
    wts = np.insert(wts, ipos, iw)

    src = keys // n
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype=OFFSET_DTYPE)
    np.cumsum(counts, out=offsets[1:])
    total = g.total_weight - float(removed_w.sum()) + float(iw.astype(np.float64).sum())
    return Graph(n, offsets, (keys % n).astype(VERTEX_DTYPE), wts, total)


# ---------------------------------------------------------------------------
# Loaders


def _read_numbers(lines: Sequence[str], first_line: int, width: int, kind, what: str):
    """Parse whitespace-separated rows of ``width`` numbers.

    Tries one vectorized conversion; on failure rescans line by line so the
    error can name the offending line.
    """
    text = " ".join(lines)
    try:
        flat = np.array(text.split(), dtype=kind)
        if flat.size == width * len(lines):
            return flat.reshape(-1, width)
    except ValueError:
        pass
    for k, line in enumerate(lines):
        parts = line.split()
        if len(parts) != width:
            raise GraphFormatError(f"expected {width} fields in {what}, got {len(parts)}", first_line + k)
        try:
            [kind(p) for p in parts]
        except ValueError:
            raise GraphFormatError(f"unparsable {what}: {line.strip()!r}", first_line + k) from None
    raise GraphFormatError(f"malformed {what} data", first_line)


def load_matrix_market(path, symmetrize: bool = True, weighted: bool = True) -> Graph:
    """Load a MatrixMarket coordinate file (pattern/real/integer, general/symmetric).

    Ids are shifted to 0-based. With ``weighted=False`` every edge gets
    weight 1 regardless of the stored values. A symmetric header always
    implies both directions; for a general file ``symmetrize`` adds missing
    reverse arcs, otherwise the file must already be symmetric.
    """
    path = Path(path)
    with open(path) as fh:
        raw = fh.read().splitlines()
    if not raw or not raw[0].lower().startswith("%%matrixmarket"):
        raise GraphFormatError("missing %%MatrixMarket header", 1)
    banner = raw[0].lower().split()
    if len(banner) < 5 or banner[1] != "matrix" or banner[2] != "coordinate":
        raise GraphFormatError("only 'matrix coordinate' files are supported", 1)
    field_, symmetry = banner[3], banner[4]
    if field_ not in ("pattern", "real", "integer", "double"):
        raise GraphFormatError(f"unsupported field type {field_!r}", 1)
    if symmetry not in ("general", "symmetric"):
        raise GraphFormatError(f"unsupported symmetry {symmetry!r}", 1)

    k = 1
    while k < len(raw) and (not raw[k].strip() or raw[k].lstrip().startswith("%")):
        k += 1
    if k >= len(raw):
        raise GraphFormatError("missing size line", k + 1)
    try:
        rows, cols, nnz = (int(x) for x in raw[k].split())
    except ValueError:
        raise GraphFormatError(f"bad size line {raw[k].strip()!r}", k + 1) from None
    n = max(rows, cols)
    body_start = k + 2
    body = [ln for ln in raw[k + 1:] if ln.strip() and not ln.lstrip().startswith("%")]
    if len(body) != nnz:
        raise GraphFormatError(f"expected {nnz} entries, found {len(body)}", body_start)
    width = 2 if field_ == "pattern" else 3
    if body and len(body[0].split()) > width and field_ != "pattern":
        width = len(body[0].split())
    data = _read_numbers(body, body_start, width, float, "entry") if body else np.zeros((0, width))

    i = data[:, 0].astype(np.int64) - 1
    j = data[:, 1].astype(np.int64) - 1
    bad = np.flatnonzero((i < 0) | (j < 0) | (i >= n) | (j >= n))
    if len(bad):
        b = int(bad[0])
        raise GraphBoundsError(f"line {_body_line(raw, k, b)}: vertex id out of range [1, {n}]")
    if field_ == "pattern" or not weighted:
        w = np.ones(len(i))
    else:
        w = data[:, 2]
        if np.any(w <= 0):
            b = int(np.flatnonzero(w <= 0)[0])
            raise GraphFormatError("edge weights must be positive", _body_line(raw, k, b))
    if symmetry == "symmetric" or symmetrize:
        return _undirected(n, i, j, w, dedup=True)
    g = from_arcs(n, i, j, w)
    g.check()
    return g


def _body_line(raw, size_idx, entry_idx) -> int:
    seen = -1
    for ln_no in range(size_idx + 1, len(raw)):
        s = raw[ln_no].strip()
        if s and not s.startswith("%"):
            seen += 1
            if seen == entry_idx:
                return ln_no + 1
    return len(raw)


def load_temporal_edges(path) -> np.ndarray:
    """Parse a SNAP temporal edge list into an ``(E_T, 3)`` int64 array.

    Rows keep file order. Lines starting with ``#`` or ``%`` are comments.
    """
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines, first = [], None
    for k, ln in enumerate(raw):
        s = ln.strip()
        if not s or s[0] in "#%":
            continue
        if first is None:
            first = k
        lines.append(ln)
    if not lines:
        return np.zeros((0, 3), dtype=np.int64)
    contiguous = first is not None and len(lines) == len(raw) - first
    try:
        flat = np.array(" ".join(lines).split(), dtype=np.int64)
        if flat.size == 3 * len(lines):
            return flat.reshape(-1, 3)
    except ValueError:
        pass
    k_line = 0
    for k, ln in enumerate(raw):
        s = ln.strip()
        if not s or s[0] in "#%":
            continue
        parts = s.split()
        k_line = k + 1
        if len(parts) != 3:
            raise GraphFormatError(f"expected 'src dst timestamp', got {s!r}", k_line)
        try:
            [int(p) for p in parts]
        except ValueError:
            raise GraphFormatError(f"non-integer field in {s!r}", k_line) from None
    raise GraphFormatError("malformed temporal edge list", k_line if not contiguous else first + 1)
