"""Batch generation: random insert/delete mixes and temporal-stream replay.

Randomness comes from numpy's PCG64 bit generator, seeded explicitly, so a
(graph, spec) pair always yields the same batch on any platform.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, TextIO

import numpy as np

from .errors import CapacityError, GraphBoundsError, GraphFormatError
from .graph import BatchUpdate, Graph, _undirected, apply_batch, with_deletion_weights

log = logging.getLogger(__name__)

RNG_NAME = "PCG64"

# below this many vertices absent pairs are enumerated instead of rejection-sampled
_ENUMERATE_LIMIT = 2048


@dataclass(frozen=True)
class BatchSpec:
    size_fraction: float
    insertion_ratio: float = 0.8
    seed: int = 0
    repetitions: int = 5

    def __post_init__(self):
        if not self.size_fraction > 0:
            raise ValueError("size_fraction must be > 0")
        if not 0 <= self.insertion_ratio <= 1:
            raise ValueError("insertion_ratio must lie in [0, 1]")

    def edge_count(self, g: Graph) -> int:
        """Undirected edges per batch, at least one."""
        return max(1, int(round(self.size_fraction * g.edge_count)))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def _split(total: int, ratio: float, rng: np.random.Generator) -> int:
    """Insertion count with randomized rounding so the expected share is exactly ``ratio``."""
    x = total * ratio
    base = int(np.floor(x))
    frac = x - base
    return base + int(frac > 0 and rng.random() < frac)


def generate_random_batch(g: Graph, spec: BatchSpec, rng: Optional[np.random.Generator] = None,
                          edges: Optional[int] = None) -> BatchUpdate:
    """Uniform random deletions of existing edges plus insertions of absent pairs.

    ``edges`` overrides the batch size given by ``spec``. Inserted edges get
    weight 1 and are never self-loops.
    """
    if g.vertex_count < 2:
        raise CapacityError("graph needs at least two vertices")
    rng = make_rng(spec.seed) if rng is None else rng
    total = spec.edge_count(g) if edges is None else int(edges)
    n_ins = _split(total, spec.insertion_ratio, rng)
    n_del = total - n_ins

    n = g.vertex_count
    src = g.sources()
    und = np.flatnonzero(src <= g.neighbors)
    if n_del > len(und):
        raise CapacityError(f"cannot delete {n_del} edges from a graph with {len(und)}")
    loops = int(np.count_nonzero(src == g.neighbors))
    absent = n * (n - 1) // 2 - (len(und) - loops)
    if n_ins > absent:
        raise CapacityError(f"cannot insert {n_ins} edges; only {absent} vertex pairs are free")

    pick = np.sort(rng.choice(len(und), size=n_del, replace=False)) if n_del else np.zeros(0, np.int64)
    di = src[und[pick]].astype(np.int64)
    dj = g.neighbors[und[pick]].astype(np.int64)

    keys = g.arc_keys()
    if n <= _ENUMERATE_LIMIT:
        lo, hi = np.triu_indices(n, k=1)
        cand = lo.astype(np.int64) * n + hi
        free = cand[~_isin_sorted(keys, cand)]
        chosen = free[np.sort(rng.choice(len(free), size=n_ins, replace=False))] if n_ins else free[:0]
        chosen = rng.permutation(chosen)
    else:
        chosen = _sample_absent(keys, n, n_ins, rng)
    ii, ij = chosen // n, chosen % n

    b = BatchUpdate.from_edges(
        np.column_stack([di, dj]),
        np.column_stack([ii, ij, np.ones(len(ii))]),
    )
    return with_deletion_weights(g, b)


def _isin_sorted(sorted_keys, q):
    if len(sorted_keys) == 0:
        return np.zeros(len(q), dtype=bool)
    pos = np.searchsorted(sorted_keys, q)
    pos[pos >= len(sorted_keys)] = 0
    return sorted_keys[pos] == q


def _sample_absent(keys, n, count, rng) -> np.ndarray:
    """Rejection-sample ``count`` distinct absent unordered pairs as keys lo*n+hi."""
    out = np.zeros(0, dtype=np.int64)
    while len(out) < count:
        need = count - len(out)
        draw = rng.integers(0, n, size=(need + need // 2 + 16, 2))
        lo = draw.min(axis=1)
        hi = draw.max(axis=1)
        cand = lo * n + hi
        cand = cand[(lo != hi) & ~_isin_sorted(keys, cand)]
        merged = np.concatenate([out, cand])
        _, first = np.unique(merged, return_index=True)
        out = merged[np.sort(first)][:count]
    return out


def batch_sequence(g: Graph, spec: BatchSpec) -> Iterator[tuple]:
    """Yield ``spec.repetitions`` consecutive (batch, updated graph) pairs."""
    rng = make_rng(spec.seed)
    for _ in range(spec.repetitions):
        b = generate_random_batch(g, spec, rng)
        g = apply_batch(g, b, validate=False)
        yield b, g


# ---------------------------------------------------------------------------
# Temporal streams


@dataclass
class TemporalStats:
    temporal_edges: int
    base_temporal_edges: int
    batch_temporal_edges: int
    batch_edges: List[int] = field(default_factory=list)  # after dedup, per batch
    empty_batches: int = 0
    missing_batches: int = 0


class TemporalReplay(NamedTuple):
    base: Graph
    batches: List[BatchUpdate]
    stats: TemporalStats


def temporal_batches(stream, batch_fraction: float, n_batches: int = 100,
                     base_fraction: float = 0.9) -> TemporalReplay:
    """Split a temporal edge stream into a base graph and insertion-only batches.

    The first ``base_fraction`` of the stream forms the base graph. The rest
    is cut into ``n_batches`` consecutive slices of
    ``floor(batch_fraction * |E_T|)`` temporal edges; pairs already present
    (or repeated inside a slice) are dropped. All weights are 1.
    """
    stream = np.asarray(stream, dtype=np.int64).reshape(-1, 3) if len(stream) else np.zeros((0, 3), np.int64)
    total = len(stream)
    if total == 0:
        raise GraphFormatError("temporal stream is empty")
    if stream[:, :2].min() < 0:
        raise GraphBoundsError("negative vertex id in temporal stream")
    n = int(stream[:, :2].max()) + 1
    size = int(np.floor(batch_fraction * total))
    if size < 1:
        raise CapacityError(f"batch fraction {batch_fraction} of {total} temporal edges is below one edge")
    n_base = int(np.floor(base_fraction * total))

    lo = np.minimum(stream[:, 0], stream[:, 1])
    hi = np.maximum(stream[:, 0], stream[:, 1])
    keys = lo * n + hi
    base_keys = keys[:n_base]
    base = _undirected(n, lo[:n_base], hi[:n_base], np.ones(n_base), dedup=True)
    present = set(np.unique(base_keys).tolist())

    stats = TemporalStats(total, n_base, size)
    batches: List[BatchUpdate] = []
    tail = keys[n_base:]
    available = len(tail) // size
    if available < n_batches:
        stats.missing_batches = n_batches - available
        log.warning("only %d of %d full batches available", available, n_batches)
    for k in range(min(n_batches, available)):
        fresh = []
        for key in tail[k * size:(k + 1) * size].tolist():
            if key not in present:
                present.add(key)
                fresh.append(key)
        fresh = np.asarray(fresh, dtype=np.int64)
        b = BatchUpdate.from_edges((), np.column_stack([fresh // n, fresh % n, np.ones(len(fresh))]))
        stats.batch_edges.append(len(fresh))
        if len(fresh) == 0:
            stats.empty_batches += 1
        batches.append(b)
    return TemporalReplay(base, batches, stats)


# ---------------------------------------------------------------------------
# Serialization


def write_batches(fh: TextIO, batches, seed=None, fraction=None, ratio=None) -> None:
    """Write batches as ``D i j`` / ``I i j w`` lines, one line per undirected edge."""
    fh.write("# dyncomm batches\n")
    fh.write(f"# rng={RNG_NAME} seed={seed} fraction={fraction} insertion_ratio={ratio}\n")
    for k, b in enumerate(batches):
        fh.write(f"# batch {k}\n")
        for i, j in zip(b.del_src.tolist(), b.del_dst.tolist()):
            if i <= j:
                fh.write(f"D {i} {j}\n")
        for i, j, w in zip(b.ins_src.tolist(), b.ins_dst.tolist(), b.ins_w.tolist()):
            if i <= j:
                fh.write(f"I {i} {j} {w!r}\n")


def read_batches(fh: TextIO) -> List[BatchUpdate]:
    """Inverse of :func:`write_batches`.

    Deleted-arc weights are unknown until the batch meets a graph; resolve
    them with :func:`dyncomm.graph.with_deletion_weights`.
    """
    batches: List[BatchUpdate] = []
    dels: list = []
    ins: list = []
    started = False

    def flush():
        if started:
            batches.append(BatchUpdate.from_edges(dels, ins))

    for no, line in enumerate(fh, start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            if s.startswith("# batch"):
                flush()
                dels, ins, started = [], [], True
            continue
        parts = s.split()
        if not started:
            dels, ins, started = [], [], True
        try:
            if parts[0] == "D" and len(parts) == 3:
                dels.append((int(parts[1]), int(parts[2])))
            elif parts[0] == "I" and len(parts) == 4:
                w = float(parts[3])
                if w <= 0:
                    raise ValueError
                ins.append((int(parts[1]), int(parts[2]), w))
            else:
                raise ValueError
        except ValueError:
            raise GraphFormatError(f"bad batch line {s!r}", no) from None
    flush()
    return batches
