"""Shared fixtures and brute-force oracles for the test suite.

The oracles here deliberately avoid the package's kernels: they work on
plain edge lists and dense matrices so they can check the fast paths.
"""

import itertools

import numpy as np

from dyncomm.graph import BatchUpdate, apply_batch, from_edges
from dyncomm.louvain import COMMUNITY_DTYPE

# filled by the acceptance tests, echoed in the pytest terminal summary
ACCEPTANCE_LINES = []


def random_edges(rng, n, p, weighted=False):
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                out.append((i, j, float(rng.integers(1, 5)) if weighted else 1.0))
    return out


def clustered_edges(rng, n, groups, deg=6, p_in=0.85):
    """Planted-partition style edge list; vertex v belongs to block v * groups // n."""
    size = n // groups
    seen = set()
    for i in range(n):
        g = i // size
        for _ in range(deg // 2):
            if rng.random() < p_in:
                j = g * size + int(rng.integers(size))
            else:
                j = int(rng.integers(n))
            if i != j:
                seen.add((min(i, j), max(i, j)))
    return [(i, j, 1.0) for i, j in sorted(seen)]


def graph_of(n, edges):
    return from_edges(n, [(i, j) for i, j, _ in edges], weights=[w for *_, w in edges])


def dense(n, edges):
    a = np.zeros((n, n))
    for i, j, w in edges:
        a[i, j] += w
        if i != j:
            a[j, i] += w
    return a


def brute_modularity(a, c):
    """Double sum over all vertex pairs on a dense adjacency matrix."""
    k = a.sum(axis=1)
    two_m = k.sum()
    c = np.asarray(c)
    q = 0.0
    n = len(c)
    for i in range(n):
        for j in range(n):
            if c[i] == c[j]:
                q += a[i, j] - k[i] * k[j] / two_m
    return q / two_m


def set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def best_partition(a):
    """Exhaustive search for the modularity-maximizing partition (small n only)."""
    n = len(a)
    best_q, best_c = -np.inf, None
    for part in set_partitions(list(range(n))):
        c = np.empty(n, dtype=int)
        for label, block in enumerate(part):
            c[block] = label
        q = brute_modularity(a, c)
        if q > best_q + 1e-12:
            best_q, best_c = q, c
    return best_q, best_c


def same_partition(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.array_equal(a[:, None] == a[None, :], b[:, None] == b[None, :]))


def best_single_move_gain(a, c):
    """Largest modularity gain of moving one vertex into a community it links to."""
    c = np.asarray(c).copy()
    base = brute_modularity(a, c)
    best = -np.inf
    for i in range(len(c)):
        orig = c[i]
        linked = {c[j] for j in np.flatnonzero(a[i]) if j != i}
        for d in linked - {orig}:
            c[i] = d
            best = max(best, brute_modularity(a, c) - base)
        c[i] = orig
    return best


def communities(labels):
    return np.ascontiguousarray(labels, dtype=COMMUNITY_DTYPE)


def random_batch_edges(rng, n, edges, n_del, n_ins):
    """Pick ``n_del`` existing edges and ``n_ins`` absent non-loop pairs."""
    present = {(i, j) for i, j, _ in edges}
    idx = rng.choice(len(edges), size=min(n_del, len(edges)), replace=False) if edges else []
    dels = [edges[x][:2] for x in idx]
    ins = set()
    tries = 0
    while len(ins) < n_ins and tries < 100 * (n_ins + 1):
        tries += 1
        i, j = sorted(int(x) for x in rng.integers(n, size=2))
        if i != j and (i, j) not in present:
            ins.add((i, j))
    return dels, [(i, j, float(rng.integers(1, 4))) for i, j in sorted(ins)]


# --- marking oracles, written from the rules on plain edge lists ----------


def frontier_rule(dels, ins, c):
    """Endpoints of same-community deletions and cross-community insertions."""
    out = set()
    for i, j in dels:
        if c[i] == c[j]:
            out |= {i, j}
    for i, j, _ in ins:
        if c[i] != c[j]:
            out |= {i, j}
    return out


def screening_rule(n, edges_after, dels, ins, c, k, sigma, m):
    """Delta-screening flags from the batch, evaluated edge by edge."""
    adj = {v: set() for v in range(n)}
    for i, j, _ in edges_after:
        adj[i].add(j)
        adj[j].add(i)
    dv, de, dc = set(), set(), set()
    for i, j in dels:
        for a, b in ((i, j), (j, i)):
            if c[a] == c[b]:
                dv.add(a)
                de.add(a)
                dc.add(c[b])
    per_src = {}
    for i, j, w in ins:
        for a, b in ((i, j), (j, i)):
            if c[a] != c[b]:
                h = per_src.setdefault(a, {})
                h[c[b]] = h.get(c[b], 0.0) + w
    for i, h in per_src.items():
        d = c[i]

        def score(cc):
            dq = h[cc] / m - k[i] / (2 * m * m) * (k[i] + sigma[cc] - sigma[d])
            return (dq, h[cc], -cc)

        best = max(h, key=score)
        dv.add(i)
        de.add(i)
        dc.add(best)
    for i in de:
        dv |= adj[i]
    dv |= {v for v in range(n) if c[v] in dc}
    return dv


# --- named fixtures --------------------------------------------------------


def two_triangles(bridge=False):
    e = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]
    if bridge:
        e.append((2, 3))
    return from_edges(6, e)


def barbell():
    """Two 4-cliques joined by the bridge (3, 4)."""
    e = [(i, j) for i, j in itertools.combinations(range(4), 2)]
    e += [(i, j) for i, j in itertools.combinations(range(4, 8), 2)]
    e.append((3, 4))
    return from_edges(8, e)


TRI_RED, TRI_GREEN, TRI_BLUE = 0, 7, 12
TRI_EDGES = [
    (0, 1, 1), (0, 3, 1), (0, 5, 1), (0, 6, 1), (1, 3, 1), (1, 5, 1), (3, 5, 1), (3, 6, 1),
    (5, 6, 1), (1, 6, 1),
    (1, 2, 3), (2, 8, 1), (2, 10, 1),
    (4, 3, 2), (4, 6, 2), (4, 14, 1), (4, 15, 1),
    (7, 8, 1), (7, 9, 1), (7, 10, 1), (7, 11, 1), (8, 9, 1), (8, 10, 1), (9, 10, 1), (9, 11, 1),
    (10, 11, 1), (8, 11, 1),
    (12, 13, 1), (12, 14, 1), (12, 15, 1), (13, 14, 1), (13, 15, 1), (14, 15, 1),
]


def three_colors():
    """Three communities (red 0-6, green 7-11, blue 12-15) before the batch.

    The batch deletes (1, 2) inside red and inserts (4, 12) from red into
    blue. Afterwards vertex 2 is pulled to green and vertex 4 to blue.
    """
    g = graph_of(16, TRI_EDGES)
    c = communities([TRI_RED] * 7 + [TRI_GREEN] * 5 + [TRI_BLUE] * 4)
    b = BatchUpdate.from_edges([(1, 2)], [(4, 12, 2.0)], graph=g)
    return g, c, b, apply_batch(g, b)


def dense_modularity(a, c):
    """Same double sum as brute_modularity, vectorized for the larger sweeps."""
    k = a.sum(axis=1)
    two_m = k.sum()
    c = np.asarray(c)
    same = c[:, None] == c[None, :]
    return float(((a - np.outer(k, k) / two_m) * same).sum() / two_m)


def random_graph(rng, n, avg_deg, weighted=False):
    """Erdos-Renyi style graph drawn as ``n * avg_deg / 2`` random pairs (duplicates merged)."""
    m = int(n * avg_deg / 2)
    i = rng.integers(0, n, m)
    j = rng.integers(0, n, m)
    keep = i != j
    i, j = i[keep], j[keep]
    w = rng.integers(1, 5, len(i)).astype(float) if weighted else None
    return from_edges(n, np.column_stack([i, j]), w)


def planted_partition(rng, n, groups, deg_in, deg_out):
    """Planted partition: ``groups`` equal blocks, expected intra/inter degree per vertex."""
    size = n // groups
    m_in = int(n * deg_in / 2)
    m_out = int(n * deg_out / 2)
    blk = rng.integers(0, groups, m_in)
    i_in = blk * size + rng.integers(0, size, m_in)
    j_in = blk * size + rng.integers(0, size, m_in)
    i_out = rng.integers(0, n, m_out)
    j_out = rng.integers(0, n, m_out)
    i = np.concatenate([i_in, i_out])
    j = np.concatenate([j_in, j_out])
    keep = i != j
    return from_edges(n, np.column_stack([i[keep], j[keep]]))
