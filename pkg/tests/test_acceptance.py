"""Acceptance criteria, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (visible in ``pytest -v``
output) before asserting. Run the file directly to print only the lines:

    python tests/test_acceptance.py

Criterion 7 needs a real graph with at least a million edges; point
``DYNCOMM_REAL_GRAPH`` at a MatrixMarket file. Criterion 8 needs at least
four cores. Without them both still run, report FAIL, and are marked
as expected failures for this environment only.
"""

import functools
import os
import sys
import time
from pathlib import Path

os.environ.setdefault("NUMBA_NUM_THREADS", "4")

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dyncomm.batches import BatchSpec, generate_random_batch, make_rng  # noqa: E402
from dyncomm.dynamic import (  # noqa: E402
    APPROACHES,
    dynamic_frontier,
    frontier_initial_affected,
    naive_dynamic,
    screening_affected,
    static_louvain,
    update_weights,
)
from dyncomm.graph import BatchUpdate, apply_batch, load_matrix_market  # noqa: E402
from dyncomm.louvain import (  # noqa: E402
    AuxWeights,
    LouvainParams,
    aggregate_graph,
    delta_modularity,
    modularity,
    renumber_communities,
    scan_communities,
)

from helpers import (  # noqa: E402
    ACCEPTANCE_LINES,
    dense,
    dense_modularity,
    three_colors,
    frontier_rule,
    planted_partition,
    random_batch_edges,
    random_edges,
    random_graph,
    same_partition,
    screening_rule,
    graph_of,
)

pytestmark = pytest.mark.acceptance

REAL_GRAPH = os.environ.get("DYNCOMM_REAL_GRAPH")
RANDOM_BATCH_PARAMS = LouvainParams(aggregation_tolerance=0.8)


def cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def report(number, title, ok, detail, elapsed):
    line = f"{'PASS' if ok else 'FAIL'} [{number}] {title}: {detail} ({elapsed:.1f}s)"
    print(line, flush=True)
    ACCEPTANCE_LINES.append(line)
    return line


# ---------------------------------------------------------------------------
# 1. delta-modularity against recomputed modularity


def criterion_1():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst = 0.0
    checked = 0
    for _ in range(200):
        n = int(rng.integers(2, 31))
        edges = random_edges(rng, n, 0.3, weighted=True)
        if not edges:
            continue
        g = graph_of(n, edges)
        a = dense(n, edges)
        c = rng.integers(0, int(rng.integers(1, n + 1)), size=n)
        aux = AuxWeights.from_scratch(g, c)
        q0 = dense_modularity(a, c)
        labels = set(c.tolist())
        free = sorted(set(range(n)) - labels)
        targets = labels | set(free[:1])  # every occupied community plus an empty one
        for i in range(n):
            h = scan_communities(g, c, i)
            d = int(c[i])
            for t in targets - {d}:
                dq = delta_modularity(h.get(t, 0.0), h.get(d, 0.0), aux.vertex_weight[i],
                                      aux.community_weight[t], aux.community_weight[d], g.m)
                after = c.copy()
                after[i] = t
                worst = max(worst, abs(dq - (dense_modularity(a, after) - q0)))
                checked += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 60
    return ok, report(1, "delta-modularity oracle", ok,
                      f"{checked} moves on 200 graphs, max |error| = {worst:.2e} (tol 1e-9)", elapsed)


def test_criterion_1_delta_modularity():
    ok, line = criterion_1()
    assert ok, line


# ---------------------------------------------------------------------------
# 2. incremental K and Sigma against a rescan


def criterion_2():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst_ok = True
    arcs = 0
    for trial in range(100):
        n = int(rng.integers(20, 5001))
        g = random_graph(rng, n, float(rng.uniform(2, 12)), weighted=True)
        c = rng.integers(0, max(1, n // int(rng.integers(2, 50))), size=n).astype(np.int32)
        aux = AuxWeights.from_scratch(g, c)
        frac = float(rng.uniform(1e-3, 0.1))
        b = generate_random_batch(g, BatchSpec(frac / 2, insertion_ratio=0.8), make_rng(trial))
        arcs += b.arc_count
        g2 = apply_batch(g, b)
        out = update_weights(g2, b, c, aux, workers=(1, 2, 4)[trial % 3])
        worst_ok &= out.allclose(AuxWeights.from_scratch(g2, c), rtol=1e-9)
    elapsed = time.perf_counter() - t0
    ok = bool(worst_ok) and elapsed < 60
    return ok, report(2, "auxiliary-weight oracle", ok,
                      f"100 fixtures, {arcs} batch arcs, all within 1e-9 relative: {bool(worst_ok)}", elapsed)


def test_criterion_2_update_weights():
    ok, line = criterion_2()
    assert ok, line


# ---------------------------------------------------------------------------
# 3. aggregation conserves total weight and modularity


def criterion_3():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    w_err = q_err = 0.0
    for trial in range(100):
        n = int(rng.integers(5, 3000))
        g = random_graph(rng, n, float(rng.uniform(2, 10)), weighted=True)
        if g.total_weight == 0:
            continue
        if trial % 2:
            c = static_louvain(g, LouvainParams(max_passes=1)).communities
        else:
            c = rng.integers(0, max(1, n // 5), size=n)
        c, k = renumber_communities(c)
        h = aggregate_graph(g, c, k, workers=(1, 3)[trial % 2])
        w_err = max(w_err, abs(h.total_weight - g.total_weight) / g.total_weight)
        q_err = max(q_err, abs(modularity(h, np.arange(k)) - modularity(g, c)))
    elapsed = time.perf_counter() - t0
    ok = w_err <= 1e-9 and q_err <= 1e-9 and elapsed < 30
    return ok, report(3, "aggregation conservation", ok,
                      f"max weight rel. error {w_err:.1e}, max modularity error {q_err:.1e}", elapsed)


def test_criterion_3_aggregation():
    ok, line = criterion_3()
    assert ok, line


# ---------------------------------------------------------------------------
# 4. initial marking rules


def criterion_4():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mismatches = 0
    for _ in range(100):
        n = int(rng.integers(5, 60))
        edges = random_edges(rng, n, float(rng.uniform(0.05, 0.4)), weighted=True)
        g = graph_of(n, edges)
        c = rng.integers(0, int(rng.integers(1, 8)), size=n).astype(np.int32) % n
        dels, ins = random_batch_edges(rng, n, edges, int(rng.integers(0, 5)), int(rng.integers(0, 6)))
        b = BatchUpdate.from_edges(dels, ins, graph=g)
        g2 = apply_batch(g, b)
        if set(np.flatnonzero(frontier_initial_affected(b, c, n))) != frontier_rule(dels, ins, c):
            mismatches += 1
        if g2.total_weight > 0:
            aux = update_weights(g2, b, c, AuxWeights.from_scratch(g, c))
            after = [(i, j, w) for i, j, w in g2.sorted_arcs() if i <= j]
            want = screening_rule(n, after, dels, ins, c, aux.vertex_weight, aux.community_weight, g2.m)
            if set(np.flatnonzero(screening_affected(g2, b, c, aux).vertex)) != want:
                mismatches += 1
    _, c, b, _ = three_colors()
    walk = sorted(int(v) for v in np.flatnonzero(frontier_initial_affected(b, c, 16)))
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and walk == [1, 2, 4, 12] and elapsed < 30
    return ok, report(4, "marking-rule conformance", ok,
                      f"{mismatches} mismatches over 100 triples (DF and DS), three-color fixture affected = {walk}", elapsed)


def test_criterion_4_marking():
    ok, line = criterion_4()
    assert ok, line


# ---------------------------------------------------------------------------
# 5 and 6. planted-partition sequence


@functools.lru_cache(maxsize=None)
def planted_sequence(fraction, batches=100, seed=5):
    """Replay ``batches`` random batches; per snapshot modularity and affected count per approach."""
    rng = np.random.default_rng(seed)
    g = planted_partition(rng, 10_000, 100, 16, 4)
    params = RANDOM_BATCH_PARAMS
    init = static_louvain(g, params)
    state = {a: (init.communities, init.aux) for a in APPROACHES}
    spec = BatchSpec(fraction, seed=seed)
    r = make_rng(seed)
    q = {a: [] for a in ("static", *APPROACHES)}
    affected = {a: [] for a in APPROACHES}
    t0 = time.perf_counter()
    for _ in range(batches):
        b = generate_random_batch(g, spec, r)
        g = apply_batch(g, b)
        q["static"].append(modularity(g, static_louvain(g, params).communities))
        for a, fn in APPROACHES.items():
            res = fn(g, b, *state[a], params)
            state[a] = (res.communities, res.aux)
            q[a].append(modularity(g, res.communities))
            affected[a].append(res.stats.affected_count / g.vertex_count)
    return q, affected, time.perf_counter() - t0


def criterion_5():
    q, _, elapsed = planted_sequence(1e-3)
    static = np.array(q["static"])
    gaps = {a: float(np.max(np.abs(np.array(q[a]) - static))) for a in APPROACHES}
    ok = all(v <= 0.01 for v in gaps.values()) and elapsed < 600
    detail = ", ".join(f"{a.upper()} max |dQ| {v:.4f}" for a, v in gaps.items())
    return ok, report(5, "quality parity vs static", ok,
                      f"100 batches of 1e-3|E|, static mean Q {static.mean():.4f}; {detail}", elapsed)


def test_criterion_5_quality_parity():
    ok, line = criterion_5()
    assert ok, line


def criterion_6():
    t0 = time.perf_counter()
    parts, ok = [], True
    for frac in (1e-5, 1e-4, 1e-3):
        _, affected, _ = planted_sequence(frac)
        df, ds = np.mean(affected["df"]), np.mean(affected["ds"])
        ok &= bool(df < ds < 1.0)
        parts.append(f"{frac:g}: DF {df:.4f} < DS {ds:.4f}")
    elapsed = time.perf_counter() - t0
    return ok, report(6, "affected-set ordering", ok, "; ".join(parts), elapsed)


def test_criterion_6_affected_ordering():
    ok, line = criterion_6()
    assert ok, line


# ---------------------------------------------------------------------------
# 7 and 8. million-edge graph


@functools.lru_cache(maxsize=None)
def large_graph():
    if REAL_GRAPH:
        return Path(REAL_GRAPH).stem, load_matrix_market(REAL_GRAPH, symmetrize=True, weighted=False)
    rng = np.random.default_rng(7)
    return "synthetic-proxy", planted_partition(rng, 200_000, 2_000, 8.5, 2.0)


def frontier_vs_static(g, workers=1, batches=5, seed=7):
    params = RANDOM_BATCH_PARAMS
    spec = BatchSpec(1e-5, seed=seed)
    r = make_rng(seed)
    init = static_louvain(g, params, workers=workers)
    c, aux = init.communities, init.aux
    t_df, t_static = [], []
    for _ in range(batches):
        b = generate_random_batch(g, spec, r)
        g = apply_batch(g, b)
        t_static.append(static_louvain(g, params, workers=workers).stats.elapsed)
        res = dynamic_frontier(g, b, c, aux, params, workers=workers)
        c, aux = res.communities, res.aux
        t_df.append(res.stats.elapsed)
    return float(np.median(t_df)), float(np.median(t_static))


def criterion_7():
    t0 = time.perf_counter()
    name, g = large_graph()
    df, st = frontier_vs_static(g)
    elapsed = time.perf_counter() - t0
    ratio = st / df if df > 0 else float("inf")
    measured = ratio >= 5 and g.edge_count >= 10**6 and elapsed < 900
    ok = measured and REAL_GRAPH is not None
    note = "" if REAL_GRAPH else "; no real graph supplied (set DYNCOMM_REAL_GRAPH), measured on a synthetic proxy"
    return ok, report(7, "desk-scale speedup", ok,
                      f"{name} |E|={g.edge_count}, median DF {df * 1e3:.2f} ms vs static {st * 1e3:.1f} ms "
                      f"= {ratio:.0f}x (need >= 5x){note}", elapsed)


@pytest.mark.slow
@pytest.mark.xfail(REAL_GRAPH is None, reason="needs a real graph with >= 1e6 edges", strict=False)
def test_criterion_7_speedup():
    ok, line = criterion_7()
    assert ok, line


def criterion_8():
    t0 = time.perf_counter()
    name, g = large_graph()
    t1, _ = frontier_vs_static(g, workers=1)
    t4, _ = frontier_vs_static(g, workers=4)
    elapsed = time.perf_counter() - t0
    speedup = t1 / t4 if t4 > 0 else float("inf")
    ok = speedup >= 1.5 and REAL_GRAPH is not None and elapsed < 600
    return ok, report(8, "scaling smoke test", ok,
                      f"{name}, DF median {t1 * 1e3:.2f} ms at 1 worker vs {t4 * 1e3:.2f} ms at 4 = "
                      f"{speedup:.2f}x (need >= 1.5x) on {cores()} core(s)", elapsed)


@pytest.mark.slow
@pytest.mark.xfail(cores() < 4 or REAL_GRAPH is None,
                   reason="needs >= 4 cores and the real graph of criterion 7", strict=False)
def test_criterion_8_scaling():
    ok, line = criterion_8()
    assert ok, line


# ---------------------------------------------------------------------------
# 9. empty batch on converged input


def criterion_9():
    t0 = time.perf_counter()
    params = LouvainParams(tolerance=1e-12)
    rng = np.random.default_rng(9)
    failures = []
    for trial in range(4):
        g = planted_partition(rng, 2000, 20, 10, 3) if trial % 2 else random_graph(rng, 1500, 6)
        r = static_louvain(g, params)
        c, aux = r.communities, r.aux
        for _ in range(50):
            nxt = naive_dynamic(g, BatchUpdate.empty(), c, aux, params)
            if np.array_equal(nxt.communities, c):
                break
            c, aux = nxt.communities, nxt.aux
        for name, fn in APPROACHES.items():
            for workers in (1, 4):
                res = fn(g, BatchUpdate.empty(), c, aux, params, workers=workers)
                if not same_partition(res.communities, c) or not res.aux.allclose(aux, rtol=1e-12):
                    failures.append(f"{name}/{workers}w on fixture {trial}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 10
    detail = "ND, DS and DF at 1 and 4 workers on 4 converged fixtures"
    return ok, report(9, "empty-batch identity", ok, detail + (f"; failed: {failures}" if failures else ""), elapsed)


def test_criterion_9_empty_batch():
    ok, line = criterion_9()
    assert ok, line


if __name__ == "__main__":
    results = [fn()[0] for fn in (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
                                  criterion_6, criterion_7, criterion_8, criterion_9)]
    sys.exit(0 if all(results) else 1)
