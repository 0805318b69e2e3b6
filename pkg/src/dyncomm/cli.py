"""Benchmark harness: replay batches through static, ND, DS and DF Louvain and emit CSV.

Usage::

    dyncomm run --input graph.mtx --approach static,nd,ds,df --batch-sizes 1e-5,1e-4 --reps 5
    dyncomm affected-stats --input sx-mathoverflow.txt --format temporal --approach ds,df
    dyncomm scaling --input graph.mtx --workers-list 1,2,4 --batch-sizes 1e-5

Exit codes: 0 success, 1 usage error, 2 input error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, Iterable, List, Optional

from .errors import ContractViolation, DynCommError, GraphIntegrityError

log = logging.getLogger("dyncomm")

EXIT_USAGE, EXIT_INPUT, EXIT_INVARIANT = 1, 2, 3
APPROACH_NAMES = ("static", "nd", "ds", "df")


@dataclass
class RunRecord:
    graph_name: str
    approach: str
    batch_size_fraction: float
    batch_index: int
    elapsed_seconds: float
    modularity: float
    affected_count: int
    iterations: int
    passes: int
    workers: int
    seed: int


RUN_COLUMNS = [f.name for f in fields(RunRecord)]
AFFECTED_COLUMNS = ["graph_name", "approach", "batch_size_fraction", "batch_index",
                    "affected_count", "vertex_count", "affected_fraction"]
SCALING_COLUMNS = ["graph_name", "workers", "batches", "geomean_elapsed_seconds", "speedup"]


class InvariantViolation(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _approaches(text: str) -> List[str]:
    names = [x.strip().lower() for x in text.split(",") if x.strip()]
    bad = [x for x in names if x not in APPROACH_NAMES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown approach(es) {bad}; choose from {', '.join(APPROACH_NAMES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", required=True, type=Path, help="graph file")
    common.add_argument("--format", choices=("mtx", "temporal"), default=None,
                        help="input format (default: by extension, .mtx else temporal)")
    common.add_argument("--batch-sizes", type=_float_list, default=[1e-4],
                        help="batch sizes as fractions of |E| (or |E_T| for temporal input)")
    common.add_argument("--insertion-ratio", type=float, default=0.8)
    common.add_argument("--reps", type=int, default=None,
                        help="batches per batch size (default 5; 100 for temporal input)")
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--workers", type=int, default=None, help="threads (fallback: $DYNCOMM_WORKERS, then 1)")
    common.add_argument("--tolerance", type=float, default=1e-2)
    common.add_argument("--tolerance-drop", type=float, default=10.0)
    common.add_argument("--max-iterations", type=int, default=20)
    common.add_argument("--max-passes", type=int, default=10)
    common.add_argument("--aggregation-tolerance", type=float, default=None,
                        help="default 0.8 for mtx input with random batches, 1.0 for temporal input")
    common.add_argument("--output", type=Path, default=None, help="CSV path (default stdout)")
    common.add_argument("--batch-file", type=Path, default=None, help="replay serialized batches")
    common.add_argument("--static-refresh-every", type=int, default=0,
                        help="reset dynamic state with static Louvain every N batches (0 = off)")
    common.add_argument("--weighted", action="store_true", help="keep MatrixMarket values as weights")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="dyncomm", description="Dynamic Louvain benchmark harness")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", parents=[common], help="time approaches over batch sequences")
    run.add_argument("--approach", type=_approaches, default=list(APPROACH_NAMES))
    run.add_argument("--summary", type=Path, default=None, help="also write a per-approach summary CSV")
    aff = sub.add_parser("affected-stats", parents=[common], help="fraction of vertices marked affected")
    aff.add_argument("--approach", type=_approaches, default=["ds", "df"])
    sc = sub.add_parser("scaling", parents=[common], help="DF runtime as worker count doubles")
    sc.add_argument("--workers-list", type=_int_list, default=[1, 2, 4])
    sub.add_parser("write-batches", parents=[common], help="generate random batches to --output")
    return p


# ---------------------------------------------------------------------------
# Experiment plumbing


@dataclass
class Workload:
    name: str
    base: object
    temporal: Optional[object]
    fmt: str


def _load(args) -> Workload:
    from .graph import load_matrix_market, load_temporal_edges

    path: Path = args.input
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    fmt = args.format or ("mtx" if path.suffix.lower() == ".mtx" else "temporal")
    if fmt == "mtx":
        g = load_matrix_market(path, symmetrize=True, weighted=args.weighted)
        return Workload(path.stem, g, None, fmt)
    return Workload(path.stem, None, load_temporal_edges(path), fmt)


def _params(args, fmt):
    from .louvain import LouvainParams

    agg = args.aggregation_tolerance
    if agg is None:
        agg = 1.0 if fmt == "temporal" else 0.8
    return LouvainParams(args.tolerance, args.tolerance_drop, args.max_iterations, args.max_passes, agg)


def _sequence(args, work: Workload, fraction: float, index: int):
    """Base graph and list of batches for one batch size."""
    from .batches import BatchSpec, generate_random_batch, make_rng, read_batches, temporal_batches
    from .graph import apply_batch

    if work.fmt == "temporal":
        replay = temporal_batches(work.temporal, fraction)
        return replay.base, replay.batches[: args.reps or len(replay.batches)]
    base = work.base
    if args.batch_file is not None:
        with open(args.batch_file) as fh:
            return base, read_batches(fh)[: args.reps]
    spec = BatchSpec(fraction, args.insertion_ratio, args.seed + index, args.reps or 5)
    rng = make_rng(spec.seed)
    out, g = [], base
    for _ in range(spec.repetitions):
        b = generate_random_batch(g, spec, rng)
        out.append(b)
        g = apply_batch(g, b, validate=False)
    return base, out


def _batch_file_fraction(path: Path) -> Optional[float]:
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            for tok in line[1:].split():
                key, _, val = tok.partition("=")
                if key == "fraction":
                    try:
                        return float(val)
                    except ValueError:
                        return None
    return None


def _check_partition(membership, n):
    if membership.shape != (n,) or (n and (membership.min() < 0 or membership.max() >= n)):
        raise InvariantViolation("approach returned an invalid partition")


def _check_aux(g, result, where):
    from .louvain import AuxWeights

    if not result.aux.allclose(AuxWeights.from_scratch(g, result.communities), rtol=1e-9):
        raise InvariantViolation(f"carried K/Sigma diverged from a full recomputation at {where}")


def warmup(workers):
    """Compile every kernel variant on a toy graph so timings exclude JIT cost."""
    from .dynamic import APPROACHES, static_louvain
    from .graph import BatchUpdate, apply_batch, from_edges
    from .louvain import LouvainParams

    g = from_edges(8, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5), (5, 6), (6, 7), (7, 4)])

    for w in sorted({1, workers}):
        r = static_louvain(g, LouvainParams(tolerance=1e-9), workers=w)
        b = BatchUpdate.from_edges([(0, 1)], [(1, 6, 1.0)], graph=g)
        g2 = apply_batch(g, b)
        for fn in APPROACHES.values():
            fn(g2, b, r.communities, r.aux, LouvainParams(tolerance=1e-9), workers=w)


def run_experiment(args, work: Workload, approaches: Iterable[str], workers: int,
                   on_row=None) -> List[RunRecord]:
    from .dynamic import APPROACHES, static_louvain
    from .graph import apply_batch, with_deletion_weights
    from .louvain import modularity

    params = _params(args, work.fmt)
    rows: List[RunRecord] = []
    if args.batch_file is not None:
        # one replayed sequence, labelled with the fraction it was drawn at
        args.batch_sizes = [_batch_file_fraction(args.batch_file) or float("nan")]
    approaches = list(approaches)
    for index, fraction in enumerate(args.batch_sizes):
        base, batches = _sequence(args, work, fraction, index)
        init = static_louvain(base, params, workers=workers)
        state: Dict[str, tuple] = {a: (init.communities, init.aux) for a in approaches if a != "static"}
        g = base
        for t, b in enumerate(batches):
            if len(b.del_src):
                b = with_deletion_weights(g, b)
            g = apply_batch(g, b)
            refresh = args.static_refresh_every and (t + 1) % args.static_refresh_every == 0
            fresh = None
            for a in approaches:
                if a == "static":
                    res = static_louvain(g, params, workers=workers)
                else:
                    c, aux = state[a]
                    res = APPROACHES[a](g, b, c, aux, params, workers=workers)
                    state[a] = (res.communities, res.aux)
                    if t % 10 == 9:
                        _check_aux(g, res, f"batch {t} ({a})")
                _check_partition(res.communities, g.vertex_count)
                q = modularity(g, res.communities) if g.total_weight > 0 else 0.0
                if not -0.5 - 1e-9 <= q <= 1 + 1e-9:
                    raise InvariantViolation(f"modularity {q} out of range")
                row = RunRecord(work.name, a, fraction, t, res.stats.elapsed, q,
                                res.stats.affected_count, res.stats.iterations, res.stats.passes,
                                workers, args.seed)
                rows.append(row)
                if on_row:
                    on_row(row)
            if refresh:
                fresh = static_louvain(g, params, workers=workers)
                for a in state:
                    state[a] = (fresh.communities, fresh.aux)
    return rows


def geomean(values) -> float:
    values = [v for v in values if v > 0]
    if not values:
        return 0.0
    return math.exp(sum(math.log(v) for v in values) / len(values))


def summarize(rows: List[RunRecord]) -> List[dict]:
    """Mean modularity, geometric-mean runtime and speedup over static per (approach, size)."""
    groups: Dict[tuple, List[RunRecord]] = {}
    for r in rows:
        groups.setdefault((r.batch_size_fraction, r.approach), []).append(r)
    out = []
    for (fraction, approach), rs in sorted(groups.items()):
        t = geomean([r.elapsed_seconds for r in rs])
        static = groups.get((fraction, "static"))
        speed = geomean([r.elapsed_seconds for r in static]) / t if static and t > 0 else float("nan")
        out.append({
            "approach": approach,
            "batch_size_fraction": fraction,
            "runs": len(rs),
            "geomean_elapsed_seconds": t,
            "mean_modularity": sum(r.modularity for r in rs) / len(rs),
            "mean_affected_count": sum(r.affected_count for r in rs) / len(rs),
            "speedup_vs_static": speed,
        })
    return out


# ---------------------------------------------------------------------------
# Commands


class _CsvOut:
    def __init__(self, path: Optional[Path], columns):
        self._fh = open(path, "w", newline="") if path else sys.stdout
        self._own = path is not None
        self.writer = csv.DictWriter(self._fh, fieldnames=columns, lineterminator="\n")
        self.writer.writeheader()

    def write(self, row: dict):
        self.writer.writerow(row)
        self._fh.flush()

    def close(self):
        if self._own:
            self._fh.close()


def cmd_run(args, workers) -> int:
    work = _load(args)
    out = _CsvOut(args.output, RUN_COLUMNS)
    warmup(workers)
    try:
        rows = run_experiment(args, work, args.approach, workers, on_row=lambda r: out.write(asdict(r)))
    finally:
        out.close()
    summary = summarize(rows)
    if args.summary:
        with open(args.summary, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(summary[0]) if summary else ["approach"], lineterminator="\n")
            w.writeheader()
            w.writerows(summary)
    for s in summary:
        log.info("%-6s size=%-8g runs=%-3d time=%.4gs Q=%.5f speedup=%.3g", s["approach"],
                 s["batch_size_fraction"], s["runs"], s["geomean_elapsed_seconds"],
                 s["mean_modularity"], s["speedup_vs_static"])
    return 0


def cmd_affected_stats(args, workers) -> int:
    work = _load(args)
    wanted = [a for a in args.approach if a != "static"]
    if "static" in args.approach:
        log.warning("static processes every vertex by definition; skipped")
    dynamic = [a for a in wanted if a != "nd"]
    out = _CsvOut(args.output, AFFECTED_COLUMNS)
    warmup(workers)

    def emit(r: RunRecord, n):
        out.write({"graph_name": r.graph_name, "approach": r.approach,
                   "batch_size_fraction": r.batch_size_fraction, "batch_index": r.batch_index,
                   "affected_count": r.affected_count, "vertex_count": n,
                   "affected_fraction": r.affected_count / n if n else 0.0})

    try:
        n = work.base.vertex_count if work.base is not None else int(work.temporal[:, :2].max()) + 1
        rows = run_experiment(args, work, dynamic, workers, on_row=lambda r: emit(r, n))
        if "nd" in wanted:
            # naive-dynamic processes every vertex: the fraction is 1 by definition
            for r in rows:
                if r.approach == dynamic[0]:
                    out.write({"graph_name": r.graph_name, "approach": "nd",
                               "batch_size_fraction": r.batch_size_fraction, "batch_index": r.batch_index,
                               "affected_count": n, "vertex_count": n, "affected_fraction": 1.0})
    finally:
        out.close()
    return 0


def cmd_scaling(args, workers) -> int:
    counts = args.workers_list
    if not counts or counts[0] != 1 or any(b != 2 * a for a, b in zip(counts, counts[1:])):
        raise _UsageError("--workers-list must be a doubling sequence starting at 1")
    work = _load(args)
    out = _CsvOut(args.output, SCALING_COLUMNS)
    try:
        base_time = None
        for w in counts:
            warmup(w)
            rows = run_experiment(args, work, ["df"], w)
            t = geomean([r.elapsed_seconds for r in rows])
            if base_time is None:
                base_time = t
            out.write({"graph_name": work.name, "workers": w, "batches": len(rows),
                       "geomean_elapsed_seconds": t, "speedup": base_time / t if t > 0 else float("nan")})
    finally:
        out.close()
    return 0


def cmd_write_batches(args, workers) -> int:
    from .batches import write_batches

    work = _load(args)
    if work.fmt != "mtx":
        raise _UsageError("write-batches needs MatrixMarket input")
    fraction = args.batch_sizes[0]
    _, batches = _sequence(args, work, fraction, 0)
    fh = open(args.output, "w") if args.output else sys.stdout
    try:
        write_batches(fh, batches, seed=args.seed, fraction=fraction, ratio=args.insertion_ratio)
    finally:
        if args.output:
            fh.close()
    return 0


class _UsageError(Exception):
    pass


COMMANDS = {
    "run": cmd_run,
    "affected-stats": cmd_affected_stats,
    "scaling": cmd_scaling,
    "write-batches": cmd_write_batches,
}


def _requested_threads(args) -> int:
    env = os.environ.get("DYNCOMM_WORKERS")
    want = args.workers if args.workers is not None else int(env) if env else 1
    if getattr(args, "workers_list", None):
        want = max(want, max(args.workers_list))
    return want


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        if args.reps is not None and args.reps < 1:
            raise _UsageError("--reps must be >= 1")
        want = _requested_threads(args)
        if want < 1:
            raise _UsageError("--workers must be >= 1")
        # numba sizes its thread pool on first import
        if "numba" not in sys.modules:
            os.environ["NUMBA_NUM_THREADS"] = str(max(want, os.cpu_count() or 1))
        from .parallel import resolve_workers

        workers = resolve_workers(args.workers)
        return COMMANDS[args.command](args, workers)
    except _UsageError as exc:
        print(f"dyncomm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantViolation, GraphIntegrityError, ContractViolation) as exc:
        print(f"dyncomm: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DynCommError, OSError) as exc:
        print(f"dyncomm: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        # bad option values caught by parameter validation
        print(f"dyncomm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

if __name__ == "__main__":
    sys.exit(main())
