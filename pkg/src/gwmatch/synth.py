"""Synthetic graph families, noise injection, and the benchmark harness."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import GwmatchError
from .graphs import Graph
from .metrics import TrialStats, confidence_interval, node_correctness
from .pipeline import GwlConfig, run_gwl
from .seeding import derive_seed, substream

FAMILIES = ("knn", "ba")
METHODS = ("gwd", "gwl-r", "gwl-c")
EDGE_WEIGHT_MEAN = 10.0
BENCHMARK_COLUMNS = (
    "family,n,q,method,trial,nc_transport,nc_embedding,gw_disc,seconds"
)


@dataclass(frozen=True)
class SynthSpec:
    """One benchmark configuration: graph family, size, noise grid, trials."""

    family: str
    size: int
    qs: tuple[int, ...] = (0,)
    trials: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.size < 2:
            raise ValueError("size must be at least 2")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(q < 0 for q in self.qs):
            raise ValueError("noise percentages must be nonnegative")


@dataclass(frozen=True)
class BenchmarkRow:
    family: str
    n: int
    q: int
    method: str
    trial: int
    nc_transport: float
    nc_embedding: float
    gw_disc: float
    seconds: float


@dataclass
class BenchmarkResult:
    spec: SynthSpec
    methods: tuple[str, ...]
    rows: list[BenchmarkRow]
    failures: dict[tuple[int, str], int]

    def stats(self) -> dict[tuple[int, str], dict[str, TrialStats]]:
        """Aggregate per (q, method) confidence intervals for each metric."""
        grouped: dict[tuple[int, str], list[BenchmarkRow]] = {}
        for row in self.rows:
            grouped.setdefault((row.q, row.method), []).append(row)
        out: dict[tuple[int, str], dict[str, TrialStats]] = {}
        for key, rows in grouped.items():
            out[key] = {
                "nc_transport": confidence_interval([r.nc_transport for r in rows]),
                "nc_embedding": confidence_interval([r.nc_embedding for r in rows]),
                "gw_disc": confidence_interval([r.gw_disc for r in rows]),
            }
        return out


def _rng_of(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def truncated_poisson_weight(rng: np.random.Generator, mean: float = EDGE_WEIGHT_MEAN) -> float:
    """Poisson interaction count resampled until positive (an edge with no
    interactions is no edge)."""
    while True:
        w = int(rng.poisson(mean))
        if w > 0:
            return float(w)


def _draw_knn_selections(n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Per-node neighbor draws: K ~ Poisson(0.1 n) distinct partners each."""
    picks: list[tuple[int, int]] = []
    for i in range(n):
        k = min(int(rng.poisson(0.1 * n)), n - 1)
        if k == 0:
            continue
        others = np.delete(np.arange(n), i)
        for j in rng.choice(others, size=k, replace=False):
            picks.append((i, int(j)))
    return picks


def gen_knn_source(n: int, seed_or_rng) -> Graph:
    """Noisy K-NN-style graph: each node links to K ~ Poisson(0.1 n) random
    partners, every link carrying a positive Poisson(10) interaction count."""
    if n < 2:
        raise ValueError("need at least 2 nodes")
    rng = _rng_of(seed_or_rng)
    edges = [
        (i, j, truncated_poisson_weight(rng))
        for i, j in _draw_knn_selections(n, rng)
    ]
    return Graph.from_edges(n, edges)


def _ba_attachment(n: int) -> int:
    return max(1, round(0.05 * n))


def gen_ba_source(n: int, seed_or_rng) -> Graph:
    """Preferential-attachment graph with the same interaction weights.

    The attachment count is pegged to the K-NN family's expected density.
    """
    if n < 2:
        raise ValueError("need at least 2 nodes")
    rng = _rng_of(seed_or_rng)
    m = min(_ba_attachment(n), n - 1)
    pairs: list[tuple[int, int]] = [(0, k) for k in range(1, m + 1)]
    repeated: list[int] = [0] * m + list(range(1, m + 1))
    for new in range(m + 1, n):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            pairs.append((new, t))
            repeated.append(t)
        repeated.extend([new] * m)
    edges = [(i, j, truncated_poisson_weight(rng)) for i, j in pairs]
    return Graph.from_edges(n, edges)


def generate_source(family: str, n: int, seed_or_rng) -> Graph:
    if family == "knn":
        return gen_knn_source(n, seed_or_rng)
    if family == "ba":
        return gen_ba_source(n, seed_or_rng)
    raise ValueError(f"unknown family {family!r}")


def inject_noise(
    source: Graph, q: float, seed_or_rng
) -> tuple[Graph, dict[int, int]]:
    """Grow a noisy target: append ceil(q% |V|) nodes and ceil(q% |E|) fresh
    edges among all target nodes, weights drawn like the source family's.

    Returns the target graph and the identity ground-truth map for the
    original nodes.
    """
    if q < 0:
        raise ValueError("q must be nonnegative")
    rng = _rng_of(seed_or_rng)
    n_src = source.node_count
    extra_nodes = math.ceil(q / 100.0 * n_src)
    extra_edges = math.ceil(q / 100.0 * source.edge_count)
    n_tgt = n_src + extra_nodes
    labels = list(source.labels) + [f"noise_{k}" for k in range(extra_nodes)]

    existing = {
        (min(i, j), max(i, j)) for i, j, _ in source.edges
    }
    new_edges: list[tuple[int, int, float]] = []
    attempts = 0
    max_attempts = 10000 * max(1, extra_edges)
    while len(new_edges) < extra_edges:
        attempts += 1
        if attempts > max_attempts:
            raise GwmatchError(
                f"could not place {extra_edges} fresh edges in a graph of {n_tgt} nodes"
            )
        i = int(rng.integers(n_tgt))
        j = int(rng.integers(n_tgt))
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key in existing:
            continue
        existing.add(key)
        new_edges.append((i, j, truncated_poisson_weight(rng)))

    target = Graph.from_edges(
        n_tgt, list(source.edges) + new_edges, directed=source.directed, labels=labels
    )
    return target, {i: i for i in range(n_src)}


def _method_config(base: GwlConfig, method: str) -> GwlConfig:
    if method == "gwd":
        return replace(base, outer_iterations=1)
    if method == "gwl-c":
        return replace(base, kernel="cosine", sigma=10.0)
    if method == "gwl-r":
        return replace(base, kernel="rbf", sigma=None)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def _run_trial(
    spec: SynthSpec, q: int, trial: int, methods: tuple[str, ...], base_cfg: GwlConfig
) -> list[BenchmarkRow]:
    gen_rng = substream(
        spec.seed, "graph-gen", spec.family, str(spec.size), str(q), str(trial)
    )
    source = generate_source(spec.family, spec.size, gen_rng)
    target, mapping = inject_noise(source, q, gen_rng)
    truth = list(mapping.items())
    rows = []
    for method in methods:
        cfg = _method_config(base_cfg, method)
        cfg = replace(
            cfg, seed=derive_seed(spec.seed, "trial", str(q), str(trial), method)
        )
        t0 = time.perf_counter()
        result = run_gwl(source, target, config=cfg, ground_truth=truth)
        elapsed = time.perf_counter() - t0
        rows.append(
            BenchmarkRow(
                family=spec.family,
                n=spec.size,
                q=q,
                method=method,
                trial=trial,
                nc_transport=node_correctness(result.matching, truth),
                nc_embedding=node_correctness(result.matching_by_embedding(), truth),
                gw_disc=result.outer_trace[-1].gw_data,
                seconds=elapsed,
            )
        )
    return rows


def run_benchmark(
    spec: SynthSpec,
    methods=METHODS,
    config: GwlConfig | None = None,
    threads: int = 1,
) -> BenchmarkResult:
    """Generate (source, noisy target) pairs and score each method on them.

    Each trial draws its own named substream of the spec seed, so trials
    are reproducible and independent of execution order; failed trials are
    skipped and counted per (q, method).
    """
    methods = tuple(methods)
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
    base_cfg = config if config is not None else GwlConfig()
    tasks = [(q, trial) for q in spec.qs for trial in range(spec.trials)]
    failures: dict[tuple[int, str], int] = {}
    results: dict[tuple[int, int], list[BenchmarkRow]] = {}

    def run_one(task):
        q, trial = task
        try:
            return task, _run_trial(spec, q, trial, methods, base_cfg)
        except GwmatchError:
            return task, None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(run_one, tasks))
    else:
        outcomes = [run_one(t) for t in tasks]

    for (q, trial), rows in outcomes:
        if rows is None:
            for m in methods:
                failures[(q, m)] = failures.get((q, m), 0) + 1
        else:
            results[(q, trial)] = rows

    ordered: list[BenchmarkRow] = []
    for q in spec.qs:
        for trial in range(spec.trials):
            ordered.extend(results.get((q, trial), []))
    return BenchmarkResult(spec=spec, methods=methods, rows=ordered, failures=failures)


def save_benchmark_csv(
    result: BenchmarkResult, path: str | Path, zero_timing: bool = False
) -> None:
    """Write per-trial rows in the plot-ready benchmark format."""
    lines = [BENCHMARK_COLUMNS]
    for r in result.rows:
        seconds = 0.0 if zero_timing else r.seconds
        lines.append(
            f"{r.family},{r.n},{r.q},{r.method},{r.trial},"
            f"{r.nc_transport!r},{r.nc_embedding!r},{r.gw_disc!r},{seconds!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
