"""Weighted interaction graphs, data-driven distances, and edge-list I/O."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyGraphError, GraphParseError, NonpositiveWeightError

DEGREE_SMOOTHING = 1e-3


@dataclass(frozen=True)
class Graph:
    """Node set plus a weighted interaction multiset.

    Weights count observed interactions and must be positive and finite.
    An undirected edge is stored once per unordered pair and contributes
    to both (i, j) and (j, i) of any derived matrix.
    """

    node_count: int
    edges: tuple[tuple[int, int, float], ...]
    directed: bool = False
    labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise EmptyGraphError("graph needs at least one node")
        if not self.labels:
            object.__setattr__(
                self, "labels", tuple(str(i) for i in range(self.node_count))
            )
        if len(self.labels) != self.node_count:
            raise ValueError("label count does not match node count")
        for i, j, w in self.edges:
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ValueError(
                    f"edge ({i}, {j}) out of range for {self.node_count} nodes"
                )
            if not (np.isfinite(w) and w > 0):
                raise NonpositiveWeightError(
                    f"edge ({i}, {j}) has invalid weight {w}"
                )

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[tuple[int, int, float]],
        directed: bool = False,
        labels: Sequence[str] = (),
    ) -> "Graph":
        """Build a graph, merging duplicate edges by summing their weights."""
        merged: dict[tuple[int, int], float] = {}
        for i, j, w in edges:
            w = float(w)
            if not (np.isfinite(w) and w > 0):
                raise NonpositiveWeightError(
                    f"edge ({i}, {j}) has invalid weight {w}"
                )
            key = (i, j) if directed or i <= j else (j, i)
            merged[key] = merged.get(key, 0.0) + w
        canon = tuple(sorted((i, j, w) for (i, j), w in merged.items()))
        return cls(node_count, canon, directed=directed, labels=tuple(labels))

    def weighted_degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count)
        for i, j, w in self.edges:
            deg[i] += w
            deg[j] += w
        return deg

    def label_index(self) -> dict[str, int]:
        return {label: i for i, label in enumerate(self.labels)}


def _iter_records(path: Path):
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise GraphParseError(f"cannot read {path}: {err}") from None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line.split()


def _parse_weight(token: str, path: Path, line_no: int) -> float:
    try:
        w = float(token)
    except ValueError:
        raise GraphParseError(
            f"{path}: line {line_no}: cannot parse weight {token!r}"
        ) from None
    if not np.isfinite(w) or w <= 0:
        raise NonpositiveWeightError(
            f"{path}: line {line_no}: weight must be a positive finite number, got {token}"
        )
    return w


def load_graph(path: str | Path, directed: bool = False) -> Graph:
    """Load a whitespace-separated ``src dst weight`` edge list.

    Node identifiers are arbitrary tokens, reindexed densely in order of
    first appearance; the original identifiers are kept as labels.
    Lines starting with ``#`` are ignored. Duplicate edges are merged by
    summing weights.
    """
    path = Path(path)
    index: dict[str, int] = {}
    labels: list[str] = []
    edges: list[tuple[int, int, float]] = []
    for line_no, tokens in _iter_records(path):
        if len(tokens) != 3:
            raise GraphParseError(
                f"{path}: line {line_no}: expected 'src dst weight', got {len(tokens)} fields"
            )
        w = _parse_weight(tokens[2], path, line_no)
        pair = []
        for token in tokens[:2]:
            if token not in index:
                index[token] = len(labels)
                labels.append(token)
            pair.append(index[token])
        edges.append((pair[0], pair[1], w))
    if not labels:
        raise EmptyGraphError(f"{path}: no edges found")
    return Graph.from_edges(len(labels), edges, directed=directed, labels=labels)


def _format_weight(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def save_graph(graph: Graph, path: str | Path) -> None:
    """Write a graph back to the ``src dst weight`` edge-list format."""
    lines = [
        f"{graph.labels[i]} {graph.labels[j]} {_format_weight(w)}"
        for i, j, w in graph.edges
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_correspondences(
    path: str | Path, source: Graph, target: Graph
) -> list[tuple[int, int, float]]:
    """Load observed cross-graph interactions ``src_node tgt_node weight``.

    Node tokens are resolved against the two graphs' label maps.
    """
    path = Path(path)
    src_index = source.label_index()
    tgt_index = target.label_index()
    out: list[tuple[int, int, float]] = []
    for line_no, tokens in _iter_records(path):
        if len(tokens) != 3:
            raise GraphParseError(
                f"{path}: line {line_no}: expected 'src_node tgt_node weight'"
            )
        w = _parse_weight(tokens[2], path, line_no)
        if tokens[0] not in src_index:
            raise GraphParseError(
                f"{path}: line {line_no}: unknown source node {tokens[0]!r}"
            )
        if tokens[1] not in tgt_index:
            raise GraphParseError(
                f"{path}: line {line_no}: unknown target node {tokens[1]!r}"
            )
        out.append((src_index[tokens[0]], tgt_index[tokens[1]], w))
    return out


def load_pairs(path: str | Path, source: Graph, target: Graph) -> list[tuple[int, int]]:
    """Load node pairs ``src_node tgt_node`` (a trailing weight is allowed)."""
    path = Path(path)
    src_index = source.label_index()
    tgt_index = target.label_index()
    out: list[tuple[int, int]] = []
    for line_no, tokens in _iter_records(path):
        if len(tokens) not in (2, 3):
            raise GraphParseError(
                f"{path}: line {line_no}: expected 'src_node tgt_node [weight]'"
            )
        if tokens[0] not in src_index:
            raise GraphParseError(
                f"{path}: line {line_no}: unknown source node {tokens[0]!r}"
            )
        if tokens[1] not in tgt_index:
            raise GraphParseError(
                f"{path}: line {line_no}: unknown target node {tokens[1]!r}"
            )
        out.append((src_index[tokens[0]], tgt_index[tokens[1]]))
    return out


def data_distance_matrix(graph: Graph) -> np.ndarray:
    """Distance matrix with 1 / (w + 1) on edges, 1 elsewhere, 0 diagonal.

    Heavily interacting pairs sit close together; absent pairs sit at the
    maximum distance of 1. Self-distance is fixed at 0 so that identical
    graphs are at zero discrepancy under the identity coupling.
    """
    c = np.ones((graph.node_count, graph.node_count))
    for i, j, w in graph.edges:
        if i == j:
            continue
        c[i, j] = 1.0 / (w + 1.0)
        if not graph.directed:
            c[j, i] = c[i, j]
    np.fill_diagonal(c, 0.0)
    return c


def node_distribution(graph: Graph, smoothing: float = DEGREE_SMOOTHING) -> np.ndarray:
    """Node distribution proportional to smoothed weighted degree.

    The smoothing term keeps every entry strictly positive so downstream
    marginal scaling never divides by zero mass.
    """
    mass = graph.weighted_degrees() + smoothing
    total = mass.sum()
    if total <= 0:
        raise ValueError("graph has zero total degree and no smoothing")
    return mass / total


def cross_distance_matrix(
    observed: Iterable[tuple[int, int, float]], n_source: int, n_target: int
) -> np.ndarray:
    """Rectangular distance matrix from observed cross-graph interactions.

    Observed pairs get 1 / (w + 1) with duplicate observations summed;
    unobserved pairs default to the maximum distance of 1.
    """
    merged: dict[tuple[int, int], float] = {}
    for i, j, w in observed:
        if not (0 <= i < n_source):
            raise IndexError(f"source index {i} out of range [0, {n_source})")
        if not (0 <= j < n_target):
            raise IndexError(f"target index {j} out of range [0, {n_target})")
        merged[(i, j)] = merged.get((i, j), 0.0) + float(w)
    c = np.ones((n_source, n_target))
    for (i, j), w in merged.items():
        c[i, j] = 1.0 / (w + 1.0)
    return c


def save_matrix_csv(
    matrix: np.ndarray, path: str | Path, header: Sequence[str] | None = None
) -> None:
    """Write a matrix as row-major CSV, with an optional header row."""
    matrix = np.atleast_2d(np.asarray(matrix, float))
    lines = []
    if header is not None:
        lines.append(",".join(str(h) for h in header))
    for row in matrix:
        lines.append(",".join(repr(float(v)) for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
