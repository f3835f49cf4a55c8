"""Matching and recommendation metrics with normal-approximation intervals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

Z_95 = 1.96


@dataclass(frozen=True)
class TrialStats:
    """Per-trial values with mean and 95% confidence half-width."""

    values: tuple[float, ...]
    mean: float
    ci95_half_width: float

    @property
    def n(self) -> int:
        return len(self.values)


class TopLMetrics(NamedTuple):
    precision: float
    recall: float
    f1: float


def _as_pair_set(pairs) -> set[tuple[int, int]]:
    if isinstance(pairs, Mapping):
        return {(int(i), int(j)) for i, j in pairs.items()}
    return {(int(i), int(j)) for i, j in pairs}


def node_correctness(matching: Iterable[tuple[int, int]], ground_truth) -> float:
    """Percentage of predicted pairs present in the ground truth."""
    predicted = list(matching)
    if not predicted:
        raise ValueError("matching is empty")
    truth = _as_pair_set(ground_truth)
    hits = sum(1 for pair in predicted if (int(pair[0]), int(pair[1])) in truth)
    return 100.0 * hits / len(predicted)


def topL_metrics(
    recommended: Sequence[Sequence[int]],
    truth: Sequence[Iterable[int]],
    top_l: int,
) -> TopLMetrics:
    """Mean top-L precision, recall, and F1 over instances.

    Per instance: precision |E ∩ T| / |E|, recall |E ∩ T| / |T|, and the
    harmonic mean of the two (zero when both vanish). Instances are
    averaged with equal weight.
    """
    if len(recommended) != len(truth):
        raise ValueError("recommended and truth must have the same length")
    if not recommended:
        raise ValueError("no instances to evaluate")
    precisions, recalls, f1s = [], [], []
    for idx, (rec, tru) in enumerate(zip(recommended, truth)):
        rec = list(rec)
        tru = set(tru)
        if not tru:
            raise ValueError(f"instance {idx}: empty truth set")
        if len(rec) > top_l:
            raise ValueError(f"instance {idx}: got {len(rec)} recommendations for top-{top_l}")
        hits = len(set(rec) & tru)
        p = hits / len(rec) if rec else 0.0
        r = hits / len(tru)
        f = 2.0 * p * r / (p + r) if (p + r) > 0 else 0.0
        precisions.append(p)
        recalls.append(r)
        f1s.append(f)
    return TopLMetrics(
        float(np.mean(precisions)), float(np.mean(recalls)), float(np.mean(f1s))
    )


def ranked_recommendations(
    matrix: np.ndarray, top_l: int, mode: str
) -> list[list[int]]:
    """Top-L column indices per row, by descending transport mass or
    ascending distance; ties break toward the smallest index."""
    if mode not in ("by_transport_desc", "by_distance_asc"):
        raise ValueError(f"unknown ranking mode {mode!r}")
    matrix = np.asarray(matrix, float)
    if top_l < 1:
        raise ValueError("top_l must be positive")
    n_cols = matrix.shape[1]
    if top_l > n_cols:
        warnings.warn(
            f"top_l={top_l} exceeds the {n_cols} available columns; truncating",
            RuntimeWarning,
            stacklevel=2,
        )
        top_l = n_cols
    keys = -matrix if mode == "by_transport_desc" else matrix
    order = np.argsort(keys, axis=1, kind="stable")
    return [list(map(int, row[:top_l])) for row in order]


def confidence_interval(values: Sequence[float]) -> TrialStats:
    """Mean and 95% half-width (1.96 * sample std / sqrt(n)) of trial values."""
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no values given")
    if len(vals) == 1:
        warnings.warn(
            "confidence interval of a single value is degenerate",
            RuntimeWarning,
            stacklevel=2,
        )
        return TrialStats((vals[0],), vals[0], 0.0)
    arr = np.asarray(vals)
    half = Z_95 * float(np.std(arr, ddof=1)) / np.sqrt(len(vals))
    return TrialStats(tuple(vals), float(arr.mean()), half)


def format_metrics_report(entries: Iterable[tuple[str, TrialStats]], **context) -> str:
    """Render ``metric=... mean=... ci95=... n_trials=...`` report lines.

    Extra ``context`` keys are prepended to every line, e.g. q or method.
    """
    prefix = " ".join(f"{k}={v}" for k, v in context.items())
    lines = []
    for name, stats in entries:
        head = f"{prefix} " if prefix else ""
        lines.append(
            f"{head}metric={name} mean={stats.mean!r} "
            f"ci95={stats.ci95_half_width!r} n_trials={stats.n}"
        )
    return "\n".join(lines)
