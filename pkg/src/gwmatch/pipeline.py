"""End-to-end alternating optimization: transport solves on mixed distance
matrices, embedding updates, and correspondence extraction."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .embeddings import (
    EmbedOptConfig,
    KernelSpec,
    init_embeddings,
    kernel_matrix,
    mixed_distance_matrix,
    update_embeddings,
)
from .errors import DivergedError, NonFiniteError
from .graphs import (
    Graph,
    cross_distance_matrix,
    data_distance_matrix,
    node_distribution,
)
from .losses import LossSpec, get_loss
from .metrics import node_correctness
from .ot import SolverTrace, gw_discrepancy, solve_ot_subproblem
from .seeding import substream


@dataclass(frozen=True)
class GwlConfig:
    """All solver hyperparameters for one matching run.

    ``sigma=None`` resolves to 10 for the cosine kernel and to ``dim``
    for the RBF kernel. ``beta`` here overrides the embedding config's
    own value so there is a single source of truth.
    """

    outer_iterations: int = 30
    inner_iterations: int = 200
    sinkhorn_rounds: int = 1
    gamma: float = 0.01
    beta: float = 10.0
    dim: int = 100
    loss: str = "mse"
    kernel: str = "cosine"
    sigma: float | None = None
    embed: EmbedOptConfig = field(default_factory=EmbedOptConfig)
    seed: int = 0
    alpha_schedule: str = "linear"
    solver: str = "proximal"
    warm_start: bool = True

    def __post_init__(self) -> None:
        if min(self.outer_iterations, self.inner_iterations, self.sinkhorn_rounds, self.dim) < 1:
            raise ValueError("iteration counts and dim must be at least 1")
        if self.gamma <= 0 or self.beta < 0:
            raise ValueError("gamma must be positive and beta nonnegative")
        if self.alpha_schedule != "linear":
            raise ValueError(f"unknown alpha schedule {self.alpha_schedule!r}")
        if self.solver not in ("proximal", "entropic"):
            raise ValueError(f"unknown solver {self.solver!r}")

    def kernel_spec(self) -> KernelSpec:
        sigma = self.sigma
        if sigma is None:
            sigma = 10.0 if self.kernel == "cosine" else float(self.dim)
        return KernelSpec(self.kernel, sigma)

    def loss_spec(self) -> LossSpec:
        return get_loss(self.loss)


@dataclass(frozen=True)
class OuterRecord:
    """Diagnostics for one outer iteration."""

    iteration: int
    alpha: float
    objective: float
    gw_data: float
    embed_objective_before: float
    embed_objective_after: float
    embed_diverged: bool
    node_correctness: float


@dataclass
class GwlResult:
    """Final coupling, embeddings, matching, and per-iteration traces.

    Everything is oriented to the caller's (source, target) argument
    order even when the inputs were swapped internally; the matching
    always covers the smaller graph's nodes exactly once.
    """

    coupling: np.ndarray
    embeddings_source: np.ndarray
    embeddings_target: np.ndarray
    matching: list[tuple[int, int]]
    outer_trace: list[OuterRecord]
    inner_traces: list[SolverTrace]
    swapped: bool
    config: GwlConfig
    source_labels: tuple[str, ...]
    target_labels: tuple[str, ...]

    def matching_by_embedding(self) -> list[tuple[int, int]]:
        """Nearest-target matching under the configured embedding kernel."""
        spec = self.config.kernel_spec()
        if self.swapped:
            pairs = extract_matching_by_embedding(
                self.embeddings_target, self.embeddings_source, spec
            )
            return [(j, i) for i, j in pairs]
        return extract_matching_by_embedding(
            self.embeddings_source, self.embeddings_target, spec
        )

    def save_outer_trace_csv(self, path: str | Path) -> None:
        lines = [
            "iteration,alpha,objective,gw_data,embed_objective_before,"
            "embed_objective_after,embed_diverged,node_correctness"
        ]
        for r in self.outer_trace:
            lines.append(
                f"{r.iteration},{r.alpha!r},{r.objective!r},{r.gw_data!r},"
                f"{r.embed_objective_before!r},{r.embed_objective_after!r},"
                f"{int(r.embed_diverged)},{r.node_correctness!r}"
            )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def save_inner_traces_csv(self, path: str | Path, zero_timing: bool = False) -> None:
        lines = ["outer,iter,objective,marginal_violation,entropy,ms"]
        for outer, trace in enumerate(self.inner_traces):
            for r in trace.records:
                ms = 0.0 if zero_timing else r.ms
                lines.append(
                    f"{outer},{r.iteration},{r.objective!r},"
                    f"{r.marginal_violation!r},{r.entropy!r},{ms!r}"
                )
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def alpha_schedule(iteration: int, total: int) -> float:
    """Linear ramp m / M, starting at 0 and never reaching 1."""
    if not 0 <= iteration < total:
        raise ValueError(f"iteration {iteration} outside [0, {total})")
    return iteration / total


def extract_matching(coupling: np.ndarray) -> list[tuple[int, int]]:
    """Row-argmax correspondences; ties break toward the smallest column."""
    coupling = np.asarray(coupling)
    return [(i, int(np.argmax(coupling[i]))) for i in range(coupling.shape[0])]


def extract_matching_by_embedding(
    emb_source: np.ndarray, emb_target: np.ndarray, spec: KernelSpec
) -> list[tuple[int, int]]:
    """Nearest target node per source node under the embedding kernel."""
    distances = kernel_matrix(emb_source, emb_target, spec)
    return [(i, int(np.argmin(distances[i]))) for i in range(distances.shape[0])]


def _flip_pairs(pairs):
    return [(j, i) for i, j in pairs]


def run_gwl(
    source: Graph,
    target: Graph,
    cross: list[tuple[int, int, float]] | None = None,
    config: GwlConfig | None = None,
    ground_truth=None,
) -> GwlResult:
    """Alternate transport solves and embedding updates, then match.

    Each outer iteration mixes the data distance matrices with the current
    embedding kernels (weight ramped linearly from 0), solves the
    transport sub-problem, and refits the embeddings under the new plan.
    ``cross`` supplies observed cross-graph interactions, enabling the
    optional cross regularizer on the embeddings. ``ground_truth`` pairs,
    when given, add a per-iteration node-correctness column to the trace.

    If the source graph is larger than the target the two are swapped
    internally and every output is re-oriented on return, so the matching
    covers the smaller graph's nodes exactly once either way. A failed
    embedding update (divergence guard) is recorded and skipped; any
    non-finite value aborts the run with the trace attached.
    """
    cfg = config if config is not None else GwlConfig()
    source_labels = source.labels
    target_labels = target.labels
    truth_pairs = None if ground_truth is None else [(int(i), int(j)) for i, j in ground_truth]

    swapped = source.node_count > target.node_count
    if swapped:
        source, target = target, source
        if cross is not None:
            cross = [(j, i, w) for i, j, w in cross]
        if truth_pairs is not None:
            truth_pairs = _flip_pairs(truth_pairs)

    loss = cfg.loss_spec()
    kernel = cfg.kernel_spec()
    cost_s = data_distance_matrix(source)
    cost_t = data_distance_matrix(target)
    mu_s = node_distribution(source)
    mu_t = node_distribution(target)
    n_s, n_t = source.node_count, target.node_count
    cross_cost = (
        cross_distance_matrix(cross, n_s, n_t) if cross is not None else None
    )

    init_rng = substream(cfg.seed, "embed-init")
    emb_s = init_embeddings(cfg.dim, n_s, init_rng)
    emb_t = init_embeddings(cfg.dim, n_t, init_rng)
    embed_cfg = replace(cfg.embed, beta=cfg.beta)
    coupling = np.outer(mu_s, mu_t)
    truth_set = set(truth_pairs) if truth_pairs else None

    outer_records: list[OuterRecord] = []
    inner_traces: list[SolverTrace] = []
    for m in range(cfg.outer_iterations):
        alpha = alpha_schedule(m, cfg.outer_iterations)
        cost_s_mixed = mixed_distance_matrix(cost_s, emb_s, kernel, alpha)
        cost_t_mixed = mixed_distance_matrix(cost_t, emb_t, kernel, alpha)
        k_cross = kernel_matrix(emb_s, emb_t, kernel) if alpha > 0 else None
        coupling, trace = solve_ot_subproblem(
            cost_s_mixed,
            cost_t_mixed,
            k_cross,
            mu_s,
            mu_t,
            alpha,
            cfg.gamma,
            loss,
            n_steps=cfg.inner_iterations,
            sinkhorn_rounds=cfg.sinkhorn_rounds,
            coupling_init=coupling if cfg.warm_start else np.outer(mu_s, mu_t),
            method=cfg.solver,
        )
        inner_traces.append(trace)

        diverged = False
        try:
            update = update_embeddings(
                emb_s,
                emb_t,
                coupling,
                cost_s,
                cost_t,
                cross_cost,
                alpha,
                embed_cfg,
                kernel,
                loss,
                rng=substream(cfg.seed, "batching", str(m)),
            )
            emb_s, emb_t = update.source, update.target
            obj_before, obj_after = update.objective_before, update.objective_after
        except DivergedError:
            diverged = True
            obj_before = obj_after = float("nan")

        if not (
            np.isfinite(coupling).all()
            and np.isfinite(emb_s).all()
            and np.isfinite(emb_t).all()
        ):
            raise NonFiniteError(
                f"non-finite values after outer iteration {m}", trace=trace
            )

        nc = (
            node_correctness(extract_matching(coupling), truth_set)
            if truth_set
            else float("nan")
        )
        outer_records.append(
            OuterRecord(
                m,
                alpha,
                trace.records[-1].objective if trace.records else float("nan"),
                gw_discrepancy(cost_s, cost_t, coupling, loss),
                obj_before,
                obj_after,
                diverged,
                nc,
            )
        )

    matching = extract_matching(coupling)
    if swapped:
        coupling = coupling.T
        emb_s, emb_t = emb_t, emb_s
        matching = _flip_pairs(matching)
    return GwlResult(
        coupling=coupling,
        embeddings_source=emb_s,
        embeddings_target=emb_t,
        matching=matching,
        outer_trace=outer_records,
        inner_traces=inner_traces,
        swapped=swapped,
        config=cfg,
        source_labels=source_labels,
        target_labels=target_labels,
    )
