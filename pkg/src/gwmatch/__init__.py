"""Graph matching and joint node embedding via Gromov-Wasserstein transport."""

__version__ = "0.1.0"

from .embeddings import (
    EmbedOptConfig,
    KernelSpec,
    embedding_gradient,
    embedding_objective,
    init_embeddings,
    kernel_matrix,
    mixed_distance_matrix,
    update_embeddings,
)
from .errors import (
    DivergedError,
    EmptyGraphError,
    GraphParseError,
    GwmatchError,
    NonFiniteError,
    NonpositiveWeightError,
    ShapeMismatchError,
    ZeroVectorError,
)
from .graphs import (
    Graph,
    cross_distance_matrix,
    data_distance_matrix,
    load_graph,
    node_distribution,
    save_graph,
)
from .losses import LossSpec, get_loss, kl_loss, mse_loss
from .metrics import (
    TrialStats,
    confidence_interval,
    node_correctness,
    ranked_recommendations,
    topL_metrics,
)
from .ot import (
    SolverTrace,
    entropic_gw_step,
    gw_discrepancy,
    loss_tensor_product,
    marginal_violation,
    proximal_gw_step,
    sinkhorn,
    solve_ot_subproblem,
)
from .pipeline import (
    GwlConfig,
    GwlResult,
    alpha_schedule,
    extract_matching,
    extract_matching_by_embedding,
    run_gwl,
)
from .synth import (
    SynthSpec,
    gen_ba_source,
    gen_knn_source,
    inject_noise,
    run_benchmark,
)

__all__ = [
    "__version__",
    "DivergedError",
    "EmbedOptConfig",
    "EmptyGraphError",
    "Graph",
    "GraphParseError",
    "GwlConfig",
    "GwlResult",
    "GwmatchError",
    "KernelSpec",
    "LossSpec",
    "NonFiniteError",
    "NonpositiveWeightError",
    "ShapeMismatchError",
    "SolverTrace",
    "SynthSpec",
    "TrialStats",
    "ZeroVectorError",
    "alpha_schedule",
    "confidence_interval",
    "cross_distance_matrix",
    "data_distance_matrix",
    "embedding_gradient",
    "embedding_objective",
    "entropic_gw_step",
    "extract_matching",
    "extract_matching_by_embedding",
    "gen_ba_source",
    "gen_knn_source",
    "get_loss",
    "gw_discrepancy",
    "init_embeddings",
    "inject_noise",
    "kernel_matrix",
    "kl_loss",
    "load_graph",
    "loss_tensor_product",
    "marginal_violation",
    "mixed_distance_matrix",
    "mse_loss",
    "node_correctness",
    "node_distribution",
    "proximal_gw_step",
    "ranked_recommendations",
    "run_benchmark",
    "run_gwl",
    "save_graph",
    "sinkhorn",
    "solve_ot_subproblem",
    "topL_metrics",
    "update_embeddings",
]
